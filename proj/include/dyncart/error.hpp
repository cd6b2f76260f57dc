#pragma once

#include <stdexcept>
#include <string>

namespace dyncart {

// Single exception type for every library failure. Messages carry a stable
// lowercase key (e.g. "degenerate labels") followed by optional detail.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dyncart
