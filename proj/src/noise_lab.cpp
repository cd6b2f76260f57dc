#include "dyncart/noise_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "dyncart/error.hpp"
#include "dyncart/rng.hpp"

namespace dyncart {

namespace {

// Splits `total` by `shares` (largest remainder, ties to the earlier entry).
std::vector<std::size_t> allocate(std::size_t total, const std::vector<double>& shares) {
    const double sum = std::accumulate(shares.begin(), shares.end(), 0.0);
    std::vector<std::size_t> out(shares.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t used = 0;
    for (std::size_t i = 0; i < shares.size(); ++i) {
        const double exact = static_cast<double>(total) * shares[i] / sum;
        out[i] = static_cast<std::size_t>(std::floor(exact));
        used += out[i];
        rem.emplace_back(exact - std::floor(exact), i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; used < total; ++i, ++used) ++out[rem[i % rem.size()].second];
    return out;
}

struct Point {
    double x;
    double y;
    int label;
};

void gaussian_blob(Rng& rng, std::size_t count, double cx, double cy, double sd, int label,
                   std::vector<Point>& out) {
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back({rng.normal(cx, sd), rng.normal(cy, sd), label});
    }
}

// Upper (`upper` = true) or lower half of the two-moons shape.
void moon(Rng& rng, std::size_t count, bool upper, double ox, double oy, double scale, double noise,
          int label, std::vector<Point>& out) {
    for (std::size_t i = 0; i < count; ++i) {
        const double t = rng.uniform() * std::numbers::pi;
        double x = upper ? std::cos(t) : 1.0 - std::cos(t);
        double y = upper ? std::sin(t) : 0.5 - std::sin(t);
        x = ox + scale * x + rng.normal(0.0, noise);
        y = oy + scale * y + rng.normal(0.0, noise);
        out.push_back({x, y, label});
    }
}

void ring(Rng& rng, std::size_t count, double cx, double cy, double radius, double noise, int label,
          std::vector<Point>& out) {
    for (std::size_t i = 0; i < count; ++i) {
        const double t = rng.uniform() * 2.0 * std::numbers::pi;
        out.push_back({cx + radius * std::cos(t) + rng.normal(0.0, noise),
                       cy + radius * std::sin(t) + rng.normal(0.0, noise), label});
    }
}

Dataset assemble(std::vector<Point> pts, int num_classes, Rng& rng, nlohmann::json recipe) {
    rng.shuffle(std::span<Point>(pts));
    std::vector<double> flat;
    flat.reserve(pts.size() * 2);
    Dataset ds;
    for (const auto& p : pts) {
        flat.push_back(p.x);
        flat.push_back(p.y);
        ds.y.push_back(p.label);
    }
    ds.X = FeatureMatrix(pts.size(), 2, std::move(flat));
    ds.num_classes = num_classes;
    ds.schema = numeric_schema(2, num_classes);
    ds.ids.resize(pts.size());
    std::iota(ds.ids.begin(), ds.ids.end(), std::int64_t{0});
    ds.provenance = {{"generator", std::move(recipe)}};
    return ds;
}

void check_size(std::size_t n) {
    if (n < 100) throw Error("too small: synthetic datasets need n >= 100, got " + std::to_string(n));
}

void check_rate(double rate) {
    if (!(rate > 0.0 && rate <= 0.5)) throw Error("invalid rate: must be in (0, 0.5]");
}

std::size_t target_count(double rate, std::size_t n) {
    return static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
}

// True when every strict order between class counts in `original` still holds.
bool keeps_order(const std::vector<std::size_t>& original, const std::vector<std::size_t>& now) {
    for (std::size_t a = 0; a < original.size(); ++a) {
        for (std::size_t b = 0; b < original.size(); ++b) {
            if (original[a] > original[b] && !(now[a] > now[b])) return false;
        }
    }
    return true;
}

}  // namespace

Dataset gen_binary_synthetic(std::size_t n, std::uint64_t seed) {
    check_size(n);
    Rng rng(seed);
    // blobs / moons / circles
    const auto parts = allocate(n, {0.4, 0.3, 0.3});
    std::vector<Point> pts;
    pts.reserve(n);

    auto blob_cls = allocate(parts[0], {2.0, 1.0});
    auto blob_neg = allocate(blob_cls[0], {1.0, 1.0});
    gaussian_blob(rng, blob_neg[0], -2.0, 2.0, 1.0, 0, pts);
    gaussian_blob(rng, blob_neg[1], 2.0, 2.0, 1.0, 0, pts);
    gaussian_blob(rng, blob_cls[1], 0.0, 2.6, 0.8, 1, pts);

    auto moon_cls = allocate(parts[1], {2.0, 1.0});
    moon(rng, moon_cls[0], true, -4.5, -3.5, 1.6, 0.35, 0, pts);
    moon(rng, moon_cls[1], false, -4.5, -3.5, 1.6, 0.35, 1, pts);

    auto circle_cls = allocate(parts[2], {2.0, 1.0});
    ring(rng, circle_cls[0], 3.5, -3.0, 1.6, 0.3, 0, pts);
    ring(rng, circle_cls[1], 3.5, -3.0, 0.8, 0.3, 1, pts);

    nlohmann::json recipe = {
        {"kind", "binary"},
        {"n", n},
        {"seed", seed},
        {"components", {{"blobs", 0.4}, {"moons", 0.3}, {"circles", 0.3}}},
        {"negative_to_positive", 2.0},
        {"blobs", {{"neg_centers", {{-2.0, 2.0}, {2.0, 2.0}}}, {"neg_sd", 1.0}, {"pos_center", {0.0, 2.6}}, {"pos_sd", 0.8}}},
        {"moons", {{"offset", {-4.5, -3.5}}, {"scale", 1.6}, {"noise", 0.35}}},
        {"circles", {{"center", {3.5, -3.0}}, {"outer_radius", 1.6}, {"inner_radius", 0.8}, {"noise", 0.3}}}};
    return assemble(std::move(pts), 2, rng, std::move(recipe));
}

Dataset gen_multiclass_synthetic(std::size_t n, std::uint64_t seed) {
    check_size(n);
    Rng rng(seed);
    const auto counts = allocate(n, {0.4, 0.3, 0.2, 0.1});
    std::vector<Point> pts;
    pts.reserve(n);

    const auto c0 = allocate(counts[0], {1.0, 1.0});
    gaussian_blob(rng, c0[0], -3.0, 3.0, 1.1, 0, pts);
    ring(rng, c0[1], 3.5, -3.0, 2.0, 0.3, 0, pts);

    const auto c1 = allocate(counts[1], {0.7, 0.3});
    moon(rng, c1[0], true, -4.5, -3.5, 2.0, 0.35, 1, pts);
    gaussian_blob(rng, c1[1], -1.2, 3.6, 0.9, 1, pts);

    const auto c2 = allocate(counts[2], {0.8, 0.2});
    moon(rng, c2[0], false, -4.5, -3.5, 2.0, 0.35, 2, pts);
    gaussian_blob(rng, c2[1], 1.0, 1.2, 0.7, 2, pts);

    const auto c3 = allocate(counts[3], {0.7, 0.3});
    ring(rng, c3[0], 3.5, -3.0, 0.9, 0.3, 3, pts);
    gaussian_blob(rng, c3[1], 0.2, 2.4, 0.6, 3, pts);

    nlohmann::json recipe = {
        {"kind", "multiclass"},
        {"n", n},
        {"seed", seed},
        {"class_shares", {0.4, 0.3, 0.2, 0.1}},
        {"class0", "blob(-3,3;1.1) + ring(3.5,-3;r2.0)"},
        {"class1", "upper moon(-4.5,-3.5;x2.0) + blob(-1.2,3.6;0.9)"},
        {"class2", "lower moon(-4.5,-3.5;x2.0) + blob(1.0,1.2;0.7)"},
        {"class3", "ring(3.5,-3;r0.9) + blob(0.2,2.4;0.6)"}};
    return assemble(std::move(pts), 4, rng, std::move(recipe));
}

Dataset inject_ncar(const Dataset& ds, double rate, std::uint64_t seed) {
    check_rate(rate);
    if (ds.noise_mask && ds.noisy_count() > 0) throw Error("labels already corrupted: dataset has a noise mask");
    const std::size_t n = ds.size();
    const std::size_t target = target_count(rate, n);
    Rng rng(seed);
    Dataset out = ds;
    out.noise_mask = std::vector<bool>(n, false);
    auto& mask = *out.noise_mask;

    if (ds.num_classes == 2) {
        std::vector<std::size_t> rows(n);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        for (std::size_t i = 0; i < target; ++i) {
            const std::size_t j = i + rng.below(n - i);
            std::swap(rows[i], rows[j]);
            out.y[rows[i]] = 1 - out.y[rows[i]];
            mask[rows[i]] = true;
        }
    } else {
        const auto original = ds.class_counts();
        auto counts = original;
        std::vector<std::size_t> pool(n);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        const std::size_t budget = 100 * n;
        std::size_t changed = 0;
        for (std::size_t attempt = 0; changed < target; ++attempt) {
            if (attempt >= budget || pool.empty()) {
                throw Error("rate incompatible with count-order constraint: " + std::to_string(changed) +
                            " of " + std::to_string(target) + " labels changed");
            }
            const std::size_t slot = rng.below(pool.size());
            const std::size_t row = pool[slot];
            const int from = out.y[row];
            int to = static_cast<int>(rng.below(static_cast<std::uint64_t>(ds.num_classes - 1)));
            if (to >= from) ++to;
            --counts[from];
            ++counts[to];
            if (!keeps_order(original, counts)) {
                ++counts[from];
                --counts[to];
                continue;
            }
            out.y[row] = to;
            mask[row] = true;
            pool[slot] = pool.back();
            pool.pop_back();
            ++changed;
        }
    }
    out.provenance["noise"] = {{"type", "ncar"}, {"rate", rate}, {"seed", seed}, {"corrupted", target}};
    return out;
}

std::vector<std::vector<std::uint32_t>> knn_table(const FeatureMatrix& X, int k) {
    const std::size_t n = X.rows();
    if (k < 1) throw Error("invalid k: must be >= 1");
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), n == 0 ? 0 : n - 1);
    std::vector<std::vector<std::uint32_t>> table(n);
    std::vector<std::pair<double, std::uint32_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = X.row(i);
        std::size_t m = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto xj = X.row(j);
            double s = 0.0;
            for (std::size_t f = 0; f < xi.size(); ++f) {
                const double diff = xi[f] - xj[f];
                s += diff * diff;
            }
            dist[m++] = {s, static_cast<std::uint32_t>(j)};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk),
                          dist.begin() + static_cast<std::ptrdiff_t>(m));
        table[i].reserve(kk);
        for (std::size_t q = 0; q < kk; ++q) table[i].push_back(dist[q].second);
    }
    return table;
}

NnarResult inject_nnar(const Dataset& ds, const NnarOptions& opts, const FeatureMatrix* space) {
    check_rate(opts.rate);
    if (!(opts.swap_probability > 0.0 && opts.swap_probability <= 1.0)) {
        throw Error("invalid swap probability: must be in (0, 1]");
    }
    if (ds.noise_mask && ds.noisy_count() > 0) throw Error("labels already corrupted: dataset has a noise mask");
    const FeatureMatrix& X = space ? *space : ds.X;
    const std::size_t n = ds.size();
    if (X.rows() != n) throw Error("shape mismatch: distance space rows differ from dataset");

    std::size_t target = target_count(opts.rate, n);
    target -= target % 2;
    const auto neighbors = knn_table(X, opts.k);

    Rng rng(opts.seed);
    NnarResult result{ds, {}};
    Dataset& out = result.dataset;
    out.noise_mask = std::vector<bool>(n, false);
    auto& mask = *out.noise_mask;
    const LabelVector& original = ds.y;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::size_t> candidates;
    std::size_t masked = 0;
    int pass = 0;
    while (masked < target) {
        if (pass >= opts.max_passes) {
            throw Error("NNAR did not converge: " + std::to_string(masked) + " of " +
                        std::to_string(target) + " after " + std::to_string(pass) + " passes");
        }
        ++pass;
        rng.shuffle(std::span<std::size_t>(order));
        bool any_candidate = false;
        for (std::size_t j : order) {
            if (masked >= target) break;
            if (mask[j]) continue;
            candidates.clear();
            for (std::uint32_t q : neighbors[j]) {
                if (!mask[q] && original[q] != original[j]) candidates.push_back(q);
            }
            if (candidates.empty()) continue;
            any_candidate = true;
            if (!rng.bernoulli(opts.swap_probability)) continue;
            const std::size_t q = candidates[rng.below(candidates.size())];
            out.y[j] = original[q];
            out.y[q] = original[j];
            mask[j] = true;
            mask[q] = true;
            masked += 2;
            result.pairs.emplace_back(j, q);
        }
        if (!any_candidate && masked < target) {
            if (result.pairs.empty()) {
                throw Error("NNAR infeasible: no differently-labeled neighbor within k=" +
                            std::to_string(opts.k));
            }
            throw Error("NNAR did not converge: candidates exhausted at " + std::to_string(masked) +
                        " of " + std::to_string(target));
        }
    }
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [a, b] : result.pairs) pairs.push_back({ds.ids[a], ds.ids[b]});
    out.provenance["noise"] = {{"type", "nnar"},       {"rate", opts.rate},
                               {"k", opts.k},          {"p", opts.swap_probability},
                               {"seed", opts.seed},    {"corrupted", masked},
                               {"passes", pass},       {"pairs", std::move(pairs)}};
    return result;
}

void SplitSpec::validate() const {
    if (!(train > 0.0 && validation > 0.0 && test > 0.0)) {
        throw Error("invalid split: fractions must be positive");
    }
    if (std::abs(train + validation + test - 1.0) > 1e-9) {
        throw Error("invalid split: fractions must sum to 1");
    }
}

SplitParts stratified_split(const Dataset& ds, const SplitSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
    for (std::size_t r = 0; r < ds.size(); ++r) by_class[ds.y[r]].push_back(r);

    SplitParts parts;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& rows = by_class[c];
        if (rows.empty()) continue;
        if (rows.size() < 3) {
            throw Error("class too small to stratify: class " + std::to_string(c) + " has " +
                        std::to_string(rows.size()) + " instances");
        }
        rng.shuffle(std::span<std::size_t>(rows));
        const auto sizes = allocate(rows.size(), {spec.train, spec.validation, spec.test});
        auto it = rows.begin();
        parts.train_rows.insert(parts.train_rows.end(), it, it + static_cast<std::ptrdiff_t>(sizes[0]));
        it += static_cast<std::ptrdiff_t>(sizes[0]);
        parts.validation_rows.insert(parts.validation_rows.end(), it, it + static_cast<std::ptrdiff_t>(sizes[1]));
        it += static_cast<std::ptrdiff_t>(sizes[1]);
        parts.test_rows.insert(parts.test_rows.end(), it, rows.end());
    }
    std::sort(parts.train_rows.begin(), parts.train_rows.end());
    std::sort(parts.validation_rows.begin(), parts.validation_rows.end());
    std::sort(parts.test_rows.begin(), parts.test_rows.end());
    parts.train = ds.subset(parts.train_rows);
    parts.validation = ds.subset(parts.validation_rows);
    parts.test = ds.subset(parts.test_rows);
    return parts;
}

}  // namespace dyncart
