#include "dyncart/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "dyncart/error.hpp"

namespace dyncart {

namespace {

constexpr double kMinSplitGain = 1e-12;
constexpr double kMinHessian = 1e-16;
constexpr double kProbFloor = 1e-15;
constexpr int kModelFormatVersion = 1;

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Raw scores (length G) -> class probabilities (length K).
void link(std::span<const double> raw, std::span<double> out) {
    if (out.size() == 2) {
        const double p1 = sigmoid(raw[0]);
        out[0] = 1.0 - p1;
        out[1] = p1;
        return;
    }
    const double mx = *std::max_element(raw.begin(), raw.end());
    double total = 0.0;
    for (std::size_t k = 0; k < raw.size(); ++k) {
        out[k] = std::exp(raw[k] - mx);
        total += out[k];
    }
    for (double& v : out) v /= total;
}

struct SplitCandidate {
    double gain = kMinSplitGain;
    int feature = -1;
    double threshold = 0.0;
};

double leaf_objective(double g, double h, double l2) { return g * g / (h + l2); }

// Threshold strictly above lo and at most hi, so lo goes left and hi goes right.
double midpoint(double lo, double hi) {
    double mid = lo + (hi - lo) * 0.5;
    if (!(mid > lo)) mid = hi;
    return mid;
}

// Exact greedy, level-wise tree growth over presorted column indices.
class TreeBuilder {
  public:
    TreeBuilder(const std::vector<std::vector<double>>& columns,
                const std::vector<std::vector<std::uint32_t>>& sorted, const TrainConfig& cfg,
                unsigned workers)
        : columns_(columns),
          sorted_(sorted),
          cfg_(cfg),
          workers_(std::max(1u, workers)),
          node_of_(columns.empty() ? 0 : columns.front().size()) {}

    // Builds one tree and returns it; leaf_value_of_row() afterwards gives each
    // training row's leaf output.
    RegressionTree build(std::span<const double> grad, std::span<const double> hess) {
        const std::size_t n = node_of_.size();
        std::fill(node_of_.begin(), node_of_.end(), 0);
        RegressionTree tree;
        tree.nodes.emplace_back();
        std::vector<double> G{0.0}, H{0.0};
        for (std::size_t r = 0; r < n; ++r) {
            G[0] += grad[r];
            H[0] += hess[r];
        }

        std::vector<int> active{0};
        for (int depth = 0; depth < cfg_.max_depth && !active.empty(); ++depth) {
            std::vector<int> slot_of_node(tree.nodes.size(), -1);
            for (std::size_t s = 0; s < active.size(); ++s) slot_of_node[active[s]] = static_cast<int>(s);

            const auto best = find_splits(grad, hess, slot_of_node, active, G, H);

            std::vector<int> next;
            bool any_split = false;
            for (std::size_t s = 0; s < active.size(); ++s) {
                if (best[s].feature < 0) continue;
                const int node = active[s];
                const int left = static_cast<int>(tree.nodes.size());
                tree.nodes.emplace_back();
                tree.nodes.emplace_back();
                TreeNode& parent = tree.nodes[node];
                parent.feature = best[s].feature;
                parent.threshold = best[s].threshold;
                parent.left = left;
                parent.right = left + 1;
                next.push_back(left);
                next.push_back(left + 1);
                any_split = true;
            }
            if (!any_split) break;

            G.resize(tree.nodes.size(), 0.0);
            H.resize(tree.nodes.size(), 0.0);
            for (std::size_t r = 0; r < n; ++r) {
                const TreeNode& nd = tree.nodes[node_of_[r]];
                if (nd.is_leaf()) continue;
                const int child = columns_[nd.feature][r] < nd.threshold ? nd.left : nd.right;
                node_of_[r] = child;
                G[child] += grad[r];
                H[child] += hess[r];
            }
            active = std::move(next);
        }

        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            TreeNode& nd = tree.nodes[i];
            if (nd.is_leaf()) nd.value = -cfg_.learning_rate * G[i] / (H[i] + cfg_.l2_reg);
        }
        leaf_values_.resize(n);
        for (std::size_t r = 0; r < n; ++r) leaf_values_[r] = tree.nodes[node_of_[r]].value;
        return tree;
    }

    const std::vector<double>& leaf_value_of_row() const { return leaf_values_; }

  private:
    std::vector<SplitCandidate> find_splits(std::span<const double> grad,
                                            std::span<const double> hess,
                                            const std::vector<int>& slot_of_node,
                                            const std::vector<int>& active,
                                            const std::vector<double>& G,
                                            const std::vector<double>& H) const {
        const std::size_t d = columns_.size();
        const std::size_t slots = active.size();
        std::vector<std::vector<SplitCandidate>> per_feature(d);

        auto scan_feature = [&](std::size_t f) {
            std::vector<double> gl(slots, 0.0), hl(slots, 0.0), last(slots, 0.0);
            std::vector<char> seen(slots, 0);
            std::vector<SplitCandidate> best(slots);
            const auto& col = columns_[f];
            for (std::uint32_t r : sorted_[f]) {
                const int s = slot_of_node[node_of_[r]];
                if (s < 0) continue;
                const double x = col[r];
                if (seen[s] && x != last[s]) {
                    const int node = active[s];
                    const double hr = H[node] - hl[s];
                    if (hl[s] >= cfg_.min_child_weight && hr >= cfg_.min_child_weight) {
                        const double gr = G[node] - gl[s];
                        const double gain =
                            0.5 * (leaf_objective(gl[s], hl[s], cfg_.l2_reg) +
                                   leaf_objective(gr, hr, cfg_.l2_reg) -
                                   leaf_objective(G[node], H[node], cfg_.l2_reg));
                        if (gain > best[s].gain) {
                            best[s].gain = gain;
                            best[s].feature = static_cast<int>(f);
                            best[s].threshold = midpoint(last[s], x);
                        }
                    }
                }
                gl[s] += grad[r];
                hl[s] += hess[r];
                last[s] = x;
                seen[s] = 1;
            }
            per_feature[f] = std::move(best);
        };

        const unsigned workers = std::min<unsigned>(workers_, static_cast<unsigned>(d));
        if (workers <= 1) {
            for (std::size_t f = 0; f < d; ++f) scan_feature(f);
        } else {
            std::vector<std::jthread> pool;
            for (unsigned w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    for (std::size_t f = w; f < d; f += workers) scan_feature(f);
                });
            }
        }

        // Reduce in feature order: strict '>' keeps the lower feature index.
        std::vector<SplitCandidate> best(slots);
        for (std::size_t f = 0; f < d; ++f) {
            for (std::size_t s = 0; s < slots; ++s) {
                if (per_feature[f][s].feature >= 0 && per_feature[f][s].gain > best[s].gain) {
                    best[s] = per_feature[f][s];
                }
            }
        }
        return best;
    }

    const std::vector<std::vector<double>>& columns_;
    const std::vector<std::vector<std::uint32_t>>& sorted_;
    const TrainConfig& cfg_;
    unsigned workers_;
    std::vector<int> node_of_;
    std::vector<double> leaf_values_;
};

void check_iteration(const Ensemble& model, int iteration) {
    if (iteration < 1 || iteration > model.num_iterations()) {
        throw Error("iteration out of range: " + std::to_string(iteration) + " not in [1, " +
                    std::to_string(model.num_iterations()) + "]");
    }
}

void check_features(const Ensemble& model, const FeatureMatrix& X) {
    if (static_cast<int>(X.cols()) != model.num_features()) {
        throw Error("shape mismatch: model expects " + std::to_string(model.num_features()) +
                    " features, got " + std::to_string(X.cols()));
    }
}

// Calls visit(i, raw) after each of the first `upto` iterations, where raw is the
// n x G raw score table accumulated tree group by tree group.
template <typename Visit>
void sweep_raw_scores(const Ensemble& model, const FeatureMatrix& X, int upto, Visit&& visit) {
    check_features(model, X);
    const std::size_t n = X.rows();
    const std::size_t groups = static_cast<std::size_t>(model.trees_per_iteration());
    std::vector<double> raw(n * groups);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t g = 0; g < groups; ++g) raw[j * groups + g] = model.base_score()[g];
    }
    for (int i = 0; i < upto; ++i) {
        const auto& group = model.iterations()[i];
        for (std::size_t j = 0; j < n; ++j) {
            const auto x = X.row(j);
            for (std::size_t g = 0; g < groups; ++g) raw[j * groups + g] += group[g].predict(x);
        }
        visit(i, std::span<const double>(raw));
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (num_iterations < 1) throw Error("invalid config: num_iterations must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
        throw Error("invalid config: learning_rate must be in (0, 1]");
    }
    if (max_depth < 1) throw Error("invalid config: max_depth must be >= 1");
    if (!(min_child_weight >= 0.0)) throw Error("invalid config: min_child_weight must be >= 0");
    if (!(l2_reg >= 0.0)) throw Error("invalid config: l2_reg must be >= 0");
}

double RegressionTree::predict(std::span<const double> x) const {
    int i = 0;
    while (!nodes[i].is_leaf()) {
        const TreeNode& nd = nodes[i];
        i = x[nd.feature] < nd.threshold ? nd.left : nd.right;
    }
    return nodes[i].value;
}

std::size_t RegressionTree::leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

Ensemble::Ensemble(int num_classes, int num_features, std::vector<double> base_score,
                   TrainConfig config, std::vector<std::vector<RegressionTree>> iterations)
    : num_classes_(num_classes),
      num_features_(num_features),
      base_score_(std::move(base_score)),
      config_(config),
      iterations_(std::move(iterations)) {
    if (num_classes_ < 2) throw Error("degenerate labels: class count below 2");
    if (static_cast<int>(base_score_.size()) != trees_per_iteration()) {
        throw Error("shape mismatch: base_score length");
    }
    if (static_cast<int>(iterations_.size()) != config_.num_iterations) {
        throw Error("shape mismatch: iteration group count differs from config");
    }
    for (const auto& group : iterations_) {
        if (static_cast<int>(group.size()) != trees_per_iteration()) {
            throw Error("shape mismatch: trees per iteration");
        }
    }
}

ProbabilityMatrix Ensemble::predict_proba(const FeatureMatrix& X) const {
    return predict_proba_at(*this, X, num_iterations());
}

Ensemble fit(const FeatureMatrix& X, const LabelVector& y, std::span<const double> weights,
             const TrainConfig& cfg, const FitOptions& opts) {
    cfg.validate();
    const std::size_t n = X.rows();
    if (y.size() != n || weights.size() != n) {
        throw Error("shape mismatch: X has " + std::to_string(n) + " rows, y " +
                    std::to_string(y.size()) + ", weights " + std::to_string(weights.size()));
    }
    if (n == 0 || X.cols() == 0) throw Error("empty effective training set");

    int k = opts.num_classes;
    for (int label : y) {
        if (label < 0) throw Error("invalid label: negative class index");
        if (opts.num_classes == 0) k = std::max(k, label + 1);
        else if (label >= opts.num_classes) throw Error("invalid label: class index out of range");
    }

    std::vector<std::size_t> kept;
    double weight_sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        if (!(weights[r] >= 0.0) || !std::isfinite(weights[r])) {
            throw Error("invalid weight at row " + std::to_string(r));
        }
        if (weights[r] > 0.0) {
            kept.push_back(r);
            weight_sum += weights[r];
        }
    }
    if (kept.empty()) throw Error("empty effective training set");
    {
        std::vector<char> present(static_cast<std::size_t>(std::max(k, 2)), 0);
        int distinct = 0;
        for (std::size_t r : kept) {
            if (!present[y[r]]) {
                present[y[r]] = 1;
                ++distinct;
            }
        }
        if (distinct < 2 || k < 2) throw Error("degenerate labels: fewer than two classes");
    }

    const std::size_t m = kept.size();
    const std::size_t d = X.cols();
    const bool uniform =
        std::all_of(kept.begin(), kept.end(), [&](std::size_t r) { return weights[r] == weights[kept[0]]; });
    std::vector<double> w(m);
    const double scale = static_cast<double>(m) / weight_sum;
    for (std::size_t i = 0; i < m; ++i) w[i] = uniform ? 1.0 : weights[kept[i]] * scale;

    std::vector<std::vector<double>> columns(d, std::vector<double>(m));
    std::vector<int> labels(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto row = X.row(kept[i]);
        for (std::size_t f = 0; f < d; ++f) columns[f][i] = row[f];
        labels[i] = y[kept[i]];
    }
    std::vector<std::vector<std::uint32_t>> sorted(d, std::vector<std::uint32_t>(m));
    for (std::size_t f = 0; f < d; ++f) {
        std::iota(sorted[f].begin(), sorted[f].end(), 0u);
        const auto& col = columns[f];
        std::stable_sort(sorted[f].begin(), sorted[f].end(),
                         [&](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    }

    const bool binary = (k == 2);
    const std::size_t groups = binary ? 1 : static_cast<std::size_t>(k);
    double total_w = 0.0;
    std::vector<double> class_w(static_cast<std::size_t>(k), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        total_w += w[i];
        class_w[labels[i]] += w[i];
    }
    std::vector<double> base(groups);
    if (binary) {
        const double p = std::clamp(class_w[1] / total_w, kProbFloor, 1.0 - kProbFloor);
        base[0] = std::log(p / (1.0 - p));
    } else {
        for (std::size_t c = 0; c < groups; ++c) {
            base[c] = std::log(std::max(class_w[c] / total_w, kProbFloor));
        }
    }

    std::vector<double> raw(m * groups);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t g = 0; g < groups; ++g) raw[i * groups + g] = base[g];
    }

    TreeBuilder builder(columns, sorted, cfg, opts.workers);
    std::vector<std::vector<double>> grad(groups, std::vector<double>(m));
    std::vector<std::vector<double>> hess(groups, std::vector<double>(m));
    std::vector<double> prob(static_cast<std::size_t>(k));
    std::vector<std::vector<RegressionTree>> iterations;
    iterations.reserve(static_cast<std::size_t>(cfg.num_iterations));

    for (int it = 0; it < cfg.num_iterations; ++it) {
        for (std::size_t i = 0; i < m; ++i) {
            link(std::span<const double>(raw.data() + i * groups, groups), prob);
            if (binary) {
                const double p = prob[1];
                grad[0][i] = w[i] * (p - (labels[i] == 1 ? 1.0 : 0.0));
                hess[0][i] = w[i] * std::max(p * (1.0 - p), kMinHessian);
            } else {
                for (std::size_t c = 0; c < groups; ++c) {
                    const double p = prob[c];
                    grad[c][i] = w[i] * (p - (labels[i] == static_cast<int>(c) ? 1.0 : 0.0));
                    hess[c][i] = w[i] * std::max(p * (1.0 - p), kMinHessian);
                }
            }
        }
        std::vector<RegressionTree> group_trees;
        group_trees.reserve(groups);
        for (std::size_t g = 0; g < groups; ++g) {
            group_trees.push_back(builder.build(grad[g], hess[g]));
            const auto& leaf = builder.leaf_value_of_row();
            for (std::size_t i = 0; i < m; ++i) raw[i * groups + g] += leaf[i];
        }
        iterations.push_back(std::move(group_trees));
    }

    return Ensemble(k, static_cast<int>(d), std::move(base), cfg, std::move(iterations));
}

ProbabilityMatrix predict_proba_at(const Ensemble& model, const FeatureMatrix& X, int iteration) {
    check_iteration(model, iteration);
    const std::size_t k = static_cast<std::size_t>(model.num_classes());
    const std::size_t groups = static_cast<std::size_t>(model.trees_per_iteration());
    ProbabilityMatrix out{X.rows(), k, std::vector<double>(X.rows() * k)};
    sweep_raw_scores(model, X, iteration, [&](int i, std::span<const double> raw) {
        if (i + 1 != iteration) return;
        for (std::size_t j = 0; j < X.rows(); ++j) {
            link(raw.subspan(j * groups, groups), std::span<double>(out.values.data() + j * k, k));
        }
    });
    return out;
}

StagedTable<double> staged_scores(const Ensemble& model, const FeatureMatrix& X,
                                  const LabelVector& y) {
    if (y.size() != X.rows()) throw Error("shape mismatch: labels and rows differ");
    const std::size_t n = X.rows();
    const std::size_t k = static_cast<std::size_t>(model.num_classes());
    const std::size_t groups = static_cast<std::size_t>(model.trees_per_iteration());
    for (int label : y) {
        if (label < 0 || label >= model.num_classes()) throw Error("shape mismatch: label out of range");
    }
    const std::size_t t = static_cast<std::size_t>(model.num_iterations());
    StagedTable<double> out{t, n, std::vector<double>(t * n)};
    std::vector<double> prob(k);
    sweep_raw_scores(model, X, model.num_iterations(), [&](int i, std::span<const double> raw) {
        for (std::size_t j = 0; j < n; ++j) {
            link(raw.subspan(j * groups, groups), prob);
            out.values[static_cast<std::size_t>(i) * n + j] = prob[y[j]];
        }
    });
    return out;
}

StagedTable<int> staged_predictions(const Ensemble& model, const FeatureMatrix& X) {
    const std::size_t n = X.rows();
    const std::size_t k = static_cast<std::size_t>(model.num_classes());
    const std::size_t groups = static_cast<std::size_t>(model.trees_per_iteration());
    const std::size_t t = static_cast<std::size_t>(model.num_iterations());
    StagedTable<int> out{t, n, std::vector<int>(t * n)};
    std::vector<double> prob(k);
    sweep_raw_scores(model, X, model.num_iterations(), [&](int i, std::span<const double> raw) {
        for (std::size_t j = 0; j < n; ++j) {
            link(raw.subspan(j * groups, groups), prob);
            out.values[static_cast<std::size_t>(i) * n + j] = argmax(prob);
        }
    });
    return out;
}

double weighted_log_loss(const Ensemble& model, const FeatureMatrix& X, const LabelVector& y,
                         std::span<const double> weights, int iteration) {
    if (y.size() != X.rows() || weights.size() != X.rows()) {
        throw Error("shape mismatch: labels/weights and rows differ");
    }
    const auto proba = predict_proba_at(model, X, iteration);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t j = 0; j < X.rows(); ++j) {
        const double p = std::clamp(proba(j, static_cast<std::size_t>(y[j])), kProbFloor, 1.0 - kProbFloor);
        num += weights[j] * -std::log(p);
        den += weights[j];
    }
    if (den <= 0.0) throw Error("empty effective training set");
    return num / den;
}

int argmax(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
        if (row[c] > row[best]) best = c;
    }
    return static_cast<int>(best);
}

// ---------------------------------------------------------------------------
// Model file

namespace {

using nlohmann::json;

json node_to_json(const RegressionTree& tree, int i) {
    const TreeNode& nd = tree.nodes[i];
    if (nd.is_leaf()) return json{{"leaf", nd.value}};
    return json{{"feat", nd.feature},
                {"thr", nd.threshold},
                {"left", node_to_json(tree, nd.left)},
                {"right", node_to_json(tree, nd.right)}};
}

int node_from_json(const json& j, RegressionTree& tree, int num_features, int depth) {
    if (depth > 64) throw Error("corrupt model file: tree too deep");
    if (!j.is_object()) throw Error("corrupt model file: tree node is not an object");
    const int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("leaf")) {
        const double v = j.at("leaf").get<double>();
        if (!std::isfinite(v)) throw Error("corrupt model file: non-finite leaf");
        tree.nodes[idx].value = v;
        return idx;
    }
    const int feat = j.at("feat").get<int>();
    if (feat < 0 || feat >= num_features) throw Error("corrupt model file: feature index out of range");
    const double thr = j.at("thr").get<double>();
    const int left = node_from_json(j.at("left"), tree, num_features, depth + 1);
    const int right = node_from_json(j.at("right"), tree, num_features, depth + 1);
    TreeNode& nd = tree.nodes[idx];
    nd.feature = feat;
    nd.threshold = thr;
    nd.left = left;
    nd.right = right;
    return idx;
}

}  // namespace

json config_to_json(const TrainConfig& c) {
    return {{"num_iterations", c.num_iterations}, {"learning_rate", c.learning_rate},
            {"max_depth", c.max_depth},           {"min_child_weight", c.min_child_weight},
            {"l2_reg", c.l2_reg},                 {"seed", c.seed}};
}

TrainConfig config_from_json(const json& jc) {
    TrainConfig cfg;
    cfg.num_iterations = jc.at("num_iterations").get<int>();
    cfg.learning_rate = jc.at("learning_rate").get<double>();
    cfg.max_depth = jc.at("max_depth").get<int>();
    cfg.min_child_weight = jc.at("min_child_weight").get<double>();
    cfg.l2_reg = jc.at("l2_reg").get<double>();
    cfg.seed = jc.at("seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

std::string serialize(const Ensemble& model) {
    const TrainConfig& c = model.config();
    json iterations = json::array();
    for (const auto& group : model.iterations()) {
        json g = json::array();
        for (const auto& tree : group) g.push_back(node_to_json(tree, 0));
        iterations.push_back(std::move(g));
    }
    json doc{{"format_version", kModelFormatVersion},
             {"k_classes", model.num_classes()},
             {"n_features", model.num_features()},
             {"base_score", model.base_score()},
             {"config", config_to_json(c)},
             {"iterations", std::move(iterations)}};
    return doc.dump();
}

Ensemble deserialize(const std::string& bytes) {
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::exception& e) {
        throw Error(std::string("corrupt model file: ") + e.what());
    }
    try {
        if (!doc.is_object() || !doc.contains("format_version")) {
            throw Error("corrupt model file: missing format_version");
        }
        const int version = doc.at("format_version").get<int>();
        if (version != kModelFormatVersion) {
            throw Error("corrupt model file: unsupported format_version " + std::to_string(version) +
                        " (expected " + std::to_string(kModelFormatVersion) + ")");
        }
        const TrainConfig cfg = config_from_json(doc.at("config"));
        const int k = doc.at("k_classes").get<int>();
        const int d = doc.at("n_features").get<int>();
        if (k < 2 || d < 1) throw Error("corrupt model file: bad dimensions");
        std::vector<std::vector<RegressionTree>> iterations;
        for (const json& jg : doc.at("iterations")) {
            std::vector<RegressionTree> group;
            for (const json& jt : jg) {
                RegressionTree tree;
                node_from_json(jt, tree, d, 0);
                group.push_back(std::move(tree));
            }
            iterations.push_back(std::move(group));
        }
        return Ensemble(k, d, doc.at("base_score").get<std::vector<double>>(), cfg,
                        std::move(iterations));
    } catch (const json::exception& e) {
        throw Error(std::string("corrupt model file: ") + e.what());
    } catch (const Error& e) {
        const std::string msg = e.what();
        if (msg.rfind("corrupt model file", 0) == 0) throw;
        throw Error("corrupt model file: " + msg);
    }
}

}  // namespace dyncart
