#include "icpipe/forest.hpp"

#include <algorithm>
#include <cmath>

#include "icpipe/errors.hpp"
#include "icpipe/parallel.hpp"
#include "icpipe/rng.hpp"

namespace icpipe::model {

double Tree::predict(std::span<const double> features) const {
    std::uint32_t idx = 0;
    while (!nodes[idx].is_leaf()) {
        const TreeNode& n = nodes[idx];
        idx = features[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[idx].leaf_prob;
}

double ForestModel::predict_proba(std::span<const double> features) const {
    if (static_cast<int>(features.size()) != feature_dim) {
        throw ShapeMismatchError("feature vector has wrong dimension");
    }
    double acc = 0.0;
    for (const Tree& t : trees) acc += t.predict(features);
    return acc / static_cast<double>(trees.size());
}

namespace {

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;  // weighted Gini of the two children
};

double gini(std::uint64_t pos, std::uint64_t n) {
    if (n == 0) return 0.0;
    const double p = static_cast<double>(pos) / static_cast<double>(n);
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

// Greedy best split over a random feature subset. Candidate thresholds are
// midpoints between consecutive distinct values.
SplitChoice best_split(const FeatureMatrix& X, std::span<const int> y,
                       std::span<const std::uint32_t> samples, int n_features_to_try,
                       Rng& rng) {
    const int d = static_cast<int>(X.cols);
    std::vector<int> feats(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) feats[i] = i;
    // partial Fisher-Yates: the first n_features_to_try entries are the subset
    for (int i = 0; i < n_features_to_try; ++i) {
        const int j = i + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(d - i)));
        std::swap(feats[i], feats[j]);
    }

    std::uint64_t total_pos = 0;
    for (std::uint32_t s : samples) total_pos += y[s] != 0 ? 1 : 0;
    const std::uint64_t n = samples.size();

    SplitChoice best;
    std::vector<std::pair<double, std::uint32_t>> vals(samples.size());
    for (int fi = 0; fi < n_features_to_try; ++fi) {
        const int f = feats[fi];
        for (std::size_t i = 0; i < samples.size(); ++i) {
            vals[i] = {X.row(samples[i])[static_cast<std::size_t>(f)], samples[i]};
        }
        std::sort(vals.begin(), vals.end());

        std::uint64_t left_n = 0, left_pos = 0;
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            ++left_n;
            left_pos += y[vals[i].second] != 0 ? 1 : 0;
            if (vals[i].first == vals[i + 1].first) continue;
            const std::uint64_t right_n = n - left_n;
            const std::uint64_t right_pos = total_pos - left_pos;
            const double impurity =
                (static_cast<double>(left_n) * gini(left_pos, left_n) +
                 static_cast<double>(right_n) * gini(right_pos, right_n)) /
                static_cast<double>(n);
            if (!best.found || impurity < best.impurity) {
                best.found = true;
                best.feature = f;
                best.threshold = vals[i].first + 0.5 * (vals[i + 1].first - vals[i].first);
                best.impurity = impurity;
            }
        }
    }
    return best;
}

std::uint32_t build_node(const FeatureMatrix& X, std::span<const int> y,
                         std::vector<std::uint32_t>& samples, std::size_t begin,
                         std::size_t end, int depth, const ForestConfig& cfg,
                         int n_features_to_try, Rng& rng, std::vector<TreeNode>& nodes) {
    const std::uint32_t idx = static_cast<std::uint32_t>(nodes.size());
    nodes.emplace_back();

    std::uint64_t pos = 0;
    for (std::size_t i = begin; i < end; ++i) pos += y[samples[i]] != 0 ? 1 : 0;
    const std::uint64_t n = end - begin;
    const double prob = static_cast<double>(pos) / static_cast<double>(n);

    const bool stop = depth >= cfg.max_depth || n < static_cast<std::uint64_t>(cfg.min_samples_split) ||
                      pos == 0 || pos == n;
    if (!stop) {
        const SplitChoice split = best_split(
            X, y, std::span<const std::uint32_t>(samples.data() + begin, end - begin),
            n_features_to_try, rng);
        if (split.found) {
            // stable partition keeps sample order deterministic
            std::vector<std::uint32_t> left, right;
            left.reserve(n);
            right.reserve(n);
            for (std::size_t i = begin; i < end; ++i) {
                const std::uint32_t s = samples[i];
                if (X.row(s)[static_cast<std::size_t>(split.feature)] <= split.threshold) {
                    left.push_back(s);
                } else {
                    right.push_back(s);
                }
            }
            if (!left.empty() && !right.empty()) {
                std::copy(left.begin(), left.end(), samples.begin() + static_cast<std::ptrdiff_t>(begin));
                std::copy(right.begin(), right.end(),
                          samples.begin() + static_cast<std::ptrdiff_t>(begin + left.size()));
                const std::size_t mid = begin + left.size();
                const std::uint32_t l =
                    build_node(X, y, samples, begin, mid, depth + 1, cfg, n_features_to_try, rng, nodes);
                const std::uint32_t r =
                    build_node(X, y, samples, mid, end, depth + 1, cfg, n_features_to_try, rng, nodes);
                nodes[idx].feature = split.feature;
                nodes[idx].threshold = split.threshold;
                nodes[idx].left = l;
                nodes[idx].right = r;
                return idx;
            }
        }
    }
    nodes[idx].feature = -1;
    nodes[idx].leaf_prob = prob;
    return idx;
}

Tree build_tree(const FeatureMatrix& X, std::span<const int> y, const ForestConfig& cfg,
                std::uint64_t tree_seed) {
    Tree tree;
    tree.seed = tree_seed;
    Rng rng(tree_seed);

    std::vector<std::uint32_t> samples(X.rows);
    if (cfg.bootstrap) {
        for (std::size_t i = 0; i < X.rows; ++i) {
            samples[i] = static_cast<std::uint32_t>(rng.uniform_int(X.rows));
        }
    } else {
        for (std::size_t i = 0; i < X.rows; ++i) samples[i] = static_cast<std::uint32_t>(i);
    }

    const int n_try = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(X.cols)))));
    build_node(X, y, samples, 0, samples.size(), 0, cfg, n_try, rng, tree.nodes);
    return tree;
}

}  // namespace

ForestModel train_forest(const FeatureMatrix& features, std::span<const int> labels,
                         const ForestConfig& cfg, std::uint64_t seed, int workers) {
    if (features.rows == 0 || features.cols == 0) {
        throw EmptyInputError("train_forest requires at least one sample and one feature");
    }
    if (features.rows != labels.size()) {
        throw LengthMismatchError("feature rows and labels differ in length");
    }
    ForestModel model;
    model.cfg = cfg;
    model.feature_dim = static_cast<int>(features.cols);
    model.trees.resize(static_cast<std::size_t>(cfg.n_trees));
    parallel_for(model.trees.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            model.trees[t] = build_tree(features, labels, cfg, mix_seed(seed, t));
        }
    });
    return model;
}

}  // namespace icpipe::model
