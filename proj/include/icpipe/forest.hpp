#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace icpipe::model {

struct ForestConfig {
    int n_trees = 100;
    int max_depth = 16;
    bool bootstrap = true;  // disabling gives the deterministic sanity mode
    int min_samples_split = 2;
};

struct TreeNode {
    int feature = -1;          // -1 marks a leaf
    double threshold = 0.0;    // go left when value <= threshold
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    double leaf_prob = 0.0;    // IC proportion at the leaf

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;
    std::uint64_t seed = 0;

    double predict(std::span<const double> features) const;
};

// Row-major feature matrix.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    std::span<const double> row(std::size_t i) const {
        return {values.data() + i * cols, cols};
    }
};

struct ForestModel {
    ForestConfig cfg;
    int feature_dim = 0;
    std::vector<Tree> trees;

    // Mean of per-tree leaf IC proportions.
    double predict_proba(std::span<const double> features) const;
};

// Bootstrap per tree, Gini-impurity greedy splits over ceil(sqrt(d)) random
// features, leaves storing the IC proportion. Deterministic given the seed;
// trees may build in parallel because each derives its own stream from
// (seed, tree index).
ForestModel train_forest(const FeatureMatrix& features, std::span<const int> labels,
                         const ForestConfig& cfg, std::uint64_t seed, int workers = 1);

}  // namespace icpipe::model
