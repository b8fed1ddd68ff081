#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "icpipe/errors.hpp"
#include "icpipe/forest.hpp"
#include "icpipe/rng.hpp"

using namespace icpipe;
using namespace icpipe::model;

namespace {

FeatureMatrix matrix(const std::vector<std::vector<double>>& rows) {
    FeatureMatrix X;
    X.rows = rows.size();
    X.cols = rows.empty() ? 0 : rows[0].size();
    for (const auto& r : rows) X.values.insert(X.values.end(), r.begin(), r.end());
    return X;
}

}  // namespace

TEST_CASE("depth-zero forest predicts the class prior everywhere") {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        rows.push_back({rng.uniform(), rng.uniform()});
        labels.push_back(i < 70 ? 1 : 0);
    }
    ForestConfig cfg;
    cfg.n_trees = 1;
    cfg.max_depth = 0;
    cfg.bootstrap = false;  // the leaf holds the exact class prior
    const ForestModel forest = train_forest(matrix(rows), labels, cfg, 5);
    const std::vector<double> probe = {0.3, 0.9};
    CHECK(forest.predict_proba(probe) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("linearly separable data reaches training accuracy 1.0 at depth 4") {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const double a = rng.uniform(), b = rng.uniform();
        rows.push_back({a, b});
        labels.push_back(a + b > 1.0 ? 1 : 0);
    }
    ForestConfig cfg;
    cfg.n_trees = 50;
    cfg.max_depth = 4;
    const ForestModel forest = train_forest(matrix(rows), labels, cfg, 9);
    int correct = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double p = forest.predict_proba(rows[i]);
        correct += (p > 0.5 ? 1 : 0) == labels[i] ? 1 : 0;
    }
    CHECK(correct == 200);
}

TEST_CASE("same seed reproduces identical tree structures") {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    Rng rng(3);
    for (int i = 0; i < 80; ++i) {
        rows.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
        labels.push_back(rng.uniform() < 0.5 ? 1 : 0);
    }
    ForestConfig cfg;
    cfg.n_trees = 10;
    const ForestModel a = train_forest(matrix(rows), labels, cfg, 42, 1);
    const ForestModel b = train_forest(matrix(rows), labels, cfg, 42, 4);
    REQUIRE(a.trees.size() == b.trees.size());
    for (std::size_t t = 0; t < a.trees.size(); ++t) {
        REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
        for (std::size_t n = 0; n < a.trees[t].nodes.size(); ++n) {
            CHECK(a.trees[t].nodes[n].feature == b.trees[t].nodes[n].feature);
            CHECK(a.trees[t].nodes[n].threshold == b.trees[t].nodes[n].threshold);
            CHECK(a.trees[t].nodes[n].leaf_prob == b.trees[t].nodes[n].leaf_prob);
        }
    }
}

TEST_CASE("predictions are invariant under dataset duplication without bootstrap") {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    Rng rng(4);
    for (int i = 0; i < 60; ++i) {
        rows.push_back({rng.uniform(), rng.uniform()});
        labels.push_back(rows.back()[0] > 0.5 ? 1 : 0);
    }
    std::vector<std::vector<double>> doubled = rows;
    doubled.insert(doubled.end(), rows.begin(), rows.end());
    std::vector<int> doubled_labels = labels;
    doubled_labels.insert(doubled_labels.end(), labels.begin(), labels.end());

    ForestConfig cfg;
    cfg.n_trees = 20;
    cfg.bootstrap = false;  // sanity mode
    const ForestModel a = train_forest(matrix(rows), labels, cfg, 7);
    const ForestModel b = train_forest(matrix(doubled), doubled_labels, cfg, 7);
    Rng probe_rng(5);
    for (int i = 0; i < 50; ++i) {
        const std::vector<double> probe = {probe_rng.uniform(), probe_rng.uniform()};
        CHECK(a.predict_proba(probe) == b.predict_proba(probe));
    }
}

TEST_CASE("forest probabilities stay within [0,1]") {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    Rng rng(6);
    for (int i = 0; i < 120; ++i) {
        rows.push_back({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
        labels.push_back(rng.uniform() < 0.3 ? 1 : 0);
    }
    const ForestModel forest = train_forest(matrix(rows), labels, ForestConfig{}, 11, 2);
    for (int i = 0; i < 50; ++i) {
        const std::vector<double> probe = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        const double p = forest.predict_proba(probe);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
}

TEST_CASE("bad inputs are rejected") {
    CHECK_THROWS_AS(train_forest(FeatureMatrix{}, std::vector<int>{}, ForestConfig{}, 1),
                    EmptyInputError);
    std::vector<std::vector<double>> rows = {{0.1, 0.2}};
    std::vector<int> too_many = {1, 0};
    CHECK_THROWS_AS(train_forest(matrix(rows), too_many, ForestConfig{}, 1),
                    LengthMismatchError);

    std::vector<int> one = {1};
    const ForestModel forest = train_forest(matrix(rows), one, ForestConfig{}, 1);
    const std::vector<double> wrong_dim = {0.5};
    CHECK_THROWS_AS(forest.predict_proba(wrong_dim), ShapeMismatchError);
}
