#include "icpipe/hybrid.hpp"

#include <cstring>
#include <fstream>

#include "icpipe/errors.hpp"
#include "icpipe/evaluation.hpp"
#include "icpipe/parallel.hpp"

namespace icpipe::model {

RgbImage ingest_patch(const RgbImage& patch, int input_side, int context_side) {
    if (patch.width != patch.height) {
        throw ShapeMismatchError("context patches must be square");
    }
    if (patch.width == input_side) return patch;
    if (patch.width != context_side || context_side % input_side != 0) {
        throw ShapeMismatchError("patch side matches neither the context nor the input side");
    }
    return downsample(patch, Rational{context_side / input_side, 1});
}

double HybridModel::predict_proba(const RgbImage& patch) const {
    const RgbImage input = ingest_patch(patch, net.cfg.input_side, context_side);
    const std::vector<double> features = extract_features(net, input);
    return forest.predict_proba(features);
}

FeatureMatrix backbone_features(const ConvNet& net, std::span<const RgbImage> images,
                                int workers) {
    FeatureMatrix X;
    X.rows = images.size();
    X.cols = static_cast<std::size_t>(net.cfg.feature_dim());
    X.values.resize(X.rows * X.cols);
    parallel_for(X.rows, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const std::vector<double> f = extract_features(net, images[i]);
            std::copy(f.begin(), f.end(), X.values.begin() + static_cast<std::ptrdiff_t>(i * X.cols));
        }
    });
    return X;
}

namespace {

std::vector<double> forest_scores(const ForestModel& forest, const FeatureMatrix& X,
                                  int workers) {
    std::vector<double> scores(X.rows);
    parallel_for(X.rows, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) scores[i] = forest.predict_proba(X.row(i));
    });
    return scores;
}

TrainOutcome finish_training(ConvNet net, const LabeledPatchSet& train,
                             const LabeledPatchSet& val, const TrainConfig& tcfg,
                             const ForestConfig& fcfg, SlideScoreSource* slide_scores,
                             TrainLog log, Provenance provenance,
                             const std::string& center_id) {
    TrainOutcome outcome;
    outcome.log = std::move(log);

    const FeatureMatrix train_X = backbone_features(net, train.images, tcfg.workers);
    ForestModel forest =
        train_forest(train_X, train.labels, fcfg, mix_seed(tcfg.seed, 0xF02E57ULL), tcfg.workers);

    HybridModel model;
    model.net = std::move(net);
    model.forest = std::move(forest);
    model.provenance = provenance;
    model.center_id = center_id;
    model.train_seed = tcfg.seed;
    model.train_patch_count = train.size();

    const FeatureMatrix val_X = backbone_features(model.net, val.images, tcfg.workers);
    const std::vector<double> val_scores = forest_scores(model.forest, val_X, tcfg.workers);
    model.p0 = evaluation::f1_optimal_threshold(val_scores, val.labels);

    if (slide_scores != nullptr) {
        const auto [s_ic, slide_labels] = slide_scores->score_slides(model);
        try {
            model.slide_threshold = evaluation::f1_optimal_threshold(s_ic, slide_labels);
        } catch (const SingleClassError&) {
            outcome.warnings.push_back(
                "validation slides contain a single class; slide threshold kept at 0.5");
        }
    }

    outcome.model = std::move(model);
    return outcome;
}

}  // namespace

TrainOutcome train_master(const LabeledPatchSet& train, const LabeledPatchSet& val,
                          const ConvNetConfig& ncfg, const TrainConfig& tcfg,
                          const AugmentConfig& acfg, const ForestConfig& fcfg,
                          SlideScoreSource* slide_scores) {
    ConvNet net(ncfg);
    net.init_he(mix_seed(tcfg.seed, 0x1217ULL));
    TrainLog log = train_cnn(net, train.images, train.labels, val.images, val.labels, tcfg, acfg);
    return finish_training(std::move(net), train, val, tcfg, fcfg, slide_scores, std::move(log),
                           Provenance::Master, "");
}

TrainOutcome calibrate(const HybridModel& master, const LabeledPatchSet& target_train,
                       const LabeledPatchSet& target_val, const TrainConfig& tcfg,
                       const AugmentConfig& acfg, const ForestConfig& fcfg,
                       SlideScoreSource* slide_scores, const std::string& center_id) {
    ConvNet net = master.net;  // starting state; the master itself is immutable
    TrainLog log = train_cnn(net, target_train.images, target_train.labels, target_val.images,
                             target_val.labels, tcfg, acfg);
    TrainOutcome outcome =
        finish_training(std::move(net), target_train, target_val, tcfg, fcfg, slide_scores,
                        std::move(log), Provenance::Calibrated, center_id);

    if (master.train_patch_count > 0) {
        const double ratio = static_cast<double>(target_train.size()) /
                             static_cast<double>(master.train_patch_count);
        if (ratio < 0.05 || ratio > 0.2) {
            outcome.warnings.push_back(
                "DataRatioWarning: target training set is " + std::to_string(ratio) +
                " of the master's; expected within [0.05, 0.2]");
        }
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// binary container

namespace {

constexpr std::uint32_t kMagic = 0x4D484349;  // "ICHM" little-endian
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}
void put_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
}
void put_f64(std::ofstream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
}
void put_str(std::ofstream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::uint64_t get_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
double get_f64(std::ifstream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::string get_str(std::ifstream& in) {
    const std::uint32_t n = get_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    return s;
}

}  // namespace

void save_model(const HybridModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write model file: " + path.string());

    put_u32(out, kMagic);
    put_u32(out, kVersion);

    put_u32(out, static_cast<std::uint32_t>(model.net.cfg.input_side));
    put_u32(out, static_cast<std::uint32_t>(model.context_side));
    for (int c : model.net.cfg.channels) put_u32(out, static_cast<std::uint32_t>(c));

    put_u64(out, model.net.params.size());
    out.write(reinterpret_cast<const char*>(model.net.params.data()),
              static_cast<std::streamsize>(model.net.params.size() * sizeof(double)));

    put_u32(out, static_cast<std::uint32_t>(model.forest.cfg.n_trees));
    put_u32(out, static_cast<std::uint32_t>(model.forest.cfg.max_depth));
    put_u32(out, model.forest.cfg.bootstrap ? 1 : 0);
    put_u32(out, static_cast<std::uint32_t>(model.forest.cfg.min_samples_split));
    put_u32(out, static_cast<std::uint32_t>(model.forest.feature_dim));
    put_u32(out, static_cast<std::uint32_t>(model.forest.trees.size()));
    for (const Tree& tree : model.forest.trees) {
        put_u64(out, tree.seed);
        put_u32(out, static_cast<std::uint32_t>(tree.nodes.size()));
        for (const TreeNode& n : tree.nodes) {
            put_u32(out, static_cast<std::uint32_t>(n.feature));
            put_f64(out, n.threshold);
            put_u32(out, n.left);
            put_u32(out, n.right);
            put_f64(out, n.leaf_prob);
        }
    }

    put_f64(out, model.p0);
    put_f64(out, model.slide_threshold);
    put_u32(out, model.provenance == Provenance::Master ? 0 : 1);
    put_str(out, model.center_id);
    put_u64(out, model.train_seed);
    put_u64(out, model.train_patch_count);
    if (!out) throw DataError("model write failed: " + path.string());
}

HybridModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read model file: " + path.string());

    if (get_u32(in) != kMagic) throw ModelVersionError("not a model file: " + path.string());
    const std::uint32_t version = get_u32(in);
    if (version != kVersion) {
        throw ModelVersionError("unsupported model version " + std::to_string(version));
    }

    ConvNetConfig ncfg;
    ncfg.input_side = static_cast<int>(get_u32(in));
    const int context_side = static_cast<int>(get_u32(in));
    for (int k = 0; k < 3; ++k) ncfg.channels[static_cast<std::size_t>(k)] = static_cast<int>(get_u32(in));

    HybridModel model;
    model.net = ConvNet(ncfg);
    model.context_side = context_side;
    const std::uint64_t n_params = get_u64(in);
    if (n_params != model.net.params.size()) {
        throw ModelVersionError("parameter count does not match the architecture");
    }
    in.read(reinterpret_cast<char*>(model.net.params.data()),
            static_cast<std::streamsize>(n_params * sizeof(double)));

    model.forest.cfg.n_trees = static_cast<int>(get_u32(in));
    model.forest.cfg.max_depth = static_cast<int>(get_u32(in));
    model.forest.cfg.bootstrap = get_u32(in) != 0;
    model.forest.cfg.min_samples_split = static_cast<int>(get_u32(in));
    model.forest.feature_dim = static_cast<int>(get_u32(in));
    const std::uint32_t n_trees = get_u32(in);
    model.forest.trees.resize(n_trees);
    for (Tree& tree : model.forest.trees) {
        tree.seed = get_u64(in);
        const std::uint32_t n_nodes = get_u32(in);
        tree.nodes.resize(n_nodes);
        for (TreeNode& n : tree.nodes) {
            n.feature = static_cast<int>(get_u32(in));
            n.threshold = get_f64(in);
            n.left = get_u32(in);
            n.right = get_u32(in);
            n.leaf_prob = get_f64(in);
        }
    }

    model.p0 = get_f64(in);
    model.slide_threshold = get_f64(in);
    model.provenance = get_u32(in) == 0 ? Provenance::Master : Provenance::Calibrated;
    model.center_id = get_str(in);
    model.train_seed = get_u64(in);
    model.train_patch_count = get_u64(in);
    if (!in) throw DataError("model file truncated: " + path.string());
    return model;
}

}  // namespace icpipe::model
