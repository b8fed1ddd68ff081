#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "icpipe/errors.hpp"
#include "icpipe/hybrid.hpp"
#include "icpipe/rng.hpp"

using namespace icpipe;
using namespace icpipe::model;
namespace fs = std::filesystem;

namespace {

RgbImage textured_patch(int side, int label, std::uint64_t seed) {
    RgbImage img(side, side);
    Rng rng(seed);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const int base = label ? 70 : 180;
        img.data[i] = clamp_u8(base + static_cast<int>(rng.uniform_int(40)));
    }
    return img;
}

LabeledPatchSet toy_set(int n, int side, std::uint64_t seed) {
    LabeledPatchSet set;
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        set.append(textured_patch(side, label, seed + static_cast<std::uint64_t>(i)), label,
                   "P" + std::to_string(i % 4), "S" + std::to_string(i % 8), 0, 0);
    }
    return set;
}

HybridModel tiny_trained_model() {
    const LabeledPatchSet train = toy_set(24, 16, 100);
    const LabeledPatchSet val = toy_set(8, 16, 900);
    ConvNetConfig ncfg;
    ncfg.input_side = 16;
    TrainConfig tcfg;
    tcfg.max_epochs = 3;
    tcfg.seed = 5;
    ForestConfig fcfg;
    fcfg.n_trees = 10;
    TrainOutcome outcome = train_master(train, val, ncfg, tcfg, AugmentConfig::disabled(),
                                        fcfg, nullptr);
    outcome.model.context_side = 32;
    return std::move(outcome.model);
}

std::vector<char> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("model container round trips bit-exactly") {
    const HybridModel model = tiny_trained_model();
    const fs::path dir = fs::temp_directory_path() / "icpipe_model_test";
    fs::create_directories(dir);
    const fs::path a = dir / "a.icm";
    const fs::path b = dir / "b.icm";

    save_model(model, a);
    const HybridModel loaded = load_model(a);
    save_model(loaded, b);
    CHECK(file_bytes(a) == file_bytes(b));

    CHECK(loaded.net.params == model.net.params);
    CHECK(loaded.p0 == model.p0);
    CHECK(loaded.slide_threshold == model.slide_threshold);
    CHECK(loaded.train_seed == model.train_seed);
    CHECK(loaded.train_patch_count == model.train_patch_count);
    CHECK(loaded.context_side == model.context_side);
    CHECK((loaded.provenance == model.provenance));
    REQUIRE(loaded.forest.trees.size() == model.forest.trees.size());
    for (std::size_t t = 0; t < loaded.forest.trees.size(); ++t) {
        REQUIRE(loaded.forest.trees[t].nodes.size() == model.forest.trees[t].nodes.size());
    }
    fs::remove_all(dir);
}

TEST_CASE("unknown versions and foreign files are rejected") {
    const fs::path dir = fs::temp_directory_path() / "icpipe_model_bad";
    fs::create_directories(dir);
    const fs::path garbage = dir / "garbage.icm";
    {
        std::ofstream out(garbage, std::ios::binary);
        out << "definitely not a model";
    }
    CHECK_THROWS_AS(load_model(garbage), ModelVersionError);

    // valid magic, wrong version
    const fs::path versioned = dir / "versioned.icm";
    {
        std::ofstream out(versioned, std::ios::binary);
        const std::uint32_t magic = 0x4D484349, version = 999;
        out.write(reinterpret_cast<const char*>(&magic), 4);
        out.write(reinterpret_cast<const char*>(&version), 4);
    }
    CHECK_THROWS_AS(load_model(versioned), ModelVersionError);
    fs::remove_all(dir);
}

TEST_CASE("predict_proba is deterministic, bounded, and shape checked") {
    const HybridModel model = tiny_trained_model();
    const RgbImage context = textured_patch(32, 1, 777);  // context side
    const double p1 = model.predict_proba(context);
    const double p2 = model.predict_proba(context);
    CHECK(p1 == p2);
    CHECK(p1 >= 0.0);
    CHECK(p1 <= 1.0);

    // resize-on-ingest equals feeding the downsampled patch directly
    const RgbImage direct = downsample(context, {2, 1});
    CHECK(model.predict_proba(direct) == p1);

    const RgbImage wrong(24, 24);
    CHECK_THROWS_AS(model.predict_proba(wrong), ShapeMismatchError);
}

TEST_CASE("train_master produces thresholds in range and is deterministic") {
    const LabeledPatchSet train = toy_set(24, 16, 300);
    const LabeledPatchSet val = toy_set(8, 16, 600);
    ConvNetConfig ncfg;
    ncfg.input_side = 16;
    TrainConfig tcfg;
    tcfg.max_epochs = 2;
    tcfg.seed = 8;
    ForestConfig fcfg;
    fcfg.n_trees = 8;

    const TrainOutcome a =
        train_master(train, val, ncfg, tcfg, AugmentConfig::disabled(), fcfg, nullptr);
    const TrainOutcome b =
        train_master(train, val, ncfg, tcfg, AugmentConfig::disabled(), fcfg, nullptr);
    CHECK(a.model.p0 >= 0.0);
    CHECK(a.model.p0 <= 1.0);
    CHECK(a.model.slide_threshold == 0.5);  // no slide source attached
    CHECK((a.model.provenance == Provenance::Master));
    CHECK(a.model.train_patch_count == train.size());
    CHECK(a.model.net.params == b.model.net.params);
    CHECK(a.model.p0 == b.model.p0);
}

TEST_CASE("calibration leaves the master untouched and tags provenance") {
    const LabeledPatchSet ref_train = toy_set(60, 16, 100);
    const LabeledPatchSet ref_val = toy_set(8, 16, 900);
    ConvNetConfig ncfg;
    ncfg.input_side = 16;
    TrainConfig tcfg;
    tcfg.max_epochs = 2;
    tcfg.seed = 5;
    ForestConfig fcfg;
    fcfg.n_trees = 6;
    const TrainOutcome master_out =
        train_master(ref_train, ref_val, ncfg, tcfg, AugmentConfig::disabled(), fcfg, nullptr);

    const std::vector<double> master_params = master_out.model.net.params;
    const LabeledPatchSet tgt_train = toy_set(6, 16, 1100);  // 0.1 of the master's data
    const LabeledPatchSet tgt_val = toy_set(4, 16, 1500);
    const TrainOutcome cal = calibrate(master_out.model, tgt_train, tgt_val, tcfg,
                                       AugmentConfig::disabled(), fcfg, nullptr, "target");
    CHECK(master_out.model.net.params == master_params);
    CHECK((cal.model.provenance == Provenance::Calibrated));
    CHECK(cal.model.center_id == "target");
    CHECK(cal.warnings.empty());  // 6/60 = 0.1 sits inside the expected band

    // a tiny target set (2/60 < 1/20) triggers the non-fatal ratio warning
    const LabeledPatchSet tiny_train = toy_set(2, 16, 2000);
    const TrainOutcome warned = calibrate(master_out.model, tiny_train, tgt_val, tcfg,
                                          AugmentConfig::disabled(), fcfg, nullptr, "target");
    REQUIRE(!warned.warnings.empty());
    CHECK(warned.warnings[0].find("DataRatioWarning") != std::string::npos);
}
