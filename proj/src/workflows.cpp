#include "icpipe/workflows.hpp"

#include <algorithm>

#include "icpipe/errors.hpp"
#include "icpipe/parallel.hpp"
#include "icpipe/rng.hpp"

namespace icpipe::workflows {

std::pair<std::vector<std::string>, std::vector<std::string>> carve_train_val(
    const datagen::DatasetManifest& manifest, double val_ratio, std::uint64_t seed) {
    // restrict patient folders to slides of the dataset's training split
    std::vector<evaluation::PatientFolder> folders;
    for (const datagen::PatientEntry& pe : manifest.patients) {
        evaluation::PatientFolder f;
        f.patient_id = pe.patient_id;
        for (const datagen::SlideEntry& se : pe.slides) {
            if (std::find(manifest.train_slides.begin(), manifest.train_slides.end(),
                          se.slide_id) != manifest.train_slides.end()) {
                f.slide_ids.push_back(se.slide_id);
            }
        }
        if (!f.slide_ids.empty()) folders.push_back(std::move(f));
    }
    if (folders.empty()) throw DataError("dataset has no training slides");

    evaluation::SplitResult split =
        evaluation::patient_split(folders, val_ratio, mix_seed(seed, 0xCA47EULL));
    if (split.test_slides.empty() && split.train_patients.size() > 1) {
        // move the last shuffled training patient over to validation
        const std::string moved = split.train_patients.back();
        std::vector<std::string> train, val;
        for (const auto& f : folders) {
            auto& dst = f.patient_id == moved ? val : train;
            // keep only slides that were in the train side
            for (const std::string& sid : f.slide_ids) {
                if (std::find(split.train_slides.begin(), split.train_slides.end(), sid) !=
                    split.train_slides.end()) {
                    dst.push_back(sid);
                }
            }
        }
        return {std::move(train), std::move(val)};
    }
    return {std::move(split.train_slides), std::move(split.test_slides)};
}

std::pair<std::vector<double>, std::vector<int>> PipelineSlideScorer::score_slides(
    const model::HybridModel& model) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const std::string& sid : slide_ids_) {
        const datagen::SlideEntry* entry = manifest_.find_slide(sid);
        if (entry == nullptr) throw DataError("slide not in manifest: " + sid);
        const pyramid::PyramidImage pyr =
            pyramid::PyramidImage::load(dataset_dir_ / entry->pyramid_path);
        const pipeline::SlideResult result = pipeline::score_slide(pyr, model, cfg_, sid);
        scores.push_back(result.s_ic);
        labels.push_back(entry->ic_slide ? 1 : 0);
    }
    return {std::move(scores), std::move(labels)};
}

pipeline::PipelineConfig pipeline_config(const config::RunConfig& cfg) {
    pipeline::PipelineConfig pcfg;
    pcfg.seg = cfg.seg;
    pcfg.filter = cfg.filter;
    pcfg.workers = cfg.workers;
    return pcfg;
}

LabeledPatchSet build_patches(const config::RunConfig& cfg,
                              const datagen::DatasetManifest& manifest,
                              const std::filesystem::path& dataset_dir,
                              const std::vector<std::string>& slide_ids, int output_side) {
    return datagen::build_patch_dataset(manifest, dataset_dir, slide_ids, cfg.filter,
                                        cfg.context_side, output_side, cfg.workers);
}

model::TrainOutcome run_train(const config::RunConfig& cfg,
                              const std::filesystem::path& dataset_dir) {
    const datagen::DatasetManifest manifest =
        datagen::load_manifest(dataset_dir / "manifest.json");
    const auto [train_ids, val_ids] = carve_train_val(manifest, cfg.val_ratio, cfg.seed);
    if (train_ids.empty() || val_ids.empty()) {
        throw DataError("training needs patients on both the train and validation sides");
    }
    const LabeledPatchSet train =
        build_patches(cfg, manifest, dataset_dir, train_ids, cfg.net.input_side);
    const LabeledPatchSet val =
        build_patches(cfg, manifest, dataset_dir, val_ids, cfg.net.input_side);
    if (train.empty() || val.empty()) {
        throw DataError("patch extraction produced an empty train or validation set");
    }

    PipelineSlideScorer scorer(manifest, dataset_dir, val_ids, pipeline_config(cfg));
    model::TrainConfig tcfg = cfg.train;
    tcfg.seed = cfg.seed;
    tcfg.workers = cfg.workers;
    model::TrainOutcome outcome =
        model::train_master(train, val, cfg.net, tcfg, cfg.augment, cfg.forest, &scorer);
    outcome.model.context_side = cfg.context_side;
    outcome.model.center_id = manifest.center_id;
    return outcome;
}

model::TrainOutcome run_calibrate(const config::RunConfig& cfg, const model::HybridModel& master,
                                  const std::filesystem::path& dataset_dir) {
    const datagen::DatasetManifest manifest =
        datagen::load_manifest(dataset_dir / "manifest.json");
    const auto [train_ids, val_ids] = carve_train_val(manifest, cfg.val_ratio, cfg.seed);
    if (train_ids.empty() || val_ids.empty()) {
        throw DataError("calibration needs patients on both the train and validation sides");
    }
    const LabeledPatchSet train =
        build_patches(cfg, manifest, dataset_dir, train_ids, master.net.cfg.input_side);
    const LabeledPatchSet val =
        build_patches(cfg, manifest, dataset_dir, val_ids, master.net.cfg.input_side);
    if (train.empty() || val.empty()) {
        throw DataError("patch extraction produced an empty train or validation set");
    }

    PipelineSlideScorer scorer(manifest, dataset_dir, val_ids, pipeline_config(cfg));
    model::TrainConfig tcfg = cfg.train;
    tcfg.seed = cfg.seed;
    tcfg.workers = cfg.workers;
    model::TrainOutcome outcome = model::calibrate(master, train, val, tcfg, cfg.augment,
                                                   cfg.forest, &scorer, manifest.center_id);
    outcome.model.context_side = master.context_side;
    return outcome;
}

evaluation::MetricsReport eval_patch_level(const config::RunConfig& cfg,
                                           const model::HybridModel& model,
                                           const datagen::DatasetManifest& manifest,
                                           const std::filesystem::path& dataset_dir) {
    const LabeledPatchSet test = build_patches(cfg, manifest, dataset_dir, manifest.test_slides,
                                               model.net.cfg.input_side);
    if (test.empty()) throw DataError("test split produced no labeled patches");
    std::vector<double> scores(test.size());
    parallel_for(test.size(), cfg.workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            scores[i] = model.predict_proba(test.images[i]);
        }
    });
    return evaluation::evaluate_scores(scores, test.labels, model.p0, "patch",
                                       manifest.center_id);
}

SlideEvalResult eval_slide_level(const config::RunConfig& cfg, const model::HybridModel& model,
                                 const datagen::DatasetManifest& manifest,
                                 const std::filesystem::path& dataset_dir,
                                 std::size_t max_slides) {
    SlideEvalResult out;
    std::vector<int> preds;
    const pipeline::PipelineConfig pcfg = pipeline_config(cfg);
    std::size_t n = manifest.test_slides.size();
    if (max_slides > 0) n = std::min(n, max_slides);
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& sid = manifest.test_slides[i];
        const datagen::SlideEntry* entry = manifest.find_slide(sid);
        const pyramid::PyramidImage pyr =
            pyramid::PyramidImage::load(dataset_dir / entry->pyramid_path);
        pipeline::SlideResult result = pipeline::score_slide(pyr, model, pcfg, sid);
        preds.push_back(result.predicted == evaluation::SlideClass::IC ? 1 : 0);
        out.labels.push_back(entry->ic_slide ? 1 : 0);
        out.slides.push_back(std::move(result));
    }
    out.report = evaluation::metrics(evaluation::confusion(preds, out.labels));
    out.report.level = "slide";
    out.report.center = manifest.center_id;
    return out;
}

}  // namespace icpipe::workflows
