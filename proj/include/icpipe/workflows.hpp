#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "icpipe/config.hpp"
#include "icpipe/datagen.hpp"
#include "icpipe/evaluation.hpp"
#include "icpipe/hybrid.hpp"
#include "icpipe/pipeline.hpp"

namespace icpipe::workflows {

// Patient-disjoint carve of the training split into train/validation sides.
// When the greedy split leaves validation empty (few patients), the last
// shuffled training patient moves over so both sides stay usable.
std::pair<std::vector<std::string>, std::vector<std::string>> carve_train_val(
    const datagen::DatasetManifest& manifest, double val_ratio, std::uint64_t seed);

// Scores validation slides through the full pipeline so training can derive
// the slide threshold.
class PipelineSlideScorer : public model::SlideScoreSource {
public:
    PipelineSlideScorer(const datagen::DatasetManifest& manifest,
                        std::filesystem::path dataset_dir, std::vector<std::string> slide_ids,
                        pipeline::PipelineConfig cfg)
        : manifest_(manifest),
          dataset_dir_(std::move(dataset_dir)),
          slide_ids_(std::move(slide_ids)),
          cfg_(std::move(cfg)) {}

    std::pair<std::vector<double>, std::vector<int>> score_slides(
        const model::HybridModel& model) override;

private:
    const datagen::DatasetManifest& manifest_;
    std::filesystem::path dataset_dir_;
    std::vector<std::string> slide_ids_;
    pipeline::PipelineConfig cfg_;
};

pipeline::PipelineConfig pipeline_config(const config::RunConfig& cfg);

// Full master-training workflow on a dataset directory.
model::TrainOutcome run_train(const config::RunConfig& cfg,
                              const std::filesystem::path& dataset_dir);

// Full calibration workflow against a target dataset directory.
model::TrainOutcome run_calibrate(const config::RunConfig& cfg, const model::HybridModel& master,
                                  const std::filesystem::path& dataset_dir);

// Patch-level metrics of a model on the test split of a dataset.
evaluation::MetricsReport eval_patch_level(const config::RunConfig& cfg,
                                           const model::HybridModel& model,
                                           const datagen::DatasetManifest& manifest,
                                           const std::filesystem::path& dataset_dir);

struct SlideEvalResult {
    evaluation::MetricsReport report;
    std::vector<pipeline::SlideResult> slides;
    std::vector<int> labels;
};

// Slide-level metrics over the test split (S_IC thresholded at the model's
// slide threshold).
SlideEvalResult eval_slide_level(const config::RunConfig& cfg, const model::HybridModel& model,
                                 const datagen::DatasetManifest& manifest,
                                 const std::filesystem::path& dataset_dir,
                                 std::size_t max_slides = 0);

// Labeled patch set of a list of slides, resized to the model input side.
LabeledPatchSet build_patches(const config::RunConfig& cfg,
                              const datagen::DatasetManifest& manifest,
                              const std::filesystem::path& dataset_dir,
                              const std::vector<std::string>& slide_ids, int output_side);

}  // namespace icpipe::workflows
