#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "icpipe/convnet.hpp"
#include "icpipe/forest.hpp"
#include "icpipe/patches.hpp"

namespace icpipe::model {

enum class Provenance { Master, Calibrated };

// Convnet feature extractor plus random forest plus the two decision
// thresholds. The sigmoid head stays in the container (calibration resumes
// from it) but inference never uses it.
struct HybridModel {
    ConvNet net;
    ForestModel forest;
    double p0 = 0.5;
    double slide_threshold = 0.5;
    Provenance provenance = Provenance::Master;
    std::string center_id;
    std::uint64_t train_seed = 0;
    std::uint64_t train_patch_count = 0;
    int context_side = 256;  // geometric side of the x5 context patch

    // IC score in [0,1] for one x5 context patch. Accepts the context side
    // (resized on ingest) or the backbone input side directly.
    double predict_proba(const RgbImage& patch) const;
};

// Versioned little-endian binary container; layout in docs/model-format.md.
// Round trips are bit-exact. Loading a container with an unknown version
// throws ModelVersionError.
void save_model(const HybridModel& model, const std::filesystem::path& path);
HybridModel load_model(const std::filesystem::path& path);

// Supplies S_IC scores and slide labels for validation slides so the slide
// threshold can be derived without the model layer depending on the
// pipeline orchestration.
class SlideScoreSource {
public:
    virtual ~SlideScoreSource() = default;
    virtual std::pair<std::vector<double>, std::vector<int>> score_slides(
        const HybridModel& model) = 0;
};

struct TrainOutcome {
    HybridModel model;
    TrainLog log;
    std::vector<std::string> warnings;
};

// Backbone training, forest on backbone features of the un-augmented
// training patches, thresholds by F1 maximization on validation.
// slide_scores may be null; the slide threshold then keeps its 0.5 default.
TrainOutcome train_master(const LabeledPatchSet& train, const LabeledPatchSet& val,
                          const ConvNetConfig& ncfg, const TrainConfig& tcfg,
                          const AugmentConfig& acfg, const ForestConfig& fcfg,
                          SlideScoreSource* slide_scores);

// Fine-tunes the master backbone on target data with the same strategy,
// retrains the forest from scratch on target features, and re-derives both
// thresholds on target validation. The master is not modified. A target
// training set outside [1/20, 1/5] of the master's recorded training size
// adds a non-fatal DataRatioWarning to the outcome.
TrainOutcome calibrate(const HybridModel& master, const LabeledPatchSet& target_train,
                       const LabeledPatchSet& target_val, const TrainConfig& tcfg,
                       const AugmentConfig& acfg, const ForestConfig& fcfg,
                       SlideScoreSource* slide_scores, const std::string& center_id);

// Feature matrix of a patch set through the backbone (ordered, parallel).
FeatureMatrix backbone_features(const ConvNet& net, std::span<const RgbImage> images,
                                int workers);

// Resize-on-ingest step: patches arriving at the context side are reduced to
// the backbone input side with the exact box filter.
RgbImage ingest_patch(const RgbImage& patch, int input_side, int context_side);

}  // namespace icpipe::model
