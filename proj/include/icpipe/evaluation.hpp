#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace icpipe::evaluation {

enum class SlideClass { IC, Rest };

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
};

// Undefined metrics (zero denominators) stay unset and serialize as null.
struct MetricsReport {
    std::optional<double> accuracy;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::string level;   // "patch" or "slide"
    std::string center;
    ConfusionCounts counts;
};

// Standard counting with IC (label 1) as the positive class.
ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels);

MetricsReport metrics(const ConfusionCounts& c);

// Candidate thresholds are the distinct scores plus {0,1}; an item is
// positive iff score > t. Returns the F1-maximizing candidate, ties broken
// toward the largest threshold. Throws SingleClassError unless both classes
// are present.
double f1_optimal_threshold(std::span<const double> scores, std::span<const int> labels);

struct PatientFolder {
    std::string patient_id;
    std::vector<std::string> slide_ids;
};

struct SplitResult {
    std::vector<std::string> train_slides;
    std::vector<std::string> test_slides;
    std::vector<std::string> train_patients;
    std::vector<std::string> test_patients;
    bool single_patient_warning = false;
};

// Greedy assignment of seeded-shuffled patients to the training side until
// its slide count first reaches ratio * total; no patient lands on both
// sides. A single-patient manifest goes entirely to train, flagged.
SplitResult patient_split(std::span<const PatientFolder> patients, double ratio,
                          std::uint64_t seed);

// Thresholded score evaluation shared by the patch- and slide-level paths:
// prediction is positive iff score > threshold.
MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels,
                              double threshold, const std::string& level,
                              const std::string& center);

}  // namespace icpipe::evaluation
