#include "icpipe/evaluation.hpp"

#include <algorithm>

#include "icpipe/errors.hpp"
#include "icpipe/rng.hpp"

namespace icpipe::evaluation {

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) {
        throw LengthMismatchError("predictions and labels differ in length");
    }
    if (predictions.empty()) throw EmptyInputError("confusion requires at least one item");
    ConfusionCounts c;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const bool pred_ic = predictions[i] != 0;
        const bool is_ic = labels[i] != 0;
        if (pred_ic && is_ic) ++c.tp;
        else if (pred_ic && !is_ic) ++c.fp;
        else if (!pred_ic && is_ic) ++c.fn;
        else ++c.tn;
    }
    return c;
}

MetricsReport metrics(const ConfusionCounts& c) {
    if (c.total() == 0) throw EmptyInputError("metrics requires a non-empty confusion");
    MetricsReport r;
    r.counts = c;
    r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fp > 0) {
        r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    }
    if (c.tp + c.fn > 0) {
        r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    }
    if (r.precision && r.recall && (*r.precision + *r.recall) > 0.0) {
        r.f1 = 2.0 * (*r.precision) * (*r.recall) / (*r.precision + *r.recall);
    }
    return r;
}

double f1_optimal_threshold(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw LengthMismatchError("scores and labels differ in length");
    }
    std::uint64_t pos = 0, neg = 0;
    for (int y : labels) (y != 0 ? pos : neg)++;
    if (pos == 0 || neg == 0) {
        throw SingleClassError("threshold selection needs both classes");
    }

    std::vector<double> candidates(scores.begin(), scores.end());
    candidates.push_back(0.0);
    candidates.push_back(1.0);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    // F1 written as 2TP / (2TP + FP + FN): defined whenever a positive label
    // exists, and equal to 2PR/(P+R) when precision is defined.
    double best_t = candidates.front();
    double best_f1 = -1.0;
    for (double t : candidates) {
        std::uint64_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] > t) {
                (labels[i] != 0 ? tp : fp)++;
            }
        }
        const std::uint64_t fn = pos - tp;
        const double f1 = 2.0 * static_cast<double>(tp) /
                          static_cast<double>(2 * tp + fp + fn);
        if (f1 >= best_f1) {  // >= moves ties toward the largest threshold
            best_f1 = f1;
            best_t = t;
        }
    }
    return best_t;
}

SplitResult patient_split(std::span<const PatientFolder> patients, double ratio,
                          std::uint64_t seed) {
    if (patients.empty()) throw EmptyInputError("patient_split requires at least one patient");
    SplitResult result;
    if (patients.size() == 1) {
        result.single_patient_warning = true;
        result.train_patients.push_back(patients[0].patient_id);
        result.train_slides = patients[0].slide_ids;
        return result;
    }

    std::uint64_t total = 0;
    for (const auto& p : patients) total += p.slide_ids.size();

    std::vector<std::size_t> order(patients.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order.data(), order.size());

    const double target = ratio * static_cast<double>(total);
    std::uint64_t train_count = 0;
    std::size_t k = 0;
    while (k < order.size() && static_cast<double>(train_count) < target) {
        train_count += patients[order[k]].slide_ids.size();
        ++k;
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
        const PatientFolder& p = patients[order[i]];
        auto& slides = i < k ? result.train_slides : result.test_slides;
        auto& ids = i < k ? result.train_patients : result.test_patients;
        ids.push_back(p.patient_id);
        slides.insert(slides.end(), p.slide_ids.begin(), p.slide_ids.end());
    }
    return result;
}

MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels,
                              double threshold, const std::string& level,
                              const std::string& center) {
    std::vector<int> preds(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] > threshold ? 1 : 0;
    MetricsReport r = metrics(confusion(preds, labels));
    r.level = level;
    r.center = center;
    return r;
}

}  // namespace icpipe::evaluation
