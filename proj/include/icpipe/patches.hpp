#pragma once

#include <string>
#include <vector>

#include "icpipe/image.hpp"

namespace icpipe {

// Labeled patch records keyed by patient/slide for leakage checks.
// Labels: 1 = IC, 0 = Rest.
struct LabeledPatchSet {
    std::vector<RgbImage> images;
    std::vector<int> labels;
    std::vector<std::string> patient_ids;
    std::vector<std::string> slide_ids;
    std::vector<int> xs;  // x20 patch origin, base coordinates
    std::vector<int> ys;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }

    void append(RgbImage img, int label, std::string patient, std::string slide, int x, int y) {
        images.push_back(std::move(img));
        labels.push_back(label);
        patient_ids.push_back(std::move(patient));
        slide_ids.push_back(std::move(slide));
        xs.push_back(x);
        ys.push_back(y);
    }

    void append_all(LabeledPatchSet&& other) {
        for (std::size_t i = 0; i < other.size(); ++i) {
            append(std::move(other.images[i]), other.labels[i], std::move(other.patient_ids[i]),
                   std::move(other.slide_ids[i]), other.xs[i], other.ys[i]);
        }
    }
};

}  // namespace icpipe
