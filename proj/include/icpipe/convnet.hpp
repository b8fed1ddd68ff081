#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "icpipe/image.hpp"
#include "icpipe/rng.hpp"

namespace icpipe::model {

// Three conv blocks (3x3, stride 1, zero-pad 1, ReLU, 2x2 max-pool) followed
// by global average pooling and a temporary sigmoid head used only during
// backbone training.
struct ConvNetConfig {
    int input_side = 64;                      // training-time patch side
    std::array<int, 3> channels = {8, 16, 32};

    int feature_dim() const { return channels[2]; }
};

// Offsets of the flat parameter arrays, in a fixed documented order:
// conv1_w, conv1_b, conv2_w, conv2_b, conv3_w, conv3_b, head_w, head_b.
struct ParamLayout {
    std::array<std::size_t, 3> conv_w = {};
    std::array<std::size_t, 3> conv_b = {};
    std::size_t head_w = 0;
    std::size_t head_b = 0;
    std::size_t total = 0;
    std::array<int, 4> ch = {3, 8, 16, 32};

    static ParamLayout make(const ConvNetConfig& cfg);
};

struct ConvNet {
    ConvNetConfig cfg;
    ParamLayout layout;
    std::vector<double> params;

    explicit ConvNet(const ConvNetConfig& c = {})
        : cfg(c), layout(ParamLayout::make(c)), params(layout.total, 0.0) {}

    // He-style normal init, seeded.
    void init_he(std::uint64_t seed);
};

// Per-sample activations cached by forward for the backward pass.
struct SampleCache {
    int side = 0;
    std::vector<double> x0;                     // 3 x S x S input
    std::array<std::vector<double>, 3> conv_z;  // pre-ReLU conv outputs
    std::array<std::vector<double>, 3> pooled;  // post pool activations
    std::array<std::vector<int>, 3> argmax;     // winning input offset per pool cell
    std::vector<double> features;               // global average pool
    double logit = 0.0;
};

struct ForwardResult {
    std::vector<double> logits;
    std::vector<double> probs;
    std::vector<std::vector<double>> features;
};

// Patches are normalized to [0,1] internally. All patches in a batch must
// share one side, divisible by 8. Throws ShapeMismatchError.
ForwardResult forward(const ConvNet& net, std::span<const RgbImage> batch,
                      std::vector<SampleCache>* caches = nullptr, int workers = 1);

double sigmoid(double logit);

// Clamped binary cross entropy and its exact logit gradient (p - y, with p
// the clamped probability).
double bce_loss(double p, int y);
double bce_dlogit(double p, int y);

// Exact gradients of the mean BCE over the batch w.r.t. every parameter.
// Per-sample gradients are reduced in index order, so results do not depend
// on the worker count.
std::vector<double> backward(const ConvNet& net, std::vector<SampleCache>& caches,
                             std::span<const int> labels, int workers = 1);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(std::size_t n = 0, double lr_ = 0.001) : m(n, 0.0), v(n, 0.0), lr(lr_) {}
};

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

struct AugmentConfig {
    bool flip_horizontal = true;
    bool flip_vertical = true;
    bool rotate = true;                  // draws from {90, 180, 270} degrees
    bool noise = true;
    double noise_sigma_max = 10.0;       // gray levels
    bool hue = true;
    double hue_range = 0.05;             // turns, symmetric
    bool saturation = true;
    double saturation_min = 0.8;
    double saturation_max = 1.2;
    bool contrast = true;
    double contrast_min = 0.8;
    double contrast_max = 1.2;
    bool brightness = true;
    double brightness_range = 20.0;      // gray levels, symmetric

    static AugmentConfig disabled();
};

// Each enabled transform fires with probability 0.5; parameters are drawn
// uniformly from the configured ranges. Dimensions never change (rotations
// require square patches).
RgbImage augment(const RgbImage& patch, const AugmentConfig& cfg, Rng& rng);

struct TrainConfig {
    int batch_size = 32;
    int max_epochs = 100;
    int patience = 5;        // epochs without min_delta improvement
    double min_delta = 1e-4;
    double learning_rate = 0.001;
    std::uint64_t seed = 0;
    int workers = 1;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainLog {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    bool stopped_early = false;
};

// Minimizes mean BCE with Adam over shuffled mini-batches, augmenting
// training patches only. Stops when validation loss fails to improve by
// min_delta for `patience` epochs; parameters from the best validation epoch
// are restored. Throws EmptyClassError when a split lacks a class.
TrainLog train_cnn(ConvNet& net, std::span<const RgbImage> train_images,
                   std::span<const int> train_labels, std::span<const RgbImage> val_images,
                   std::span<const int> val_labels, const TrainConfig& tcfg,
                   const AugmentConfig& acfg);

// Forward without the head; returns the pooled feature vector.
std::vector<double> extract_features(const ConvNet& net, const RgbImage& patch);

}  // namespace icpipe::model
