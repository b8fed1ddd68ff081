#include "icpipe/convnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icpipe/color.hpp"
#include "icpipe/errors.hpp"
#include "icpipe/parallel.hpp"

namespace icpipe::model {

ParamLayout ParamLayout::make(const ConvNetConfig& cfg) {
    ParamLayout l;
    l.ch = {3, cfg.channels[0], cfg.channels[1], cfg.channels[2]};
    std::size_t off = 0;
    for (int k = 0; k < 3; ++k) {
        l.conv_w[k] = off;
        off += static_cast<std::size_t>(l.ch[k + 1]) * l.ch[k] * 9;
        l.conv_b[k] = off;
        off += static_cast<std::size_t>(l.ch[k + 1]);
    }
    l.head_w = off;
    off += static_cast<std::size_t>(l.ch[3]);
    l.head_b = off;
    off += 1;
    l.total = off;
    return l;
}

void ConvNet::init_he(std::uint64_t seed) {
    Rng rng(seed);
    for (int k = 0; k < 3; ++k) {
        const double std_dev = std::sqrt(2.0 / (layout.ch[k] * 9.0));
        const std::size_t count = static_cast<std::size_t>(layout.ch[k + 1]) * layout.ch[k] * 9;
        for (std::size_t i = 0; i < count; ++i) {
            params[layout.conv_w[k] + i] = rng.normal() * std_dev;
        }
        for (int c = 0; c < layout.ch[k + 1]; ++c) params[layout.conv_b[k] + c] = 0.0;
    }
    const double head_std = std::sqrt(2.0 / layout.ch[3]);
    for (int c = 0; c < layout.ch[3]; ++c) params[layout.head_w + c] = rng.normal() * head_std;
    params[layout.head_b] = 0.0;
}

namespace {

// z[co] = b[co] + sum_ci conv3x3(in[ci], w[co][ci]), zero padding.
void conv3x3_forward(const double* in, int c_in, int side, const double* w, const double* b,
                     double* z, int c_out) {
    const std::size_t plane = static_cast<std::size_t>(side) * side;
    for (int co = 0; co < c_out; ++co) {
        double* zp = z + co * plane;
        std::fill(zp, zp + plane, b[co]);
        for (int ci = 0; ci < c_in; ++ci) {
            const double* ip = in + ci * plane;
            const double* wk = w + (static_cast<std::size_t>(co) * c_in + ci) * 9;
            for (int dy = -1; dy <= 1; ++dy) {
                const int y0 = std::max(0, -dy), y1 = side - std::max(0, dy);
                for (int dx = -1; dx <= 1; ++dx) {
                    const double wv = wk[(dy + 1) * 3 + (dx + 1)];
                    const int x0 = std::max(0, -dx), x1 = side - std::max(0, dx);
                    for (int y = y0; y < y1; ++y) {
                        double* zrow = zp + static_cast<std::size_t>(y) * side;
                        const double* irow = ip + static_cast<std::size_t>(y + dy) * side + dx;
                        for (int x = x0; x < x1; ++x) zrow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
}

// ReLU then 2x2 max-pool; ties go to the first cell in scan order. argmax
// stores the winning offset within the pre-pool plane.
void relu_maxpool(const double* z, int channels, int side, double* out, int* argmax) {
    const int half = side / 2;
    const std::size_t plane = static_cast<std::size_t>(side) * side;
    const std::size_t out_plane = static_cast<std::size_t>(half) * half;
    for (int c = 0; c < channels; ++c) {
        const double* zp = z + c * plane;
        double* op = out + c * out_plane;
        int* ap = argmax + c * out_plane;
        for (int y = 0; y < half; ++y) {
            for (int x = 0; x < half; ++x) {
                const int base = 2 * y * side + 2 * x;
                const int offs[4] = {base, base + 1, base + side, base + side + 1};
                int best = offs[0];
                double bv = zp[offs[0]];
                for (int i = 1; i < 4; ++i) {
                    if (zp[offs[i]] > bv) {
                        bv = zp[offs[i]];
                        best = offs[i];
                    }
                }
                op[static_cast<std::size_t>(y) * half + x] = bv > 0.0 ? bv : 0.0;
                ap[static_cast<std::size_t>(y) * half + x] = best;
            }
        }
    }
}

void forward_sample(const ConvNet& net, const RgbImage& img, SampleCache& cache) {
    const int side = img.width;
    cache.side = side;
    const std::size_t plane = static_cast<std::size_t>(side) * side;
    cache.x0.resize(3 * plane);
    for (int y = 0; y < side; ++y) {
        const std::uint8_t* row = img.px(0, y);
        for (int x = 0; x < side; ++x) {
            for (int c = 0; c < 3; ++c) {
                cache.x0[c * plane + static_cast<std::size_t>(y) * side + x] =
                    row[3 * x + c] / 255.0;
            }
        }
    }

    const ParamLayout& L = net.layout;
    const double* in = cache.x0.data();
    int in_side = side;
    for (int k = 0; k < 3; ++k) {
        const int co = L.ch[k + 1];
        cache.conv_z[k].resize(static_cast<std::size_t>(co) * in_side * in_side);
        conv3x3_forward(in, L.ch[k], in_side, net.params.data() + L.conv_w[k],
                        net.params.data() + L.conv_b[k], cache.conv_z[k].data(), co);
        const int half = in_side / 2;
        cache.pooled[k].resize(static_cast<std::size_t>(co) * half * half);
        cache.argmax[k].resize(cache.pooled[k].size());
        relu_maxpool(cache.conv_z[k].data(), co, in_side, cache.pooled[k].data(),
                     cache.argmax[k].data());
        in = cache.pooled[k].data();
        in_side = half;
    }

    const int c3 = L.ch[3];
    const std::size_t spatial = static_cast<std::size_t>(in_side) * in_side;
    cache.features.assign(static_cast<std::size_t>(c3), 0.0);
    for (int c = 0; c < c3; ++c) {
        double acc = 0.0;
        const double* p = cache.pooled[2].data() + c * spatial;
        for (std::size_t i = 0; i < spatial; ++i) acc += p[i];
        cache.features[c] = acc / static_cast<double>(spatial);
    }
    double logit = net.params[L.head_b];
    for (int c = 0; c < c3; ++c) logit += net.params[L.head_w + c] * cache.features[c];
    cache.logit = logit;
}

// dz -> (dW, db, din). din may be null for the first block.
void conv3x3_backward(const double* in, int c_in, int side, const double* w, const double* dz,
                      int c_out, double* dw, double* db, double* din) {
    const std::size_t plane = static_cast<std::size_t>(side) * side;
    if (din != nullptr) {
        std::fill(din, din + static_cast<std::size_t>(c_in) * plane, 0.0);
    }
    for (int co = 0; co < c_out; ++co) {
        const double* dzp = dz + co * plane;
        double acc_b = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc_b += dzp[i];
        db[co] += acc_b;
        for (int ci = 0; ci < c_in; ++ci) {
            const double* ip = in + ci * plane;
            double* dip = din != nullptr ? din + ci * plane : nullptr;
            const std::size_t wbase = (static_cast<std::size_t>(co) * c_in + ci) * 9;
            for (int dy = -1; dy <= 1; ++dy) {
                const int y0 = std::max(0, -dy), y1 = side - std::max(0, dy);
                for (int dx = -1; dx <= 1; ++dx) {
                    const int x0 = std::max(0, -dx), x1 = side - std::max(0, dx);
                    double acc_w = 0.0;
                    const double wv = w[wbase + (dy + 1) * 3 + (dx + 1)];
                    for (int y = y0; y < y1; ++y) {
                        const double* dzrow = dzp + static_cast<std::size_t>(y) * side;
                        const double* irow = ip + static_cast<std::size_t>(y + dy) * side + dx;
                        if (dip != nullptr) {
                            double* dirow = dip + static_cast<std::size_t>(y + dy) * side + dx;
                            for (int x = x0; x < x1; ++x) {
                                acc_w += dzrow[x] * irow[x];
                                dirow[x] += wv * dzrow[x];
                            }
                        } else {
                            for (int x = x0; x < x1; ++x) acc_w += dzrow[x] * irow[x];
                        }
                    }
                    dw[wbase + (dy + 1) * 3 + (dx + 1)] += acc_w;
                }
            }
        }
    }
}

void backward_sample(const ConvNet& net, SampleCache& cache, double dlogit, double* grad) {
    const ParamLayout& L = net.layout;
    const int c3 = L.ch[3];
    const int side3 = cache.side / 8;
    const std::size_t spatial3 = static_cast<std::size_t>(side3) * side3;

    for (int c = 0; c < c3; ++c) grad[L.head_w + c] += dlogit * cache.features[c];
    grad[L.head_b] += dlogit;

    // head -> GAP -> pooled[2]
    std::vector<double> dpool(static_cast<std::size_t>(c3) * spatial3);
    for (int c = 0; c < c3; ++c) {
        const double g = dlogit * net.params[L.head_w + c] / static_cast<double>(spatial3);
        double* dp = dpool.data() + c * spatial3;
        std::fill(dp, dp + spatial3, g);
    }

    int out_side = side3;
    for (int k = 2; k >= 0; --k) {
        const int conv_side = out_side * 2;
        const std::size_t conv_plane = static_cast<std::size_t>(conv_side) * conv_side;
        const int co = L.ch[k + 1];

        // unpool to argmax cells, gated by ReLU
        std::vector<double> dzbuf(static_cast<std::size_t>(co) * conv_plane, 0.0);
        const std::size_t out_plane = static_cast<std::size_t>(out_side) * out_side;
        for (int c = 0; c < co; ++c) {
            const double* dp = dpool.data() + c * out_plane;
            const int* ap = cache.argmax[k].data() + c * out_plane;
            const double* zp = cache.conv_z[k].data() + c * conv_plane;
            double* dzp = dzbuf.data() + c * conv_plane;
            for (std::size_t i = 0; i < out_plane; ++i) {
                if (zp[ap[i]] > 0.0) dzp[ap[i]] += dp[i];
            }
        }

        const double* in = k == 0 ? cache.x0.data() : cache.pooled[k - 1].data();
        std::vector<double> din;
        double* din_ptr = nullptr;
        if (k > 0) {
            din.resize(static_cast<std::size_t>(L.ch[k]) * conv_plane);
            din_ptr = din.data();
        }
        conv3x3_backward(in, L.ch[k], conv_side, net.params.data() + L.conv_w[k], dzbuf.data(),
                         co, grad + L.conv_w[k], grad + L.conv_b[k], din_ptr);
        if (k > 0) {
            dpool = std::move(din);
            out_side = conv_side;
        }
    }
}

void check_batch(std::span<const RgbImage> batch) {
    if (batch.empty()) throw ShapeMismatchError("forward requires a non-empty batch");
    const int side = batch[0].width;
    if (side < 8 || side % 8 != 0) {
        throw ShapeMismatchError("patch side must be a positive multiple of 8");
    }
    for (const RgbImage& img : batch) {
        if (img.width != side || img.height != side) {
            throw ShapeMismatchError("all patches in a batch must be square with one side");
        }
    }
}

}  // namespace

ForwardResult forward(const ConvNet& net, std::span<const RgbImage> batch,
                      std::vector<SampleCache>* caches, int workers) {
    check_batch(batch);
    const std::size_t n = batch.size();
    std::vector<SampleCache> local;
    std::vector<SampleCache>& cs = caches != nullptr ? *caches : local;
    cs.resize(n);

    parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) forward_sample(net, batch[i], cs[i]);
    });

    ForwardResult out;
    out.logits.resize(n);
    out.probs.resize(n);
    out.features.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.logits[i] = cs[i].logit;
        out.probs[i] = sigmoid(cs[i].logit);
        out.features[i] = cs[i].features;
    }
    return out;
}

double sigmoid(double logit) { return 1.0 / (1.0 + std::exp(-logit)); }

namespace {
constexpr double kProbClamp = 1e-7;

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }
}  // namespace

double bce_loss(double p, int y) {
    const double pc = clamp_prob(p);
    return y != 0 ? -std::log(pc) : -std::log(1.0 - pc);
}

double bce_dlogit(double p, int y) { return clamp_prob(p) - (y != 0 ? 1.0 : 0.0); }

std::vector<double> backward(const ConvNet& net, std::vector<SampleCache>& caches,
                             std::span<const int> labels, int workers) {
    if (caches.size() != labels.size()) {
        throw LengthMismatchError("cached batch and labels differ in length");
    }
    const std::size_t n = caches.size();
    const std::size_t np = net.layout.total;

    // Per-sample gradient buffers reduced in index order keep the result
    // independent of the worker count.
    std::vector<std::vector<double>> sample_grads(n);
    parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            sample_grads[i].assign(np, 0.0);
            const double p = sigmoid(caches[i].logit);
            const double dlogit = bce_dlogit(p, labels[i]) / static_cast<double>(n);
            backward_sample(net, caches[i], dlogit, sample_grads[i].data());
        }
    });

    std::vector<double> grads(np, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* g = sample_grads[i].data();
        for (std::size_t j = 0; j < np; ++j) grads[j] += g[j];
    }
    return grads;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw ShapeMismatchError("adam_step shapes disagree");
    }
    state.t += 1;
    const double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double m_hat = state.m[i] / b1t;
        const double v_hat = state.v[i] / b2t;
        params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

AugmentConfig AugmentConfig::disabled() {
    AugmentConfig cfg;
    cfg.flip_horizontal = cfg.flip_vertical = cfg.rotate = cfg.noise = false;
    cfg.hue = cfg.saturation = cfg.contrast = cfg.brightness = false;
    return cfg;
}

namespace {

RgbImage flip_h(const RgbImage& img) {
    RgbImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const std::uint8_t* s = img.px(img.width - 1 - x, y);
            std::uint8_t* d = out.px(x, y);
            d[0] = s[0]; d[1] = s[1]; d[2] = s[2];
        }
    }
    return out;
}

RgbImage flip_v(const RgbImage& img) {
    RgbImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const std::uint8_t* s = img.px(x, img.height - 1 - y);
            std::uint8_t* d = out.px(x, y);
            d[0] = s[0]; d[1] = s[1]; d[2] = s[2];
        }
    }
    return out;
}

// quarter-turns counterclockwise; square input required
RgbImage rotate90(const RgbImage& img, int quarter_turns) {
    RgbImage out(img.width, img.height);
    const int n = img.width;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            int sx = x, sy = y;
            switch (quarter_turns & 3) {
                case 1: sx = n - 1 - y; sy = x; break;
                case 2: sx = n - 1 - x; sy = n - 1 - y; break;
                case 3: sx = y; sy = n - 1 - x; break;
                default: break;
            }
            const std::uint8_t* s = img.px(sx, sy);
            std::uint8_t* d = out.px(x, y);
            d[0] = s[0]; d[1] = s[1]; d[2] = s[2];
        }
    }
    return out;
}

}  // namespace

RgbImage augment(const RgbImage& patch, const AugmentConfig& cfg, Rng& rng) {
    RgbImage img = patch;
    if (cfg.flip_horizontal && rng.uniform() < 0.5) img = flip_h(img);
    if (cfg.flip_vertical && rng.uniform() < 0.5) img = flip_v(img);
    if (cfg.rotate && rng.uniform() < 0.5) {
        if (img.width != img.height) {
            throw ShapeMismatchError("rotation augmentation requires square patches");
        }
        img = rotate90(img, 1 + static_cast<int>(rng.uniform_int(3)));
    }
    if (cfg.noise && rng.uniform() < 0.5) {
        const double sigma = rng.uniform(0.0, cfg.noise_sigma_max);
        for (std::size_t i = 0; i < img.data.size(); ++i) {
            img.data[i] = clamp_u8(round_half_up(img.data[i] + sigma * rng.normal()));
        }
    }
    const bool do_hue = cfg.hue && rng.uniform() < 0.5;
    const double hue_shift = do_hue ? rng.uniform(-cfg.hue_range, cfg.hue_range) : 0.0;
    const bool do_sat = cfg.saturation && rng.uniform() < 0.5;
    const double sat = do_sat ? rng.uniform(cfg.saturation_min, cfg.saturation_max) : 1.0;
    if (do_hue || do_sat) {
        for (std::size_t i = 0; i < img.data.size(); i += 3) {
            Hsv hsv = rgb_to_hsv(img.data[i], img.data[i + 1], img.data[i + 2]);
            hsv.h += hue_shift;
            hsv.s = std::clamp(hsv.s * sat, 0.0, 1.0);
            const auto rgb = hsv_to_rgb(hsv);
            img.data[i] = rgb[0];
            img.data[i + 1] = rgb[1];
            img.data[i + 2] = rgb[2];
        }
    }
    if (cfg.contrast && rng.uniform() < 0.5) {
        const double c = rng.uniform(cfg.contrast_min, cfg.contrast_max);
        for (std::uint8_t& v : img.data) {
            v = clamp_u8(round_half_up(128.0 + (v - 128.0) * c));
        }
    }
    if (cfg.brightness && rng.uniform() < 0.5) {
        const double off = rng.uniform(-cfg.brightness_range, cfg.brightness_range);
        for (std::uint8_t& v : img.data) {
            v = clamp_u8(round_half_up(v + off));
        }
    }
    return img;
}

namespace {

void check_classes(std::span<const int> labels, const char* which) {
    bool pos = false, neg = false;
    for (int y : labels) (y != 0 ? pos : neg) = true;
    if (!pos || !neg) {
        throw EmptyClassError(std::string(which) + " split lacks one of the two classes");
    }
}

double mean_bce(const ConvNet& net, std::span<const RgbImage> images,
                std::span<const int> labels, int workers) {
    double loss = 0.0;
    // evaluate in fixed-size slices to bound memory
    const std::size_t kSlice = 64;
    for (std::size_t start = 0; start < images.size(); start += kSlice) {
        const std::size_t count = std::min(kSlice, images.size() - start);
        const ForwardResult fr = forward(net, images.subspan(start, count), nullptr, workers);
        for (std::size_t i = 0; i < count; ++i) {
            loss += bce_loss(fr.probs[i], labels[start + i]);
        }
    }
    return loss / static_cast<double>(images.size());
}

}  // namespace

TrainLog train_cnn(ConvNet& net, std::span<const RgbImage> train_images,
                   std::span<const int> train_labels, std::span<const RgbImage> val_images,
                   std::span<const int> val_labels, const TrainConfig& tcfg,
                   const AugmentConfig& acfg) {
    if (train_images.empty() || val_images.empty()) {
        throw EmptyInputError("training requires non-empty train and validation sets");
    }
    check_classes(train_labels, "train");
    check_classes(val_labels, "validation");

    TrainLog log;
    AdamState adam(net.layout.total, tcfg.learning_rate);
    std::vector<std::size_t> order(train_images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> best_params = net.params;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int bad_epochs = 0;

    for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(tcfg.seed, 0x553554646ULL, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order.data(), order.size());

        double train_loss = 0.0;
        const std::size_t bs = static_cast<std::size_t>(tcfg.batch_size);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t count = std::min(bs, order.size() - start);
            std::vector<RgbImage> batch(count);
            std::vector<int> labels(count);
            parallel_for(count, tcfg.workers, [&](std::size_t b, std::size_t e) {
                for (std::size_t i = b; i < e; ++i) {
                    const std::size_t idx = order[start + i];
                    Rng aug_rng(mix_seed(tcfg.seed, static_cast<std::uint64_t>(epoch),
                                         static_cast<std::uint64_t>(idx)));
                    batch[i] = augment(train_images[idx], acfg, aug_rng);
                    labels[i] = train_labels[idx];
                }
            });
            std::vector<SampleCache> caches;
            const ForwardResult fr = forward(net, batch, &caches, tcfg.workers);
            for (std::size_t i = 0; i < count; ++i) {
                train_loss += bce_loss(fr.probs[i], labels[i]);
            }
            const std::vector<double> grads = backward(net, caches, labels, tcfg.workers);
            adam_step(adam, net.params, grads);
        }
        train_loss /= static_cast<double>(order.size());

        const double val_loss = mean_bce(net, val_images, val_labels, tcfg.workers);
        log.epochs.push_back({epoch, train_loss, val_loss});

        if (best_val - val_loss >= tcfg.min_delta) {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = net.params;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs >= tcfg.patience) {
                log.stopped_early = true;
                break;
            }
        }
    }

    net.params = best_params;
    log.best_epoch = best_epoch;
    log.best_val_loss = best_val;
    return log;
}

std::vector<double> extract_features(const ConvNet& net, const RgbImage& patch) {
    const ForwardResult fr = forward(net, std::span<const RgbImage>(&patch, 1));
    return fr.features[0];
}

}  // namespace icpipe::model
