#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "svgan/lstm.hpp"
#include "svgan/ops.hpp"
#include "svgan/params.hpp"
#include "svgan/rng.hpp"
#include "svgan/tensor.hpp"

namespace svgan {

enum class Mode { kTrain, kInfer };

struct GeneratorConfig {
    std::size_t in_channels = 2;
    std::size_t base_channels = 8;
    std::size_t pool_depth = 4;
    std::size_t num_seg_classes = 3;
    std::size_t num_diseases = 2;
    std::size_t lstm_hidden = 0; // 0: half the flattened bottleneck length
    double dropout_p = 0.5;
    std::size_t height = 32;
    std::size_t width = 32;

    void validate() const {
        if (in_channels == 0 || base_channels == 0 || num_seg_classes == 0 || num_diseases == 0) {
            throw ValidationError("generator config: channel/class counts must be positive");
        }
        if (pool_depth != 4) {
            throw ValidationError("generator config: the architecture is defined for pool_depth=4, got " +
                                  std::to_string(pool_depth));
        }
        const std::size_t div = std::size_t(1) << pool_depth;
        if (height % div != 0) {
            throw ValidationError("generator config: height " + std::to_string(height) +
                                  " not divisible by " + std::to_string(div));
        }
        if (width % div != 0) {
            throw ValidationError("generator config: width " + std::to_string(width) +
                                  " not divisible by " + std::to_string(div));
        }
        if (dropout_p < 0.0 || dropout_p >= 1.0) {
            throw ValidationError("generator config: dropout_p must lie in [0,1)");
        }
    }

    std::size_t scale_channels(std::size_t j) const {
        const std::size_t mult = std::min<std::size_t>(std::size_t(1) << j, 8);
        return base_channels * mult;
    }
    std::size_t bottleneck_channels() const { return scale_channels(pool_depth - 1); }
    std::size_t bottleneck_height() const { return height >> pool_depth; }
    std::size_t bottleneck_width() const { return width >> pool_depth; }
    std::size_t flattened_bottleneck() const {
        return bottleneck_channels() * bottleneck_height() * bottleneck_width();
    }
    std::size_t hidden() const { return lstm_hidden != 0 ? lstm_hidden : flattened_bottleneck() / 2; }
    bool needs_projection() const { return 2 * hidden() != flattened_bottleneck(); }
};

struct DiscriminatorConfig {
    std::size_t in_channels = 2;
    std::size_t num_seg_classes = 3;
    std::size_t base_channels = 8;
    std::size_t lstm_hidden = 0; // 0: half the flattened context length
    std::size_t height = 32;
    std::size_t width = 32;

    static constexpr std::size_t kPoolDepth = 4;
    static constexpr double kLeakySlope = 0.2;

    void validate() const {
        if (in_channels == 0 || num_seg_classes == 0 || base_channels == 0) {
            throw ValidationError("discriminator config: channel/class counts must be positive");
        }
        const std::size_t div = std::size_t(1) << kPoolDepth;
        if (height % div != 0 || width % div != 0) {
            throw ValidationError("discriminator config: spatial extents " + std::to_string(height) +
                                  "x" + std::to_string(width) + " not divisible by " + std::to_string(div));
        }
    }

    std::size_t ctx_channels(std::size_t j) const {
        const std::size_t mult = std::min<std::size_t>(std::size_t(1) << (j + 1), 8);
        return base_channels * mult;
    }
    std::size_t ctx_height() const { return height >> kPoolDepth; }
    std::size_t ctx_width() const { return width >> kPoolDepth; }
    std::size_t flattened_ctx() const {
        return ctx_channels(kPoolDepth - 1) * ctx_height() * ctx_width();
    }
    std::size_t hidden() const { return lstm_hidden != 0 ? lstm_hidden : flattened_ctx() / 2; }
};

template <typename T>
struct GeneratorOutput {
    std::vector<Tensor<T>> seg_probs; // per slice, [num_seg_classes,H,W]
    Tensor<T> disease_probs;          // [num_diseases]
};

/// One-hot encodes a label map into a constant [classes,H,W] tensor.
template <typename T>
Tensor<T> onehot_labels(std::span<const std::uint8_t> labels, std::size_t classes, std::size_t h,
                        std::size_t w) {
    if (labels.size() != h * w) {
        throw ShapeError("onehot: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(h * w) + " pixels");
    }
    std::vector<T> data(classes * h * w, T(0));
    for (std::size_t p = 0; p < labels.size(); ++p) {
        if (labels[p] >= classes) {
            throw ValidationError("onehot: label " + std::to_string(int(labels[p])) + " at pixel " +
                                  std::to_string(p) + " out of range for " + std::to_string(classes) +
                                  " classes");
        }
        data[labels[p] * h * w + p] = T(1);
    }
    return Tensor<T>::from({classes, h, w}, std::move(data));
}

namespace detail {

// Convolutions under a following instance norm carry no bias: the
// normalization subtracts the per-channel mean, so a bias there would have
// exactly zero gradient. beta is the effective shift.
template <typename T>
struct ConvBlock {
    Tensor<T> kernel, gamma, beta;
};

template <typename T>
ConvBlock<T> make_conv_block(ParamRegistry<T>& reg, const std::string& prefix, std::size_t c_in,
                             std::size_t c_out, std::size_t k, Rng& rng) {
    ConvBlock<T> b;
    b.kernel = reg.add(prefix + "/kernel", {c_out, c_in, k, k}, rng);
    b.gamma = reg.add_const(prefix + "/gamma", {c_out}, T(1));
    b.beta = reg.add_const(prefix + "/beta", {c_out}, T(0));
    return b;
}

template <typename T>
Tensor<T> conv_in_relu(const ConvBlock<T>& b, const Tensor<T>& x) {
    return relu(instance_norm(conv2d(x, b.kernel), b.gamma, b.beta));
}

template <typename T>
Tensor<T> conv_in_lrelu(const ConvBlock<T>& b, const Tensor<T>& x, T slope) {
    return leaky_relu(instance_norm(conv2d(x, b.kernel), b.gamma, b.beta), slope);
}

template <typename T>
struct UpBlock {
    Tensor<T> kernel, gamma, beta;
};

template <typename T>
UpBlock<T> make_up_block(ParamRegistry<T>& reg, const std::string& prefix, std::size_t c_in,
                         std::size_t c_out, Rng& rng) {
    UpBlock<T> b;
    b.kernel = reg.add(prefix + "/kernel", {c_in, c_out, 2, 2}, rng);
    b.gamma = reg.add_const(prefix + "/gamma", {c_out}, T(1));
    b.beta = reg.add_const(prefix + "/beta", {c_out}, T(0));
    return b;
}

template <typename T>
Tensor<T> up_in_relu(const UpBlock<T>& b, const Tensor<T>& x) {
    return relu(instance_norm(upconv2d(x, b.kernel), b.gamma, b.beta));
}

template <typename T>
BiLstmParams<T> make_bilstm(ParamRegistry<T>& reg, const std::string& prefix, std::size_t feat,
                            std::size_t hid, Rng& rng) {
    BiLstmParams<T> p;
    p.fwd = {reg.add(prefix + "/fwd/w_in", {4 * hid, feat}, rng),
             reg.add(prefix + "/fwd/w_rec", {4 * hid, hid}, rng),
             reg.add_const(prefix + "/fwd/bias", {4 * hid}, T(0))};
    p.bwd = {reg.add(prefix + "/bwd/w_in", {4 * hid, feat}, rng),
             reg.add(prefix + "/bwd/w_rec", {4 * hid, hid}, rng),
             reg.add_const(prefix + "/bwd/bias", {4 * hid}, T(0))};
    return p;
}

template <typename T>
void check_slice_shapes(const std::vector<Tensor<T>>& slices, std::size_t channels, std::size_t h,
                        std::size_t w, const char* who) {
    if (slices.empty()) throw ShapeError(std::string(who) + ": empty slice sequence");
    for (std::size_t s = 0; s < slices.size(); ++s) {
        const auto& sh = slices[s].shape();
        if (sh.size() != 3 || sh[1] != h || sh[2] != w) {
            throw ShapeError(std::string(who) + ": slice " + std::to_string(s) + " has shape " +
                             shape_str(sh) + ", expected [" + std::to_string(channels) + "," +
                             std::to_string(h) + "," + std::to_string(w) + "]");
        }
        if (sh[0] != channels) {
            throw ShapeError(std::string(who) + ": slice " + std::to_string(s) + " has " +
                             std::to_string(sh[0]) + " channels, expected " + std::to_string(channels));
        }
    }
}

} // namespace detail

/// U-Net with a bidirectional LSTM bottleneck across slices, a per-slice
/// softmax segmentation head and a patient-level disease head.
template <typename T>
class Generator {
public:
    Generator(GeneratorConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        const std::size_t d = cfg_.pool_depth;
        std::size_t c_in = cfg_.in_channels;
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t c = cfg_.scale_channels(j);
            enc_.push_back({detail::make_conv_block(reg_, "gen/enc" + std::to_string(j) + "/conv0",
                                                    c_in, c, 3, rng),
                            detail::make_conv_block(reg_, "gen/enc" + std::to_string(j) + "/conv1",
                                                    c, c, 3, rng)});
            c_in = c;
        }

        const std::size_t feat = cfg_.flattened_bottleneck();
        const std::size_t hid = cfg_.hidden();
        lstm_ = detail::make_bilstm(reg_, "gen/lstm", feat, hid, rng);
        if (cfg_.needs_projection()) {
            proj_w_ = reg_.add("gen/lstm/proj/weight", {feat, 2 * hid}, rng);
            proj_b_ = reg_.add_const("gen/lstm/proj/bias", {feat}, T(0));
        }

        const std::size_t cb = cfg_.bottleneck_channels();
        std::size_t cur = cb;
        for (std::size_t i = 0; i < d; ++i) {
            const std::size_t skip_c = cfg_.scale_channels(d - 1 - i);
            const std::size_t up_out = i == 0 ? cb : skip_c;
            ups_.push_back(detail::make_up_block(reg_, "gen/dec" + std::to_string(i) + "/up", cur,
                                                 up_out, rng));
            cur = up_out + skip_c;
            if (i == 0) {
                dec0_ = {detail::make_conv_block(reg_, "gen/dec0/conv0", cur, cb / 2, 3, rng),
                         detail::make_conv_block(reg_, "gen/dec0/conv1", cb / 2, cb / 2, 3, rng)};
                cur = cb / 2;
            }
        }

        seg_kernel_ = reg_.add("gen/seg_head/kernel", {cfg_.num_seg_classes, cur, 1, 1}, rng);
        seg_bias_ = reg_.add_const("gen/seg_head/bias", {cfg_.num_seg_classes}, T(0));

        const std::size_t cls_in = 2 * hid + cb;
        cls_w0_ = reg_.add("gen/cls/dense0/weight", {64, cls_in}, rng);
        cls_b0_ = reg_.add_const("gen/cls/dense0/bias", {64}, T(0));
        cls_w1_ = reg_.add("gen/cls/dense1/weight", {cfg_.num_diseases, 64}, rng);
        cls_b1_ = reg_.add_const("gen/cls/dense1/bias", {cfg_.num_diseases}, T(0));
    }

    const GeneratorConfig& config() const { return cfg_; }
    ParamRegistry<T>& params() { return reg_; }
    const ParamRegistry<T>& params() const { return reg_; }

    /// 3x3 convolutions on the encoder/decoder path (upsampling and 1x1
    /// heads not counted).
    std::size_t conv_layer_count() const { return 2 * cfg_.pool_depth + 2; }

    GeneratorOutput<T> forward(const std::vector<Tensor<T>>& slices, Mode mode,
                               Rng* rng = nullptr) const {
        detail::check_slice_shapes(slices, cfg_.in_channels, cfg_.height, cfg_.width, "generator");
        const bool training = mode == Mode::kTrain;
        if (training && cfg_.dropout_p > 0.0 && rng == nullptr) {
            throw ValidationError("generator: training mode needs an rng for dropout");
        }
        const std::size_t d = cfg_.pool_depth;
        const std::size_t steps = slices.size();

        // Encoder, per slice. skips[j][s] is the scale-j feature of slice s.
        std::vector<std::vector<Tensor<T>>> skips(d);
        std::vector<Tensor<T>> flat(steps);
        for (std::size_t s = 0; s < steps; ++s) {
            Tensor<T> x = slices[s];
            for (std::size_t j = 0; j < d; ++j) {
                x = detail::conv_in_relu(enc_[j][0], x);
                x = detail::conv_in_relu(enc_[j][1], x);
                skips[j].push_back(x);
                x = maxpool2d(x);
            }
            flat[s] = reshape(x, {cfg_.flattened_bottleneck()});
        }

        // Bottleneck biLSTM over the slice index.
        auto hs = bilstm_sequence(flat, lstm_);

        std::vector<Tensor<T>> seg;
        seg.reserve(steps);
        for (std::size_t s = 0; s < steps; ++s) {
            Tensor<T> z = hs[s];
            if (cfg_.needs_projection()) z = dense(proj_w_, z, proj_b_);
            Tensor<T> x = reshape(z, {cfg_.bottleneck_channels(), cfg_.bottleneck_height(),
                                      cfg_.bottleneck_width()});
            for (std::size_t i = 0; i < d; ++i) {
                x = detail::up_in_relu(ups_[i], x);
                if (training && i < 2 && cfg_.dropout_p > 0.0) {
                    x = dropout(x, cfg_.dropout_p, *rng, true);
                }
                x = concat_channel<T>({x, skips[d - 1 - i][s]});
                if (i == 0) {
                    x = detail::conv_in_relu(dec0_[0], x);
                    x = detail::conv_in_relu(dec0_[1], x);
                }
            }
            seg.push_back(softmax_channel(conv2d(x, seg_kernel_, seg_bias_)));
        }

        // Disease head: directional end states plus pooled deepest skip
        // features averaged over slices.
        const std::size_t hid = cfg_.hidden();
        Tensor<T> h_fwd_last = slice0(hs[steps - 1], 0, hid);
        Tensor<T> h_bwd_first = slice0(hs[0], hid, 2 * hid);
        std::vector<Tensor<T>> pooled;
        pooled.reserve(steps);
        for (std::size_t s = 0; s < steps; ++s) pooled.push_back(global_avg_pool(skips[d - 1][s]));
        Tensor<T> ctx = mean_of(pooled);
        Tensor<T> feats = concat_channel<T>({h_fwd_last, h_bwd_first, ctx});
        Tensor<T> hiddenv = relu(dense(cls_w0_, feats, cls_b0_));
        Tensor<T> disease = softmax_channel(dense(cls_w1_, hiddenv, cls_b1_));
        return {std::move(seg), std::move(disease)};
    }

private:
    GeneratorConfig cfg_;
    ParamRegistry<T> reg_;
    std::vector<std::array<detail::ConvBlock<T>, 2>> enc_;
    BiLstmParams<T> lstm_;
    Tensor<T> proj_w_, proj_b_;
    std::vector<detail::UpBlock<T>> ups_;
    std::array<detail::ConvBlock<T>, 2> dec0_;
    Tensor<T> seg_kernel_, seg_bias_;
    Tensor<T> cls_w0_, cls_b0_, cls_w1_, cls_b1_;
};

/// Conditional per-pixel discriminator: a full-resolution pixel path scored
/// against pooled sequence context carried through a biLSTM.
template <typename T>
class Discriminator {
public:
    Discriminator(DiscriminatorConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        const std::size_t cin = cfg_.in_channels + cfg_.num_seg_classes;
        const std::size_t db = cfg_.base_channels;
        stem_kernel_ = reg_.add("disc/stem/kernel", {db, cin, 1, 1}, rng);
        stem_bias_ = reg_.add_const("disc/stem/bias", {db}, T(0));
        std::size_t cur = db;
        for (std::size_t j = 0; j < DiscriminatorConfig::kPoolDepth; ++j) {
            ctx_.push_back(detail::make_conv_block(reg_, "disc/ctx" + std::to_string(j), cur,
                                                   cfg_.ctx_channels(j), 3, rng));
            cur = cfg_.ctx_channels(j);
        }
        const std::size_t feat = cfg_.flattened_ctx();
        lstm_ = detail::make_bilstm(reg_, "disc/lstm", feat, cfg_.hidden(), rng);
        proj_w_ = reg_.add("disc/ctx_proj/weight", {db, 2 * cfg_.hidden()}, rng);
        proj_b_ = reg_.add_const("disc/ctx_proj/bias", {db}, T(0));
        head_kernel_ = reg_.add("disc/head/kernel", {1, 2 * db, 1, 1}, rng);
        head_bias_ = reg_.add_const("disc/head/bias", {1}, T(0));
    }

    const DiscriminatorConfig& config() const { return cfg_; }
    ParamRegistry<T>& params() { return reg_; }
    const ParamRegistry<T>& params() const { return reg_; }

    /// Stem plus context convolutions (the 1x1 scoring head not counted).
    std::size_t conv_layer_count() const { return 1 + DiscriminatorConfig::kPoolDepth; }

    Shape score_map_shape() const { return {1, cfg_.height, cfg_.width}; }

    /// xs: image slices [in_channels,H,W]; ys: aligned segmentation maps
    /// [num_seg_classes,H,W] (softmax probabilities or one-hot ground truth).
    std::vector<Tensor<T>> forward(const std::vector<Tensor<T>>& xs,
                                   const std::vector<Tensor<T>>& ys) const {
        detail::check_slice_shapes(xs, cfg_.in_channels, cfg_.height, cfg_.width, "discriminator");
        detail::check_slice_shapes(ys, cfg_.num_seg_classes, cfg_.height, cfg_.width,
                                   "discriminator segmentation input");
        if (xs.size() != ys.size()) {
            throw ShapeError("discriminator: " + std::to_string(xs.size()) + " image slices vs " +
                             std::to_string(ys.size()) + " segmentation slices");
        }
        const T slope = static_cast<T>(DiscriminatorConfig::kLeakySlope);
        const std::size_t steps = xs.size();
        std::vector<Tensor<T>> stems(steps), flat(steps);
        for (std::size_t s = 0; s < steps; ++s) {
            Tensor<T> in = concat_channel<T>({xs[s], ys[s]});
            stems[s] = leaky_relu(conv2d(in, stem_kernel_, stem_bias_), slope);
            Tensor<T> c = stems[s];
            for (std::size_t j = 0; j < DiscriminatorConfig::kPoolDepth; ++j) {
                c = maxpool2d(detail::conv_in_lrelu(ctx_[j], c, slope));
            }
            flat[s] = reshape(c, {cfg_.flattened_ctx()});
        }
        auto hs = bilstm_sequence(flat, lstm_);
        std::vector<Tensor<T>> scores;
        scores.reserve(steps);
        for (std::size_t s = 0; s < steps; ++s) {
            Tensor<T> ctx = leaky_relu(dense(proj_w_, hs[s], proj_b_), slope);
            Tensor<T> feat = concat_channel<T>({stems[s], broadcast_channel(ctx, cfg_.height, cfg_.width)});
            scores.push_back(sigmoid(conv2d(feat, head_kernel_, head_bias_)));
        }
        return scores;
    }

private:
    DiscriminatorConfig cfg_;
    ParamRegistry<T> reg_;
    Tensor<T> stem_kernel_, stem_bias_;
    std::vector<detail::ConvBlock<T>> ctx_;
    BiLstmParams<T> lstm_;
    Tensor<T> proj_w_, proj_b_;
    Tensor<T> head_kernel_, head_bias_;
};

} // namespace svgan
