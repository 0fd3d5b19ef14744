#include "svgan/gradcheck_suite.hpp"

#include <cmath>
#include <cstdint>
#include <functional>

#include "svgan/gradcheck.hpp"
#include "svgan/losses.hpp"
#include "svgan/lstm.hpp"
#include "svgan/ops.hpp"
#include "svgan/rng.hpp"
#include "svgan/tensor.hpp"

namespace svgan {
namespace {

using D = Tensor<double>;

std::vector<double> draw(Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

/// Values in [-hi,-gap] ∪ [gap,hi], clear of a kink at zero.
std::vector<double> draw_off_zero(Rng& rng, std::size_t n, double gap, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) {
        const double mag = rng.uniform(gap, hi);
        x = rng.uniform() < 0.5 ? -mag : mag;
    }
    return v;
}

D rand_const(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return D::from(shape, draw(rng, n, lo, hi));
}

struct Suite {
    Rng rng;
    std::size_t per_op;
    std::vector<OpCheckResult> results;

    Suite(std::uint64_t seed, std::size_t per_op) : rng(seed), per_op(per_op) {}

    /// Runs `make` once per instance; `make` fills `inputs` and returns the
    /// scalar-loss builder used for both analytic and numeric passes.
    void check(const std::string& name,
               std::function<std::function<D()>(std::vector<D>&)> make) {
        OpCheckResult r{name, 0.0, per_op};
        for (std::size_t it = 0; it < per_op; ++it) {
            std::vector<D> inputs;
            auto build = make(inputs);
            const FdReport rep = fd_check(inputs, build);
            r.max_rel_err = std::max(r.max_rel_err, rep.max_rel_err);
        }
        results.push_back(std::move(r));
    }
};

}  // namespace

std::vector<OpCheckResult> run_gradient_suite(std::uint64_t seed, std::size_t instances_per_op) {
    Suite s(seed, instances_per_op);
    Rng& rng = s.rng;

    const Shape box{2, 3, 4};
    constexpr std::size_t kBox = 24;

    s.check("add", [&](std::vector<D>& in) {
        in = {D::param(box, draw(rng, kBox, -2, 2)), D::param(box, draw(rng, kBox, -2, 2))};
        D w = rand_const(rng, box);
        return [&in, w] { return mean(mul(add(in[0], in[1]), w)); };
    });
    s.check("sub", [&](std::vector<D>& in) {
        in = {D::param(box, draw(rng, kBox, -2, 2)), D::param(box, draw(rng, kBox, -2, 2))};
        D w = rand_const(rng, box);
        return [&in, w] { return mean(mul(sub(in[0], in[1]), w)); };
    });
    s.check("mul", [&](std::vector<D>& in) {
        in = {D::param(box, draw(rng, kBox, -2, 2)), D::param(box, draw(rng, kBox, -2, 2))};
        return [&in] { return mean(mul(in[0], in[1])); };
    });
    s.check("scale", [&](std::vector<D>& in) {
        in = {D::param(box, draw(rng, kBox, -2, 2))};
        const double c = rng.uniform(-3, 3);
        D w = rand_const(rng, box);
        return [&in, c, w] { return mean(mul(scale(in[0], c), w)); };
    });
    s.check("sum", [&](std::vector<D>& in) {
        in = {D::param(box, draw(rng, kBox, -2, 2))};
        return [&in] { return sum(in[0]); };
    });
    s.check("mean", [&](std::vector<D>& in) {
        in = {D::param(box, draw(rng, kBox, -2, 2))};
        return [&in] { return mean(in[0]); };
    });
    s.check("mean_of", [&](std::vector<D>& in) {
        in = {D::param({5}, draw(rng, 5, -2, 2)), D::param({5}, draw(rng, 5, -2, 2)),
              D::param({5}, draw(rng, 5, -2, 2))};
        D w = rand_const(rng, {5});
        return [&in, w] { return mean(mul(mean_of<double>({in[0], in[1], in[2]}), w)); };
    });
    s.check("relu", [&](std::vector<D>& in) {
        in = {D::param(box, draw_off_zero(rng, kBox, 0.05, 2.0))};
        D w = rand_const(rng, box);
        return [&in, w] { return mean(mul(relu(in[0]), w)); };
    });
    s.check("leaky_relu", [&](std::vector<D>& in) {
        in = {D::param(box, draw_off_zero(rng, kBox, 0.05, 2.0))};
        D w = rand_const(rng, box);
        return [&in, w] { return mean(mul(leaky_relu(in[0], 0.2), w)); };
    });
    s.check("sigmoid", [&](std::vector<D>& in) {
        in = {D::param(box, draw(rng, kBox, -3, 3))};
        D w = rand_const(rng, box);
        return [&in, w] { return mean(mul(sigmoid(in[0]), w)); };
    });
    s.check("tanh", [&](std::vector<D>& in) {
        in = {D::param(box, draw(rng, kBox, -3, 3))};
        D w = rand_const(rng, box);
        return [&in, w] { return mean(mul(tanh_op(in[0]), w)); };
    });
    s.check("softmax_channel", [&](std::vector<D>& in) {
        in = {D::param({3, 2, 2}, draw(rng, 12, -2, 2))};
        D w = rand_const(rng, {3, 2, 2});
        return [&in, w] { return mean(mul(softmax_channel(in[0]), w)); };
    });
    s.check("reshape", [&](std::vector<D>& in) {
        in = {D::param(box, draw(rng, kBox, -2, 2))};
        D w = rand_const(rng, {4, 6});
        return [&in, w] { return mean(mul(reshape(in[0], {4, 6}), w)); };
    });
    s.check("concat_channel", [&](std::vector<D>& in) {
        in = {D::param({1, 2, 2}, draw(rng, 4, -2, 2)), D::param({2, 2, 2}, draw(rng, 8, -2, 2))};
        D w = rand_const(rng, {3, 2, 2});
        return [&in, w] { return mean(mul(concat_channel<double>({in[0], in[1]}), w)); };
    });
    s.check("slice0", [&](std::vector<D>& in) {
        in = {D::param({6, 2}, draw(rng, 12, -2, 2))};
        const std::size_t b = rng.uniform_int(3);
        D w = rand_const(rng, {2, 2});
        return [&in, b, w] { return mean(mul(slice0(in[0], b, b + 2), w)); };
    });
    s.check("broadcast_channel", [&](std::vector<D>& in) {
        in = {D::param({3}, draw(rng, 3, -2, 2))};
        D w = rand_const(rng, {3, 2, 4});
        return [&in, w] { return mean(mul(broadcast_channel(in[0], 2, 4), w)); };
    });
    s.check("global_avg_pool", [&](std::vector<D>& in) {
        in = {D::param(box, draw(rng, kBox, -2, 2))};
        D w = rand_const(rng, {2});
        return [&in, w] { return mean(mul(global_avg_pool(in[0]), w)); };
    });
    s.check("dense", [&](std::vector<D>& in) {
        in = {D::param({3, 4}, draw(rng, 12, -1, 1)), D::param({4}, draw(rng, 4, -1, 1)),
              D::param({3}, draw(rng, 3, -1, 1))};
        D w = rand_const(rng, {3});
        return [&in, w] { return mean(mul(dense(in[0], in[1], in[2]), w)); };
    });
    s.check("conv2d", [&](std::vector<D>& in) {
        in = {D::param({2, 4, 4}, draw(rng, 32, -1, 1)),
              D::param({2, 2, 3, 3}, draw(rng, 36, -1, 1)), D::param({2}, draw(rng, 2, -1, 1))};
        D w = rand_const(rng, {2, 4, 4});
        return [&in, w] { return mean(mul(conv2d(in[0], in[1], in[2]), w)); };
    });
    s.check("upconv2d", [&](std::vector<D>& in) {
        in = {D::param({2, 3, 3}, draw(rng, 18, -1, 1)),
              D::param({2, 2, 2, 2}, draw(rng, 16, -1, 1)), D::param({2}, draw(rng, 2, -1, 1))};
        D w = rand_const(rng, {2, 6, 6});
        return [&in, w] { return mean(mul(upconv2d(in[0], in[1], in[2]), w)); };
    });
    s.check("maxpool2d", [&](std::vector<D>& in) {
        // Keep runner-up values at least 1e-3 behind each window maximum so the
        // finite-difference probe cannot flip the argmax.
        std::vector<double> v;
        for (;;) {
            v = draw(rng, 2 * 4 * 4, -2, 2);
            bool ok = true;
            for (std::size_t c = 0; c < 2 && ok; ++c) {
                for (std::size_t wy = 0; wy < 2 && ok; ++wy) {
                    for (std::size_t wx = 0; wx < 2 && ok; ++wx) {
                        double top = -1e9, second = -1e9;
                        for (std::size_t dy = 0; dy < 2; ++dy) {
                            for (std::size_t dx = 0; dx < 2; ++dx) {
                                const double x = v[c * 16 + (2 * wy + dy) * 4 + (2 * wx + dx)];
                                if (x > top) {
                                    second = top;
                                    top = x;
                                } else if (x > second) {
                                    second = x;
                                }
                            }
                        }
                        ok = top - second > 1e-3;
                    }
                }
            }
            if (ok) break;
        }
        in = {D::param({2, 4, 4}, v)};
        D w = rand_const(rng, {2, 2, 2});
        return [&in, w] { return mean(mul(maxpool2d(in[0]), w)); };
    });
    s.check("instance_norm", [&](std::vector<D>& in) {
        in = {D::param({2, 3, 3}, draw(rng, 18, -2, 2)),
              D::param({2}, draw(rng, 2, 0.5, 1.5)), D::param({2}, draw(rng, 2, -0.5, 0.5))};
        D w = rand_const(rng, {2, 3, 3});
        return [&in, w] { return mean(mul(instance_norm(in[0], in[1], in[2]), w)); };
    });
    s.check("dropout", [&](std::vector<D>& in) {
        in = {D::param(box, draw(rng, kBox, -2, 2))};
        const double p = rng.uniform(0.2, 0.6);
        const std::uint64_t mask_seed = rng.uniform_int(1u << 30);
        D w = rand_const(rng, box);
        return [&in, p, mask_seed, w] {
            Rng mask_rng(mask_seed);
            return mean(mul(dropout(in[0], p, mask_rng, true), w));
        };
    });
    s.check("bilstm", [&](std::vector<D>& in) {
        const std::size_t feat = 3, hid = 2, steps = 3;
        in = {D::param({4 * hid, feat}, draw(rng, 4 * hid * feat, -0.7, 0.7)),
              D::param({4 * hid, hid}, draw(rng, 4 * hid * hid, -0.7, 0.7)),
              D::param({4 * hid}, draw(rng, 4 * hid, -0.3, 0.3)),
              D::param({4 * hid, feat}, draw(rng, 4 * hid * feat, -0.7, 0.7)),
              D::param({4 * hid, hid}, draw(rng, 4 * hid * hid, -0.7, 0.7)),
              D::param({4 * hid}, draw(rng, 4 * hid, -0.3, 0.3)),
              D::param({feat}, draw(rng, feat, -1, 1)),
              D::param({feat}, draw(rng, feat, -1, 1)),
              D::param({feat}, draw(rng, feat, -1, 1))};
        D w = rand_const(rng, {2 * hid});
        return [&in, w] {
            BiLstmParams<double> p;
            p.fwd = {in[0], in[1], in[2]};
            p.bwd = {in[3], in[4], in[5]};
            auto hs = bilstm_sequence<double>({in[6], in[7], in[8]}, p);
            std::vector<D> weighted;
            weighted.reserve(hs.size());
            for (auto& h : hs) weighted.push_back(mul(h, w));
            return mean(mean_of(weighted));
        };
    });
    s.check("bce", [&](std::vector<D>& in) {
        in = {D::param({6}, draw(rng, 6, -3, 3))};
        const double target = rng.uniform() < 0.5 ? 0.0 : 1.0;
        return [&in, target] { return bce(sigmoid(in[0]), target); };
    });
    s.check("mean_log_one_minus", [&](std::vector<D>& in) {
        in = {D::param({6}, draw(rng, 6, -3, 2))};
        return [&in] { return mean_log_one_minus(sigmoid(in[0])); };
    });
    s.check("adversarial_d", [&](std::vector<D>& in) {
        in = {D::param({1, 2, 2}, draw(rng, 4, -3, 3)), D::param({1, 2, 2}, draw(rng, 4, -3, 3))};
        const auto obj = rng.uniform() < 0.5 ? GanObjective::kNonSaturating : GanObjective::kMinimax;
        return [&in, obj] {
            return adversarial_losses(sigmoid(in[0]), sigmoid(in[1]), obj).first;
        };
    });
    s.check("adversarial_g", [&](std::vector<D>& in) {
        in = {D::param({1, 2, 2}, draw(rng, 4, -3, 3))};
        const auto obj = rng.uniform() < 0.5 ? GanObjective::kNonSaturating : GanObjective::kMinimax;
        return [&in, obj] {
            auto fake = sigmoid(in[0]);
            return adversarial_losses(fake, fake, obj).second;
        };
    });
    s.check("weighted_cce", [&](std::vector<D>& in) {
        const std::size_t c = 3, pix = 4;
        in = {D::param({c, 2, 2}, draw(rng, c * pix, -2, 2))};
        std::vector<std::uint8_t> labels(pix);
        for (auto& l : labels) l = static_cast<std::uint8_t>(rng.uniform_int(c));
        auto weights = draw(rng, c, 0.5, 2.5);
        return [&in, labels, weights] {
            return weighted_cce<double>(softmax_channel(in[0]), labels, weights);
        };
    });
    s.check("weighted_l1", [&](std::vector<D>& in) {
        auto pred = draw(rng, 5, -1, 1);
        auto target = draw(rng, 5, -1, 1);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (std::abs(pred[i] - target[i]) < 1e-3) {
                target[i] += pred[i] >= target[i] ? -1e-2 : 1e-2;
            }
        }
        in = {D::param({5}, pred), D::param({5}, target)};
        auto weights = draw(rng, 5, 0.5, 2.5);
        return [&in, weights] { return weighted_l1<double>(in[0], in[1], weights); };
    });
    s.check("total_generator_loss", [&](std::vector<D>& in) {
        in = {D::param({1}, draw(rng, 1, 0.1, 2)), D::param({1}, draw(rng, 1, 0.1, 2)),
              D::param({1}, draw(rng, 1, 0.1, 2))};
        LossCoeffs<double> coeffs{rng.uniform(0.5, 2), rng.uniform(0.5, 2), rng.uniform(0.5, 2)};
        return [&in, coeffs] { return total_generator_loss(in[0], in[1], in[2], coeffs); };
    });

    return s.results;
}

}  // namespace svgan
