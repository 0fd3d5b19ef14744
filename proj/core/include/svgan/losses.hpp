#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "svgan/ops.hpp"
#include "svgan/tensor.hpp"

namespace svgan {

inline constexpr double kLogEps = 1e-7;

enum class GanObjective {
    kNonSaturating, // generator maximizes log D(fake)
    kMinimax,       // generator minimizes log(1 - D(fake))
};

template <typename T>
struct LossBreakdown {
    T adv_d = 0;
    T adv_g = 0;
    T seg_ce = 0;
    T cls_l1 = 0;
    T total = 0;
};

/// Mean binary cross entropy against a constant target in [0,1]. Scores are
/// clamped to [eps, 1-eps]; gradient is zero at clamped elements.
template <typename T>
Tensor<T> bce(const Tensor<T>& scores, T target) {
    if (target < T(0) || target > T(1)) {
        throw ValidationError("bce: target must lie in [0,1]");
    }
    const T eps = static_cast<T>(kLogEps);
    const T lo = eps, hi = T(1) - eps;
    const auto sv = scores.data();
    const std::size_t n = sv.size();
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T s = std::clamp(sv[i], lo, hi);
        acc -= static_cast<double>(target) * std::log(static_cast<double>(s)) +
               (1.0 - static_cast<double>(target)) * std::log(1.0 - static_cast<double>(s));
    }
    const T value = static_cast<T>(acc / static_cast<double>(n));
    return Tensor<T>::make_op("bce", {1}, {value}, {scores.node()},
                              [target, lo, hi, n](TensorNode<T>& nd) {
                                  auto& p = *nd.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  const T g = nd.grad[0] / static_cast<T>(n);
                                  for (std::size_t i = 0; i < n; ++i) {
                                      const T s = p.value[i];
                                      if (s < lo || s > hi) continue;
                                      p.grad[i] += g * (-(target / s) + (T(1) - target) / (T(1) - s));
                                  }
                              });
}

/// Generator objective under the original minimax form: mean log(1 - s).
template <typename T>
Tensor<T> mean_log_one_minus(const Tensor<T>& scores) {
    const T eps = static_cast<T>(kLogEps);
    const T lo = eps, hi = T(1) - eps;
    const auto sv = scores.data();
    const std::size_t n = sv.size();
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T s = std::clamp(sv[i], lo, hi);
        acc += std::log(1.0 - static_cast<double>(s));
    }
    const T value = static_cast<T>(acc / static_cast<double>(n));
    return Tensor<T>::make_op("mean_log_one_minus", {1}, {value}, {scores.node()},
                              [lo, hi, n](TensorNode<T>& nd) {
                                  auto& p = *nd.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  const T g = nd.grad[0] / static_cast<T>(n);
                                  for (std::size_t i = 0; i < n; ++i) {
                                      const T s = p.value[i];
                                      if (s < lo || s > hi) continue;
                                      p.grad[i] += -g / (T(1) - s);
                                  }
                              });
}

/// adv_d trains D to score real maps 1 and fake maps 0; adv_g is the
/// generator's term on the same fake scores.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> adversarial_losses(const Tensor<T>& d_real, const Tensor<T>& d_fake,
                                                   GanObjective objective = GanObjective::kNonSaturating) {
    if (d_real.shape() != d_fake.shape()) {
        throw ShapeError("adversarial_losses: score map shapes differ, " + shape_str(d_real.shape()) +
                         " vs " + shape_str(d_fake.shape()));
    }
    Tensor<T> adv_d = add(bce(d_real, T(1)), bce(d_fake, T(0)));
    Tensor<T> adv_g = objective == GanObjective::kNonSaturating ? bce(d_fake, T(1))
                                                                : mean_log_one_minus(d_fake);
    return {adv_d, adv_g};
}

/// Mean over pixels of -w[label] * ln(max(prob[label], eps)). Probs are
/// [C,H,W] maps or [C] vectors; labels flatten the trailing geometry.
template <typename T>
Tensor<T> weighted_cce(const Tensor<T>& probs, std::span<const std::uint8_t> labels,
                       std::span<const T> weights) {
    if (probs.rank() < 1) throw ShapeError("weighted_cce: probs need a class dimension");
    const std::size_t c = probs.shape()[0];
    const std::size_t pix = probs.size() / c;
    if (weights.size() != c) {
        throw ShapeError("weighted_cce: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(c) + " classes");
    }
    if (labels.size() != pix) {
        throw ShapeError("weighted_cce: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(pix) + " pixels");
    }
    const T eps = static_cast<T>(kLogEps);
    const auto pv = probs.data();
    double acc = 0;
    for (std::size_t p = 0; p < pix; ++p) {
        const std::uint8_t y = labels[p];
        if (y >= c) {
            throw ValidationError("weighted_cce: label " + std::to_string(int(y)) + " at pixel " +
                                  std::to_string(p) + " out of range for " + std::to_string(c) +
                                  " classes");
        }
        const T pr = std::max(pv[y * pix + p], eps);
        acc -= static_cast<double>(weights[y]) * std::log(static_cast<double>(pr));
    }
    const T value = static_cast<T>(acc / static_cast<double>(pix));
    std::vector<std::uint8_t> lab(labels.begin(), labels.end());
    std::vector<T> wts(weights.begin(), weights.end());
    return Tensor<T>::make_op(
        "weighted_cce", {1}, {value}, {probs.node()},
        [c, pix, eps, lab = std::move(lab), wts = std::move(wts)](TensorNode<T>& nd) {
            auto& p = *nd.parents[0];
            if (!p.tracked) return;
            p.ensure_grad();
            const T g = nd.grad[0] / static_cast<T>(pix);
            for (std::size_t q = 0; q < pix; ++q) {
                const std::size_t i = lab[q] * pix + q;
                if (p.value[i] < eps) continue;
                p.grad[i] += -g * wts[lab[q]] / p.value[i];
            }
        });
}

/// Sum over classes of w_c * |target_c - pred_c|. No mean: disease vectors
/// are short and fixed-length.
template <typename T>
Tensor<T> weighted_l1(const Tensor<T>& pred, const Tensor<T>& target, std::span<const T> weights) {
    if (pred.rank() != 1 || target.rank() != 1 || pred.shape()[0] != target.shape()[0]) {
        throw ShapeError("weighted_l1: pred " + shape_str(pred.shape()) + " and target " +
                         shape_str(target.shape()) + " must be rank-1 and equal length");
    }
    const std::size_t n = pred.shape()[0];
    if (weights.size() != n) {
        throw ShapeError("weighted_l1: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(n) + " classes");
    }
    const auto pv = pred.data(), tv = target.data();
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += static_cast<double>(weights[i]) *
               std::abs(static_cast<double>(tv[i]) - static_cast<double>(pv[i]));
    }
    std::vector<T> wts(weights.begin(), weights.end());
    return Tensor<T>::make_op(
        "weighted_l1", {1}, {static_cast<T>(acc)}, {pred.node(), target.node()},
        [n, wts = std::move(wts)](TensorNode<T>& nd) {
            auto& pp = *nd.parents[0];
            auto& pt = *nd.parents[1];
            const T g = nd.grad[0];
            for (std::size_t i = 0; i < n; ++i) {
                const T d = pp.value[i] - pt.value[i];
                const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                if (pp.tracked) {
                    pp.ensure_grad();
                    pp.grad[i] += g * wts[i] * s;
                }
                if (pt.tracked) {
                    pt.ensure_grad();
                    pt.grad[i] -= g * wts[i] * s;
                }
            }
        });
}

template <typename T>
struct LossCoeffs {
    T adv = 1;
    T seg = 1;
    T cls = 1;
};

/// total = adv*adv_g + seg*seg_ce + cls*cls_l1. Unit coefficients give the
/// plain three-term sum.
template <typename T>
Tensor<T> total_generator_loss(const Tensor<T>& adv_g, const Tensor<T>& seg_ce,
                               const Tensor<T>& cls_l1, const LossCoeffs<T>& coeffs = {}) {
    return add(add(scale(adv_g, coeffs.adv), scale(seg_ce, coeffs.seg)), scale(cls_l1, coeffs.cls));
}

} // namespace svgan
