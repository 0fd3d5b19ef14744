#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "svgan/rng.hpp"
#include "svgan/tensor.hpp"

namespace svgan {

namespace detail {

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": operand shapes differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
}

// Valid output range for a shifted-window accumulation: output (y,x) such
// that (y+dy, x+dx) lies inside an h-by-w grid.
struct ShiftRange {
    std::size_t y0, y1, x0, x1;
};

inline ShiftRange shift_range(std::ptrdiff_t dy, std::ptrdiff_t dx, std::size_t h, std::size_t w) {
    ShiftRange r;
    r.y0 = dy < 0 ? static_cast<std::size_t>(-dy) : 0;
    r.y1 = h - (dy > 0 ? static_cast<std::size_t>(dy) : 0);
    r.x0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
    r.x1 = w - (dx > 0 ? static_cast<std::size_t>(dx) : 0);
    return r;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<T> out(a.size());
    const auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return Tensor<T>::make_op("add", a.shape(), std::move(out), {a.node(), b.node()},
                              [](TensorNode<T>& n) {
                                  for (int k = 0; k < 2; ++k) {
                                      auto& p = *n.parents[k];
                                      if (!p.tracked) continue;
                                      p.ensure_grad();
                                      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
                                  }
                              });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<T> out(a.size());
    const auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return Tensor<T>::make_op("sub", a.shape(), std::move(out), {a.node(), b.node()},
                              [](TensorNode<T>& n) {
                                  auto& pa = *n.parents[0];
                                  auto& pb = *n.parents[1];
                                  if (pa.tracked) {
                                      pa.ensure_grad();
                                      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
                                  }
                                  if (pb.tracked) {
                                      pb.ensure_grad();
                                      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
                                  }
                              });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<T> out(a.size());
    const auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return Tensor<T>::make_op("mul", a.shape(), std::move(out), {a.node(), b.node()},
                              [](TensorNode<T>& n) {
                                  auto& pa = *n.parents[0];
                                  auto& pb = *n.parents[1];
                                  if (pa.tracked) {
                                      pa.ensure_grad();
                                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                                          pa.grad[i] += n.grad[i] * pb.value[i];
                                  }
                                  if (pb.tracked) {
                                      pb.ensure_grad();
                                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                                          pb.grad[i] += n.grad[i] * pa.value[i];
                                  }
                              });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    std::vector<T> out(a.size());
    const auto av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    return Tensor<T>::make_op("scale", a.shape(), std::move(out), {a.node()},
                              [c](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += c * n.grad[i];
                              });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T acc = 0;
    for (T v : a.data()) acc += v;
    return Tensor<T>::make_op("sum", {1}, {acc}, {a.node()},
                              [](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  const T g = n.grad[0];
                                  for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
                              });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    T acc = 0;
    for (T v : a.data()) acc += v;
    const T inv = T(1) / static_cast<T>(a.size());
    return Tensor<T>::make_op("mean", {1}, {acc * inv}, {a.node()},
                              [inv](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  const T g = n.grad[0] * inv;
                                  for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
                              });
}

/// Elementwise mean of k same-shape tensors.
template <typename T>
Tensor<T> mean_of(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ShapeError("mean_of: empty input list");
    for (const auto& x : xs) detail::check_same_shape(xs[0], x, "mean_of");
    const T inv = T(1) / static_cast<T>(xs.size());
    std::vector<T> out(xs[0].size(), T(0));
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    parents.reserve(xs.size());
    for (const auto& x : xs) {
        const auto v = x.data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
        parents.push_back(x.node());
    }
    for (auto& v : out) v *= inv;
    return Tensor<T>::make_op("mean_of", xs[0].shape(), std::move(out), std::move(parents),
                              [inv](TensorNode<T>& n) {
                                  for (auto& pp : n.parents) {
                                      auto& p = *pp;
                                      if (!p.tracked) continue;
                                      p.ensure_grad();
                                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                                          p.grad[i] += inv * n.grad[i];
                                  }
                              });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    const auto av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
    return Tensor<T>::make_op("relu", a.shape(), std::move(out), {a.node()},
                              [](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i)
                                      if (p.value[i] > T(0)) p.grad[i] += n.grad[i];
                              });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T alpha) {
    std::vector<T> out(a.size());
    const auto av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > T(0) ? av[i] : alpha * av[i];
    return Tensor<T>::make_op("leaky_relu", a.shape(), std::move(out), {a.node()},
                              [alpha](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i)
                                      p.grad[i] += (p.value[i] > T(0) ? T(1) : alpha) * n.grad[i];
                              });
}

template <typename T>
inline T stable_sigmoid(T x) {
    if (x >= T(0)) {
        return T(1) / (T(1) + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    const auto av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(av[i]);
    return Tensor<T>::make_op("sigmoid", a.shape(), std::move(out), {a.node()},
                              [](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i) {
                                      const T y = n.value[i];
                                      p.grad[i] += y * (T(1) - y) * n.grad[i];
                                  }
                              });
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    const auto av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
    return Tensor<T>::make_op("tanh", a.shape(), std::move(out), {a.node()},
                              [](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i) {
                                      const T y = n.value[i];
                                      p.grad[i] += (T(1) - y * y) * n.grad[i];
                                  }
                              });
}

/// Softmax across dim 0 (the class channel). Works on [C] vectors and
/// [C,H,W] maps alike: every trailing position gets an independent softmax.
template <typename T>
Tensor<T> softmax_channel(const Tensor<T>& a) {
    if (a.rank() < 1 || a.shape()[0] < 1) {
        throw ShapeError("softmax_channel: need a leading class dimension, got " + shape_str(a.shape()));
    }
    const std::size_t c = a.shape()[0];
    const std::size_t pix = a.size() / c;
    std::vector<T> out(a.size());
    const auto av = a.data();
    for (std::size_t p = 0; p < pix; ++p) {
        T m = av[p];
        for (std::size_t k = 1; k < c; ++k) m = std::max(m, av[k * pix + p]);
        T z = 0;
        for (std::size_t k = 0; k < c; ++k) {
            const T e = std::exp(av[k * pix + p] - m);
            out[k * pix + p] = e;
            z += e;
        }
        const T inv = T(1) / z;
        for (std::size_t k = 0; k < c; ++k) out[k * pix + p] *= inv;
    }
    return Tensor<T>::make_op("softmax_channel", a.shape(), std::move(out), {a.node()},
                              [c, pix](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  for (std::size_t q = 0; q < pix; ++q) {
                                      T dot = 0;
                                      for (std::size_t k = 0; k < c; ++k)
                                          dot += n.grad[k * pix + q] * n.value[k * pix + q];
                                      for (std::size_t k = 0; k < c; ++k) {
                                          const std::size_t i = k * pix + q;
                                          p.grad[i] += n.value[i] * (n.grad[i] - dot);
                                      }
                                  }
                              });
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

/// Concatenate along dim 0. All inputs must share rank and trailing dims.
template <typename T>
Tensor<T> concat_channel(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_channel: empty input list");
    const Shape& s0 = parts[0].shape();
    std::size_t c_total = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != s0.size()) {
            throw ShapeError("concat_channel: rank mismatch, " + shape_str(s0) + " vs " + shape_str(s));
        }
        for (std::size_t d = 1; d < s.size(); ++d) {
            if (s[d] != s0[d]) {
                throw ShapeError("concat_channel: trailing dim " + std::to_string(d) +
                                 " mismatch, " + shape_str(s0) + " vs " + shape_str(s));
            }
        }
        c_total += s[0];
    }
    Shape out_shape = s0;
    out_shape[0] = c_total;
    std::vector<T> out;
    out.reserve(shape_size(out_shape));
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    for (const auto& p : parts) {
        const auto v = p.data();
        out.insert(out.end(), v.begin(), v.end());
        parents.push_back(p.node());
    }
    return Tensor<T>::make_op("concat_channel", std::move(out_shape), std::move(out), std::move(parents),
                              [](TensorNode<T>& n) {
                                  std::size_t off = 0;
                                  for (auto& pp : n.parents) {
                                      auto& p = *pp;
                                      const std::size_t len = p.value.size();
                                      if (p.tracked) {
                                          p.ensure_grad();
                                          for (std::size_t i = 0; i < len; ++i) p.grad[i] += n.grad[off + i];
                                      }
                                      off += len;
                                  }
                              });
}

/// Slice [begin, end) along dim 0.
template <typename T>
Tensor<T> slice0(const Tensor<T>& a, std::size_t begin, std::size_t end) {
    if (a.rank() < 1 || begin >= end || end > a.shape()[0]) {
        throw ShapeError("slice0: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for shape " + shape_str(a.shape()));
    }
    const std::size_t stride = a.size() / a.shape()[0];
    Shape out_shape = a.shape();
    out_shape[0] = end - begin;
    const auto av = a.data();
    std::vector<T> out(av.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                       av.begin() + static_cast<std::ptrdiff_t>(end * stride));
    return Tensor<T>::make_op("slice0", std::move(out_shape), std::move(out), {a.node()},
                              [begin, stride](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  const std::size_t off = begin * stride;
                                  for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[off + i] += n.grad[i];
                              });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_size(shape) != a.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    std::vector<T> out(a.data().begin(), a.data().end());
    return Tensor<T>::make_op("reshape", std::move(shape), std::move(out), {a.node()},
                              [](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
                              });
}

/// Tile a [K] vector into a [K,H,W] map.
template <typename T>
Tensor<T> broadcast_channel(const Tensor<T>& v, std::size_t h, std::size_t w) {
    if (v.rank() != 1) {
        throw ShapeError("broadcast_channel: expected rank-1 input, got " + shape_str(v.shape()));
    }
    const std::size_t k = v.shape()[0];
    const std::size_t plane = h * w;
    std::vector<T> out(k * plane);
    const auto vv = v.data();
    for (std::size_t c = 0; c < k; ++c) {
        std::fill(out.begin() + static_cast<std::ptrdiff_t>(c * plane),
                  out.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane), vv[c]);
    }
    return Tensor<T>::make_op("broadcast_channel", {k, h, w}, std::move(out), {v.node()},
                              [k, plane](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  for (std::size_t c = 0; c < k; ++c) {
                                      T acc = 0;
                                      for (std::size_t i = 0; i < plane; ++i) acc += n.grad[c * plane + i];
                                      p.grad[c] += acc;
                                  }
                              });
}

/// Spatial mean per channel: [C,H,W] -> [C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& a) {
    if (a.rank() != 3) {
        throw ShapeError("global_avg_pool: expected [C,H,W], got " + shape_str(a.shape()));
    }
    const std::size_t c = a.shape()[0];
    const std::size_t plane = a.shape()[1] * a.shape()[2];
    const T inv = T(1) / static_cast<T>(plane);
    std::vector<T> out(c);
    const auto av = a.data();
    for (std::size_t k = 0; k < c; ++k) {
        T acc = 0;
        for (std::size_t i = 0; i < plane; ++i) acc += av[k * plane + i];
        out[k] = acc * inv;
    }
    return Tensor<T>::make_op("global_avg_pool", {c}, std::move(out), {a.node()},
                              [c, plane, inv](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  for (std::size_t k = 0; k < c; ++k) {
                                      const T g = n.grad[k] * inv;
                                      for (std::size_t i = 0; i < plane; ++i) p.grad[k * plane + i] += g;
                                  }
                              });
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// y = W x + b with W [out,in], x [in], b [out]. Pass an invalid tensor to
/// skip the bias.
template <typename T>
Tensor<T> dense(const Tensor<T>& w, const Tensor<T>& x, const Tensor<T>& b = Tensor<T>()) {
    if (w.rank() != 2) throw ShapeError("dense: weight must be [out,in], got " + shape_str(w.shape()));
    if (x.rank() != 1) throw ShapeError("dense: input must be rank-1, got " + shape_str(x.shape()));
    const std::size_t out_dim = w.shape()[0];
    const std::size_t in_dim = w.shape()[1];
    if (x.shape()[0] != in_dim) {
        throw ShapeError("dense: weight expects input length " + std::to_string(in_dim) +
                         ", got " + std::to_string(x.shape()[0]));
    }
    const bool has_bias = b.valid();
    if (has_bias && (b.rank() != 1 || b.shape()[0] != out_dim)) {
        throw ShapeError("dense: bias length must be " + std::to_string(out_dim) +
                         ", got " + shape_str(b.shape()));
    }
    std::vector<T> out(out_dim, T(0));
    const auto wv = w.data(), xv = x.data();
    for (std::size_t o = 0; o < out_dim; ++o) {
        const T* row = wv.data() + o * in_dim;
        T acc = has_bias ? b.data()[o] : T(0);
        for (std::size_t i = 0; i < in_dim; ++i) acc += row[i] * xv[i];
        out[o] = acc;
    }
    std::vector<std::shared_ptr<TensorNode<T>>> parents{w.node(), x.node()};
    if (has_bias) parents.push_back(b.node());
    return Tensor<T>::make_op("dense", {out_dim}, std::move(out), std::move(parents),
                              [out_dim, in_dim, has_bias](TensorNode<T>& n) {
                                  auto& pw = *n.parents[0];
                                  auto& px = *n.parents[1];
                                  if (pw.tracked) {
                                      pw.ensure_grad();
                                      for (std::size_t o = 0; o < out_dim; ++o) {
                                          const T g = n.grad[o];
                                          T* row = pw.grad.data() + o * in_dim;
                                          for (std::size_t i = 0; i < in_dim; ++i) row[i] += g * px.value[i];
                                      }
                                  }
                                  if (px.tracked) {
                                      px.ensure_grad();
                                      for (std::size_t o = 0; o < out_dim; ++o) {
                                          const T g = n.grad[o];
                                          const T* row = pw.value.data() + o * in_dim;
                                          for (std::size_t i = 0; i < in_dim; ++i) px.grad[i] += g * row[i];
                                      }
                                  }
                                  if (has_bias) {
                                      auto& pb = *n.parents[2];
                                      if (pb.tracked) {
                                          pb.ensure_grad();
                                          for (std::size_t o = 0; o < out_dim; ++o) pb.grad[o] += n.grad[o];
                                      }
                                  }
                              });
}

// ---------------------------------------------------------------------------
// Convolutions and pooling
// ---------------------------------------------------------------------------

/// Same-padded cross-correlation. input [Ci,H,W], kernel [Co,Ci,k,k] with k
/// odd, bias [Co]; output [Co,H,W]. Pass an invalid tensor to skip the bias
/// (the convention under a following normalization layer, where a bias has
/// exactly zero gradient).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias = Tensor<T>()) {
    if (input.rank() != 3) throw ShapeError("conv2d: input must be [C,H,W], got " + shape_str(input.shape()));
    if (kernel.rank() != 4) throw ShapeError("conv2d: kernel must be [Co,Ci,k,k], got " + shape_str(kernel.shape()));
    const std::size_t ci = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
    const std::size_t co = kernel.shape()[0], k = kernel.shape()[2];
    if (kernel.shape()[1] != ci) {
        throw ShapeError("conv2d: kernel input channels " + std::to_string(kernel.shape()[1]) +
                         " != input channels " + std::to_string(ci));
    }
    if (kernel.shape()[3] != k) {
        throw ShapeError("conv2d: kernel must be square, got " + shape_str(kernel.shape()));
    }
    if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(k));
    const bool has_bias = bias.valid();
    if (has_bias && (bias.rank() != 1 || bias.shape()[0] != co)) {
        throw ShapeError("conv2d: bias length must equal output channels " + std::to_string(co) +
                         ", got " + shape_str(bias.shape()));
    }
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t plane = h * w;
    std::vector<T> out(co * plane);
    const T* in = input.data().data();
    const T* kw = kernel.data().data();
    const T* bv = has_bias ? bias.data().data() : nullptr;

    for (std::size_t oc = 0; oc < co; ++oc) {
        T* op_ = out.data() + oc * plane;
        std::fill(op_, op_ + plane, has_bias ? bv[oc] : T(0));
        for (std::size_t icc = 0; icc < ci; ++icc) {
            const T* ip = in + icc * plane;
            const T* kp = kw + (oc * ci + icc) * k * k;
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const T wv = kp[ky * k + kx];
                    if (wv == T(0)) continue;
                    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                    const auto r = detail::shift_range(dy, dx, h, w);
                    for (std::size_t y = r.y0; y < r.y1; ++y) {
                        T* orow = op_ + y * w;
                        const T* irow = ip + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy) * w;
                        for (std::size_t x = r.x0; x < r.x1; ++x) {
                            orow[x] += wv * irow[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x) + dx)];
                        }
                    }
                }
            }
        }
    }

    const std::size_t hh = h, ww = w, kk = k, cii = ci, coo = co;
    std::vector<std::shared_ptr<TensorNode<T>>> parents{input.node(), kernel.node()};
    if (has_bias) parents.push_back(bias.node());
    return Tensor<T>::make_op(
        "conv2d", {co, h, w}, std::move(out), std::move(parents),
        [hh, ww, kk, cii, coo, has_bias](TensorNode<T>& n) {
            auto& pin = *n.parents[0];
            auto& pker = *n.parents[1];
            const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kk / 2);
            const std::size_t plane = hh * ww;
            if (has_bias && n.parents[2]->tracked) {
                auto& pbias = *n.parents[2];
                pbias.ensure_grad();
                for (std::size_t oc = 0; oc < coo; ++oc) {
                    T acc = 0;
                    const T* gp = n.grad.data() + oc * plane;
                    for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
                    pbias.grad[oc] += acc;
                }
            }
            const bool want_in = pin.tracked;
            const bool want_ker = pker.tracked;
            if (want_in) pin.ensure_grad();
            if (want_ker) pker.ensure_grad();
            if (!want_in && !want_ker) return;
            for (std::size_t oc = 0; oc < coo; ++oc) {
                const T* gp = n.grad.data() + oc * plane;
                for (std::size_t icc = 0; icc < cii; ++icc) {
                    const std::size_t kbase = (oc * cii + icc) * kk * kk;
                    const T* ip = pin.value.data() + icc * plane;
                    for (std::size_t ky = 0; ky < kk; ++ky) {
                        for (std::size_t kx = 0; kx < kk; ++kx) {
                            const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                            const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                            const auto r = detail::shift_range(dy, dx, hh, ww);
                            if (want_ker) {
                                T acc = 0;
                                for (std::size_t y = r.y0; y < r.y1; ++y) {
                                    const T* grow = gp + y * ww;
                                    const T* irow = ip + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy) * ww;
                                    for (std::size_t x = r.x0; x < r.x1; ++x)
                                        acc += grow[x] * irow[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x) + dx)];
                                }
                                pker.grad[kbase + ky * kk + kx] += acc;
                            }
                            if (want_in) {
                                const T wv = pker.value[kbase + ky * kk + kx];
                                if (wv == T(0)) continue;
                                T* igrad = pin.grad.data() + icc * plane;
                                for (std::size_t y = r.y0; y < r.y1; ++y) {
                                    const T* grow = gp + y * ww;
                                    T* irow = igrad + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy) * ww;
                                    for (std::size_t x = r.x0; x < r.x1; ++x)
                                        irow[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x) + dx)] += wv * grow[x];
                                }
                            }
                        }
                    }
                }
            }
        });
}

/// 2x2 max pooling with stride 2. Gradient routes to the first maximum in
/// row-major window order.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input) {
    if (input.rank() != 3) throw ShapeError("maxpool2d: input must be [C,H,W], got " + shape_str(input.shape()));
    const std::size_t c = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("maxpool2d: spatial extents must be even, got " + shape_str(input.shape()));
    }
    const std::size_t oh = h / 2, ow = w / 2;
    std::vector<T> out(c * oh * ow);
    std::vector<std::uint32_t> argmax(c * oh * ow);
    const T* in = input.data().data();
    for (std::size_t cc = 0; cc < c; ++cc) {
        const T* ip = in + cc * h * w;
        T* op_ = out.data() + cc * oh * ow;
        std::uint32_t* ap = argmax.data() + cc * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                const std::size_t base = (2 * y) * w + 2 * x;
                std::size_t best = base;
                T bv = ip[base];
                const std::size_t cand[3] = {base + 1, base + w, base + w + 1};
                for (std::size_t j = 0; j < 3; ++j) {
                    if (ip[cand[j]] > bv) {
                        bv = ip[cand[j]];
                        best = cand[j];
                    }
                }
                op_[y * ow + x] = bv;
                ap[y * ow + x] = static_cast<std::uint32_t>(cc * h * w + best);
            }
        }
    }
    return Tensor<T>::make_op("maxpool2d", {c, oh, ow}, std::move(out), {input.node()},
                              [argmax = std::move(argmax)](TensorNode<T>& n) {
                                  auto& p = *n.parents[0];
                                  if (!p.tracked) return;
                                  p.ensure_grad();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i)
                                      p.grad[argmax[i]] += n.grad[i];
                              });
}

/// Stride-2 transposed convolution. input [Ci,H,W], kernel [Ci,Co,k,k] with
/// k even, bias [Co]; output [Co,2H,2W] (padding (k-2)/2 on each side).
/// Bias is optional, as in conv2d.
template <typename T>
Tensor<T> upconv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias = Tensor<T>()) {
    if (input.rank() != 3) throw ShapeError("upconv2d: input must be [C,H,W], got " + shape_str(input.shape()));
    if (kernel.rank() != 4) throw ShapeError("upconv2d: kernel must be [Ci,Co,k,k], got " + shape_str(kernel.shape()));
    const std::size_t ci = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
    const std::size_t co = kernel.shape()[1], k = kernel.shape()[2];
    if (kernel.shape()[0] != ci) {
        throw ShapeError("upconv2d: kernel input channels " + std::to_string(kernel.shape()[0]) +
                         " != input channels " + std::to_string(ci));
    }
    if (kernel.shape()[3] != k) throw ShapeError("upconv2d: kernel must be square, got " + shape_str(kernel.shape()));
    if (k % 2 != 0) throw ShapeError("upconv2d: kernel size must be even, got " + std::to_string(k));
    const bool has_bias = bias.valid();
    if (has_bias && (bias.rank() != 1 || bias.shape()[0] != co)) {
        throw ShapeError("upconv2d: bias length must equal output channels " + std::to_string(co) +
                         ", got " + shape_str(bias.shape()));
    }
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 2) / 2);
    const std::size_t oh = 2 * h, ow = 2 * w;
    const std::size_t oplane = oh * ow, iplane = h * w;
    std::vector<T> out(co * oplane);
    const T* in = input.data().data();
    const T* kw = kernel.data().data();
    for (std::size_t oc = 0; oc < co; ++oc) {
        std::fill(out.begin() + static_cast<std::ptrdiff_t>(oc * oplane),
                  out.begin() + static_cast<std::ptrdiff_t>((oc + 1) * oplane),
                  has_bias ? bias.data()[oc] : T(0));
    }
    for (std::size_t icc = 0; icc < ci; ++icc) {
        const T* ip = in + icc * iplane;
        for (std::size_t oc = 0; oc < co; ++oc) {
            T* op_ = out.data() + oc * oplane;
            const T* kp = kw + (icc * co + oc) * k * k;
            for (std::size_t dy = 0; dy < k; ++dy) {
                for (std::size_t dx = 0; dx < k; ++dx) {
                    const T wv = kp[dy * k + dx];
                    if (wv == T(0)) continue;
                    const std::ptrdiff_t offy = static_cast<std::ptrdiff_t>(dy) - pad;
                    const std::ptrdiff_t offx = static_cast<std::ptrdiff_t>(dx) - pad;
                    // y valid when 0 <= 2y+offy < oh
                    for (std::size_t y = 0; y < h; ++y) {
                        const std::ptrdiff_t oy = 2 * static_cast<std::ptrdiff_t>(y) + offy;
                        if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(oh)) continue;
                        const T* irow = ip + y * w;
                        T* orow = op_ + static_cast<std::size_t>(oy) * ow;
                        for (std::size_t x = 0; x < w; ++x) {
                            const std::ptrdiff_t ox = 2 * static_cast<std::ptrdiff_t>(x) + offx;
                            if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(ow)) continue;
                            orow[static_cast<std::size_t>(ox)] += wv * irow[x];
                        }
                    }
                }
            }
        }
    }
    const std::size_t hh = h, ww = w, kk = k, cii = ci, coo = co;
    std::vector<std::shared_ptr<TensorNode<T>>> parents{input.node(), kernel.node()};
    if (has_bias) parents.push_back(bias.node());
    return Tensor<T>::make_op(
        "upconv2d", {co, oh, ow}, std::move(out), std::move(parents),
        [hh, ww, kk, cii, coo, has_bias](TensorNode<T>& n) {
            auto& pin = *n.parents[0];
            auto& pker = *n.parents[1];
            const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((kk - 2) / 2);
            const std::size_t oh = 2 * hh, ow = 2 * ww;
            const std::size_t oplane = oh * ow, iplane = hh * ww;
            if (has_bias && n.parents[2]->tracked) {
                auto& pbias = *n.parents[2];
                pbias.ensure_grad();
                for (std::size_t oc = 0; oc < coo; ++oc) {
                    T acc = 0;
                    const T* gp = n.grad.data() + oc * oplane;
                    for (std::size_t i = 0; i < oplane; ++i) acc += gp[i];
                    pbias.grad[oc] += acc;
                }
            }
            const bool want_in = pin.tracked;
            const bool want_ker = pker.tracked;
            if (want_in) pin.ensure_grad();
            if (want_ker) pker.ensure_grad();
            if (!want_in && !want_ker) return;
            for (std::size_t icc = 0; icc < cii; ++icc) {
                const T* ip = pin.value.data() + icc * iplane;
                T* igrad = want_in ? pin.grad.data() + icc * iplane : nullptr;
                for (std::size_t oc = 0; oc < coo; ++oc) {
                    const T* gp = n.grad.data() + oc * oplane;
                    const std::size_t kbase = (icc * coo + oc) * kk * kk;
                    for (std::size_t dy = 0; dy < kk; ++dy) {
                        for (std::size_t dx = 0; dx < kk; ++dx) {
                            const std::ptrdiff_t offy = static_cast<std::ptrdiff_t>(dy) - pad;
                            const std::ptrdiff_t offx = static_cast<std::ptrdiff_t>(dx) - pad;
                            const T wv = pker.value[kbase + dy * kk + dx];
                            T kacc = 0;
                            for (std::size_t y = 0; y < hh; ++y) {
                                const std::ptrdiff_t oy = 2 * static_cast<std::ptrdiff_t>(y) + offy;
                                if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(oh)) continue;
                                const T* grow = gp + static_cast<std::size_t>(oy) * ow;
                                const T* irow = ip + y * ww;
                                T* irowg = want_in ? igrad + y * ww : nullptr;
                                for (std::size_t x = 0; x < ww; ++x) {
                                    const std::ptrdiff_t ox = 2 * static_cast<std::ptrdiff_t>(x) + offx;
                                    if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(ow)) continue;
                                    const T g = grow[static_cast<std::size_t>(ox)];
                                    kacc += g * irow[x];
                                    if (want_in) irowg[x] += wv * g;
                                }
                            }
                            if (want_ker) pker.grad[kbase + dy * kk + dx] += kacc;
                        }
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Regularization and normalization
// ---------------------------------------------------------------------------

/// Inverted dropout: keeps units with probability 1-p and scales them by
/// 1/(1-p). Identity (no node) when training is off or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double p, Rng& rng, bool training) {
    if (p < 0.0 || p >= 1.0) {
        throw ValidationError("dropout: probability must lie in [0,1), got " + std::to_string(p));
    }
    if (!training || p == 0.0) return a;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    std::vector<T> mask(a.size());
    std::vector<T> out(a.size());
    const auto av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = rng.uniform() >= p ? keep_scale : T(0);
        out[i] = av[i] * mask[i];
    }
    return Tensor<T>::make_op("dropout", a.shape(), std::move(out), {a.node()},
                              [mask = std::move(mask)](TensorNode<T>& n) {
                                  auto& pa = *n.parents[0];
                                  if (!pa.tracked) return;
                                  pa.ensure_grad();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i)
                                      pa.grad[i] += mask[i] * n.grad[i];
                              });
}

/// Per-channel normalization of a [C,H,W] map over its spatial extent, with
/// learned per-channel gain and shift.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& a, const Tensor<T>& gamma, const Tensor<T>& beta) {
    if (a.rank() != 3) throw ShapeError("instance_norm: input must be [C,H,W], got " + shape_str(a.shape()));
    const std::size_t c = a.shape()[0];
    const std::size_t plane = a.shape()[1] * a.shape()[2];
    if (gamma.rank() != 1 || gamma.shape()[0] != c || beta.rank() != 1 || beta.shape()[0] != c) {
        throw ShapeError("instance_norm: gamma/beta must be [C] with C=" + std::to_string(c));
    }
    constexpr T eps = static_cast<T>(1e-5);
    std::vector<T> out(a.size());
    std::vector<T> xhat(a.size());
    std::vector<T> inv_std(c);
    const auto av = a.data();
    const auto gv = gamma.data(), bv = beta.data();
    for (std::size_t k = 0; k < c; ++k) {
        const T* ip = av.data() + k * plane;
        T mu = 0;
        for (std::size_t i = 0; i < plane; ++i) mu += ip[i];
        mu /= static_cast<T>(plane);
        T var = 0;
        for (std::size_t i = 0; i < plane; ++i) {
            const T d = ip[i] - mu;
            var += d * d;
        }
        var /= static_cast<T>(plane);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[k] = is;
        for (std::size_t i = 0; i < plane; ++i) {
            const T xh = (ip[i] - mu) * is;
            xhat[k * plane + i] = xh;
            out[k * plane + i] = gv[k] * xh + bv[k];
        }
    }
    return Tensor<T>::make_op(
        "instance_norm", a.shape(), std::move(out), {a.node(), gamma.node(), beta.node()},
        [c, plane, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode<T>& n) {
            auto& pa = *n.parents[0];
            auto& pg = *n.parents[1];
            auto& pb = *n.parents[2];
            const T invn = T(1) / static_cast<T>(plane);
            for (std::size_t k = 0; k < c; ++k) {
                const T* gp = n.grad.data() + k * plane;
                const T* xh = xhat.data() + k * plane;
                T sum_g = 0, sum_gx = 0;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_g += gp[i];
                    sum_gx += gp[i] * xh[i];
                }
                if (pg.tracked) {
                    pg.ensure_grad();
                    pg.grad[k] += sum_gx;
                }
                if (pb.tracked) {
                    pb.ensure_grad();
                    pb.grad[k] += sum_g;
                }
                if (pa.tracked) {
                    pa.ensure_grad();
                    T* ag = pa.grad.data() + k * plane;
                    const T coeff = pg.value[k] * inv_std[k];
                    for (std::size_t i = 0; i < plane; ++i) {
                        ag[i] += coeff * (gp[i] - sum_g * invn - xh[i] * sum_gx * invn);
                    }
                }
            }
        });
}

} // namespace svgan
