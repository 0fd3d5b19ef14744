#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "svgan/ops.hpp"
#include "svgan/tensor.hpp"

namespace svgan {

/// One scan direction: input projection W [4H,F], recurrent projection
/// U [4H,H], bias b [4H]. Gate blocks are ordered input, forget, cell,
/// output along the 4H axis.
template <typename T>
struct LstmDirectionParams {
    Tensor<T> w_in;
    Tensor<T> w_rec;
    Tensor<T> bias;

    std::size_t hidden() const { return w_rec.shape()[1]; }
    std::size_t features() const { return w_in.shape()[1]; }
};

template <typename T>
struct BiLstmParams {
    LstmDirectionParams<T> fwd;
    LstmDirectionParams<T> bwd;

    std::size_t hidden() const { return fwd.hidden(); }
};

namespace detail {

template <typename T>
void check_lstm_params(const LstmDirectionParams<T>& p, const char* dir) {
    if (p.w_in.rank() != 2 || p.w_rec.rank() != 2 || p.bias.rank() != 1) {
        throw ShapeError(std::string("bilstm: malformed ") + dir + " parameter ranks");
    }
    const std::size_t h = p.w_rec.shape()[1];
    if (p.w_in.shape()[0] != 4 * h || p.w_rec.shape()[0] != 4 * h || p.bias.shape()[0] != 4 * h) {
        throw ShapeError(std::string("bilstm: ") + dir + " gate dimension must be 4*hidden=" +
                         std::to_string(4 * h));
    }
}

template <typename T>
std::vector<Tensor<T>> lstm_scan(const std::vector<Tensor<T>>& inputs,
                                 const LstmDirectionParams<T>& p, bool reverse) {
    const std::size_t steps = inputs.size();
    const std::size_t hid = p.hidden();
    std::vector<Tensor<T>> hs(steps);
    Tensor<T> h = Tensor<T>::zeros({hid});
    Tensor<T> c = Tensor<T>::zeros({hid});
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = reverse ? steps - 1 - s : s;
        Tensor<T> z = add(dense(p.w_in, inputs[t], p.bias), dense(p.w_rec, h));
        Tensor<T> gi = sigmoid(slice0(z, 0, hid));
        Tensor<T> gf = sigmoid(slice0(z, hid, 2 * hid));
        Tensor<T> gc = tanh_op(slice0(z, 2 * hid, 3 * hid));
        Tensor<T> go = sigmoid(slice0(z, 3 * hid, 4 * hid));
        c = add(mul(gf, c), mul(gi, gc));
        h = mul(go, tanh_op(c));
        hs[t] = h;
    }
    return hs;
}

} // namespace detail

/// Bidirectional scan over a sequence of [F] vectors. Output t is the
/// concatenation [h_fwd[t], h_bwd[t]], each half of length `hidden`.
template <typename T>
std::vector<Tensor<T>> bilstm_sequence(const std::vector<Tensor<T>>& inputs,
                                       const BiLstmParams<T>& params) {
    if (inputs.empty()) throw ShapeError("bilstm: empty input sequence");
    detail::check_lstm_params(params.fwd, "forward");
    detail::check_lstm_params(params.bwd, "backward");
    if (params.fwd.hidden() != params.bwd.hidden()) {
        throw ShapeError("bilstm: forward/backward hidden sizes differ");
    }
    const std::size_t feat = params.fwd.features();
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        if (inputs[t].rank() != 1 || inputs[t].shape()[0] != feat) {
            throw ShapeError("bilstm: step " + std::to_string(t) + " has shape " +
                             shape_str(inputs[t].shape()) + ", expected [" + std::to_string(feat) + "]");
        }
        if (params.bwd.features() != feat) {
            throw ShapeError("bilstm: backward direction expects feature length " +
                             std::to_string(params.bwd.features()));
        }
    }
    auto hf = detail::lstm_scan(inputs, params.fwd, false);
    auto hb = detail::lstm_scan(inputs, params.bwd, true);
    std::vector<Tensor<T>> out;
    out.reserve(inputs.size());
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        out.push_back(concat_channel<T>({hf[t], hb[t]}));
    }
    return out;
}

} // namespace svgan
