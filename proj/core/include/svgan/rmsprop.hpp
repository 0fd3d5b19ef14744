#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "svgan/errors.hpp"
#include "svgan/params.hpp"

namespace svgan {

template <typename T>
struct RmsPropConfig {
    T lr = static_cast<T>(1e-4);
    T rho = static_cast<T>(0.9);
    T eps = static_cast<T>(1e-8);

    void validate() const {
        if (!(lr > T(0))) throw ValidationError("rmsprop: learning rate must be positive");
        if (!(rho >= T(0) && rho < T(1))) throw ValidationError("rmsprop: rho must lie in [0,1)");
        if (!(eps > T(0))) throw ValidationError("rmsprop: eps must be positive");
    }
};

/// One update: v <- rho*v + (1-rho)*g^2, theta <- theta - lr*g/(sqrt(v)+eps).
/// `v` must match the parameter length (zero-initialized on first use by the
/// optimizer class below).
template <typename T>
void rmsprop_step(std::span<T> param, std::span<const T> grad, std::vector<T>& v,
                  const RmsPropConfig<T>& cfg, const std::string& name) {
    if (grad.size() != param.size()) {
        throw ShapeError("rmsprop: gradient length " + std::to_string(grad.size()) +
                         " != parameter length " + std::to_string(param.size()) + " for '" + name + "'");
    }
    if (v.size() != param.size()) {
        throw ShapeError("rmsprop: state length " + std::to_string(v.size()) +
                         " != parameter length " + std::to_string(param.size()) + " for '" + name + "'");
    }
    const T one_minus_rho = T(1) - cfg.rho;
    for (std::size_t i = 0; i < param.size(); ++i) {
        const T g = grad[i];
        if (!std::isfinite(static_cast<double>(g))) {
            throw NumericError("rmsprop: non-finite gradient in '" + name + "' at index " +
                               std::to_string(i));
        }
        v[i] = cfg.rho * v[i] + one_minus_rho * g * g;
        param[i] -= cfg.lr * g / (std::sqrt(v[i]) + cfg.eps);
    }
}

/// Keeps one squared-gradient accumulator per named parameter.
template <typename T>
class RmsProp {
public:
    explicit RmsProp(RmsPropConfig<T> cfg) : cfg_(cfg) { cfg_.validate(); }

    const RmsPropConfig<T>& config() const { return cfg_; }
    void set_lr(T lr) {
        cfg_.lr = lr;
        cfg_.validate();
    }

    void step(std::vector<NamedParam<T>>& params) {
        for (auto& p : params) {
            auto& v = state_[p.name];
            if (v.size() != p.tensor.size()) v.assign(p.tensor.size(), T(0));
            rmsprop_step<T>(p.tensor.data(), p.tensor.grad(), v, cfg_, p.name);
        }
    }

    /// Accumulator for `name`, zero-initialized to `size` if absent.
    std::vector<T>& state(const std::string& name, std::size_t size) {
        auto& v = state_[name];
        if (v.size() != size) v.assign(size, T(0));
        return v;
    }

    const std::unordered_map<std::string, std::vector<T>>& states() const { return state_; }

private:
    RmsPropConfig<T> cfg_;
    std::unordered_map<std::string, std::vector<T>> state_;
};

} // namespace svgan
