#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "svgan/rng.hpp"
#include "svgan/tensor.hpp"

namespace svgan {

struct FdReport {
    double max_rel_err = 0.0;
    std::size_t checks = 0;

    void merge(const FdReport& o) {
        max_rel_err = std::max(max_rel_err, o.max_rel_err);
        checks += o.checks;
    }
};

namespace detail {

inline double rel_err(double analytic, double numeric) {
    const double denom = std::max(1e-6, std::abs(analytic) + std::abs(numeric));
    return std::abs(analytic - numeric) / denom;
}

} // namespace detail

/// Central finite differences against the analytic gradient, checking every
/// coordinate of every input. `build` must reconstruct the scalar loss from
/// the inputs' current values (stochastic builds must reseed internally so
/// repeated evaluations agree).
template <typename Build>
FdReport fd_check(std::vector<Tensor<double>>& inputs, Build&& build, double h = 1e-5) {
    for (auto& t : inputs) t.zero_grad();
    backward(build());
    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (auto& t : inputs) {
        auto g = t.grad();
        analytic.emplace_back(g.begin(), g.end());
    }
    FdReport rep;
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        auto d = inputs[j].data();
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double x0 = d[i];
            d[i] = x0 + h;
            const double fp = build().item();
            d[i] = x0 - h;
            const double fm = build().item();
            d[i] = x0;
            rep.max_rel_err = std::max(rep.max_rel_err, detail::rel_err(analytic[j][i], (fp - fm) / (2.0 * h)));
            ++rep.checks;
        }
    }
    return rep;
}

/// Same check restricted to `samples` randomly drawn coordinates; keeps
/// model-level checks affordable.
template <typename Build>
FdReport fd_check_sampled(std::vector<Tensor<double>>& inputs, Build&& build, Rng& rng,
                          std::size_t samples, double h = 1e-5) {
    for (auto& t : inputs) t.zero_grad();
    backward(build());
    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    std::size_t total = 0;
    for (auto& t : inputs) {
        auto g = t.grad();
        analytic.emplace_back(g.begin(), g.end());
        total += t.size();
    }
    FdReport rep;
    if (total == 0) return rep;
    for (std::size_t s = 0; s < samples; ++s) {
        std::size_t flat = rng.uniform_int(total);
        std::size_t j = 0;
        while (flat >= inputs[j].size()) {
            flat -= inputs[j].size();
            ++j;
        }
        auto d = inputs[j].data();
        const double x0 = d[flat];
        d[flat] = x0 + h;
        const double fp = build().item();
        d[flat] = x0 - h;
        const double fm = build().item();
        d[flat] = x0;
        rep.max_rel_err = std::max(rep.max_rel_err, detail::rel_err(analytic[j][flat], (fp - fm) / (2.0 * h)));
        ++rep.checks;
    }
    return rep;
}

} // namespace svgan
