#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace svgan {

struct OpCheckResult {
    std::string op;
    double max_rel_err = 0.0;
    std::size_t instances = 0;
};

/// Central finite-difference check of every differentiable op and loss, in
/// double precision, on `instances_per_op` random instances each. Inputs are
/// sampled away from non-differentiable points (ReLU kinks, pooling ties, L1
/// folds) so the comparison is meaningful everywhere it runs.
std::vector<OpCheckResult> run_gradient_suite(std::uint64_t seed = 0,
                                              std::size_t instances_per_op = 50);

}  // namespace svgan
