#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "svgan/gradcheck_suite.hpp"

using namespace svgan;

TEST_CASE("gradient suite covers every op and stays under tolerance") {
    const auto results = run_gradient_suite(123, 5);

    const std::vector<std::string> expected{
        "add",         "sub",       "mul",         "scale",
        "sum",         "mean",      "mean_of",     "relu",
        "leaky_relu",  "sigmoid",   "tanh",        "softmax_channel",
        "reshape",     "concat_channel", "slice0", "broadcast_channel",
        "global_avg_pool", "dense", "conv2d",      "upconv2d",
        "maxpool2d",   "instance_norm", "dropout", "bilstm",
        "bce",         "mean_log_one_minus", "adversarial_d", "adversarial_g",
        "weighted_cce", "weighted_l1", "total_generator_loss"};
    REQUIRE(results.size() == expected.size());
    for (const auto& name : expected) {
        const bool present = std::any_of(results.begin(), results.end(),
                                         [&](const OpCheckResult& r) { return r.op == name; });
        CAPTURE(name);
        CHECK(present);
    }
    for (const auto& r : results) {
        CAPTURE(r.op);
        CHECK(r.instances == 5);
        CHECK(r.max_rel_err < 1e-4);
        CHECK(r.max_rel_err >= 0.0);
    }
}

TEST_CASE("gradient suite is seed-deterministic") {
    const auto a = run_gradient_suite(7, 2);
    const auto b = run_gradient_suite(7, 2);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].op == b[i].op);
        CHECK(a[i].max_rel_err == b[i].max_rel_err);
    }
}
