#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "svgan/gradcheck.hpp"
#include "svgan/losses.hpp"
#include "svgan/rng.hpp"

using namespace svgan;

namespace {

std::vector<double> random_values(Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

} // namespace

TEST_CASE("bce analytic values") {
    auto s = Tensor<double>::filled({2, 3, 3}, 0.5);
    CHECK(bce(s, 1.0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce(s, 0.0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    auto perfect = Tensor<double>::filled({4}, 1.0);
    CHECK(bce(perfect, 1.0).item() == doctest::Approx(0.0).epsilon(1e-6));
    auto zero = Tensor<double>::filled({4}, 0.0);
    CHECK(bce(zero, 0.0).item() == doctest::Approx(0.0).epsilon(1e-6));

    CHECK(bce(s, 0.5).item() >= 0.0);
    CHECK_THROWS_AS(bce(s, 1.5), ValidationError);
}

TEST_CASE("bce is non-negative on random scores") {
    Rng rng(41);
    for (int it = 0; it < 50; ++it) {
        auto s = Tensor<double>::from({7}, random_values(rng, 7, 0.0, 1.0));
        CHECK(bce(s, 1.0).item() >= 0.0);
        CHECK(bce(s, 0.0).item() >= 0.0);
    }
}

TEST_CASE("adversarial losses at the 0.5 equilibrium") {
    auto real = Tensor<double>::filled({1, 4, 4}, 0.5);
    auto fake = Tensor<double>::filled({1, 4, 4}, 0.5);
    auto [adv_d, adv_g] = adversarial_losses(real, fake);
    CHECK(adv_d.item() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(adv_g.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    auto [d2, g2] = adversarial_losses(real, fake, GanObjective::kMinimax);
    CHECK(d2.item() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(g2.item() == doctest::Approx(-std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(adversarial_losses(real, Tensor<double>::filled({1, 2, 2}, 0.5)), ShapeError);
}

TEST_CASE("perfect discriminator drives adv_d to zero and adv_g up") {
    auto real = Tensor<double>::filled({1, 2, 2}, 1.0);
    auto fake = Tensor<double>::filled({1, 2, 2}, 0.0);
    auto [adv_d, adv_g] = adversarial_losses(real, fake);
    CHECK(adv_d.item() == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(adv_g.item() > 10.0);
}

TEST_CASE("weighted_cce hand case") {
    auto probs = Tensor<double>::from({2, 1, 1}, {0.2, 0.8});
    std::vector<std::uint8_t> labels{1};
    std::vector<double> w{1.0, 2.0};
    const double v = weighted_cce<double>(probs, labels, w).item();
    CHECK(v == doctest::Approx(-2.0 * std::log(0.8)).epsilon(1e-12));
    CHECK(v == doctest::Approx(0.44629).epsilon(1e-5));
}

TEST_CASE("weighted_cce with perfect one-hot predictions is ~0 for any weights") {
    auto probs = Tensor<double>::from({3, 1, 2}, {1, 0, 0, 1, 0, 0});
    std::vector<std::uint8_t> labels{0, 1};
    std::vector<double> w{5.0, 7.0, 11.0};
    CHECK(weighted_cce<double>(probs, labels, w).item() == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("weighted_cce with unit weights reduces to the unweighted loss") {
    Rng rng(42);
    for (int it = 0; it < 20; ++it) {
        const std::size_t c = 2 + rng.uniform_int(4), h = 2, wd = 3;
        const std::size_t pix = h * wd;
        std::vector<double> raw = random_values(rng, c * pix, 0.05, 1.0);
        for (std::size_t p = 0; p < pix; ++p) {
            double z = 0;
            for (std::size_t k = 0; k < c; ++k) z += raw[k * pix + p];
            for (std::size_t k = 0; k < c; ++k) raw[k * pix + p] /= z;
        }
        auto probs = Tensor<double>::from({c, h, wd}, raw);
        std::vector<std::uint8_t> labels(pix);
        for (auto& l : labels) l = static_cast<std::uint8_t>(rng.uniform_int(c));
        std::vector<double> unit(c, 1.0);
        double manual = 0;
        for (std::size_t p = 0; p < pix; ++p) manual -= std::log(raw[labels[p] * pix + p]);
        manual /= static_cast<double>(pix);
        CHECK(weighted_cce<double>(probs, labels, unit).item() ==
              doctest::Approx(manual).epsilon(1e-12));
    }
}

TEST_CASE("weighted_cce is permutation-equivariant in the class index") {
    Rng rng(43);
    const std::size_t c = 4, pix = 6;
    std::vector<double> raw = random_values(rng, c * pix, 0.05, 1.0);
    for (std::size_t p = 0; p < pix; ++p) {
        double z = 0;
        for (std::size_t k = 0; k < c; ++k) z += raw[k * pix + p];
        for (std::size_t k = 0; k < c; ++k) raw[k * pix + p] /= z;
    }
    std::vector<std::uint8_t> labels(pix);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.uniform_int(c));
    std::vector<double> w{0.5, 2.0, 1.0, 3.0};
    std::vector<std::size_t> perm{2, 0, 3, 1};

    std::vector<double> praw(c * pix);
    std::vector<double> pw(c);
    std::vector<std::uint8_t> plab(pix);
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t p = 0; p < pix; ++p) praw[perm[k] * pix + p] = raw[k * pix + p];
        pw[perm[k]] = w[k];
    }
    for (std::size_t p = 0; p < pix; ++p) plab[p] = static_cast<std::uint8_t>(perm[labels[p]]);

    auto a = weighted_cce<double>(Tensor<double>::from({c, 2, 3}, raw), labels, w).item();
    auto b = weighted_cce<double>(Tensor<double>::from({c, 2, 3}, praw), plab, pw).item();
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("raising the true-class weight raises an imperfect weighted_cce") {
    auto probs = Tensor<double>::from({2, 1, 1}, {0.3, 0.7});
    std::vector<std::uint8_t> labels{1};
    std::vector<double> w1{1.0, 1.0}, w2{1.0, 1.8};
    CHECK(weighted_cce<double>(probs, labels, w2).item() >
          weighted_cce<double>(probs, labels, w1).item());
}

TEST_CASE("weighting scales a pixel's logit gradient by exactly its class weight") {
    std::vector<double> logit_vals{0.3, -1.1, 0.7};
    std::vector<std::uint8_t> labels{1};
    std::vector<double> unit{1.0, 1.0, 1.0};
    std::vector<double> boosted{1.0, 2.21404, 1.0};

    auto grads_with = [&](const std::vector<double>& w) {
        auto logits = Tensor<double>::param({3, 1, 1}, logit_vals);
        auto loss = weighted_cce<double>(softmax_channel(logits), labels, w);
        backward(loss);
        return std::vector<double>(logits.grad().begin(), logits.grad().end());
    };
    const auto g1 = grads_with(unit);
    const auto gw = grads_with(boosted);
    for (std::size_t i = 0; i < g1.size(); ++i) {
        CHECK(gw[i] == doctest::Approx(boosted[1] * g1[i]).epsilon(1e-12));
    }
}

TEST_CASE("weighted_cce validation") {
    auto probs = Tensor<double>::from({2, 1, 1}, {0.5, 0.5});
    std::vector<double> w{1.0, 1.0};
    std::vector<std::uint8_t> bad{2};
    CHECK_THROWS_WITH_AS(weighted_cce<double>(probs, bad, w), doctest::Contains("pixel 0"),
                         ValidationError);
    std::vector<std::uint8_t> labels{0};
    std::vector<double> w3(3, 1.0);
    CHECK_THROWS_AS(weighted_cce<double>(probs, labels, w3), ShapeError);
    std::vector<std::uint8_t> two{0, 1};
    CHECK_THROWS_AS(weighted_cce<double>(probs, two, w), ShapeError);
}

TEST_CASE("weighted_l1 hand cases") {
    auto pred = Tensor<double>::from({2}, {0.7, 0.3});
    auto target = Tensor<double>::from({2}, {1.0, 0.0});
    std::vector<double> w11{1.0, 1.0}, w21{2.0, 1.0};
    CHECK(weighted_l1<double>(pred, target, w11).item() == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(weighted_l1<double>(pred, target, w21).item() == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(weighted_l1<double>(target, target, w21).item() == 0.0);
    CHECK_THROWS_AS(weighted_l1<double>(pred, Tensor<double>::zeros({3}), w11), ShapeError);
    std::vector<double> w3(3, 1.0);
    CHECK_THROWS_AS(weighted_l1<double>(pred, target, w3), ShapeError);
}

TEST_CASE("total generator loss composes its terms") {
    auto a = Tensor<double>::scalar(0.5);
    auto s = Tensor<double>::scalar(0.3);
    auto c = Tensor<double>::scalar(0.2);
    CHECK(total_generator_loss(a, s, c).item() == doctest::Approx(1.0).epsilon(1e-12));
    LossCoeffs<double> seg_only{0.0, 1.0, 0.0};
    CHECK(total_generator_loss(a, s, c, seg_only).item() == doctest::Approx(0.3).epsilon(1e-12));
    LossCoeffs<double> doubled{2.0, 2.0, 2.0};
    CHECK(total_generator_loss(a, s, c, doubled).item() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(44);
    const double tol = 1e-4;

    SUBCASE("bce through sigmoid") {
        for (int it = 0; it < 10; ++it) {
            auto x = Tensor<double>::param({6}, random_values(rng, 6, -2, 2));
            std::vector<Tensor<double>> inputs{x};
            auto rep = fd_check(inputs, [&] { return bce(sigmoid(x), 1.0); });
            CHECK(rep.max_rel_err < tol);
            auto rep0 = fd_check(inputs, [&] { return bce(sigmoid(x), 0.0); });
            CHECK(rep0.max_rel_err < tol);
        }
    }
    SUBCASE("minimax generator term") {
        for (int it = 0; it < 10; ++it) {
            auto x = Tensor<double>::param({5}, random_values(rng, 5, -2, 2));
            std::vector<Tensor<double>> inputs{x};
            auto rep = fd_check(inputs, [&] { return mean_log_one_minus(sigmoid(x)); });
            CHECK(rep.max_rel_err < tol);
        }
    }
    SUBCASE("weighted_cce through softmax") {
        for (int it = 0; it < 10; ++it) {
            auto x = Tensor<double>::param({3, 2, 2}, random_values(rng, 12, -1, 1));
            std::vector<std::uint8_t> labels(4);
            for (auto& l : labels) l = static_cast<std::uint8_t>(rng.uniform_int(3));
            std::vector<double> w = random_values(rng, 3, 0.5, 3.0);
            std::vector<Tensor<double>> inputs{x};
            auto rep = fd_check(inputs, [&] {
                return weighted_cce<double>(softmax_channel(x), labels, w);
            });
            CHECK(rep.max_rel_err < tol);
        }
    }
    SUBCASE("weighted_l1 away from kinks") {
        for (int it = 0; it < 10; ++it) {
            auto pred = Tensor<double>::param({4}, random_values(rng, 4, 0.1, 0.45));
            auto target = Tensor<double>::from({4}, {1.0, 0.0, 1.0, 0.0});
            std::vector<double> w = random_values(rng, 4, 0.5, 3.0);
            std::vector<Tensor<double>> inputs{pred};
            auto rep = fd_check(inputs, [&] { return weighted_l1<double>(pred, target, w); });
            CHECK(rep.max_rel_err < tol);
        }
    }
    SUBCASE("adv_g toy graph vs finite differences") {
        for (int it = 0; it < 10; ++it) {
            auto gparam = Tensor<double>::param({2}, random_values(rng, 2, -1, 1));
            auto dw = Tensor<double>::from({2, 2}, random_values(rng, 4, -1, 1));
            std::vector<Tensor<double>> inputs{gparam};
            auto rep = fd_check(inputs, [&] {
                auto fake = sigmoid(dense(dw, tanh_op(gparam)));
                auto real = Tensor<double>::filled({2}, 0.5);
                return adversarial_losses(real, fake).second;
            });
            CHECK(rep.max_rel_err < tol);
        }
    }
    SUBCASE("total loss composition") {
        for (int it = 0; it < 5; ++it) {
            auto x = Tensor<double>::param({3}, random_values(rng, 3, -1, 1));
            std::vector<std::uint8_t> labels{1};
            std::vector<double> w{1.0, 2.0, 0.5};
            std::vector<Tensor<double>> inputs{x};
            auto rep = fd_check(inputs, [&] {
                auto probs = softmax_channel(x);
                auto adv = bce(sigmoid(x), 1.0);
                auto seg = weighted_cce<double>(reshape(probs, {3, 1, 1}), labels, w);
                auto target = Tensor<double>::from({3}, {0.0, 1.0, 0.0});
                auto cls = weighted_l1<double>(probs, target, w);
                return total_generator_loss(adv, seg, cls);
            });
            CHECK(rep.max_rel_err < tol);
        }
    }
}
