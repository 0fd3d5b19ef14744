#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <vector>

#include "svgan/gradcheck.hpp"
#include "svgan/losses.hpp"
#include "svgan/models.hpp"
#include "svgan/rng.hpp"

using namespace svgan;

namespace {

template <typename T>
std::vector<Tensor<T>> random_slices(Rng& rng, std::size_t steps, std::size_t c, std::size_t h,
                                     std::size_t w) {
    std::vector<Tensor<T>> xs;
    for (std::size_t s = 0; s < steps; ++s) {
        std::vector<T> v(c * h * w);
        for (auto& x : v) x = static_cast<T>(rng.uniform(-1, 1));
        xs.push_back(Tensor<T>::from({c, h, w}, std::move(v)));
    }
    return xs;
}

GeneratorConfig small_gen_config() {
    GeneratorConfig cfg;
    cfg.in_channels = 2;
    cfg.base_channels = 4;
    cfg.num_seg_classes = 4;
    cfg.num_diseases = 2;
    cfg.height = 32;
    cfg.width = 32;
    return cfg;
}

} // namespace

TEST_CASE("generator config validation") {
    GeneratorConfig cfg = small_gen_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.height = 33;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = small_gen_config();
    cfg.width = 24;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = small_gen_config();
    cfg.pool_depth = 3;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = small_gen_config();
    cfg.num_diseases = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = small_gen_config();
    cfg.dropout_p = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("bottleneck spatial extent follows pool depth") {
    GeneratorConfig cfg = small_gen_config();
    CHECK(cfg.bottleneck_height() == 2);
    CHECK(cfg.bottleneck_width() == 2);
    CHECK(cfg.bottleneck_channels() == 32);
    CHECK(cfg.flattened_bottleneck() == 128);
    CHECK(cfg.hidden() == 64);
    CHECK_FALSE(cfg.needs_projection());
    cfg.lstm_hidden = 24;
    CHECK(cfg.needs_projection());
}

TEST_CASE("same config and seed build bit-identical generators") {
    GeneratorConfig cfg = small_gen_config();
    Generator<float> a(cfg, 7), b(cfg, 7), c(cfg, 8);
    REQUIRE(a.params().items().size() == b.params().items().size());
    bool any_diff_seed = false;
    for (std::size_t i = 0; i < a.params().items().size(); ++i) {
        const auto& pa = a.params().items()[i];
        const auto& pb = b.params().items()[i];
        CHECK(pa.name == pb.name);
        REQUIRE(pa.tensor.size() == pb.tensor.size());
        for (std::size_t k = 0; k < pa.tensor.size(); ++k) {
            CHECK(pa.tensor.data()[k] == pb.tensor.data()[k]);
        }
        const auto& pc = c.params().items()[i];
        for (std::size_t k = 0; k < pa.tensor.size(); ++k) {
            any_diff_seed |= pa.tensor.data()[k] != pc.tensor.data()[k];
        }
    }
    CHECK(any_diff_seed);
}

TEST_CASE("generator forward shapes and normalization") {
    GeneratorConfig cfg = small_gen_config();
    Generator<double> g(cfg, 1);
    CHECK(g.conv_layer_count() == 10);
    Rng rng(2);
    auto xs = random_slices<double>(rng, 8, 2, 32, 32);
    auto out = g.forward(xs, Mode::kInfer);
    REQUIRE(out.seg_probs.size() == 8);
    for (const auto& m : out.seg_probs) {
        CHECK(m.shape() == Shape{4, 32, 32});
        const std::size_t pix = 32 * 32;
        for (std::size_t p = 0; p < pix; p += 97) {
            double z = 0;
            for (std::size_t k = 0; k < 4; ++k) z += m.data()[k * pix + p];
            CHECK(z == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    CHECK(out.disease_probs.shape() == Shape{2});
    double z = 0;
    for (double v : out.disease_probs.data()) {
        CHECK(v > 0.0);
        z += v;
    }
    CHECK(z == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("inference is deterministic, training requires an rng") {
    GeneratorConfig cfg = small_gen_config();
    Generator<double> g(cfg, 3);
    Rng rng(4);
    auto xs = random_slices<double>(rng, 3, 2, 32, 32);
    auto a = g.forward(xs, Mode::kInfer);
    auto b = g.forward(xs, Mode::kInfer);
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t i = 0; i < a.seg_probs[s].size(); ++i) {
            CHECK(a.seg_probs[s].data()[i] == b.seg_probs[s].data()[i]);
        }
    }
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(a.disease_probs.data()[i] == b.disease_probs.data()[i]);
    }
    CHECK_THROWS_AS(g.forward(xs, Mode::kTrain), ValidationError);
    Rng drop(5);
    CHECK_NOTHROW(g.forward(xs, Mode::kTrain, &drop));
}

TEST_CASE("generator rejects channel mismatch naming the slice") {
    GeneratorConfig cfg = small_gen_config();
    Generator<double> g(cfg, 3);
    Rng rng(6);
    auto xs = random_slices<double>(rng, 2, 3, 32, 32);
    CHECK_THROWS_WITH_AS(g.forward(xs, Mode::kInfer), doctest::Contains("channels"), ShapeError);
    CHECK_THROWS_AS(g.forward({}, Mode::kInfer), ShapeError);
    auto bad = random_slices<double>(rng, 2, 2, 32, 16);
    CHECK_THROWS_AS(g.forward(bad, Mode::kInfer), ShapeError);
}

TEST_CASE("channel bookkeeping holds across a config sweep") {
    Rng rng(8);
    for (std::size_t base : {4u, 8u, 16u}) {
        for (std::size_t hw : {16u, 32u, 64u}) {
            GeneratorConfig cfg;
            cfg.in_channels = 2;
            cfg.base_channels = base;
            cfg.num_seg_classes = 3;
            cfg.num_diseases = 2;
            cfg.height = hw;
            cfg.width = hw;
            Generator<float> g(cfg, 11);
            auto xs = random_slices<float>(rng, 2, 2, hw, hw);
            auto out = g.forward(xs, Mode::kInfer);
            CHECK(out.seg_probs[0].shape() == Shape{3, hw, hw});
            CHECK(out.disease_probs.shape() == Shape{2});
        }
    }
}

TEST_CASE("reversing the slice sequence keeps disease output length and normalization") {
    GeneratorConfig cfg = small_gen_config();
    Generator<double> g(cfg, 13);
    Rng rng(14);
    auto xs = random_slices<double>(rng, 5, 2, 32, 32);
    auto rev = xs;
    std::reverse(rev.begin(), rev.end());
    auto a = g.forward(xs, Mode::kInfer);
    auto b = g.forward(rev, Mode::kInfer);
    CHECK(b.disease_probs.shape() == a.disease_probs.shape());
    double z = 0;
    for (double v : b.disease_probs.data()) z += v;
    CHECK(z == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("discriminator forward produces full-resolution scores in (0,1)") {
    DiscriminatorConfig cfg;
    cfg.in_channels = 2;
    cfg.num_seg_classes = 4;
    cfg.base_channels = 4;
    cfg.height = 32;
    cfg.width = 32;
    Discriminator<double> d(cfg, 21);
    CHECK(d.conv_layer_count() == 5);
    CHECK(d.score_map_shape() == Shape{1, 32, 32});
    Rng rng(22);
    auto xs = random_slices<double>(rng, 4, 2, 32, 32);
    auto ys = random_slices<double>(rng, 4, 4, 32, 32);
    auto scores = d.forward(xs, ys);
    REQUIRE(scores.size() == 4);
    for (const auto& s : scores) {
        CHECK(s.shape() == Shape{1, 32, 32});
        for (double v : s.data()) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }

    // Real (one-hot) and fake (soft) segmentation inputs share the path.
    std::vector<std::uint8_t> labels(32 * 32, 1);
    auto onehot = onehot_labels<double>(labels, 4, 32, 32);
    auto real_scores = d.forward({xs[0]}, {onehot});
    CHECK(real_scores[0].shape() == scores[0].shape());
}

TEST_CASE("discriminator rejects misaligned inputs") {
    DiscriminatorConfig cfg;
    cfg.in_channels = 2;
    cfg.num_seg_classes = 3;
    cfg.base_channels = 4;
    cfg.height = 32;
    cfg.width = 32;
    Discriminator<double> d(cfg, 23);
    Rng rng(24);
    auto xs = random_slices<double>(rng, 2, 2, 32, 32);
    auto ys = random_slices<double>(rng, 3, 3, 32, 32);
    CHECK_THROWS_AS(d.forward(xs, ys), ShapeError);
    auto wrong = random_slices<double>(rng, 2, 4, 32, 32);
    CHECK_THROWS_AS(d.forward(xs, wrong), ShapeError);
    CHECK_THROWS_AS(d.forward({}, {}), ShapeError);
}

TEST_CASE("one-hot encoding") {
    std::vector<std::uint8_t> labels{0, 2, 1, 2};
    auto t = onehot_labels<double>(labels, 3, 2, 2);
    CHECK(t.shape() == Shape{3, 2, 2});
    CHECK(t.data()[0] == 1.0);  // class 0, pixel 0
    CHECK(t.data()[4 + 2] == 1.0); // class 1, pixel 2
    CHECK(t.data()[8 + 1] == 1.0); // class 2, pixel 1
    CHECK(t.data()[8 + 3] == 1.0); // class 2, pixel 3
    double total = 0;
    for (double v : t.data()) total += v;
    CHECK(total == 4.0);
    std::vector<std::uint8_t> bad{0, 3, 0, 0};
    CHECK_THROWS_AS(onehot_labels<double>(bad, 3, 2, 2), ValidationError);
    CHECK_THROWS_AS(onehot_labels<double>(labels, 3, 2, 3), ShapeError);
}

TEST_CASE("every parameter receives gradient from the losses at init") {
    GeneratorConfig gcfg;
    gcfg.in_channels = 2;
    gcfg.base_channels = 4;
    gcfg.num_seg_classes = 3;
    gcfg.num_diseases = 2;
    gcfg.height = 16;
    gcfg.width = 16;
    DiscriminatorConfig dcfg;
    dcfg.in_channels = 2;
    dcfg.num_seg_classes = 3;
    dcfg.base_channels = 4;
    dcfg.height = 16;
    dcfg.width = 16;
    Generator<double> g(gcfg, 31);
    Discriminator<double> d(dcfg, 32);
    Rng rng(33);
    auto xs = random_slices<double>(rng, 3, 2, 16, 16);

    std::vector<std::uint8_t> labels(16 * 16);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.uniform_int(3));
    std::vector<double> wseg{1.0, 1.2, 0.8};
    std::vector<double> wcls{1.0, 1.0};
    auto target = Tensor<double>::from({2}, {1.0, 0.0});

    Rng drop(34);
    auto out = g.forward(xs, Mode::kTrain, &drop);
    auto fake_scores = d.forward(xs, out.seg_probs);
    auto adv_g = bce(concat_channel(fake_scores), 1.0);
    std::vector<Tensor<double>> ces;
    for (const auto& m : out.seg_probs) ces.push_back(weighted_cce<double>(m, labels, wseg));
    auto seg = mean(concat_channel(ces));
    auto cls = weighted_l1<double>(out.disease_probs, target, wcls);
    g.params().zero_grad();
    backward(total_generator_loss(adv_g, seg, cls));
    for (const auto& p : g.params().items()) {
        bool nonzero = false;
        for (double v : p.tensor.grad()) nonzero |= v != 0.0;
        INFO("generator parameter ", p.name);
        CHECK(nonzero);
    }

    std::vector<Tensor<double>> real_maps;
    std::vector<Tensor<double>> fake_detached;
    for (std::size_t s = 0; s < xs.size(); ++s) {
        real_maps.push_back(onehot_labels<double>(labels, 3, 16, 16));
        fake_detached.push_back(out.seg_probs[s].detach());
    }
    auto real_scores = d.forward(xs, real_maps);
    auto fake_scores2 = d.forward(xs, fake_detached);
    auto [adv_d, adv_g2] = adversarial_losses(concat_channel(real_scores), concat_channel(fake_scores2));
    d.params().zero_grad();
    backward(adv_d);
    for (const auto& p : d.params().items()) {
        bool nonzero = false;
        for (double v : p.tensor.grad()) nonzero |= v != 0.0;
        INFO("discriminator parameter ", p.name);
        CHECK(nonzero);
    }
}

TEST_CASE("sampled model-level gradients match finite differences") {
    GeneratorConfig gcfg;
    gcfg.in_channels = 1;
    gcfg.base_channels = 2;
    gcfg.num_seg_classes = 2;
    gcfg.num_diseases = 2;
    gcfg.dropout_p = 0.0;
    gcfg.height = 16;
    gcfg.width = 16;
    Generator<double> g(gcfg, 41);
    Rng rng(42);
    auto xs = random_slices<double>(rng, 2, 1, 16, 16);
    std::vector<std::uint8_t> labels(16 * 16);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.uniform_int(2));
    std::vector<double> wseg{1.0, 1.5};
    std::vector<double> wcls{1.0, 1.0};
    auto target = Tensor<double>::from({2}, {0.0, 1.0});

    std::vector<Tensor<double>> inputs;
    for (const auto& p : g.params().items()) inputs.push_back(p.tensor);
    Rng pick(43);
    auto rep = fd_check_sampled(inputs, [&] {
        auto out = g.forward(xs, Mode::kInfer);
        std::vector<Tensor<double>> ces;
        for (const auto& m : out.seg_probs) ces.push_back(weighted_cce<double>(m, labels, wseg));
        auto seg = mean(concat_channel(ces));
        auto cls = weighted_l1<double>(out.disease_probs, target, wcls);
        return total_generator_loss(bce(out.disease_probs, 0.5), seg, cls);
    }, pick, 24);
    CHECK(rep.checks == 24);
    CHECK(rep.max_rel_err < 1e-4);
}
