#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "svgan/errors.hpp"
#include "svgan/run_config.hpp"

using namespace svgan;

namespace {

std::filesystem::path temp_path(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "svgan_cfg_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("empty config yields defaults") {
    RunConfig cfg = parse_run_config("{}");
    CHECK(cfg.phantom.num_patients == 100);
    CHECK(cfg.generator.base_channels == 8);
    CHECK(cfg.discriminator.base_channels == 8);
    CHECK(cfg.train.learning_rate == doctest::Approx(1e-4));
    CHECK(cfg.train.weighting_enabled);
    CHECK(cfg.train.objective == GanObjective::kNonSaturating);
    CHECK(cfg.augment_enabled);
    CHECK(cfg.data_path.empty());
    CHECK(cfg.out_path.empty());
}

TEST_CASE("fields parse from every section") {
    const char* text = R"({
      "phantom": {"num_patients": 12, "slices": 4, "height": 16, "width": 16,
                  "num_modalities": 1, "num_seg_classes": 4, "num_diseases": 3,
                  "lesion_fraction_target": 0.05, "seed": 9},
      "generator": {"base_channels": 4, "lstm_hidden": 32, "dropout_p": 0.25},
      "discriminator": {"base_channels": 2, "lstm_hidden": 16},
      "train": {"learning_rate": 0.001, "max_epochs": 7, "d_steps_per_g": 2,
                "weighting_enabled": false, "objective": "minimax",
                "val_fraction": 0.25, "seed": 3},
      "augmentation": {"enabled": false, "gaussian_noise_sigma": 0.01},
      "paths": {"data": "d.dir", "out": "o.dir"}
    })";
    RunConfig cfg = parse_run_config(text);
    CHECK(cfg.phantom.num_patients == 12);
    CHECK(cfg.phantom.num_seg_classes == 4);
    CHECK(cfg.phantom.lesion_fraction_target == doctest::Approx(0.05));
    CHECK(cfg.phantom.seed == 9);
    CHECK(cfg.generator.base_channels == 4);
    CHECK(cfg.generator.lstm_hidden == 32);
    CHECK(cfg.generator.dropout_p == doctest::Approx(0.25));
    CHECK(cfg.discriminator.base_channels == 2);
    CHECK(cfg.discriminator.lstm_hidden == 16);
    CHECK(cfg.train.learning_rate == doctest::Approx(0.001));
    CHECK(cfg.train.max_epochs == 7);
    CHECK(cfg.train.d_steps_per_g == 2);
    CHECK_FALSE(cfg.train.weighting_enabled);
    CHECK(cfg.train.objective == GanObjective::kMinimax);
    CHECK(cfg.train.val_fraction == doctest::Approx(0.25));
    CHECK(cfg.train.seed == 3);
    CHECK_FALSE(cfg.augment_enabled);
    CHECK(cfg.augmentation.gaussian_noise_sigma == doctest::Approx(0.01));
    CHECK(cfg.data_path == "d.dir");
    CHECK(cfg.out_path == "o.dir");
}

TEST_CASE("unknown keys are rejected with their section") {
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"phanton": {}})"),
                         doctest::Contains("unknown key 'phanton'"), ValidationError);
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"train": {"learning_rte": 0.1}})"),
                         doctest::Contains("'learning_rte' in train"), ValidationError);
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"augmentation": {"sigma": 0.1}})"),
                         doctest::Contains("'sigma' in augmentation"), ValidationError);
}

TEST_CASE("type and syntax errors name the offender") {
    CHECK_THROWS_WITH_AS(parse_run_config("not json"), doctest::Contains("not valid JSON"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse_run_config("[1,2]"), doctest::Contains("top level"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"train": {"max_epochs": "ten"}})"),
                         doctest::Contains("train.max_epochs"), ValidationError);
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"train": {"objective": "wasserstein"}})"),
                         doctest::Contains("'non-saturating' or 'minimax'"), ValidationError);
}

TEST_CASE("top-level seed overrides both stage seeds") {
    RunConfig cfg = parse_run_config(R"({
      "phantom": {"seed": 1}, "train": {"seed": 2}, "seed": 77
    })");
    CHECK(cfg.phantom.seed == 77);
    CHECK(cfg.train.seed == 77);

    RunConfig cfg2 = parse_run_config("{}");
    apply_seed(cfg2, 5);
    CHECK(cfg2.phantom.seed == 5);
    CHECK(cfg2.train.seed == 5);
}

TEST_CASE("hash is stable under round trip and sensitive to changes") {
    RunConfig a = parse_run_config(R"({"train": {"learning_rate": 0.0005}})");
    RunConfig b = parse_run_config(run_config_json(a));
    CHECK(run_config_hash(a) == run_config_hash(b));

    RunConfig c = a;
    c.train.learning_rate = 0.0006;
    CHECK(run_config_hash(a) != run_config_hash(c));

    RunConfig d = a;
    d.augment_enabled = false;
    CHECK(run_config_hash(a) != run_config_hash(d));
}

TEST_CASE("model configs derive shape from the dataset") {
    Dataset ds;
    ds.dims = {3, 2, 16, 16};
    ds.num_seg_classes = 4;
    ds.num_diseases = 3;

    RunConfig cfg = parse_run_config(R"({
      "generator": {"base_channels": 2, "dropout_p": 0.1},
      "discriminator": {"base_channels": 2}
    })");
    GeneratorConfig g = make_generator_config(cfg, ds);
    CHECK(g.in_channels == 3);
    CHECK(g.num_seg_classes == 4);
    CHECK(g.num_diseases == 3);
    CHECK(g.height == 16);
    CHECK(g.width == 16);
    CHECK(g.base_channels == 2);
    CHECK(g.dropout_p == doctest::Approx(0.1));

    DiscriminatorConfig d = make_discriminator_config(cfg, ds);
    CHECK(d.in_channels == 3);
    CHECK(d.num_seg_classes == 4);
    CHECK(d.height == 16);
    CHECK(d.base_channels == 2);

    ds.dims.height = 20;
    CHECK_THROWS_AS(make_generator_config(cfg, ds), ValidationError);
}

TEST_CASE("descriptor round trips model configs") {
    GeneratorConfig g;
    g.in_channels = 1;
    g.base_channels = 2;
    g.num_seg_classes = 5;
    g.num_diseases = 4;
    g.lstm_hidden = 8;
    g.dropout_p = 0.125;
    g.height = 16;
    g.width = 48;
    DiscriminatorConfig d;
    d.in_channels = 1;
    d.num_seg_classes = 5;
    d.base_channels = 2;
    d.lstm_hidden = 4;
    d.height = 16;
    d.width = 48;

    std::string text = make_descriptor(g, d, 0xabcdef0102030405ull);
    DescriptorInfo info = parse_descriptor(text);
    CHECK(info.config_hash == 0xabcdef0102030405ull);
    CHECK(info.generator.in_channels == 1);
    CHECK(info.generator.base_channels == 2);
    CHECK(info.generator.pool_depth == 4);
    CHECK(info.generator.num_seg_classes == 5);
    CHECK(info.generator.num_diseases == 4);
    CHECK(info.generator.lstm_hidden == 8);
    CHECK(info.generator.dropout_p == doctest::Approx(0.125));
    CHECK(info.generator.height == 16);
    CHECK(info.generator.width == 48);
    CHECK(info.discriminator.in_channels == 1);
    CHECK(info.discriminator.num_seg_classes == 5);
    CHECK(info.discriminator.base_channels == 2);
    CHECK(info.discriminator.lstm_hidden == 4);
    CHECK(info.discriminator.width == 48);

    CHECK_THROWS_AS(parse_descriptor("junk"), IoError);
    CHECK_THROWS_WITH_AS(parse_descriptor("{}"), doctest::Contains("unknown kind"), IoError);
    CHECK_THROWS_WITH_AS(parse_descriptor(R"({"kind": "svgan-train"})"),
                         doctest::Contains("incomplete"), IoError);
}

TEST_CASE("configs load from disk") {
    auto path = temp_path("run.json");
    {
        std::ofstream out(path);
        out << R"({"train": {"max_epochs": 3}})";
    }
    RunConfig cfg = load_run_config(path);
    CHECK(cfg.train.max_epochs == 3);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_run_config(temp_path("absent.json")), IoError);
}
