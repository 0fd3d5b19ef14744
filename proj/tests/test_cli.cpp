#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "svgan_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

RunResult run_cli(const std::string& args, const std::string& env_prefix = {}) {
    static int counter = 0;
    const fs::path out = work_dir() / ("stdout" + std::to_string(counter) + ".txt");
    const fs::path err = work_dir() / ("stderr" + std::to_string(counter) + ".txt");
    ++counter;
    const std::string cmd = env_prefix + SVGAN_CLI_PATH " " + args + " >" + out.string() + " 2>" +
                            err.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
}

fs::path write_config(const char* name, const std::string& body) {
    const fs::path path = work_dir() / name;
    std::ofstream out(path);
    out << body;
    return path;
}

fs::path smoke_config() {
    static const fs::path path = write_config("smoke.json", R"({
      "phantom": {"num_patients": 10, "slices": 2, "height": 16, "width": 16,
                  "num_modalities": 1, "seed": 5},
      "generator": {"base_channels": 2},
      "discriminator": {"base_channels": 2},
      "train": {"max_epochs": 2, "val_fraction": 0.2, "seed": 11},
      "augmentation": {"enabled": true}
    })");
    return path;
}

fs::path smoke_dataset() {
    static const fs::path dir = [] {
        const fs::path d = work_dir() / "ds";
        const auto r = run_cli("synth --config " + smoke_config().string() + " --out " + d.string());
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

fs::path smoke_train_dir() {
    static const fs::path dir = [] {
        const fs::path d = work_dir() / "run";
        const auto r = run_cli("train --config " + smoke_config().string() + " --data " +
                               smoke_dataset().string() + " --out " + d.string());
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("synth writes a dataset and prints the class table") {
    const fs::path ds = smoke_dataset();
    CHECK(fs::exists(ds / "meta.json"));
    CHECK(fs::exists(ds / "p0000.vol"));
    CHECK(fs::exists(ds / "p0000.lbl"));

    const auto r = run_cli("synth --config " + smoke_config().string() + " --out " +
                           (work_dir() / "ds_table").string());
    CHECK(r.code == 0);
    CHECK(r.out.find("class,name,pixels,fraction") != std::string::npos);
    CHECK(r.out.find("lesion") != std::string::npos);
}

TEST_CASE("synth is byte-identical for a repeated seed") {
    const fs::path a = work_dir() / "ds_rep_a";
    const fs::path b = work_dir() / "ds_rep_b";
    REQUIRE(run_cli("synth --config " + smoke_config().string() + " --out " + a.string()).code == 0);
    REQUIRE(run_cli("synth --config " + smoke_config().string() + " --out " + b.string()).code == 0);
    for (const auto& entry : fs::directory_iterator(a)) {
        const auto name = entry.path().filename();
        CAPTURE(name.string());
        CHECK(read_file(a / name) == read_file(b / name));
    }
}

TEST_CASE("SVGAN_SEED overrides the config seed") {
    const fs::path a = work_dir() / "ds_env";
    const fs::path b = work_dir() / "ds_cfg99";
    REQUIRE(run_cli("synth --config " + smoke_config().string() + " --out " + a.string(),
                    "SVGAN_SEED=99 ")
                .code == 0);
    const fs::path cfg99 = write_config("seed99.json", R"({
      "phantom": {"num_patients": 10, "slices": 2, "height": 16, "width": 16,
                  "num_modalities": 1, "seed": 99}
    })");
    REQUIRE(run_cli("synth --config " + cfg99.string() + " --out " + b.string()).code == 0);
    CHECK(read_file(a / "p0000.vol") == read_file(b / "p0000.vol"));
    CHECK(read_file(a / "p0000.vol") != read_file(smoke_dataset() / "p0000.vol"));

    const auto bad = run_cli("synth --config " + smoke_config().string() + " --out " +
                                 (work_dir() / "ds_badseed").string(),
                             "SVGAN_SEED=banana ");
    CHECK(bad.code == 2);
    CHECK(bad.err.find("SVGAN_SEED") != std::string::npos);
}

TEST_CASE("synth rejects an invalid lesion fraction with a schema message") {
    const fs::path cfg = write_config("bad_fraction.json", R"({
      "phantom": {"num_patients": 2, "lesion_fraction_target": 0.5}
    })");
    const auto r = run_cli("synth --config " + cfg.string() + " --out " +
                           (work_dir() / "ds_bad").string());
    CHECK(r.code == 2);
    CHECK(r.err.find("lesion_fraction") != std::string::npos);
}

TEST_CASE("weights prints the per-class CSV") {
    const auto r = run_cli("weights --data " + smoke_dataset().string());
    CHECK(r.code == 0);
    CHECK(r.out.find("class,freq,weight") != std::string::npos);
    CHECK(r.out.find("\n0,") != std::string::npos);

    CHECK(run_cli("weights --data /nonexistent/dir").code == 3);
}

TEST_CASE("train smoke run leaves checkpoints and a log") {
    const fs::path run = smoke_train_dir();
    CHECK(fs::exists(run / "best.ckpt"));
    CHECK(fs::exists(run / "final.ckpt"));
    CHECK(fs::exists(run / "config.json"));
    const std::string log = read_file(run / "train_log.csv");
    CHECK(log.rfind("step,adv_d,adv_g,seg_ce,cls_l1,total", 0) == 0);
    CHECK(log.find("\n1,") != std::string::npos);
}

TEST_CASE("eval writes reports and overlays from a checkpoint") {
    const fs::path out = work_dir() / "eval";
    const auto r = run_cli("eval --checkpoint " + (smoke_train_dir() / "final.ckpt").string() +
                           " --data " + smoke_dataset().string() + " --out " + out.string());
    CHECK(r.code == 0);
    CHECK(fs::exists(out / "report.csv"));
    CHECK(fs::exists(out / "report.json"));
    CHECK(fs::exists(out / "overlay_p0000.ppm"));
    CHECK(r.out.find("disease_accuracy") != std::string::npos);

    CHECK(run_cli("eval --checkpoint /nonexistent.ckpt --data " + smoke_dataset().string() +
                  " --out " + (work_dir() / "eval_bad").string())
              .code == 3);
    CHECK(run_cli("eval --data " + smoke_dataset().string() + " --out " +
                  (work_dir() / "eval_none").string())
              .code == 2);
}

TEST_CASE("oracle stub eval scores Dice 1.0 everywhere") {
    const fs::path out = work_dir() / "eval_oracle";
    const auto r = run_cli("eval --oracle-stub --data " + smoke_dataset().string() + " --out " +
                           out.string());
    CHECK(r.code == 0);
    CHECK(r.out.find("\"mean_dice\": 1.0") != std::string::npos);
    CHECK(r.out.find("\"disease_accuracy\": 1.0") != std::string::npos);

    const std::string csv = read_file(out / "report.csv");
    CHECK(csv.find(",lesion,1,") != std::string::npos);
}

TEST_CASE("report renders one SVG per loss term") {
    const fs::path out = work_dir() / "report";
    const auto r = run_cli("report --log " + (smoke_train_dir() / "train_log.csv").string() +
                           " --out " + out.string());
    CHECK(r.code == 0);
    for (const char* name : {"loss_adv_d.svg", "loss_adv_g.svg", "loss_seg_ce.svg",
                             "loss_cls_l1.svg", "loss_total.svg"}) {
        CAPTURE(name);
        CHECK(fs::exists(out / name));
    }
    CHECK(r.out.find("term,first,last,min") != std::string::npos);
}

TEST_CASE("report rejects malformed and empty logs with the offending line") {
    const fs::path bad = work_dir() / "bad_log.csv";
    {
        std::ofstream f(bad);
        f << "step,adv_d,adv_g,seg_ce,cls_l1,total\n0,1,1,1,1,5\n1,2,oops,2,2,8\n";
    }
    const auto r = run_cli("report --log " + bad.string() + " --out " +
                           (work_dir() / "rep_bad").string());
    CHECK(r.code != 0);
    CHECK(r.err.find("line 3") != std::string::npos);

    const fs::path empty = work_dir() / "empty_log.csv";
    {
        std::ofstream f(empty);
        f << "step,adv_d,adv_g,seg_ce,cls_l1,total\n";
    }
    CHECK(run_cli("report --log " + empty.string() + " --out " +
                  (work_dir() / "rep_empty").string())
              .code != 0);
    CHECK(run_cli("report --log /nonexistent.csv --out " + (work_dir() / "rep_none").string())
              .code == 3);
}

TEST_CASE("gradcheck reports every op under tolerance") {
    const auto r = run_cli("gradcheck --instances 2 --seed 4");
    CHECK(r.code == 0);
    CHECK(r.out.find("conv2d") != std::string::npos);
    CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("bad flags exit with the validation code") {
    CHECK(run_cli("synth").code == 2);
    CHECK(run_cli("unknown-subcommand").code == 2);
}
