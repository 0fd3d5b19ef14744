#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "svgan/class_weights.hpp"
#include "svgan/data.hpp"
#include "svgan/errors.hpp"
#include "svgan/gradcheck_suite.hpp"
#include "svgan/metrics.hpp"
#include "svgan/render.hpp"
#include "svgan/run_config.hpp"
#include "svgan/trainer.hpp"

namespace fs = std::filesystem;
using namespace svgan;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

void apply_env_seed(RunConfig& config) {
    const char* env = std::getenv("SVGAN_SEED");
    if (!env || !*env) return;
    char* end = nullptr;
    const unsigned long long seed = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
        throw ValidationError(std::string("SVGAN_SEED must be an unsigned integer, got '") + env +
                              "'");
    }
    apply_seed(config, seed);
}

ClassStats count_classes(const Dataset& dataset) {
    ClassStats stats;
    stats.pixel_counts.assign(dataset.num_seg_classes, 0);
    for (const auto& rec : dataset.patients) {
        for (std::uint8_t label : rec.labels) ++stats.pixel_counts[label];
    }
    return stats;
}

std::string class_name(const Dataset& dataset, std::size_t c) {
    if (c < dataset.class_names.size()) return dataset.class_names[c];
    return "class" + std::to_string(c);
}

int cmd_synth(const fs::path& config_path, const fs::path& out_dir) {
    RunConfig config = load_run_config(config_path);
    apply_env_seed(config);
    config.phantom.validate();

    const Dataset dataset = generate_phantoms(config.phantom);
    save_dataset(dataset, out_dir);

    const ClassStats stats = count_classes(dataset);
    const auto total = static_cast<double>(stats.total());
    std::printf("class,name,pixels,fraction\n");
    for (std::size_t c = 0; c < stats.num_classes(); ++c) {
        std::printf("%zu,%s,%llu,%.5f\n", c, class_name(dataset, c).c_str(),
                    static_cast<unsigned long long>(stats.pixel_counts[c]),
                    static_cast<double>(stats.pixel_counts[c]) / total);
    }
    std::fprintf(stderr, "wrote %zu patients to %s\n", dataset.patients.size(),
                 out_dir.string().c_str());
    return 0;
}

int cmd_weights(const fs::path& data_dir) {
    const Dataset dataset = load_dataset(data_dir);
    const ClassStats stats = count_classes(dataset);
    const std::vector<double> weights = compute_weights(stats);
    std::printf("class,freq,weight\n");
    for (std::size_t c = 0; c < weights.size(); ++c) {
        std::printf("%zu,%llu,%.5f\n", c, static_cast<unsigned long long>(stats.pixel_counts[c]),
                    weights[c]);
    }
    return 0;
}

int cmd_train(const fs::path& config_path, fs::path data_dir, fs::path out_dir) {
    RunConfig config = load_run_config(config_path);
    apply_env_seed(config);
    if (data_dir.empty()) data_dir = config.data_path;
    if (out_dir.empty()) out_dir = config.out_path;
    if (data_dir.empty()) throw ValidationError("train: no dataset directory (--data or paths.data)");
    if (out_dir.empty()) throw ValidationError("train: no output directory (--out or paths.out)");
    config.train.validate();
    config.augmentation.validate();

    const Dataset dataset = load_dataset(data_dir);
    const GeneratorConfig gen_cfg = make_generator_config(config, dataset);
    const DiscriminatorConfig disc_cfg = make_discriminator_config(config, dataset);
    const std::uint64_t hash = run_config_hash(config);

    fs::create_directories(out_dir);
    {
        std::ofstream cfg_out(out_dir / "config.json");
        if (!cfg_out) throw IoError("cannot write " + (out_dir / "config.json").string());
        cfg_out << run_config_json(config) << "\n";
    }

    TrainOptions options;
    options.augmentation = config.augment_enabled ? &config.augmentation : nullptr;
    options.checkpoint_dir = out_dir;
    options.descriptor = make_descriptor(gen_cfg, disc_cfg, hash);
    options.config_hash = hash;

    TrainResult result = train(dataset, gen_cfg, disc_cfg, config.train, options);

    const fs::path log_path = out_dir / "train_log.csv";
    std::ofstream log_out(log_path);
    if (!log_out) throw IoError("cannot write " + log_path.string());
    write_train_log_csv(result.log, log_out);

    std::printf("steps,%zu\n", result.log.steps.size());
    std::printf("wall_seconds,%.1f\n", result.log.wall_seconds);
    std::printf("best_epoch,%zu\n", result.log.best_epoch);
    std::printf("best_val_dice,%.4f\n", result.log.best_val_dice);
    std::printf("config_hash,%llu\n", static_cast<unsigned long long>(hash));
    return 0;
}

int cmd_eval(const fs::path& checkpoint_path, const fs::path& data_dir, const fs::path& out_dir,
             bool oracle_stub) {
    if (!oracle_stub && checkpoint_path.empty()) {
        throw ValidationError("eval: --checkpoint is required unless --oracle-stub is set");
    }
    const Dataset dataset = load_dataset(data_dir);
    if (dataset.patients.empty()) throw ValidationError("eval: dataset has no patients");

    Generator<float> generator(GeneratorConfig{}, 0);
    bool have_model = false;
    if (!oracle_stub) {
        const Checkpoint ckpt = load_checkpoint(checkpoint_path);
        const DescriptorInfo info = parse_descriptor(ckpt.descriptor);
        generator = Generator<float>(info.generator, 0);
        Discriminator<float> discriminator(info.discriminator, 0);
        load_train_checkpoint(ckpt, generator, discriminator);
        have_model = true;
    }

    fs::create_directories(out_dir);
    const auto specs = identity_regions(dataset.num_seg_classes, dataset.class_names);
    const auto& dims = dataset.dims;
    std::vector<PatientEval> evals;
    std::vector<std::size_t> disease_pred, disease_true;
    const std::size_t plane = dims.height * dims.width;
    const std::size_t mid = dims.slices / 2;

    for (const auto& rec : dataset.patients) {
        PatientPrediction pred;
        if (have_model) {
            PatientRecord normalized = rec;
            zscore_patient(normalized, dims.voxels_per_modality());
            pred = predict_patient(generator, normalized, dims);
        } else {
            pred.labels = rec.labels;
            pred.disease = rec.disease;
        }

        const LabelVolumeView pred_view{pred.labels, dims.slices, dims.height, dims.width};
        const LabelVolumeView gt_view{rec.labels, dims.slices, dims.height, dims.width};
        evals.push_back({rec.id, evaluate_patient(pred_view, gt_view, specs,
                                                  dataset.num_seg_classes)});
        disease_pred.push_back(pred.disease);
        disease_true.push_back(rec.disease);

        const std::span<const float> intensity{rec.volume.data() + mid * plane, plane};
        const std::span<const std::uint8_t> gt_slice{rec.labels.data() + mid * plane, plane};
        const std::span<const std::uint8_t> pred_slice{pred.labels.data() + mid * plane, plane};
        const RgbImage overlay =
            overlay_slice(intensity, gt_slice, pred_slice, dims.height, dims.width);
        write_ppm(overlay, out_dir / ("overlay_" + rec.id + ".ppm"));
    }

    const MetricsReport report = build_report(specs, std::move(evals), disease_pred, disease_true);
    {
        std::ofstream csv(out_dir / "report.csv");
        if (!csv) throw IoError("cannot write " + (out_dir / "report.csv").string());
        write_report_csv(report, csv);
    }
    const std::string summary = report_summary_json(report);
    {
        std::ofstream js(out_dir / "report.json");
        if (!js) throw IoError("cannot write " + (out_dir / "report.json").string());
        js << summary << "\n";
    }
    std::printf("%s\n", summary.c_str());
    return 0;
}

int cmd_report(const fs::path& log_path, const fs::path& out_dir) {
    std::ifstream in(log_path);
    if (!in) throw IoError("cannot open log '" + log_path.string() + "'");
    TrainLog log;
    log.steps = read_train_log_csv(in, log_path.string());

    const auto written = write_loss_curves(log, out_dir);
    for (const auto& path : written) {
        std::fprintf(stderr, "wrote %s\n", path.string().c_str());
    }

    const std::pair<const char*, double StepLoss::*> terms[] = {
        {"adv_d", &StepLoss::adv_d}, {"adv_g", &StepLoss::adv_g}, {"seg_ce", &StepLoss::seg_ce},
        {"cls_l1", &StepLoss::cls_l1}, {"total", &StepLoss::total},
    };
    const std::size_t n = log.steps.size();
    const std::size_t tail = std::min<std::size_t>(n, 50);
    std::printf("term,first,last,min,mean_last_%zu\n", tail);
    for (const auto& [name, member] : terms) {
        double lo = log.steps[0].*member, tail_sum = 0;
        for (const auto& s : log.steps) lo = std::min(lo, s.*member);
        for (std::size_t i = n - tail; i < n; ++i) tail_sum += log.steps[i].*member;
        std::printf("%s,%.6g,%.6g,%.6g,%.6g\n", name, log.steps[0].*member,
                    log.steps[n - 1].*member, lo, tail_sum / static_cast<double>(tail));
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t instances) {
    const auto results = run_gradient_suite(seed, instances);
    bool ok = true;
    for (const auto& r : results) {
        const bool pass = r.max_rel_err < 1e-4;
        ok = ok && pass;
        std::printf("%-22s %zu instances  max_rel_err %.3e  %s\n", r.op.c_str(), r.instances,
                    r.max_rel_err, pass ? "ok" : "FAIL");
    }
    if (!ok) {
        std::fprintf(stderr, "error: gradient check failed\n");
        return kExitRuntime;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"svgan: conditional GAN segmentation pipeline on phantom volumes"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, checkpoint_path, log_path;
    bool oracle_stub = false;
    std::uint64_t gc_seed = 0;
    std::size_t gc_instances = 50;

    auto* synth = app.add_subcommand("synth", "Generate a phantom dataset");
    synth->add_option("--config", config_path, "Run config JSON")->required();
    synth->add_option("--out", out_dir, "Output dataset directory")->required();

    auto* weights = app.add_subcommand("weights", "Print per-class loss weights");
    weights->add_option("--data", data_dir, "Dataset directory")->required();

    auto* train = app.add_subcommand("train", "Train the GAN");
    train->add_option("--config", config_path, "Run config JSON")->required();
    train->add_option("--data", data_dir, "Dataset directory");
    train->add_option("--out", out_dir, "Output directory for checkpoints and logs");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file");
    eval->add_option("--data", data_dir, "Dataset directory")->required();
    eval->add_option("--out", out_dir, "Output directory for reports and overlays")->required();
    eval->add_flag("--oracle-stub", oracle_stub, "Score ground truth against itself");

    auto* report = app.add_subcommand("report", "Render loss curves from a training log");
    report->add_option("--log", log_path, "train_log.csv path")->required();
    report->add_option("--out", out_dir, "Output directory for SVGs")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
    gradcheck->add_option("--seed", gc_seed, "Suite seed");
    gradcheck->add_option("--instances", gc_instances, "Random instances per op");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (synth->parsed()) return cmd_synth(config_path, out_dir);
        if (weights->parsed()) return cmd_weights(data_dir);
        if (train->parsed()) return cmd_train(config_path, data_dir, out_dir);
        if (eval->parsed()) return cmd_eval(checkpoint_path, data_dir, out_dir, oracle_stub);
        if (report->parsed()) return cmd_report(log_path, out_dir);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_instances);
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}
