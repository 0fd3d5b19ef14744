#include "svgan/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "svgan/class_weights.hpp"
#include "svgan/ops.hpp"

namespace svgan {
namespace {

constexpr std::uint64_t kGenSeedSalt = 0x67656e5f73656564ull;
constexpr std::uint64_t kDiscSeedSalt = 0x64697363735f6564ull;
constexpr const char* kLogHeader = "step,adv_d,adv_g,seg_ce,cls_l1,total";

void check_compatible(const Dataset& ds, const GeneratorConfig& gen_cfg,
                      const DiscriminatorConfig& disc_cfg) {
  ds.validate();
  if (ds.patients.empty()) throw ValidationError("train: dataset has no patients");
  if (gen_cfg.in_channels != ds.dims.modalities || disc_cfg.in_channels != ds.dims.modalities) {
    throw ValidationError("train: model in_channels do not match the dataset's " +
                          std::to_string(ds.dims.modalities) + " modalities");
  }
  if (gen_cfg.num_seg_classes != ds.num_seg_classes ||
      disc_cfg.num_seg_classes != ds.num_seg_classes) {
    throw ValidationError("train: model class counts do not match the dataset's " +
                          std::to_string(ds.num_seg_classes) + " segmentation classes");
  }
  if (gen_cfg.num_diseases != ds.num_diseases) {
    throw ValidationError("train: generator expects " + std::to_string(gen_cfg.num_diseases) +
                          " diseases, dataset has " + std::to_string(ds.num_diseases));
  }
  if (gen_cfg.height != ds.dims.height || gen_cfg.width != ds.dims.width ||
      disc_cfg.height != ds.dims.height || disc_cfg.width != ds.dims.width) {
    throw ValidationError("train: model extents do not match the dataset's " +
                          std::to_string(ds.dims.height) + "x" + std::to_string(ds.dims.width));
  }
}

std::vector<Tensor<float>> slice_tensors(const PatientRecord& rec, const VolumeDims& dims) {
  std::vector<Tensor<float>> slices;
  slices.reserve(dims.slices);
  const std::size_t hw = dims.height * dims.width;
  for (std::size_t s = 0; s < dims.slices; ++s) {
    std::vector<float> data(dims.modalities * hw);
    for (std::size_t c = 0; c < dims.modalities; ++c) {
      const float* src = rec.volume.data() + (c * dims.slices + s) * hw;
      std::copy(src, src + hw, data.data() + c * hw);
    }
    slices.push_back(Tensor<float>::from({dims.modalities, dims.height, dims.width},
                                         std::move(data)));
  }
  return slices;
}

std::vector<Tensor<float>> onehot_slices(const PatientRecord& rec, const VolumeDims& dims,
                                         std::size_t classes) {
  std::vector<Tensor<float>> ys;
  ys.reserve(dims.slices);
  const std::size_t hw = dims.height * dims.width;
  for (std::size_t s = 0; s < dims.slices; ++s) {
    ys.push_back(onehot_labels<float>(
        std::span<const std::uint8_t>(rec.labels).subspan(s * hw, hw), classes, dims.height,
        dims.width));
  }
  return ys;
}

void require_finite(double value, std::size_t step, const char* term) {
  if (!std::isfinite(value)) {
    throw NumericError("step " + std::to_string(step) + ": loss term '" + term +
                       "' is non-finite");
  }
}

Tensor<float> mean_over(std::vector<Tensor<float>> parts) {
  if (parts.size() == 1) return parts.front();
  return mean_of(parts);
}

MetricsReport evaluate_records(Generator<float>& generator,
                               const std::vector<PatientRecord>& normalized,
                               std::span<const std::size_t> indices, const VolumeDims& dims,
                               std::size_t num_classes, const std::vector<std::string>& names,
                               bool with_disease) {
  if (indices.empty()) throw ValidationError("evaluate: empty split");
  const auto specs = identity_regions(num_classes, names);

  std::vector<PatientEval> evals;
  std::vector<std::size_t> disease_pred;
  std::vector<std::size_t> disease_true;
  for (std::size_t idx : indices) {
    const PatientRecord& rec = normalized[idx];
    const PatientPrediction pred = predict_patient(generator, rec, dims);
    const LabelVolumeView pv{pred.labels, dims.slices, dims.height, dims.width};
    const LabelVolumeView gv{rec.labels, dims.slices, dims.height, dims.width};
    evals.push_back({rec.id, evaluate_patient(pv, gv, specs, num_classes)});
    disease_pred.push_back(pred.disease);
    disease_true.push_back(rec.disease);
  }
  if (with_disease) return build_report(specs, std::move(evals), disease_pred, disease_true);
  return build_report(specs, std::move(evals));
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("train config: learning_rate must be positive");
  if (max_epochs == 0 || max_epochs > 120) {
    throw ValidationError("train config: max_epochs must lie in [1, 120], got " +
                          std::to_string(max_epochs));
  }
  if (batch_size == 0) throw ValidationError("train config: batch_size must be positive");
  if (d_steps_per_g == 0) throw ValidationError("train config: d_steps_per_g must be >= 1");
  if (rho < 0.0 || rho >= 1.0) throw ValidationError("train config: rho must lie in [0, 1)");
  if (!(eps > 0.0)) throw ValidationError("train config: eps must be positive");
  if (coeff_adv < 0.0 || coeff_seg < 0.0 || coeff_cls < 0.0) {
    throw ValidationError("train config: loss coefficients must be non-negative");
  }
  if (eval_every == 0) throw ValidationError("train config: eval_every must be >= 1");
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw ValidationError("train config: val_fraction must lie in [0, 1)");
  }
  if (lr_step_decay) {
    if (lr_decay_every == 0) throw ValidationError("train config: lr_decay_every must be >= 1");
    if (!(lr_decay_factor > 0.0) || lr_decay_factor > 1.0) {
      throw ValidationError("train config: lr_decay_factor must lie in (0, 1]");
    }
  }
}

void write_train_log_csv(const TrainLog& log, std::ostream& out) {
  out << kLogHeader << '\n';
  char line[192];
  for (const StepLoss& s : log.steps) {
    std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g\n", s.step, s.adv_d, s.adv_g,
                  s.seg_ce, s.cls_l1, s.total);
    out << line;
  }
}

std::vector<StepLoss> read_train_log_csv(std::istream& in, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line) || line != kLogHeader) {
    throw IoError(origin + ": line 1: expected header '" + kLogHeader + "'");
  }
  std::vector<StepLoss> steps;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    StepLoss s;
    const int n = std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf", &s.step, &s.adv_d, &s.adv_g,
                              &s.seg_ce, &s.cls_l1, &s.total);
    if (n != 6) {
      throw IoError(origin + ": line " + std::to_string(line_no) + ": malformed row '" + line +
                    "'");
    }
    steps.push_back(s);
  }
  return steps;
}

PatientPrediction predict_patient(Generator<float>& generator, const PatientRecord& normalized,
                                  const VolumeDims& dims) {
  const auto slices = slice_tensors(normalized, dims);
  const GeneratorOutput<float> out = generator.forward(slices, Mode::kInfer);

  PatientPrediction pred;
  const std::size_t hw = dims.height * dims.width;
  const std::size_t classes = out.seg_probs.front().shape()[0];
  pred.labels.resize(dims.slices * hw);
  for (std::size_t s = 0; s < dims.slices; ++s) {
    const auto probs = out.seg_probs[s].data();
    for (std::size_t p = 0; p < hw; ++p) {
      std::size_t best = 0;
      float best_v = probs[p];
      for (std::size_t c = 1; c < classes; ++c) {
        const float v = probs[c * hw + p];
        if (v > best_v) {  // strict: ties resolve to the lowest class index
          best_v = v;
          best = c;
        }
      }
      pred.labels[s * hw + p] = static_cast<std::uint8_t>(best);
    }
  }

  const auto dp = out.disease_probs.data();
  std::size_t best = 0;
  for (std::size_t d = 1; d < dp.size(); ++d) {
    if (dp[d] > dp[best]) best = d;
  }
  pred.disease = best;
  return pred;
}

MetricsReport evaluate(Generator<float>& generator, const Dataset& dataset,
                       std::span<const std::size_t> indices) {
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(dataset.patients.size());
    std::iota(all.begin(), all.end(), 0);
    indices = all;
  }
  std::vector<PatientRecord> normalized = dataset.patients;
  for (PatientRecord& p : normalized) zscore_patient(p, dataset.dims.voxels_per_modality());
  return evaluate_records(generator, normalized, indices, dataset.dims, dataset.num_seg_classes,
                          dataset.class_names, true);
}

double mean_foreground_dice(const MetricsReport& report) {
  if (report.summary.size() <= 1) {
    return report.summary.empty() ? 0.0 : report.summary.front().mean_dice;
  }
  double sum = 0.0;
  for (std::size_t k = 1; k < report.summary.size(); ++k) sum += report.summary[k].mean_dice;
  return sum / static_cast<double>(report.summary.size() - 1);
}

std::uint64_t hash_params(const std::vector<NamedParam<float>>& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const unsigned char* bytes, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const NamedParam<float>& p : params) {
    mix(reinterpret_cast<const unsigned char*>(p.name.data()), p.name.size());
    const auto values = p.tensor.data();
    mix(reinterpret_cast<const unsigned char*>(values.data()), values.size() * sizeof(float));
  }
  return h;
}

void save_train_checkpoint(const std::filesystem::path& path, const std::string& descriptor,
                           const Generator<float>& gen, const Discriminator<float>& disc,
                           const RmsProp<float>& opt_g, const RmsProp<float>& opt_d) {
  Checkpoint ckpt;
  ckpt.descriptor = descriptor;
  append_param_blocks(gen.params().items(), ckpt.blocks);
  append_param_blocks(disc.params().items(), ckpt.blocks);

  auto append_state = [&ckpt](const RmsProp<float>& opt, const std::vector<NamedParam<float>>& params,
                              const std::string& prefix) {
    for (const NamedParam<float>& p : params) {
      const auto it = opt.states().find(p.name);
      if (it == opt.states().end()) continue;
      ckpt.blocks.push_back({prefix + p.name, p.tensor.shape(), it->second});
    }
  };
  append_state(opt_g, gen.params().items(), "opt_g/");
  append_state(opt_d, disc.params().items(), "opt_d/");
  save_checkpoint(ckpt, path);
}

void load_train_checkpoint(const Checkpoint& ckpt, Generator<float>& gen,
                           Discriminator<float>& disc, RmsProp<float>* opt_g,
                           RmsProp<float>* opt_d) {
  restore_param_blocks(gen.params().items(), ckpt);
  restore_param_blocks(disc.params().items(), ckpt);

  auto restore_state = [&ckpt](RmsProp<float>& opt, const std::vector<NamedParam<float>>& params,
                               const std::string& prefix) {
    for (const NamedParam<float>& p : params) {
      const ParamBlock* block = ckpt.find(prefix + p.name);
      if (block == nullptr) continue;
      if (shape_size(block->shape) != p.tensor.size()) {
        throw ValidationError("checkpoint optimizer state '" + prefix + p.name +
                              "' does not match the parameter size");
      }
      opt.state(p.name, p.tensor.size()) = block->values;
    }
  };
  if (opt_g != nullptr) restore_state(*opt_g, gen.params().items(), "opt_g/");
  if (opt_d != nullptr) restore_state(*opt_d, disc.params().items(), "opt_d/");
}

TrainResult train(const Dataset& dataset, const GeneratorConfig& gen_cfg,
                  const DiscriminatorConfig& disc_cfg, const TrainConfig& config,
                  const TrainOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  config.validate();
  gen_cfg.validate();
  disc_cfg.validate();
  check_compatible(dataset, gen_cfg, disc_cfg);
  if (options.augmentation != nullptr) options.augmentation->validate();

  const VolumeDims dims = dataset.dims;
  const std::size_t num_classes = dataset.num_seg_classes;

  Rng master(config.seed);
  Rng split_rng = master.derive(1);
  const SplitIndices split =
      split_by_patients(dataset.patients.size(), config.val_fraction, split_rng);
  if (split.train.empty()) throw ValidationError("train: empty train split");

  // Class weights come from the train split only.
  std::vector<float> seg_weights(num_classes, 1.0f);
  if (config.weighting_enabled) {
    ClassStats stats = make_stats(num_classes);
    for (std::size_t idx : split.train) {
      accumulate_stats(stats, dataset.patients[idx].labels);
    }
    const std::vector<double> w = compute_weights(stats);
    for (std::size_t c = 0; c < num_classes; ++c) seg_weights[c] = static_cast<float>(w[c]);
  }
  const std::vector<float> unit_disease_weights(dataset.num_diseases, 1.0f);

  std::vector<PatientRecord> normalized = dataset.patients;
  for (PatientRecord& p : normalized) zscore_patient(p, dims.voxels_per_modality());

  Generator<float> gen(gen_cfg, config.seed ^ kGenSeedSalt);
  Discriminator<float> disc(disc_cfg, config.seed ^ kDiscSeedSalt);
  RmsPropConfig<float> opt_cfg{static_cast<float>(config.learning_rate),
                               static_cast<float>(config.rho), static_cast<float>(config.eps)};
  RmsProp<float> opt_g(opt_cfg);
  RmsProp<float> opt_d(opt_cfg);

  TrainLog log;
  log.seed = config.seed;
  log.config_hash = options.config_hash;

  const bool checkpoints = !options.checkpoint_dir.empty();
  if (checkpoints) std::filesystem::create_directories(options.checkpoint_dir);

  double lr = config.learning_rate;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    if (config.lr_step_decay && epoch > 0 && epoch % config.lr_decay_every == 0) {
      lr *= config.lr_decay_factor;
      opt_g.set_lr(static_cast<float>(lr));
      opt_d.set_lr(static_cast<float>(lr));
    }

    std::vector<std::size_t> order = split.train;
    Rng shuffle_rng = master.derive(100 + epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
    }
    Rng aug_rng = master.derive(10000 + epoch);

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, order.size());
      ++step;
      Rng dropout_rng = master.derive(1000000 + step);

      struct BatchItem {
        std::vector<Tensor<float>> xs;
        std::vector<Tensor<float>> real_ys;
        std::vector<Tensor<float>> fake_detached;
        PatientRecord record;
        GeneratorOutput<float> out;
      };
      std::vector<BatchItem> batch;
      for (std::size_t i = start; i < end; ++i) {
        BatchItem item;
        item.record = options.augmentation != nullptr
                          ? augment_record(normalized[order[i]], dims, *options.augmentation,
                                           aug_rng)
                          : normalized[order[i]];
        item.xs = slice_tensors(item.record, dims);
        item.real_ys = onehot_slices(item.record, dims, num_classes);
        item.out = gen.forward(item.xs, Mode::kTrain, &dropout_rng);
        for (const auto& probs : item.out.seg_probs) {
          item.fake_detached.push_back(probs.detach());
        }
        batch.push_back(std::move(item));
      }

      const std::uint64_t gen_hash_before =
          config.debug_update_isolation ? hash_params(gen.params().items()) : 0;

      // Discriminator phase: real (x, one-hot y) against detached fakes.
      double adv_d_value = 0.0;
      for (std::size_t k = 0; k < config.d_steps_per_g; ++k) {
        gen.params().zero_grad();
        disc.params().zero_grad();
        std::vector<Tensor<float>> parts;
        for (const BatchItem& item : batch) {
          const auto real_maps = disc.forward(item.xs, item.real_ys);
          const auto fake_maps = disc.forward(item.xs, item.fake_detached);
          auto [adv_d, adv_g_unused] = adversarial_losses(
              concat_channel(real_maps), concat_channel(fake_maps), config.objective);
          static_cast<void>(adv_g_unused);
          parts.push_back(adv_d);
        }
        Tensor<float> adv_d = mean_over(std::move(parts));
        adv_d_value = adv_d.item();
        require_finite(adv_d_value, step, "adv_d");
        backward(adv_d);
        opt_d.step(disc.params().items());
      }

      if (config.debug_update_isolation &&
          hash_params(gen.params().items()) != gen_hash_before) {
        throw GraphError("update isolation violated: discriminator step changed generator "
                         "parameters at step " +
                         std::to_string(step));
      }
      const std::uint64_t disc_hash_before =
          config.debug_update_isolation ? hash_params(disc.params().items()) : 0;

      // Generator phase: adversarial + segmentation + classification.
      gen.params().zero_grad();
      disc.params().zero_grad();
      std::vector<Tensor<float>> adv_parts;
      std::vector<Tensor<float>> seg_parts;
      std::vector<Tensor<float>> cls_parts;
      const std::size_t hw = dims.height * dims.width;
      for (const BatchItem& item : batch) {
        const auto fake_maps = disc.forward(item.xs, item.out.seg_probs);
        const Tensor<float> scores = concat_channel(fake_maps);
        adv_parts.push_back(config.objective == GanObjective::kNonSaturating
                                ? bce(scores, 1.0f)
                                : mean_log_one_minus(scores));

        std::vector<Tensor<float>> slice_ce;
        for (std::size_t s = 0; s < dims.slices; ++s) {
          slice_ce.push_back(weighted_cce(
              item.out.seg_probs[s],
              std::span<const std::uint8_t>(item.record.labels).subspan(s * hw, hw),
              std::span<const float>(seg_weights)));
        }
        seg_parts.push_back(mean_over(std::move(slice_ce)));

        std::vector<float> onehot_disease(dataset.num_diseases, 0.0f);
        onehot_disease[item.record.disease] = 1.0f;
        cls_parts.push_back(weighted_l1(
            item.out.disease_probs,
            Tensor<float>::from({dataset.num_diseases}, std::move(onehot_disease)),
            std::span<const float>(unit_disease_weights)));
      }
      Tensor<float> adv_g = mean_over(std::move(adv_parts));
      Tensor<float> seg_ce = mean_over(std::move(seg_parts));
      Tensor<float> cls_l1 = mean_over(std::move(cls_parts));
      LossCoeffs<float> coeffs{static_cast<float>(config.coeff_adv),
                               static_cast<float>(config.coeff_seg),
                               static_cast<float>(config.coeff_cls)};
      Tensor<float> total = total_generator_loss(adv_g, seg_ce, cls_l1, coeffs);

      StepLoss entry{step, adv_d_value, adv_g.item(), seg_ce.item(), cls_l1.item(), total.item()};
      require_finite(entry.adv_g, step, "adv_g");
      require_finite(entry.seg_ce, step, "seg_ce");
      require_finite(entry.cls_l1, step, "cls_l1");
      require_finite(entry.total, step, "total");

      backward(total);
      opt_g.step(gen.params().items());
      log.steps.push_back(entry);

      if (config.debug_update_isolation &&
          hash_params(disc.params().items()) != disc_hash_before) {
        throw GraphError("update isolation violated: generator step changed discriminator "
                         "parameters at step " +
                         std::to_string(step));
      }
    }

    const bool last_epoch = epoch + 1 == config.max_epochs;
    if (!split.val.empty() && ((epoch + 1) % config.eval_every == 0 || last_epoch)) {
      const MetricsReport report =
          evaluate_records(gen, normalized, split.val, dims, num_classes, dataset.class_names,
                           true);
      const double fg = mean_foreground_dice(report);
      log.evals.push_back({epoch, fg});
      if (fg > log.best_val_dice) {
        log.best_val_dice = fg;
        log.best_epoch = epoch;
        if (checkpoints) {
          save_train_checkpoint(options.checkpoint_dir / "best.ckpt", options.descriptor, gen,
                                disc, opt_g, opt_d);
        }
      }
    }
  }

  if (checkpoints) {
    save_train_checkpoint(options.checkpoint_dir / "final.ckpt", options.descriptor, gen, disc,
                          opt_g, opt_d);
  }
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  return TrainResult{std::move(gen), std::move(disc), std::move(opt_g), std::move(opt_d),
                     std::move(log)};
}

}  // namespace svgan
