#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "svgan/checkpoint.hpp"
#include "svgan/data.hpp"
#include "svgan/losses.hpp"
#include "svgan/metrics.hpp"
#include "svgan/models.hpp"
#include "svgan/rmsprop.hpp"

namespace svgan {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t max_epochs = 120;
  std::size_t batch_size = 1;  // whole patients per step, slice sequences intact
  std::size_t d_steps_per_g = 1;
  double rho = 0.9;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  bool weighting_enabled = true;
  double coeff_adv = 1.0;
  double coeff_seg = 1.0;
  double coeff_cls = 1.0;
  std::size_t eval_every = 1;  // epochs between validation passes
  double val_fraction = 0.2;
  GanObjective objective = GanObjective::kNonSaturating;
  bool lr_step_decay = false;
  std::size_t lr_decay_every = 40;
  double lr_decay_factor = 0.5;
  // Asserts via parameter hashes that D updates leave G bit-unchanged and
  // vice versa. Costs a full parameter walk per step.
  bool debug_update_isolation = false;

  void validate() const;
};

struct StepLoss {
  std::size_t step = 0;
  double adv_d = 0.0;
  double adv_g = 0.0;
  double seg_ce = 0.0;
  double cls_l1 = 0.0;
  double total = 0.0;
};

struct EvalPoint {
  std::size_t epoch = 0;
  double mean_foreground_dice = 0.0;
};

struct TrainLog {
  std::vector<StepLoss> steps;
  std::vector<EvalPoint> evals;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::size_t best_epoch = 0;
  double best_val_dice = -1.0;
};

// CSV stream: header "step,adv_d,adv_g,seg_ce,cls_l1,total", one row per step.
void write_train_log_csv(const TrainLog& log, std::ostream& out);

// Parses the CSV back; malformed content reports the offending line number.
std::vector<StepLoss> read_train_log_csv(std::istream& in, const std::string& origin);

struct TrainOptions {
  const AugmentationConfig* augmentation = nullptr;  // null disables augmentation
  std::filesystem::path checkpoint_dir;              // empty disables checkpoints
  std::string descriptor = "{}";                     // stored in checkpoints
  std::uint64_t config_hash = 0;
};

struct TrainResult {
  Generator<float> generator;
  Discriminator<float> discriminator;
  RmsProp<float> opt_g;
  RmsProp<float> opt_d;
  TrainLog log;
};

// Alternating adversarial training: per batch, d_steps_per_g discriminator
// updates on real vs detached-fake pairs, then one generator update on the
// combined loss. Volumes are z-scored once at load; augmentation draws from a
// per-epoch stream. Checkpoints (when enabled) are written at the best
// validation foreground Dice and at the end.
TrainResult train(const Dataset& dataset, const GeneratorConfig& gen_cfg,
                  const DiscriminatorConfig& disc_cfg, const TrainConfig& config,
                  const TrainOptions& options = {});

// Inference-mode prediction for one patient whose volume is already z-scored.
struct PatientPrediction {
  std::vector<std::uint8_t> labels;  // slices x H x W, argmax with ties to the lowest class
  std::size_t disease = 0;
};

PatientPrediction predict_patient(Generator<float>& generator, const PatientRecord& normalized,
                                  const VolumeDims& dims);

// Evaluates the given patients (all when indices is empty): per-class regions,
// plus disease accuracy. Normalization is applied internally to copies.
MetricsReport evaluate(Generator<float>& generator, const Dataset& dataset,
                       std::span<const std::size_t> indices = {});

double mean_foreground_dice(const MetricsReport& report);

// FNV-1a over parameter bytes, for update-isolation checks.
std::uint64_t hash_params(const std::vector<NamedParam<float>>& params);

// Full training checkpoint: model parameters plus optimizer state.
void save_train_checkpoint(const std::filesystem::path& path, const std::string& descriptor,
                           const Generator<float>& gen, const Discriminator<float>& disc,
                           const RmsProp<float>& opt_g, const RmsProp<float>& opt_d);

// Restores parameters (and optimizer state when opt_g/opt_d are non-null)
// from a loaded checkpoint. Missing blocks or shape mismatches throw.
void load_train_checkpoint(const Checkpoint& ckpt, Generator<float>& gen,
                           Discriminator<float>& disc, RmsProp<float>* opt_g = nullptr,
                           RmsProp<float>* opt_d = nullptr);

}  // namespace svgan
