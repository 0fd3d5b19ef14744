#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "svgan/data.hpp"
#include "svgan/models.hpp"
#include "svgan/trainer.hpp"

namespace svgan {

// One JSON document configuring the whole pipeline. Every section is
// optional and defaulted; unknown keys are rejected. Model extents and class
// counts are always derived from the dataset in play, never spelled out
// twice.
struct RunConfig {
  PhantomConfig phantom;
  GeneratorConfig generator;      // base_channels, lstm_hidden, dropout_p
  DiscriminatorConfig discriminator;  // base_channels, lstm_hidden
  TrainConfig train;
  AugmentationConfig augmentation;
  bool augment_enabled = true;
  std::string data_path;  // optional fallbacks for CLI flags
  std::string out_path;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical serialization (sorted keys); the config hash is FNV-1a64 of it.
std::string run_config_json(const RunConfig& config);
std::uint64_t run_config_hash(const RunConfig& config);

// Overrides every embedded seed (phantom and train).
void apply_seed(RunConfig& config, std::uint64_t seed);

// Model configs for a concrete dataset: dims and class counts come from the
// data, capacity knobs from the run config.
GeneratorConfig make_generator_config(const RunConfig& config, const Dataset& dataset);
DiscriminatorConfig make_discriminator_config(const RunConfig& config, const Dataset& dataset);

// Checkpoint descriptor: carries both model configs and the run hash so a
// checkpoint can be evaluated without the original config file.
std::string make_descriptor(const GeneratorConfig& gen_cfg, const DiscriminatorConfig& disc_cfg,
                            std::uint64_t config_hash);

struct DescriptorInfo {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  std::uint64_t config_hash = 0;
};

DescriptorInfo parse_descriptor(const std::string& descriptor);

}  // namespace svgan
