#include "svgan/run_config.hpp"

#include <fstream>

#include <json.hpp>

#include "svgan/errors.hpp"

namespace svgan {
namespace {

using nlohmann::json;

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& section) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || key == k;
    if (!known) {
      throw ValidationError("config: unknown key '" + key + "' in " + section);
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError("config: bad value for " + section + "." + key + ": " + e.what());
  }
}

void read_objective(const json& obj, const char* key, GanObjective& out,
                    const std::string& section) {
  if (!obj.contains(key)) return;
  std::string name;
  read_field(obj, key, name, section);
  if (name == "non-saturating") {
    out = GanObjective::kNonSaturating;
  } else if (name == "minimax") {
    out = GanObjective::kMinimax;
  } else {
    throw ValidationError("config: " + section + "." + key +
                          " must be 'non-saturating' or 'minimax', got '" + name + "'");
  }
}

json phantom_json(const PhantomConfig& c) {
  return {{"num_patients", c.num_patients}, {"slices", c.slices},
          {"height", c.height},             {"width", c.width},
          {"num_modalities", c.num_modalities}, {"num_seg_classes", c.num_seg_classes},
          {"num_diseases", c.num_diseases},
          {"lesion_fraction_target", c.lesion_fraction_target},
          {"seed", c.seed}};
}

json generator_json(const GeneratorConfig& c) {
  return {{"base_channels", c.base_channels},
          {"lstm_hidden", c.lstm_hidden},
          {"dropout_p", c.dropout_p}};
}

json discriminator_json(const DiscriminatorConfig& c) {
  return {{"base_channels", c.base_channels}, {"lstm_hidden", c.lstm_hidden}};
}

json train_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"max_epochs", c.max_epochs},
          {"batch_size", c.batch_size},
          {"d_steps_per_g", c.d_steps_per_g},
          {"rho", c.rho},
          {"eps", c.eps},
          {"seed", c.seed},
          {"weighting_enabled", c.weighting_enabled},
          {"coeff_adv", c.coeff_adv},
          {"coeff_seg", c.coeff_seg},
          {"coeff_cls", c.coeff_cls},
          {"eval_every", c.eval_every},
          {"val_fraction", c.val_fraction},
          {"objective", c.objective == GanObjective::kNonSaturating ? "non-saturating" : "minimax"},
          {"lr_step_decay", c.lr_step_decay},
          {"lr_decay_every", c.lr_decay_every},
          {"lr_decay_factor", c.lr_decay_factor}};
}

json augmentation_json(const AugmentationConfig& c, bool enabled) {
  return {{"enabled", enabled},
          {"crop_fraction_min", c.crop_fraction_min},
          {"crop_fraction_max", c.crop_fraction_max},
          {"scale_min", c.scale_min},
          {"scale_max", c.scale_max},
          {"rotation_min_deg", c.rotation_min_deg},
          {"rotation_max_deg", c.rotation_max_deg},
          {"gaussian_noise_sigma", c.gaussian_noise_sigma},
          {"p_geometry", c.p_geometry},
          {"p_noise", c.p_noise}};
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("config: top level must be a JSON object");
  check_keys(root,
             {"seed", "phantom", "generator", "discriminator", "train", "augmentation", "paths"},
             "the top level");

  RunConfig cfg;

  if (root.contains("phantom")) {
    const json& p = root["phantom"];
    check_keys(p,
               {"num_patients", "slices", "height", "width", "num_modalities", "num_seg_classes",
                "num_diseases", "lesion_fraction_target", "seed"},
               "phantom");
    read_field(p, "num_patients", cfg.phantom.num_patients, "phantom");
    read_field(p, "slices", cfg.phantom.slices, "phantom");
    read_field(p, "height", cfg.phantom.height, "phantom");
    read_field(p, "width", cfg.phantom.width, "phantom");
    read_field(p, "num_modalities", cfg.phantom.num_modalities, "phantom");
    read_field(p, "num_seg_classes", cfg.phantom.num_seg_classes, "phantom");
    read_field(p, "num_diseases", cfg.phantom.num_diseases, "phantom");
    read_field(p, "lesion_fraction_target", cfg.phantom.lesion_fraction_target, "phantom");
    read_field(p, "seed", cfg.phantom.seed, "phantom");
  }

  if (root.contains("generator")) {
    const json& g = root["generator"];
    check_keys(g, {"base_channels", "lstm_hidden", "dropout_p"}, "generator");
    read_field(g, "base_channels", cfg.generator.base_channels, "generator");
    read_field(g, "lstm_hidden", cfg.generator.lstm_hidden, "generator");
    read_field(g, "dropout_p", cfg.generator.dropout_p, "generator");
  }

  if (root.contains("discriminator")) {
    const json& d = root["discriminator"];
    check_keys(d, {"base_channels", "lstm_hidden"}, "discriminator");
    read_field(d, "base_channels", cfg.discriminator.base_channels, "discriminator");
    read_field(d, "lstm_hidden", cfg.discriminator.lstm_hidden, "discriminator");
  }

  if (root.contains("train")) {
    const json& t = root["train"];
    check_keys(t,
               {"learning_rate", "max_epochs", "batch_size", "d_steps_per_g", "rho", "eps", "seed",
                "weighting_enabled", "coeff_adv", "coeff_seg", "coeff_cls", "eval_every",
                "val_fraction", "objective", "lr_step_decay", "lr_decay_every",
                "lr_decay_factor"},
               "train");
    read_field(t, "learning_rate", cfg.train.learning_rate, "train");
    read_field(t, "max_epochs", cfg.train.max_epochs, "train");
    read_field(t, "batch_size", cfg.train.batch_size, "train");
    read_field(t, "d_steps_per_g", cfg.train.d_steps_per_g, "train");
    read_field(t, "rho", cfg.train.rho, "train");
    read_field(t, "eps", cfg.train.eps, "train");
    read_field(t, "seed", cfg.train.seed, "train");
    read_field(t, "weighting_enabled", cfg.train.weighting_enabled, "train");
    read_field(t, "coeff_adv", cfg.train.coeff_adv, "train");
    read_field(t, "coeff_seg", cfg.train.coeff_seg, "train");
    read_field(t, "coeff_cls", cfg.train.coeff_cls, "train");
    read_field(t, "eval_every", cfg.train.eval_every, "train");
    read_field(t, "val_fraction", cfg.train.val_fraction, "train");
    read_objective(t, "objective", cfg.train.objective, "train");
    read_field(t, "lr_step_decay", cfg.train.lr_step_decay, "train");
    read_field(t, "lr_decay_every", cfg.train.lr_decay_every, "train");
    read_field(t, "lr_decay_factor", cfg.train.lr_decay_factor, "train");
  }

  if (root.contains("augmentation")) {
    const json& a = root["augmentation"];
    check_keys(a,
               {"enabled", "crop_fraction_min", "crop_fraction_max", "scale_min", "scale_max",
                "rotation_min_deg", "rotation_max_deg", "gaussian_noise_sigma", "p_geometry",
                "p_noise"},
               "augmentation");
    read_field(a, "enabled", cfg.augment_enabled, "augmentation");
    read_field(a, "crop_fraction_min", cfg.augmentation.crop_fraction_min, "augmentation");
    read_field(a, "crop_fraction_max", cfg.augmentation.crop_fraction_max, "augmentation");
    read_field(a, "scale_min", cfg.augmentation.scale_min, "augmentation");
    read_field(a, "scale_max", cfg.augmentation.scale_max, "augmentation");
    read_field(a, "rotation_min_deg", cfg.augmentation.rotation_min_deg, "augmentation");
    read_field(a, "rotation_max_deg", cfg.augmentation.rotation_max_deg, "augmentation");
    read_field(a, "gaussian_noise_sigma", cfg.augmentation.gaussian_noise_sigma, "augmentation");
    read_field(a, "p_geometry", cfg.augmentation.p_geometry, "augmentation");
    read_field(a, "p_noise", cfg.augmentation.p_noise, "augmentation");
  }

  if (root.contains("paths")) {
    const json& p = root["paths"];
    check_keys(p, {"data", "out"}, "paths");
    read_field(p, "data", cfg.data_path, "paths");
    read_field(p, "out", cfg.out_path, "paths");
  }

  if (root.contains("seed")) {
    std::uint64_t seed = 0;
    read_field(root, "seed", seed, "the top level");
    apply_seed(cfg, seed);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string run_config_json(const RunConfig& config) {
  json root;
  root["phantom"] = phantom_json(config.phantom);
  root["generator"] = generator_json(config.generator);
  root["discriminator"] = discriminator_json(config.discriminator);
  root["train"] = train_json(config.train);
  root["augmentation"] = augmentation_json(config.augmentation, config.augment_enabled);
  return root.dump(2);
}

std::uint64_t run_config_hash(const RunConfig& config) {
  const std::string text = run_config_json(config);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void apply_seed(RunConfig& config, std::uint64_t seed) {
  config.phantom.seed = seed;
  config.train.seed = seed;
}

GeneratorConfig make_generator_config(const RunConfig& config, const Dataset& dataset) {
  GeneratorConfig cfg = config.generator;
  cfg.in_channels = dataset.dims.modalities;
  cfg.num_seg_classes = dataset.num_seg_classes;
  cfg.num_diseases = dataset.num_diseases;
  cfg.height = dataset.dims.height;
  cfg.width = dataset.dims.width;
  cfg.validate();
  return cfg;
}

DiscriminatorConfig make_discriminator_config(const RunConfig& config, const Dataset& dataset) {
  DiscriminatorConfig cfg = config.discriminator;
  cfg.in_channels = dataset.dims.modalities;
  cfg.num_seg_classes = dataset.num_seg_classes;
  cfg.height = dataset.dims.height;
  cfg.width = dataset.dims.width;
  cfg.validate();
  return cfg;
}

std::string make_descriptor(const GeneratorConfig& gen_cfg, const DiscriminatorConfig& disc_cfg,
                            std::uint64_t config_hash) {
  json root;
  root["kind"] = "svgan-train";
  root["config_hash"] = config_hash;
  root["generator"] = {{"in_channels", gen_cfg.in_channels},
                       {"base_channels", gen_cfg.base_channels},
                       {"pool_depth", gen_cfg.pool_depth},
                       {"num_seg_classes", gen_cfg.num_seg_classes},
                       {"num_diseases", gen_cfg.num_diseases},
                       {"lstm_hidden", gen_cfg.lstm_hidden},
                       {"dropout_p", gen_cfg.dropout_p},
                       {"height", gen_cfg.height},
                       {"width", gen_cfg.width}};
  root["discriminator"] = {{"in_channels", disc_cfg.in_channels},
                           {"num_seg_classes", disc_cfg.num_seg_classes},
                           {"base_channels", disc_cfg.base_channels},
                           {"lstm_hidden", disc_cfg.lstm_hidden},
                           {"height", disc_cfg.height},
                           {"width", disc_cfg.width}};
  return root.dump();
}

DescriptorInfo parse_descriptor(const std::string& descriptor) {
  json root;
  try {
    root = json::parse(descriptor);
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint descriptor is not valid JSON: ") + e.what());
  }
  if (!root.is_object() || root.value("kind", "") != "svgan-train") {
    throw IoError("checkpoint descriptor has unknown kind");
  }

  DescriptorInfo info;
  try {
    info.config_hash = root.value("config_hash", 0ull);
    const json& g = root.at("generator");
    info.generator.in_channels = g.at("in_channels").get<std::size_t>();
    info.generator.base_channels = g.at("base_channels").get<std::size_t>();
    info.generator.pool_depth = g.at("pool_depth").get<std::size_t>();
    info.generator.num_seg_classes = g.at("num_seg_classes").get<std::size_t>();
    info.generator.num_diseases = g.at("num_diseases").get<std::size_t>();
    info.generator.lstm_hidden = g.at("lstm_hidden").get<std::size_t>();
    info.generator.dropout_p = g.at("dropout_p").get<double>();
    info.generator.height = g.at("height").get<std::size_t>();
    info.generator.width = g.at("width").get<std::size_t>();
    const json& d = root.at("discriminator");
    info.discriminator.in_channels = d.at("in_channels").get<std::size_t>();
    info.discriminator.num_seg_classes = d.at("num_seg_classes").get<std::size_t>();
    info.discriminator.base_channels = d.at("base_channels").get<std::size_t>();
    info.discriminator.lstm_hidden = d.at("lstm_hidden").get<std::size_t>();
    info.discriminator.height = d.at("height").get<std::size_t>();
    info.discriminator.width = d.at("width").get<std::size_t>();
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint descriptor is incomplete: ") + e.what());
  }
  info.generator.validate();
  info.discriminator.validate();
  return info;
}

}  // namespace svgan
