#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "svgan/data.hpp"
#include "svgan/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "dataset volumes are stored little-endian and read back with plain memcpy");

namespace svgan {
namespace {

constexpr const char* kFormatTag = "svgan-dataset-v1";

void write_file(const std::filesystem::path& path, const char* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(data, static_cast<std::streamsize>(size));
  if (!out.good()) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<char> read_file(const std::filesystem::path& path, std::size_t expected,
                            const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + what + " '" + path.string() + "'");
  std::vector<char> bytes(expected);
  in.read(bytes.data(), static_cast<std::streamsize>(expected));
  if (static_cast<std::size_t>(in.gcount()) != expected) {
    throw IoError(what + " '" + path.string() + "' is truncated: expected " +
                  std::to_string(expected) + " bytes, got " + std::to_string(in.gcount()));
  }
  char extra;
  if (in.read(&extra, 1), in.gcount() != 0) {
    throw IoError(what + " '" + path.string() + "' is larger than the declared shape");
  }
  return bytes;
}

template <typename T>
T require_field(const nlohmann::json& j, const char* key, const std::filesystem::path& dir) {
  if (!j.contains(key)) {
    throw IoError("meta.json in '" + dir.string() + "' is missing '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("meta.json in '" + dir.string() + "': bad '" + std::string(key) + "': " +
                  e.what());
  }
}

}  // namespace

void Dataset::validate() const {
  if (num_seg_classes == 0 || num_diseases == 0) {
    throw ValidationError("dataset: class counts must be positive");
  }
  if (class_names.size() != num_seg_classes) {
    throw ValidationError("dataset: " + std::to_string(class_names.size()) + " class names for " +
                          std::to_string(num_seg_classes) + " classes");
  }
  const std::size_t vox = dims.voxels_per_modality();
  for (const PatientRecord& p : patients) {
    if (p.volume.size() != dims.volume_size()) {
      throw ValidationError("patient '" + p.id + "': volume has " + std::to_string(p.volume.size()) +
                            " values, expected " + std::to_string(dims.volume_size()));
    }
    if (p.labels.size() != vox) {
      throw ValidationError("patient '" + p.id + "': labels have " + std::to_string(p.labels.size()) +
                            " values, expected " + std::to_string(vox));
    }
    if (p.disease >= num_diseases) {
      throw ValidationError("patient '" + p.id + "': disease " + std::to_string(p.disease) +
                            " out of range [0, " + std::to_string(num_diseases) + ")");
    }
    for (std::size_t i = 0; i < p.labels.size(); ++i) {
      if (p.labels[i] >= num_seg_classes) {
        throw ValidationError("patient '" + p.id + "', slice " +
                              std::to_string(i / (dims.height * dims.width)) + ": label " +
                              std::to_string(p.labels[i]) + " out of range [0, " +
                              std::to_string(num_seg_classes) + ")");
      }
    }
    for (float v : p.volume) {
      if (!std::isfinite(v)) {
        throw ValidationError("patient '" + p.id + "': volume contains a non-finite value");
      }
    }
  }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  dataset.validate();
  std::filesystem::create_directories(dir);

  nlohmann::json meta;
  meta["format"] = kFormatTag;
  meta["modalities"] = dataset.dims.modalities;
  meta["slices"] = dataset.dims.slices;
  meta["height"] = dataset.dims.height;
  meta["width"] = dataset.dims.width;
  meta["num_seg_classes"] = dataset.num_seg_classes;
  meta["num_diseases"] = dataset.num_diseases;
  meta["spacing"] = dataset.spacing;
  meta["class_names"] = dataset.class_names;
  meta["patients"] = nlohmann::json::array();
  for (const PatientRecord& p : dataset.patients) {
    meta["patients"].push_back({{"id", p.id}, {"disease", p.disease}});
  }
  const std::string text = meta.dump(2) + "\n";
  write_file(dir / "meta.json", text.data(), text.size());

  for (const PatientRecord& p : dataset.patients) {
    write_file(dir / (p.id + ".vol"), reinterpret_cast<const char*>(p.volume.data()),
               p.volume.size() * sizeof(float));
    write_file(dir / (p.id + ".lbl"), reinterpret_cast<const char*>(p.labels.data()),
               p.labels.size());
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const std::filesystem::path meta_path = dir / "meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw IoError("cannot open '" + meta_path.string() + "': not a dataset directory?");
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("meta.json in '" + dir.string() + "' is not valid JSON: " + e.what());
  }

  if (require_field<std::string>(meta, "format", dir) != kFormatTag) {
    throw IoError("'" + dir.string() + "' has unknown dataset format tag");
  }

  Dataset ds;
  ds.dims.modalities = require_field<std::size_t>(meta, "modalities", dir);
  ds.dims.slices = require_field<std::size_t>(meta, "slices", dir);
  ds.dims.height = require_field<std::size_t>(meta, "height", dir);
  ds.dims.width = require_field<std::size_t>(meta, "width", dir);
  ds.num_seg_classes = require_field<std::size_t>(meta, "num_seg_classes", dir);
  ds.num_diseases = require_field<std::size_t>(meta, "num_diseases", dir);
  ds.spacing = require_field<double>(meta, "spacing", dir);
  ds.class_names = require_field<std::vector<std::string>>(meta, "class_names", dir);

  if (!meta.contains("patients") || !meta["patients"].is_array()) {
    throw IoError("meta.json in '" + dir.string() + "' is missing the patient list");
  }
  for (const auto& entry : meta["patients"]) {
    PatientRecord rec;
    rec.id = require_field<std::string>(entry, "id", dir);
    rec.disease = require_field<std::size_t>(entry, "disease", dir);
    if (rec.id.empty() || rec.id.find('/') != std::string::npos) {
      throw ValidationError("patient id '" + rec.id + "' is not a valid file stem");
    }

    const auto vol_bytes = read_file(dir / (rec.id + ".vol"),
                                     ds.dims.volume_size() * sizeof(float), "volume");
    rec.volume.resize(ds.dims.volume_size());
    std::memcpy(rec.volume.data(), vol_bytes.data(), vol_bytes.size());

    const auto lbl_bytes =
        read_file(dir / (rec.id + ".lbl"), ds.dims.voxels_per_modality(), "labels");
    rec.labels.assign(lbl_bytes.begin(), lbl_bytes.end());

    ds.patients.push_back(std::move(rec));
  }

  ds.validate();
  return ds;
}

}  // namespace svgan
