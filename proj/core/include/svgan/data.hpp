#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "svgan/rng.hpp"

namespace svgan {

struct VolumeDims {
  std::size_t modalities = 0;
  std::size_t slices = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t voxels_per_modality() const { return slices * height * width; }
  std::size_t volume_size() const { return modalities * voxels_per_modality(); }
};

// volume is modalities x slices x H x W, labels slices x H x W, both row-major.
struct PatientRecord {
  std::string id;
  std::vector<float> volume;
  std::vector<std::uint8_t> labels;
  std::size_t disease = 0;
};

struct Dataset {
  VolumeDims dims;
  std::size_t num_seg_classes = 0;
  std::size_t num_diseases = 0;
  double spacing = 1.0;
  std::vector<std::string> class_names;
  std::vector<PatientRecord> patients;

  // Checks buffer sizes, label ranges, disease ranges, and volume finiteness,
  // naming the offending patient (and slice, for labels).
  void validate() const;
};

struct PhantomConfig {
  std::size_t num_patients = 100;
  std::size_t slices = 8;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t num_modalities = 2;
  std::size_t num_seg_classes = 3;
  std::size_t num_diseases = 2;
  double lesion_fraction_target = 0.03;
  std::uint64_t seed = 0;

  void validate() const;
};

// Procedural patients: an elliptical organ drifting smoothly across slices,
// lesion blobs inside it whose count and size depend on the disease label,
// and per-modality contrast transforms of the same geometry. Pure function of
// config (per-patient streams are derived from the seed).
Dataset generate_phantoms(const PhantomConfig& config);

// Fraction of pixels labeled with any lesion class (>= 2) across the dataset.
double lesion_fraction(const Dataset& dataset);

std::vector<std::string> default_class_names(std::size_t num_seg_classes);

// Directory format: meta.json plus per-patient <id>.vol (little-endian 32-bit
// floats, C-S-H-W) and <id>.lbl (bytes, S-H-W).
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// In-place z-score with population statistics and a 1e-8 sigma floor, so a
// constant input maps to zeros.
void zscore_normalize(std::span<float> values);
void zscore_patient(PatientRecord& record, std::size_t voxels_per_modality);
void zscore_dataset(Dataset& dataset);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Patient-wise split: shuffles patient indices and carves off a validation
// share. Both sides are nonempty whenever 0 < val_fraction < 1 and n >= 2.
SplitIndices split_by_patients(std::size_t num_patients, double val_fraction, Rng& rng);

struct AugmentationConfig {
  double crop_fraction_min = 0.85;
  double crop_fraction_max = 1.0;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double rotation_min_deg = -10.0;
  double rotation_max_deg = 10.0;
  double gaussian_noise_sigma = 0.02;
  double p_geometry = 1.0;
  double p_noise = 1.0;

  void validate() const;
};

// One affine (crop + resize, scale, rotation) drawn per patient and applied
// to every slice: bilinear for intensities, nearest neighbor for labels, edge
// replication outside the source. Gaussian noise touches intensities only.
PatientRecord augment_record(const PatientRecord& record, const VolumeDims& dims,
                             const AugmentationConfig& config, Rng& rng);

}  // namespace svgan
