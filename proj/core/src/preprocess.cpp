#include <algorithm>
#include <cmath>
#include <numeric>

#include "svgan/data.hpp"
#include "svgan/errors.hpp"

namespace svgan {

void zscore_normalize(std::span<float> values) {
  if (values.empty()) return;
  double sum = 0.0;
  for (float v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (float v : values) {
    const double d = v - mean;
    sq += d * d;
  }
  const double sigma = std::max(std::sqrt(sq / static_cast<double>(values.size())), 1e-8);
  for (float& v : values) v = static_cast<float>((v - mean) / sigma);
}

void zscore_patient(PatientRecord& record, std::size_t voxels_per_modality) {
  if (voxels_per_modality == 0 || record.volume.size() % voxels_per_modality != 0) {
    throw ValidationError("zscore: volume of patient '" + record.id + "' (" +
                          std::to_string(record.volume.size()) +
                          " values) is not a whole number of modalities of " +
                          std::to_string(voxels_per_modality));
  }
  for (std::size_t off = 0; off < record.volume.size(); off += voxels_per_modality) {
    zscore_normalize(std::span<float>(record.volume).subspan(off, voxels_per_modality));
  }
}

void zscore_dataset(Dataset& dataset) {
  for (PatientRecord& p : dataset.patients) zscore_patient(p, dataset.dims.voxels_per_modality());
}

SplitIndices split_by_patients(std::size_t num_patients, double val_fraction, Rng& rng) {
  if (num_patients == 0) throw ValidationError("split: no patients");
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw ValidationError("split: val_fraction must lie in [0, 1), got " +
                          std::to_string(val_fraction));
  }

  std::vector<std::size_t> order(num_patients);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = num_patients; i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_int(i)]);
  }

  std::size_t val_count = static_cast<std::size_t>(
      std::llround(val_fraction * static_cast<double>(num_patients)));
  if (val_fraction > 0.0 && num_patients >= 2) {
    val_count = std::clamp<std::size_t>(val_count, 1, num_patients - 1);
  } else {
    val_count = std::min(val_count, num_patients - 1);
  }

  SplitIndices split;
  split.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(val_count));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(val_count), order.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

}  // namespace svgan
