#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace svgan {

// Binary mask over a single H x W slice. data holds 0/1 bytes, row-major.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  static Mask zeros(std::size_t h, std::size_t w) { return {h, w, std::vector<std::uint8_t>(h * w, 0)}; }

  std::size_t count() const;
  bool any() const { return count() > 0; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return data[r * width + c]; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return data[r * width + c]; }
};

// Mask of pixels whose label equals cls.
Mask class_mask(std::span<const std::uint8_t> labels, std::size_t h, std::size_t w, std::uint8_t cls);

// Mask of pixels whose label is in classes.
Mask union_mask(std::span<const std::uint8_t> labels, std::size_t h, std::size_t w,
                std::span<const std::uint8_t> classes);

// 2|A and B| / (|A| + |B|). Both empty -> 1, exactly one empty -> 0.
double dice(const Mask& a, const Mask& b);

// Symmetric Hausdorff distance between boundary pixel centers, Euclidean, in
// pixel units. A boundary pixel is a mask pixel on the image border or with at
// least one non-mask 4-neighbor. Either mask empty -> nullopt (undefined).
std::optional<double> hausdorff(const Mask& a, const Mask& b);

// TP / (TP + FN) over the positive pixels of gt. gt empty -> nullopt.
std::optional<double> sensitivity(const Mask& pred, const Mask& gt);

// Fraction of exact matches between equal-length label lists.
double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth);

// A named union of segmentation classes, e.g. {"whole", {1, 2}}.
struct RegionSpec {
  std::string name;
  std::vector<std::uint8_t> classes;
};

// One singleton region per class. names, when given, must have num_classes
// entries; otherwise regions are named "class<k>".
std::vector<RegionSpec> identity_regions(std::size_t num_classes,
                                         const std::vector<std::string>& names = {});

// Union masks per region spec, in spec order. Classes must lie in
// [0, num_classes).
std::vector<Mask> composite_regions(std::span<const std::uint8_t> labels, std::size_t h,
                                    std::size_t w, std::span<const RegionSpec> specs,
                                    std::size_t num_classes);

// Label volume of S slices, each h x w, row-major within a slice.
struct LabelVolumeView {
  std::span<const std::uint8_t> labels;
  std::size_t slices = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::span<const std::uint8_t> slice(std::size_t s) const {
    return labels.subspan(s * height * width, height * width);
  }
};

// Per-patient, per-region scores. Dice and sensitivity are computed over the
// whole volume (slices pooled as one set); Hausdorff is the max over slices
// where both masks are nonempty, undefined when no such slice exists.
struct RegionScore {
  double dice = 0.0;
  std::optional<double> hausdorff;
  std::optional<double> sensitivity;
};

std::vector<RegionScore> evaluate_patient(const LabelVolumeView& pred, const LabelVolumeView& gt,
                                          std::span<const RegionSpec> specs,
                                          std::size_t num_classes);

struct PatientEval {
  std::string id;
  std::vector<RegionScore> regions;
};

// Mean over patients of the per-patient scores. Undefined entries are
// excluded and counted instead of silently zeroed.
struct RegionSummary {
  std::string name;
  double mean_dice = 0.0;
  std::optional<double> mean_hausdorff;
  std::size_t hausdorff_excluded = 0;
  std::optional<double> mean_sensitivity;
  std::size_t sensitivity_excluded = 0;
};

struct MetricsReport {
  std::vector<std::string> region_names;
  std::vector<PatientEval> patients;
  std::vector<RegionSummary> summary;
  std::optional<double> disease_accuracy;
};

// Aggregates per-patient evaluations; every patient must carry one score per
// region. Disease labels are optional and must be equal-length when present.
MetricsReport build_report(std::span<const RegionSpec> specs, std::vector<PatientEval> patients,
                           std::span<const std::size_t> disease_pred = {},
                           std::span<const std::size_t> disease_true = {});

// One row per patient per region: patient,region,dice,hausdorff,sensitivity.
// Undefined values are written as NA.
void write_report_csv(const MetricsReport& report, std::ostream& out);

// Summary (means, exclusion counts, disease accuracy) as a JSON object.
std::string report_summary_json(const MetricsReport& report);

}  // namespace svgan
