#include "svgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>

#include <json.hpp>

#include "svgan/errors.hpp"

namespace svgan {
namespace {

void check_same_shape(const Mask& a, const Mask& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(what) + ": mask shapes differ, " + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width));
  }
}

struct Pixel {
  int r;
  int c;
};

// Mask pixels on the image border or adjacent (4-neighborhood) to a non-mask
// pixel.
std::vector<Pixel> boundary_pixels(const Mask& m) {
  std::vector<Pixel> out;
  const int h = static_cast<int>(m.height);
  const int w = static_cast<int>(m.width);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!m.data[static_cast<std::size_t>(r) * m.width + c]) continue;
      bool boundary = r == 0 || c == 0 || r == h - 1 || c == w - 1;
      if (!boundary) {
        boundary = !m.at(r - 1, c) || !m.at(r + 1, c) || !m.at(r, c - 1) || !m.at(r, c + 1);
      }
      if (boundary) out.push_back({r, c});
    }
  }
  return out;
}

// max over a of min over b of squared Euclidean distance. Once the running
// minimum for a point drops to the current maximum it can no longer raise it,
// so the inner scan stops early.
std::int64_t directed_sq(const std::vector<Pixel>& from, const std::vector<Pixel>& to) {
  std::int64_t worst = 0;
  for (const Pixel& a : from) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (const Pixel& b : to) {
      const std::int64_t dr = a.r - b.r;
      const std::int64_t dc = a.c - b.c;
      best = std::min(best, dr * dr + dc * dc);
      if (best <= worst) break;
    }
    worst = std::max(worst, best);
  }
  return worst;
}

struct OverlapCounts {
  std::size_t intersect = 0;
  std::size_t pred = 0;
  std::size_t gt = 0;
};

OverlapCounts overlap(const Mask& pred, const Mask& gt) {
  OverlapCounts n;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] != 0;
    const bool g = gt.data[i] != 0;
    n.intersect += static_cast<std::size_t>(p && g);
    n.pred += static_cast<std::size_t>(p);
    n.gt += static_cast<std::size_t>(g);
  }
  return n;
}

double dice_from_counts(std::size_t intersect, std::size_t pred, std::size_t gt) {
  if (pred + gt == 0) return 1.0;
  return 2.0 * static_cast<double>(intersect) / static_cast<double>(pred + gt);
}

void check_region_classes(const RegionSpec& spec, std::size_t num_classes) {
  if (spec.classes.empty()) return;
  for (std::uint8_t cls : spec.classes) {
    if (cls >= num_classes) {
      throw ValidationError("region '" + spec.name + "' references class " + std::to_string(cls) +
                            " but only " + std::to_string(num_classes) + " classes exist");
    }
  }
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& values,
                                   std::size_t& excluded) {
  double sum = 0.0;
  std::size_t n = 0;
  excluded = 0;
  for (const auto& v : values) {
    if (v.has_value()) {
      sum += *v;
      ++n;
    } else {
      ++excluded;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

void write_optional(std::ostream& out, const std::optional<double>& v) {
  if (v.has_value()) {
    out << *v;
  } else {
    out << "NA";
  }
}

}  // namespace

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

Mask class_mask(std::span<const std::uint8_t> labels, std::size_t h, std::size_t w,
                std::uint8_t cls) {
  if (labels.size() != h * w) {
    throw ShapeError("class_mask: label count " + std::to_string(labels.size()) +
                     " does not match " + std::to_string(h) + "x" + std::to_string(w));
  }
  Mask m = Mask::zeros(h, w);
  for (std::size_t i = 0; i < labels.size(); ++i) m.data[i] = labels[i] == cls ? 1 : 0;
  return m;
}

Mask union_mask(std::span<const std::uint8_t> labels, std::size_t h, std::size_t w,
                std::span<const std::uint8_t> classes) {
  if (labels.size() != h * w) {
    throw ShapeError("union_mask: label count " + std::to_string(labels.size()) +
                     " does not match " + std::to_string(h) + "x" + std::to_string(w));
  }
  Mask m = Mask::zeros(h, w);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::uint8_t cls : classes) {
      if (labels[i] == cls) {
        m.data[i] = 1;
        break;
      }
    }
  }
  return m;
}

double dice(const Mask& a, const Mask& b) {
  check_same_shape(a, b, "dice");
  const OverlapCounts n = overlap(a, b);
  return dice_from_counts(n.intersect, n.pred, n.gt);
}

std::optional<double> hausdorff(const Mask& a, const Mask& b) {
  check_same_shape(a, b, "hausdorff");
  const std::vector<Pixel> ba = boundary_pixels(a);
  const std::vector<Pixel> bb = boundary_pixels(b);
  if (ba.empty() || bb.empty()) return std::nullopt;
  const std::int64_t sq = std::max(directed_sq(ba, bb), directed_sq(bb, ba));
  return std::sqrt(static_cast<double>(sq));
}

std::optional<double> sensitivity(const Mask& pred, const Mask& gt) {
  check_same_shape(pred, gt, "sensitivity");
  const OverlapCounts n = overlap(pred, gt);
  if (n.gt == 0) return std::nullopt;
  return static_cast<double>(n.intersect) / static_cast<double>(n.gt);
}

double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
  if (pred.size() != truth.size()) {
    throw ShapeError("accuracy: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " labels");
  }
  if (pred.empty()) throw ValidationError("accuracy: empty label lists");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += static_cast<std::size_t>(pred[i] == truth[i]);
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::vector<RegionSpec> identity_regions(std::size_t num_classes,
                                         const std::vector<std::string>& names) {
  if (!names.empty() && names.size() != num_classes) {
    throw ValidationError("identity_regions: " + std::to_string(names.size()) + " names for " +
                          std::to_string(num_classes) + " classes");
  }
  std::vector<RegionSpec> specs;
  specs.reserve(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::string name = names.empty() ? "class" + std::to_string(k) : names[k];
    specs.push_back({std::move(name), {static_cast<std::uint8_t>(k)}});
  }
  return specs;
}

std::vector<Mask> composite_regions(std::span<const std::uint8_t> labels, std::size_t h,
                                    std::size_t w, std::span<const RegionSpec> specs,
                                    std::size_t num_classes) {
  std::vector<Mask> masks;
  masks.reserve(specs.size());
  for (const RegionSpec& spec : specs) {
    check_region_classes(spec, num_classes);
    masks.push_back(union_mask(labels, h, w, spec.classes));
  }
  return masks;
}

std::vector<RegionScore> evaluate_patient(const LabelVolumeView& pred, const LabelVolumeView& gt,
                                          std::span<const RegionSpec> specs,
                                          std::size_t num_classes) {
  if (pred.slices != gt.slices || pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("evaluate_patient: prediction and ground-truth volume shapes differ");
  }
  if (pred.labels.size() != pred.slices * pred.height * pred.width ||
      gt.labels.size() != gt.slices * gt.height * gt.width) {
    throw ShapeError("evaluate_patient: label buffer does not match declared volume shape");
  }
  for (const RegionSpec& spec : specs) check_region_classes(spec, num_classes);

  std::vector<RegionScore> scores(specs.size());
  std::vector<OverlapCounts> totals(specs.size());
  std::vector<std::optional<double>> worst_hd(specs.size());

  for (std::size_t s = 0; s < pred.slices; ++s) {
    const auto pred_slice = pred.slice(s);
    const auto gt_slice = gt.slice(s);
    for (std::size_t k = 0; k < specs.size(); ++k) {
      const Mask pm = union_mask(pred_slice, pred.height, pred.width, specs[k].classes);
      const Mask gm = union_mask(gt_slice, gt.height, gt.width, specs[k].classes);
      const OverlapCounts n = overlap(pm, gm);
      totals[k].intersect += n.intersect;
      totals[k].pred += n.pred;
      totals[k].gt += n.gt;
      if (const auto hd = hausdorff(pm, gm)) {
        worst_hd[k] = std::max(worst_hd[k].value_or(0.0), *hd);
      }
    }
  }

  for (std::size_t k = 0; k < specs.size(); ++k) {
    scores[k].dice = dice_from_counts(totals[k].intersect, totals[k].pred, totals[k].gt);
    scores[k].hausdorff = worst_hd[k];
    if (totals[k].gt > 0) {
      scores[k].sensitivity =
          static_cast<double>(totals[k].intersect) / static_cast<double>(totals[k].gt);
    }
  }
  return scores;
}

MetricsReport build_report(std::span<const RegionSpec> specs, std::vector<PatientEval> patients,
                           std::span<const std::size_t> disease_pred,
                           std::span<const std::size_t> disease_true) {
  for (const PatientEval& p : patients) {
    if (p.regions.size() != specs.size()) {
      throw ValidationError("build_report: patient '" + p.id + "' has " +
                            std::to_string(p.regions.size()) + " region scores, expected " +
                            std::to_string(specs.size()));
    }
  }
  if (disease_pred.size() != disease_true.size()) {
    throw ShapeError("build_report: " + std::to_string(disease_pred.size()) +
                     " disease predictions vs " + std::to_string(disease_true.size()) + " labels");
  }

  MetricsReport report;
  for (const RegionSpec& spec : specs) report.region_names.push_back(spec.name);
  report.patients = std::move(patients);

  for (std::size_t k = 0; k < specs.size(); ++k) {
    RegionSummary row;
    row.name = specs[k].name;
    double dice_sum = 0.0;
    std::vector<std::optional<double>> hds;
    std::vector<std::optional<double>> sens;
    for (const PatientEval& p : report.patients) {
      dice_sum += p.regions[k].dice;
      hds.push_back(p.regions[k].hausdorff);
      sens.push_back(p.regions[k].sensitivity);
    }
    row.mean_dice =
        report.patients.empty() ? 0.0 : dice_sum / static_cast<double>(report.patients.size());
    row.mean_hausdorff = mean_defined(hds, row.hausdorff_excluded);
    row.mean_sensitivity = mean_defined(sens, row.sensitivity_excluded);
    report.summary.push_back(std::move(row));
  }

  if (!disease_pred.empty()) report.disease_accuracy = accuracy(disease_pred, disease_true);
  return report;
}

void write_report_csv(const MetricsReport& report, std::ostream& out) {
  out << "patient,region,dice,hausdorff,sensitivity\n";
  out << std::setprecision(9);
  for (const PatientEval& p : report.patients) {
    for (std::size_t k = 0; k < report.region_names.size(); ++k) {
      out << p.id << ',' << report.region_names[k] << ',' << p.regions[k].dice << ',';
      write_optional(out, p.regions[k].hausdorff);
      out << ',';
      write_optional(out, p.regions[k].sensitivity);
      out << '\n';
    }
  }
}

std::string report_summary_json(const MetricsReport& report) {
  nlohmann::json j;
  j["num_patients"] = report.patients.size();
  j["regions"] = nlohmann::json::array();
  for (const RegionSummary& row : report.summary) {
    nlohmann::json r;
    r["name"] = row.name;
    r["mean_dice"] = row.mean_dice;
    r["mean_hausdorff"] =
        row.mean_hausdorff ? nlohmann::json(*row.mean_hausdorff) : nlohmann::json(nullptr);
    r["hausdorff_excluded"] = row.hausdorff_excluded;
    r["mean_sensitivity"] =
        row.mean_sensitivity ? nlohmann::json(*row.mean_sensitivity) : nlohmann::json(nullptr);
    r["sensitivity_excluded"] = row.sensitivity_excluded;
    j["regions"].push_back(std::move(r));
  }
  j["disease_accuracy"] =
      report.disease_accuracy ? nlohmann::json(*report.disease_accuracy) : nlohmann::json(nullptr);
  return j.dump(2);
}

}  // namespace svgan
