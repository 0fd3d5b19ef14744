#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "svgan/data.hpp"
#include "svgan/errors.hpp"

namespace svgan {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct OrganShape {
  double cy, cx;        // base center
  double ay, ax;        // base semi-axes
  double drift_amp_y, drift_amp_x, drift_phase;
  double wobble_amp, wobble_phase;

  double center_y(double t) const { return cy + drift_amp_y * std::sin(kTwoPi * t + drift_phase); }
  double center_x(double t) const { return cx + drift_amp_x * std::cos(kTwoPi * t + drift_phase); }
  double axis_y(double t) const { return ay * (1.0 + wobble_amp * std::sin(kTwoPi * t + wobble_phase)); }
  double axis_x(double t) const { return ax * (1.0 + wobble_amp * std::cos(kTwoPi * t + wobble_phase)); }
};

struct LesionShape {
  double angle, angle_rate;  // position inside the organ, drifting
  double rho_frac;           // radial position as a fraction of the free room
  double radius;             // base radius
  double pulse_phase;
  std::uint8_t cls;

  double radius_at(double t) const {
    return radius * (0.925 + 0.075 * std::sin(kTwoPi * t + pulse_phase));
  }
};

// Per-modality intensity for a segmentation class. The first two modalities
// use hand-picked contrasts (lesion bright in 0, dark in 1); further
// modalities are smooth perturbations of those.
double class_intensity(std::size_t modality, std::uint8_t cls) {
  double v;
  const std::size_t base = modality % 2;
  if (cls == 0) {
    v = base == 0 ? 0.10 : 0.15;
  } else if (cls == 1) {
    v = base == 0 ? 0.55 : 0.85;
  } else {
    v = base == 0 ? 0.95 : 0.30;
    v += 0.06 * static_cast<double>((cls - 2) % 3);
  }
  if (modality >= 2) {
    v += 0.1 * std::sin(1.7 * static_cast<double>(modality) + static_cast<double>(cls));
  }
  return std::clamp(v, 0.05, 1.0);
}

}  // namespace

void PhantomConfig::validate() const {
  if (num_patients == 0 || slices == 0 || height == 0 || width == 0 || num_modalities == 0) {
    throw ValidationError("phantom config: all counts must be positive");
  }
  if (num_seg_classes < 3) {
    throw ValidationError("phantom config: num_seg_classes must be >= 3 "
                          "(background, organ, lesion), got " +
                          std::to_string(num_seg_classes));
  }
  if (num_diseases == 0) throw ValidationError("phantom config: num_diseases must be positive");
  if (!(lesion_fraction_target > 0.0) || lesion_fraction_target > 0.2) {
    throw ValidationError("phantom config: lesion_fraction_target must lie in (0, 0.2], got " +
                          std::to_string(lesion_fraction_target));
  }
  if (height < 8 || width < 8) {
    throw ValidationError("phantom config: images must be at least 8x8");
  }
}

std::vector<std::string> default_class_names(std::size_t num_seg_classes) {
  std::vector<std::string> names{"background", "organ", "lesion"};
  for (std::size_t k = 3; k < num_seg_classes; ++k) {
    names.push_back("lesion" + std::to_string(k - 1));
  }
  names.resize(num_seg_classes);
  return names;
}

Dataset generate_phantoms(const PhantomConfig& config) {
  config.validate();

  const double hd = static_cast<double>(config.height);
  const double wd = static_cast<double>(config.width);
  const double min_dim = std::min(hd, wd);
  const double target_area = config.lesion_fraction_target * hd * wd;

  // Feasibility: the largest lesion any disease can request has to fit inside
  // the most conservative organ the sampler can produce.
  const double organ_floor = 0.27 * min_dim * 0.9;
  std::size_t max_count = 1;
  double max_size_factor = 1.0;
  for (std::size_t d = 0; d < config.num_diseases; ++d) {
    max_count = std::max(max_count, 1 + d % 3);
    max_size_factor = std::max(max_size_factor, 1.0 + 0.3 * static_cast<double>(d / 3));
  }
  const double worst_radius =
      std::sqrt(target_area / std::numbers::pi) * max_size_factor;
  if (worst_radius + 1.0 >= organ_floor) {
    throw ValidationError("phantom config: infeasible geometry, lesion radius " +
                          std::to_string(worst_radius) + " does not fit inside an organ semi-axis of " +
                          std::to_string(organ_floor) + " pixels");
  }

  Dataset ds;
  ds.dims = {config.num_modalities, config.slices, config.height, config.width};
  ds.num_seg_classes = config.num_seg_classes;
  ds.num_diseases = config.num_diseases;
  ds.class_names = default_class_names(config.num_seg_classes);
  ds.patients.reserve(config.num_patients);

  Rng root(config.seed);
  for (std::size_t p = 0; p < config.num_patients; ++p) {
    Rng rng = root.derive(p);

    PatientRecord rec;
    {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "p%04zu", p);
      rec.id = buf;
    }
    rec.disease = rng.uniform_int(config.num_diseases);
    rec.volume.assign(ds.dims.volume_size(), 0.0f);
    rec.labels.assign(ds.dims.voxels_per_modality(), 0);

    OrganShape organ;
    organ.cy = 0.5 * hd + rng.uniform(-0.06, 0.06) * hd;
    organ.cx = 0.5 * wd + rng.uniform(-0.06, 0.06) * wd;
    organ.ay = rng.uniform(0.27, 0.33) * hd;
    organ.ax = rng.uniform(0.27, 0.33) * wd;
    organ.drift_amp_y = rng.uniform(0.01, 0.04) * hd;
    organ.drift_amp_x = rng.uniform(0.01, 0.04) * wd;
    organ.drift_phase = rng.uniform(0.0, kTwoPi);
    organ.wobble_amp = rng.uniform(0.03, 0.10);
    organ.wobble_phase = rng.uniform(0.0, kTwoPi);

    const std::size_t count = 1 + rec.disease % 3;
    const double size_factor = 1.0 + 0.3 * static_cast<double>(rec.disease / 3);
    const double radius =
        std::sqrt(target_area / (static_cast<double>(count) * std::numbers::pi)) * size_factor;

    std::vector<LesionShape> lesions(count);
    for (std::size_t j = 0; j < count; ++j) {
      LesionShape& l = lesions[j];
      l.angle = rng.uniform(0.0, kTwoPi);
      l.angle_rate = rng.uniform(-0.4, 0.4);
      l.rho_frac = rng.uniform(0.15, 0.7);
      l.radius = radius;
      l.pulse_phase = rng.uniform(0.0, kTwoPi);
      l.cls = static_cast<std::uint8_t>(2 + j % (config.num_seg_classes - 2));
    }

    const double shade_phase = rng.uniform(0.0, kTwoPi);

    for (std::size_t s = 0; s < config.slices; ++s) {
      const double t = config.slices == 1
                           ? 0.0
                           : static_cast<double>(s) / static_cast<double>(config.slices - 1);
      const double ocy = organ.center_y(0.35 * t);
      const double ocx = organ.center_x(0.35 * t);
      const double oay = organ.axis_y(0.5 * t);
      const double oax = organ.axis_x(0.5 * t);
      const double room = std::min(oay, oax);

      std::uint8_t* lbl = rec.labels.data() + s * config.height * config.width;
      for (std::size_t y = 0; y < config.height; ++y) {
        for (std::size_t x = 0; x < config.width; ++x) {
          const double dy = (static_cast<double>(y) - ocy) / oay;
          const double dx = (static_cast<double>(x) - ocx) / oax;
          if (dy * dy + dx * dx <= 1.0) lbl[y * config.width + x] = 1;
        }
      }
      for (const LesionShape& l : lesions) {
        const double r = l.radius_at(t);
        const double rho = l.rho_frac * std::max(0.0, room - r - 1.0);
        const double phi = l.angle + l.angle_rate * t * kTwoPi * 0.25;
        const double lcy = ocy + rho * std::sin(phi);
        const double lcx = ocx + rho * std::cos(phi);
        for (std::size_t y = 0; y < config.height; ++y) {
          for (std::size_t x = 0; x < config.width; ++x) {
            if (lbl[y * config.width + x] == 0) continue;  // lesions live inside the organ
            const double dy = static_cast<double>(y) - lcy;
            const double dx = static_cast<double>(x) - lcx;
            if (dy * dy + dx * dx <= r * r) lbl[y * config.width + x] = l.cls;
          }
        }
      }
    }

    // Intensities: class contrast, gentle radial shading inside the organ,
    // slow per-slice gain drift, then voxel noise.
    for (std::size_t m = 0; m < config.num_modalities; ++m) {
      for (std::size_t s = 0; s < config.slices; ++s) {
        const double t = config.slices == 1
                             ? 0.0
                             : static_cast<double>(s) / static_cast<double>(config.slices - 1);
        const double gain =
            1.0 + 0.02 * std::sin(kTwoPi * t + shade_phase + static_cast<double>(m));
        const double ocy = organ.center_y(0.35 * t);
        const double ocx = organ.center_x(0.35 * t);
        const double oay = organ.axis_y(0.5 * t);
        const double oax = organ.axis_x(0.5 * t);
        const std::uint8_t* lbl = rec.labels.data() + s * config.height * config.width;
        float* vox = rec.volume.data() + (m * config.slices + s) * config.height * config.width;
        for (std::size_t y = 0; y < config.height; ++y) {
          for (std::size_t x = 0; x < config.width; ++x) {
            const std::uint8_t cls = lbl[y * config.width + x];
            double v = class_intensity(m, cls);
            if (cls != 0) {
              const double dy = (static_cast<double>(y) - ocy) / oay;
              const double dx = (static_cast<double>(x) - ocx) / oax;
              v *= 1.0 - 0.12 * (dy * dy + dx * dx);
            }
            vox[y * config.width + x] = static_cast<float>(v * gain);
          }
        }
      }
    }
    for (float& v : rec.volume) v += static_cast<float>(rng.normal(0.0, 0.04));

    ds.patients.push_back(std::move(rec));
  }
  return ds;
}

double lesion_fraction(const Dataset& dataset) {
  std::size_t lesion = 0;
  std::size_t total = 0;
  for (const PatientRecord& p : dataset.patients) {
    for (std::uint8_t v : p.labels) lesion += static_cast<std::size_t>(v >= 2);
    total += p.labels.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(lesion) / static_cast<double>(total);
}

}  // namespace svgan
