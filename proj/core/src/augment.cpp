#include <algorithm>
#include <cmath>
#include <numbers>

#include "svgan/data.hpp"
#include "svgan/errors.hpp"

namespace svgan {
namespace {

struct AffineMap {
  double cy, cx;       // source-space center of the sampled window
  double k;            // source step per output pixel (crop fraction / scale)
  double cos_t, sin_t;
  double half_h, half_w;

  void source(double ro, double co, double& ys, double& xs) const {
    const double yo = ro - half_h;
    const double xo = co - half_w;
    ys = cy + k * (cos_t * yo - sin_t * xo);
    xs = cx + k * (sin_t * yo + cos_t * xo);
  }
};

float bilinear(const float* plane, std::size_t h, std::size_t w, double ys, double xs) {
  const double yc = std::clamp(ys, 0.0, static_cast<double>(h - 1));
  const double xc = std::clamp(xs, 0.0, static_cast<double>(w - 1));
  const std::size_t y0 = static_cast<std::size_t>(yc);
  const std::size_t x0 = static_cast<std::size_t>(xc);
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const double fy = yc - static_cast<double>(y0);
  const double fx = xc - static_cast<double>(x0);
  const double top = (1.0 - fx) * plane[y0 * w + x0] + fx * plane[y0 * w + x1];
  const double bot = (1.0 - fx) * plane[y1 * w + x0] + fx * plane[y1 * w + x1];
  return static_cast<float>((1.0 - fy) * top + fy * bot);
}

std::uint8_t nearest(const std::uint8_t* plane, std::size_t h, std::size_t w, double ys,
                     double xs) {
  const auto y = static_cast<std::size_t>(
      std::clamp(std::llround(ys), 0ll, static_cast<long long>(h - 1)));
  const auto x = static_cast<std::size_t>(
      std::clamp(std::llround(xs), 0ll, static_cast<long long>(w - 1)));
  return plane[y * w + x];
}

}  // namespace

void AugmentationConfig::validate() const {
  if (!(crop_fraction_min > 0.0) || crop_fraction_min > crop_fraction_max ||
      crop_fraction_max > 1.0) {
    throw ValidationError("augmentation: crop fraction range must satisfy 0 < min <= max <= 1");
  }
  if (!(scale_min > 0.0) || scale_min > scale_max) {
    throw ValidationError("augmentation: scale range must satisfy 0 < min <= max");
  }
  if (rotation_min_deg < -10.0 || rotation_min_deg > rotation_max_deg ||
      rotation_max_deg > 10.0) {
    throw ValidationError("augmentation: rotation range must lie inside [-10, 10] degrees");
  }
  if (gaussian_noise_sigma < 0.0) throw ValidationError("augmentation: noise sigma must be >= 0");
  if (p_geometry < 0.0 || p_geometry > 1.0 || p_noise < 0.0 || p_noise > 1.0) {
    throw ValidationError("augmentation: per-op probabilities must lie in [0, 1]");
  }
}

PatientRecord augment_record(const PatientRecord& record, const VolumeDims& dims,
                             const AugmentationConfig& config, Rng& rng) {
  config.validate();
  if (record.volume.size() != dims.volume_size() ||
      record.labels.size() != dims.voxels_per_modality()) {
    throw ValidationError("augment: patient '" + record.id + "' does not match the given dims");
  }

  const std::size_t h = dims.height;
  const std::size_t w = dims.width;
  const bool apply_geometry = rng.uniform() < config.p_geometry;
  const double f = rng.uniform(config.crop_fraction_min, config.crop_fraction_max);
  const double margin_y = 0.5 * (1.0 - f) * static_cast<double>(h - 1);
  const double margin_x = 0.5 * (1.0 - f) * static_cast<double>(w - 1);
  const double cy = 0.5 * static_cast<double>(h - 1) + rng.uniform(-1.0, 1.0) * margin_y;
  const double cx = 0.5 * static_cast<double>(w - 1) + rng.uniform(-1.0, 1.0) * margin_x;
  const double s = rng.uniform(config.scale_min, config.scale_max);
  const double theta =
      rng.uniform(config.rotation_min_deg, config.rotation_max_deg) * std::numbers::pi / 180.0;
  const bool apply_noise = rng.uniform() < config.p_noise && config.gaussian_noise_sigma > 0.0;

  PatientRecord out;
  out.id = record.id;
  out.disease = record.disease;

  const bool identity = !apply_geometry || (f == 1.0 && s == 1.0 && theta == 0.0);
  if (identity) {
    out.volume = record.volume;
    out.labels = record.labels;
  } else {
    out.volume.resize(record.volume.size());
    out.labels.resize(record.labels.size());
    AffineMap map{cy, cx, f / s, std::cos(theta), std::sin(theta),
                  0.5 * static_cast<double>(h - 1), 0.5 * static_cast<double>(w - 1)};

    for (std::size_t m = 0; m < dims.modalities; ++m) {
      for (std::size_t sl = 0; sl < dims.slices; ++sl) {
        const float* src = record.volume.data() + (m * dims.slices + sl) * h * w;
        float* dst = out.volume.data() + (m * dims.slices + sl) * h * w;
        for (std::size_t r = 0; r < h; ++r) {
          for (std::size_t c = 0; c < w; ++c) {
            double ys, xs;
            map.source(static_cast<double>(r), static_cast<double>(c), ys, xs);
            dst[r * w + c] = bilinear(src, h, w, ys, xs);
          }
        }
      }
    }
    for (std::size_t sl = 0; sl < dims.slices; ++sl) {
      const std::uint8_t* src = record.labels.data() + sl * h * w;
      std::uint8_t* dst = out.labels.data() + sl * h * w;
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          double ys, xs;
          map.source(static_cast<double>(r), static_cast<double>(c), ys, xs);
          dst[r * w + c] = nearest(src, h, w, ys, xs);
        }
      }
    }
  }

  if (apply_noise) {
    for (float& v : out.volume) {
      v += static_cast<float>(rng.normal(0.0, config.gaussian_noise_sigma));
    }
  }
  return out;
}

}  // namespace svgan
