#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "svgan/trainer.hpp"

namespace svgan {

struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major RGB triples
};

/// Side-by-side overlay of ground truth (left) and prediction (right) on the
/// grayscale intensity slice. Classes 1, 2, 3, ... are tinted red, blue, green,
/// cycling; class 0 shows the plain intensity. A 2px white gutter separates the
/// halves.
RgbImage overlay_slice(std::span<const float> intensities, std::span<const std::uint8_t> truth,
                       std::span<const std::uint8_t> prediction, std::size_t height,
                       std::size_t width, double alpha = 0.55);

void write_ppm(const RgbImage& image, const std::filesystem::path& path);

/// Self-contained SVG line chart of one loss term over steps.
std::string loss_curve_svg(std::span<const double> values, const std::string& title);

/// One SVG per logged loss term (loss_adv_d.svg, ..., loss_total.svg) under dir.
/// Returns the written paths.
std::vector<std::filesystem::path> write_loss_curves(const TrainLog& log,
                                                     const std::filesystem::path& dir);

}  // namespace svgan
