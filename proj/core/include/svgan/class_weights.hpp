#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace svgan {

/// Per-class pixel counts accumulated over a training label set.
struct ClassStats {
    std::vector<std::uint64_t> pixel_counts;

    std::size_t num_classes() const { return pixel_counts.size(); }
    std::uint64_t total() const;
};

ClassStats make_stats(std::size_t num_classes);

/// Adds one label map (any geometry, flattened) to the histogram. Labels
/// outside [0, num_classes) raise ValidationError.
void accumulate_stats(ClassStats& stats, std::span<const std::uint8_t> labels);

/// Selective class weights: w_c = sqrt((T/N) / (f_c + N)) with f_c the pixel
/// count of class c, T the total count and N the number of classes. Rare
/// classes get weights above 1, dominant ones below.
std::vector<double> compute_weights(const ClassStats& stats);

} // namespace svgan
