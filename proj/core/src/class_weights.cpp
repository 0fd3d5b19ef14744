#include "svgan/class_weights.hpp"

#include <cmath>
#include <string>

#include "svgan/errors.hpp"

namespace svgan {

std::uint64_t ClassStats::total() const {
    std::uint64_t t = 0;
    for (std::uint64_t c : pixel_counts) t += c;
    return t;
}

ClassStats make_stats(std::size_t num_classes) {
    if (num_classes == 0) throw ValidationError("class stats: need at least one class");
    ClassStats s;
    s.pixel_counts.assign(num_classes, 0);
    return s;
}

void accumulate_stats(ClassStats& stats, std::span<const std::uint8_t> labels) {
    const std::size_t n = stats.num_classes();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::uint8_t v = labels[i];
        if (v >= n) {
            throw ValidationError("class stats: label value " + std::to_string(int(v)) +
                                  " at offset " + std::to_string(i) + " exceeds class count " +
                                  std::to_string(n));
        }
        ++stats.pixel_counts[v];
    }
}

std::vector<double> compute_weights(const ClassStats& stats) {
    const std::size_t n = stats.num_classes();
    if (n == 0) throw ValidationError("class weights: empty statistics");
    const std::uint64_t total = stats.total();
    if (total == 0) throw ValidationError("class weights: statistics contain no pixels");
    const double mean_cardinality = static_cast<double>(total) / static_cast<double>(n);
    std::vector<double> w(n);
    for (std::size_t c = 0; c < n; ++c) {
        const double f = static_cast<double>(stats.pixel_counts[c]);
        w[c] = std::sqrt(mean_cardinality / (f + static_cast<double>(n)));
    }
    return w;
}

} // namespace svgan
