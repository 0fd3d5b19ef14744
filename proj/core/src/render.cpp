#include "svgan/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "svgan/errors.hpp"

namespace svgan {
namespace {

constexpr std::uint8_t kClassColors[3][3] = {
    {220, 50, 47},   // class 1: red
    {38, 89, 221},   // class 2: blue
    {64, 169, 68},   // class 3: green
};

void tint(std::uint8_t* px, std::uint8_t gray, std::uint8_t label, double alpha) {
    if (label == 0) {
        px[0] = px[1] = px[2] = gray;
        return;
    }
    const std::uint8_t* color = kClassColors[(label - 1) % 3];
    for (int c = 0; c < 3; ++c) {
        const double v = alpha * color[c] + (1.0 - alpha) * gray;
        px[c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
}

std::string escape_xml(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

RgbImage overlay_slice(std::span<const float> intensities, std::span<const std::uint8_t> truth,
                       std::span<const std::uint8_t> prediction, std::size_t height,
                       std::size_t width, double alpha) {
    const std::size_t n = height * width;
    if (height == 0 || width == 0) throw ValidationError("overlay: empty slice");
    if (intensities.size() != n || truth.size() != n || prediction.size() != n) {
        throw ShapeError("overlay: slice buffers do not match " + std::to_string(height) + "x" +
                         std::to_string(width));
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("overlay: alpha must be in [0,1]");

    float lo = intensities[0], hi = intensities[0];
    for (float v : intensities) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const float range = hi > lo ? hi - lo : 1.0f;

    constexpr std::size_t kGutter = 2;
    RgbImage img;
    img.height = height;
    img.width = 2 * width + kGutter;
    img.pixels.assign(img.width * img.height * 3, 255);

    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t i = y * width + x;
            const double g = (intensities[i] - lo) / range;
            const auto gray = static_cast<std::uint8_t>(std::lround(255.0 * g));
            tint(&img.pixels[(y * img.width + x) * 3], gray, truth[i], alpha);
            tint(&img.pixels[(y * img.width + width + kGutter + x) * 3], gray, prediction[i],
                 alpha);
        }
    }
    return img;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
    if (image.pixels.size() != image.width * image.height * 3) {
        throw ShapeError("write_ppm: pixel buffer does not match dimensions");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string loss_curve_svg(std::span<const double> values, const std::string& title) {
    if (values.empty()) throw ValidationError("loss curve '" + title + "': no values");

    constexpr double kW = 800, kH = 400;
    constexpr double kLeft = 64, kRight = 16, kTop = 40, kBottom = 36;
    const double iw = kW - kLeft - kRight;
    const double ih = kH - kTop - kBottom;

    double lo = values[0], hi = values[0];
    for (double v : values) {
        if (!std::isfinite(v)) throw ValidationError("loss curve '" + title + "': non-finite value");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double pad = (hi - lo) * 0.05;
    if (pad == 0.0) pad = std::max(std::abs(lo) * 0.05, 0.5);
    lo -= pad;
    hi += pad;
    const double range = hi - lo;

    const auto sx = [&](std::size_t i) {
        return kLeft + (values.size() > 1 ? iw * static_cast<double>(i) /
                                                static_cast<double>(values.size() - 1)
                                          : iw / 2);
    };
    const auto sy = [&](double v) { return kTop + ih * (1.0 - (v - lo) / range); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
        << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
    svg << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"#ffffff\"/>\n";
    svg << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << escape_xml(title) << "</text>\n";

    for (int g = 0; g <= 4; ++g) {
        const double v = lo + range * g / 4.0;
        const double y = sy(v);
        svg << "<line x1=\"" << kLeft << "\" y1=\"" << fmt(y) << "\" x2=\"" << kW - kRight
            << "\" y2=\"" << fmt(y) << "\" stroke=\"#dddddd\"/>\n";
        svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(y + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v)
            << "</text>\n";
    }
    svg << "<text x=\"" << kLeft << "\" y=\"" << kH - 10
        << "\" font-family=\"sans-serif\" font-size=\"11\">step 0</text>\n";
    svg << "<text x=\"" << kW - kRight << "\" y=\"" << kH - 10
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">step "
        << values.size() - 1 << "</text>\n";

    svg << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) svg << ' ';
        svg << fmt(sx(i)) << ',' << fmt(sy(values[i]));
    }
    svg << "\"/>\n";
    svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << iw << "\" height=\""
        << ih << "\" fill=\"none\" stroke=\"#444444\"/>\n";
    svg << "</svg>\n";
    return svg.str();
}

std::vector<std::filesystem::path> write_loss_curves(const TrainLog& log,
                                                     const std::filesystem::path& dir) {
    if (log.steps.empty()) throw ValidationError("loss curves: log has no steps");
    std::filesystem::create_directories(dir);

    const std::pair<const char*, double StepLoss::*> terms[] = {
        {"adv_d", &StepLoss::adv_d}, {"adv_g", &StepLoss::adv_g}, {"seg_ce", &StepLoss::seg_ce},
        {"cls_l1", &StepLoss::cls_l1}, {"total", &StepLoss::total},
    };
    std::vector<std::filesystem::path> written;
    for (const auto& [name, member] : terms) {
        std::vector<double> values(log.steps.size());
        for (std::size_t i = 0; i < log.steps.size(); ++i) values[i] = log.steps[i].*member;
        const auto path = dir / (std::string("loss_") + name + ".svg");
        std::ofstream out(path);
        if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
        out << loss_curve_svg(values, name);
        written.push_back(path);
    }
    return written;
}

}  // namespace svgan
