// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crossalign/binary_io.hpp"
#include "crossalign/error.hpp"

namespace crossalign {

inline constexpr std::size_t kPaletteSize = 50;

/// Fixed 50-color cycle: 25 evenly spaced hues at two lightness levels.
inline std::string palette_color(std::size_t class_index) {
    const std::size_t i = class_index % kPaletteSize;
    const double hue = static_cast<double>((i % 25) * 360) / 25.0 + (i >= 25 ? 7.2 : 0.0);
    const double light = i >= 25 ? 0.35 : 0.55;
    const double sat = 0.75;
    // HSL -> RGB
    const double c = (1.0 - std::abs(2.0 * light - 1.0)) * sat;
    const double hp = hue / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) r = c, g = x;
    else if (hp < 2) r = x, g = c;
    else if (hp < 3) g = c, b = x;
    else if (hp < 4) g = x, b = c;
    else if (hp < 5) r = x, b = c;
    else r = c, b = x;
    const double m = light - c / 2.0;
    auto byte = [m](double v) { return static_cast<int>(std::lround((v + m) * 255.0)); };
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", byte(r), byte(g), byte(b));
    return buf;
}

/// Self-contained SVG scatter of 2-D points (N x 2, row-major), one color per label.
inline std::string scatter_svg(std::span<const double> points, std::span<const std::size_t> labels) {
    if (points.size() != 2 * labels.size()) {
        fail(ErrorKind::usage, "scatter_svg: " + std::to_string(points.size() / 2) + " points but " +
                                   std::to_string(labels.size()) + " labels");
    }
    constexpr double size = 640.0, margin = 40.0, inner = size - 2 * margin;
    std::string svg;
    char buf[256];
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" viewBox=\"0 0 640 640\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"640\" fill=\"#ffffff\"/>\n";
    svg += "<g stroke=\"#000000\" stroke-width=\"1\">\n";
    svg += "<line x1=\"40\" y1=\"600\" x2=\"600\" y2=\"600\"/>\n";
    svg += "<line x1=\"40\" y1=\"40\" x2=\"40\" y2=\"600\"/>\n";
    svg += "</g>\n";

    const std::size_t n = labels.size();
    if (n > 0) {
        double xmin = points[0], xmax = points[0], ymin = points[1], ymax = points[1];
        for (std::size_t i = 0; i < n; ++i) {
            xmin = std::min(xmin, points[2 * i]);
            xmax = std::max(xmax, points[2 * i]);
            ymin = std::min(ymin, points[2 * i + 1]);
            ymax = std::max(ymax, points[2 * i + 1]);
        }
        const double xr = xmax > xmin ? xmax - xmin : 1.0;
        const double yr = ymax > ymin ? ymax - ymin : 1.0;
        svg += "<g stroke=\"none\">\n";
        for (std::size_t i = 0; i < n; ++i) {
            const double px = margin + (points[2 * i] - xmin) / xr * inner;
            const double py = size - margin - (points[2 * i + 1] - ymin) / yr * inner;
            std::snprintf(buf, sizeof buf, "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"3\" fill=\"%s\"/>\n", px, py,
                          palette_color(labels[i]).c_str());
            svg += buf;
        }
        svg += "</g>\n";
    }
    svg += "</svg>\n";
    return svg;
}

inline void emit_figure(std::span<const double> points, std::span<const std::size_t> labels,
                        const std::filesystem::path& path) {
    write_file(path, scatter_svg(points, labels));
}

}  // namespace crossalign
