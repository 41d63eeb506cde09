#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace flash {

struct SvgSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

// Minimal standalone SVG documents.
std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<SvgSeries>& series, int width = 640, int height = 400);

// Row-major grid; NaN cells are drawn grey. Colour scale is linear from
// min to max of the finite values.
std::string svg_heatmap(const std::string& title, const std::vector<double>& values, std::size_t rows,
                        std::size_t cols, int cell_w = 2, int cell_h = 4);

}  // namespace flash
