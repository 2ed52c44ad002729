#pragma once

#include <string>
#include <vector>

#include "dynpet/vec.hpp"

namespace dynpet {

// Minimal self-contained SVG emitter for run reports: no display dependency,
// each document is a standalone file.
class SvgDocument {
public:
    SvgDocument(double width, double height);

    void rect(double x, double y, double w, double h, const std::string& fill);
    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              double width = 1.0);
    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                  double width = 1.0);
    void circle(double cx, double cy, double r, const std::string& fill);
    void text(double x, double y, const std::string& s, int font_size = 12);

    std::string str() const;
    void save(const std::string& path) const;

private:
    double w_, h_;
    std::string body_;
};

// Grayscale-to-viridis-like color for a value in [0, 1].
std::string heat_color(double v);

// Heatmap panel grid: one panel per time slice of a (N x ny x nx) field.
void save_slice_heatmaps(const std::string& path, const std::vector<double>& values, int n_slices,
                         int nx, double vmax = 0.0);

// Simple decay/step curve on a log-ish y scale.
void save_curve(const std::string& path, const std::vector<double>& xs,
                const std::vector<double>& ys, const std::string& x_label,
                const std::string& y_label);

}  // namespace dynpet
