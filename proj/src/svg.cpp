#include "dynpet/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace dynpet {

namespace {
std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
}
}  // namespace

SvgDocument::SvgDocument(double width, double height) : w_(width), h_(height) {}

void SvgDocument::rect(double x, double y, double w, double h, const std::string& fill) {
    body_ += fmt("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\"/>\n", x,
                 y, w, h, fill.c_str());
}

void SvgDocument::line(double x1, double y1, double x2, double y2, const std::string& stroke,
                       double width) {
    body_ += fmt(
        "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" stroke-width=\"%.2f\"/>\n",
        x1, y1, x2, y2, stroke.c_str(), width);
}

void SvgDocument::polyline(const std::vector<std::pair<double, double>>& pts,
                           const std::string& stroke, double width) {
    std::string p;
    for (auto [x, y] : pts) p += fmt("%.2f,%.2f ", x, y);
    body_ += fmt("<polyline points=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"%.2f\"/>\n",
                 p.c_str(), stroke.c_str(), width);
}

void SvgDocument::circle(double cx, double cy, double r, const std::string& fill) {
    body_ += fmt("<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"%s\"/>\n", cx, cy, r,
                 fill.c_str());
}

void SvgDocument::text(double x, double y, const std::string& s, int font_size) {
    body_ += fmt("<text x=\"%.2f\" y=\"%.2f\" font-size=\"%d\" font-family=\"sans-serif\">%s</text>\n",
                 x, y, font_size, s.c_str());
}

std::string SvgDocument::str() const {
    return fmt("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
               "viewBox=\"0 0 %.0f %.0f\">\n<rect width=\"100%%\" height=\"100%%\" "
               "fill=\"white\"/>\n",
               w_, h_, w_, h_) +
           body_ + "</svg>\n";
}

void SvgDocument::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("svg: cannot open " + path);
    out << str();
}

std::string heat_color(double v) {
    v = std::clamp(v, 0.0, 1.0);
    // Dark blue -> teal -> yellow ramp.
    int r = (int)std::lround(255 * std::clamp(1.8 * v - 0.8, 0.0, 1.0));
    int g = (int)std::lround(255 * std::clamp(1.4 * v, 0.0, 1.0));
    int b = (int)std::lround(255 * std::clamp(0.95 - 0.8 * v, 0.1, 1.0));
    return fmt("#%02x%02x%02x", r, g, b);
}

void save_slice_heatmaps(const std::string& path, const std::vector<double>& values, int n_slices,
                         int nx, double vmax) {
    const int cell = std::max(2, 192 / nx);
    const int pad = 6;
    const int panel = nx * cell + pad;
    const int cols = std::min(n_slices, 5);
    const int rows = (n_slices + cols - 1) / cols;
    SvgDocument doc((double)cols * panel + pad, (double)rows * panel + pad);
    if (vmax <= 0.0)
        for (double v : values) vmax = std::max(vmax, v);
    if (vmax <= 0.0) vmax = 1.0;
    for (int t = 0; t < n_slices; ++t) {
        double ox = pad + (t % cols) * panel;
        double oy = pad + (t / cols) * panel;
        for (int iy = 0; iy < nx; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                double v = values[((std::size_t)t * nx + iy) * nx + ix] / vmax;
                // y axis points up in world coordinates.
                doc.rect(ox + ix * cell, oy + (nx - 1 - iy) * cell, cell, cell, heat_color(v));
            }
    }
    doc.save(path);
}

void save_curve(const std::string& path, const std::vector<double>& xs,
                const std::vector<double>& ys, const std::string& x_label,
                const std::string& y_label) {
    const double W = 520, H = 320, L = 60, B = 40;
    SvgDocument doc(W, H);
    if (xs.empty() || xs.size() != ys.size()) {
        doc.save(path);
        return;
    }
    double xmin = xs[0], xmax = xs[0], ymin = ys[0], ymax = ys[0];
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (std::isfinite(xs[i])) {
            xmin = std::min(xmin, xs[i]);
            xmax = std::max(xmax, xs[i]);
        }
        if (std::isfinite(ys[i])) {
            ymin = std::min(ymin, ys[i]);
            ymax = std::max(ymax, ys[i]);
        }
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto X = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - 20); };
    auto Y = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - B - 20); };
    doc.line(L, H - B, W - 20, H - B, "#333");
    doc.line(L, H - B, L, 20, "#333");
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (std::isfinite(ys[i])) pts.emplace_back(X(xs[i]), Y(ys[i]));
    doc.polyline(pts, "#0a62a8", 1.6);
    for (auto [px, py] : pts) doc.circle(px, py, 2.2, "#0a62a8");
    doc.text(W / 2 - 20, H - 8, x_label);
    doc.text(8, 14, y_label);
    doc.save(path);
}

}  // namespace dynpet
