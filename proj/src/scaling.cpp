#include "dynpet/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dynpet {

namespace {
void check(const ScaleTriple& s) {
    if (!(s.theta > 0 && s.lambda > 0 && s.mu > 0))
        throw std::invalid_argument("scaling: scales must be strictly positive");
}
}  // namespace

std::shared_ptr<const ScannerGeometry> rescale_geometry(const ScannerGeometry& geom,
                                                        const ScaleTriple& s) {
    check(s);
    return std::make_shared<ScannerGeometry>(geom.dim(), geom.radius_D() / s.lambda,
                                             geom.radius_Dd() / s.lambda, geom.num_detectors(),
                                             geom.num_time_bins(), geom.time_horizon() / s.theta,
                                             geom.center() / s.lambda);
}

Listmode rescale_measurement(const Listmode& lm, const ScaleTriple& s,
                             std::shared_ptr<const ScannerGeometry> rescaled_geom) {
    check(s);
    if (lm.mode != Mode::continuous)
        throw std::invalid_argument(
            "rescale_measurement: discrete-mode indices do not rescale; use continuous mode");
    Listmode out;
    out.geom = std::move(rescaled_geom);
    out.mode = Mode::continuous;
    out.seed = lm.seed;
    out.events.reserve(lm.events.size());
    for (const auto& e : lm.events) {
        ListmodeEvent r;
        r.t = e.t / s.theta;
        r.a = e.a / s.lambda;
        r.b = e.b / s.lambda;
        out.events.push_back(r);
    }
    return out;
}

GridMeasure rescale_solution(const GridMeasure& gm, const ScaleTriple& s,
                             std::shared_ptr<const Grid> rescaled_grid) {
    check(s);
    const Grid& src = *gm.grid;
    const Grid& dst = *rescaled_grid;
    if (src.nx() != dst.nx() || src.dim() != dst.dim() ||
        src.geom().num_time_bins() != dst.geom().num_time_bins())
        throw std::invalid_argument("rescale_solution: incompatible grid factors");
    GridMeasure out(std::move(rescaled_grid));
    const double rho_scale = 1.0 / (s.mu * s.theta);
    const double eta_scale = 1.0 / (s.mu * s.lambda);
    for (std::size_t i = 0; i < gm.rho.size(); ++i) out.rho[i] = gm.rho[i] * rho_scale;
    for (std::size_t i = 0; i < gm.eta.size(); ++i) out.eta[i] = gm.eta[i] * eta_scale;
    (void)dst;
    return out;
}

RescaledParameters rescaled_parameters(double beta, double T_half, double T, double radius_D,
                                       const ScaleTriple& s) {
    check(s);
    if (!(beta > 0 && T_half > 0 && T > 0 && radius_D > 0))
        throw std::invalid_argument("rescaled_parameters: inputs must be positive");
    return RescaledParameters{beta * s.mu * s.lambda * s.lambda / s.theta,
                              T_half / (s.mu * s.theta), T / s.theta, radius_D / s.lambda};
}

BetaHeuristicResult beta_heuristic(double v, double l, double mass, double T_half,
                                   const std::vector<std::pair<double, double>>& table) {
    if (!(v > 0 && l > 0 && mass > 0 && T_half > 0))
        throw std::invalid_argument("beta_heuristic: inputs must be positive");
    if (table.empty()) throw std::invalid_argument("beta_heuristic: empty table");
    double arg = v * T_half / (l * mass);
    BetaHeuristicResult res;
    double bh;
    if (arg <= table.front().first) {
        bh = table.front().second;
        res.clamped = arg < table.front().first;
    } else if (arg >= table.back().first) {
        bh = table.back().second;
        res.clamped = arg > table.back().first;
    } else {
        auto it = std::upper_bound(table.begin(), table.end(), arg,
                                   [](double a, const auto& p) { return a < p.first; });
        auto [x1, y1] = *(it - 1);
        auto [x2, y2] = *it;
        double w = (arg - x1) / (x2 - x1);
        bh = y1 + w * (y2 - y1);
    }
    res.beta = bh / (T_half * v * v);
    return res;
}

std::vector<std::pair<double, double>> read_beta_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_beta_table: cannot open " + path);
    std::vector<std::pair<double, double>> table;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string a, b;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
            throw std::runtime_error("read_beta_table: row " + std::to_string(row) +
                                     ": expected two comma-separated columns");
        table.emplace_back(std::stod(a), std::stod(b));
    }
    if (!std::is_sorted(table.begin(), table.end(),
                        [](const auto& l, const auto& r) { return l.first < r.first; }))
        throw std::runtime_error("read_beta_table: arguments must increase");
    return table;
}

}  // namespace dynpet
