#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dynpet/grid.hpp"
#include "dynpet/listmode.hpp"

namespace dynpet {

// Nondimensionalization triple: time / length / mass scales.
struct ScaleTriple {
    double theta = 1.0;
    double lambda = 1.0;
    double mu = 1.0;
};

// Geometry under the coordinate change (t, x) -> (t/theta, x/lambda): radii
// and center divided by lambda, horizon by theta; cell counts unchanged.
std::shared_ptr<const ScannerGeometry> rescale_geometry(const ScannerGeometry& geom,
                                                        const ScaleTriple& s);

// Event-wise map (t, a, b) -> (t/theta, a/lambda, b/lambda). Continuous-mode
// listmode only: discrete indices do not rescale.
Listmode rescale_measurement(const Listmode& lm, const ScaleTriple& s,
                             std::shared_ptr<const ScannerGeometry> rescaled_geom);

// Solution transport onto the rescaled grid (same voxel/bin counts, so the
// mapping is index-wise and exact): rho / (mu*theta), eta / (mu*lambda).
GridMeasure rescale_solution(const GridMeasure& gm, const ScaleTriple& s,
                             std::shared_ptr<const Grid> rescaled_grid);

struct RescaledParameters {
    double beta, T_half, T, radius_D;
};

// beta_hat = beta*mu*lambda^2/theta, T_half_hat = T_half/(mu*theta),
// T_hat = T/theta, D_hat = D/lambda.
RescaledParameters rescaled_parameters(double beta, double T_half, double T, double radius_D,
                                       const ScaleTriple& s);

struct BetaHeuristicResult {
    double beta = 0.0;
    bool clamped = false;  // lookup argument fell outside the table
};

// beta = beta_hat(v*T_half/(l*mass)) / (T_half*v^2) with beta_hat linearly
// interpolated from a user-supplied monotone table.
BetaHeuristicResult beta_heuristic(double v, double l, double mass, double T_half,
                                   const std::vector<std::pair<double, double>>& table);

// Two-column CSV (argument, value), sorted by argument.
std::vector<std::pair<double, double>> read_beta_table(const std::string& path);

}  // namespace dynpet
