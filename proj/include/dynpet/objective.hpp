#pragma once

#include <limits>
#include <vector>

#include "dynpet/forward.hpp"
#include "dynpet/listmode.hpp"

namespace dynpet {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Relative L1 continuity tolerance under which a pair still counts as feasible.
inline constexpr double kContinuityRelTol = 1e-8;

struct ObjectiveValue {
    double total = 0.0;
    double fidelity_mass = 0.0;  // (p_s+p_d)|rho| / T_half
    double neg_log = 0.0;        // -sum log of event densities (with 1/T_half)
    double bb = 0.0;             // beta * S
    bool feasible = true;
};

struct ObjectiveParams {
    double q = 1.0;
    double beta = 1.0;
    double p_s = 0.0;
    double p_d = 1.0;
    double T_half = 1.0;
    Mode mode = Mode::discrete;
};

// Benamou-Brenier energy of a grid pair: sum over temporal gaps and interior
// faces of |eta_f|^2 / rho_bar_f with the perspective conventions 0/0 = 0 and
// c/0 = inf. rho_bar_f averages the cells adjacent to the face (two voxels in
// each of the two slices the flux connects).
double benamou_brenier(const GridMeasure& gm);

struct ContinuityResidual {
    double max_abs = 0.0;
    double l1 = 0.0;
};

// Discrete continuity residual: forward time difference plus staggered
// divergence, (rho[t+1] - rho[t]) + (dt/h) * div eta[t], per active cell.
ContinuityResidual check_continuity(const GridMeasure& gm);

// Reconstruction functional J^{E,q}: mass fidelity (p_s+p_d)|rho|/T_half,
// minus the log event densities, plus beta * S. Infinite when rho has negative
// entries, the continuity residual exceeds tolerance, any event density
// vanishes, or S is infinite.
ObjectiveValue evaluate_J(const ForwardOperator& op, const GridMeasure& gm, const Listmode& lm,
                          const ObjectiveParams& p);

// Lifted objective on weighted trajectories (continuous-mode densities):
//   p_d*T*sum_i m_i / T_half
//   - sum_k log((q p_s sum_i m_i / H^2 + p_d g(a,b) sum_i m_i phi_sigma(dist)) / T_half)
//   + beta * sum_i m_i int |dgamma_i|^2 dt,
// phi_sigma the Gaussian line-integral profile. Infinite if some event density
// vanishes (empty particle sets with events cannot be evaluated finitely).
double evaluate_particle_J(const ScannerGeometry& geom, const std::vector<Particle>& particles,
                           const Listmode& lm, double q, double beta, double p_s, double p_d,
                           double sigma, double T_half = 1.0);

// Gaussian line-integral profile value at distance d: the X-ray transform of a
// unit-mass isotropic Gaussian along a line at offset d from its center.
double gaussian_line_profile(double dist, double sigma, int dim);

// Distance from point x to the (infinite) line through a and b.
double dist_to_line(const Vec& x, const Vec& a, const Vec& b);

// Geometric detection density factor g(a,b) for a ball detector.
double lor_density_factor(const ScannerGeometry& geom, const Vec& a, const Vec& b);

}  // namespace dynpet
