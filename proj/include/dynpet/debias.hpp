#pragma once

#include <vector>

#include "dynpet/solver_grid.hpp"

namespace dynpet {

// Reduced 1D bias examples: ground truth n*delta_{x0}, measurement with m
// counts at the true location and n-m isolated scatter counts, forward model
// p_s |rho| * uniform + (1-p_s) * (kernel peak G0 | detector cells M). The
// minimizer over measures of the matching form is a two-parameter family
// (alpha at the true location, beta at each scatter location).
struct ToyModel {
    enum class Variant { continuous_1d, discrete_1d };
    Variant variant = Variant::continuous_1d;
    double p_s = 0.5;
    int n = 10;      // total counts
    int m = 5;       // counts at the true location
    double G0 = 1.0; // kernel peak (continuous variant)
    int M = 10;      // cells (discrete variant)
};

struct ToySolution {
    double alpha = 0.0;
    double beta = 0.0;
    double objective = 0.0;
};

double toy_threshold_continuous(double p_s, double G0, int m);
double toy_threshold_discrete(double p_s, int M, int m);

double toy_objective(const ToyModel& toy, double q, double alpha, double beta);

// First-order conditions solved by nested bisection (the problem is jointly
// convex; beta = 0 with alpha = n is returned whenever its KKT test passes).
ToySolution solve_toy(const ToyModel& toy, double q);

// Brute-force (alpha, beta) grid search; the audit oracle.
ToySolution solve_toy_bruteforce(const ToyModel& toy, double q, int grid_n = 1000,
                                 double max_mass = 0.0);

// q >= max{1, p_d * scale * H(boundary) / (p_s * mass * delta^2)} with scale =
// M in discrete mode and the kernel peak G(0) in continuous mode.
double heuristic_q(const ScannerGeometry& geom, double p_s, double p_d, double total_mass,
                   Mode mode, const PositronKernel& kernel);

// Maximal/minimal scatter interpretations of the events at a reconstruction:
// under = {q * scatter > detection} (strict), over = {>=}.
struct ScatterSplit {
    std::vector<int> under, over;  // event indices into the listmode
    int n_under() const { return (int)under.size(); }
    int n_over() const { return (int)over.size(); }
};

ScatterSplit scatter_sets(const ForwardOperator& op, const GridMeasure& gm, const Listmode& lm,
                          double q, double p_s, double p_d, Mode mode);

struct SweepPoint {
    double q = 0.0;
    int n_lo = 0, n_hi = 0;
    double min_J = 0.0;
    double runtime_s = 0.0;
    bool solved = false;  // false when min J is infinite (q=0 with unreachable bins)
};

// Reconstructs at every q in the grid and classifies the events at each
// solution. Points run in parallel when threads > 1 (independent solves).
std::vector<SweepPoint> count_scatter_curve(const ForwardOperator& op, const Listmode& lm,
                                            const std::vector<double>& q_grid,
                                            const ObjectiveParams& base,
                                            const GridSolveConfig& solver_cfg, int threads = 1);

// Exhaustive study of the mixed-integer formulation at micro scale (|E| <= 12):
// every subset E^s of the events is solved with channels pinned (scatter for
// E^s, detection for the rest), giving the cardinality-constrained optima
// C[N_s] and, through min_S [J_hat(S) - |S| log q], the optimum of the
// max-form q-functional.
struct Prop1Result {
    std::vector<double> C;        // best channelized value per subset size
    double min_J_bar = 0.0;       // optimum of the max-form functional at q
    int matched_Ns = 0;           // |S*| of the subset attaining min_J_bar
    double matched_value = 0.0;   // J_hat(S*)
    int under = 0, over = 0;      // scatter classification at the S* solution
    bool consistent = false;      // under <= matched_Ns <= over
};

Prop1Result prop1_exhaustive(const ForwardOperator& op, const Listmode& lm, double q, double p_s,
                             double p_d, double beta, double T_half,
                             const GridSolveConfig& solver_cfg);

// Channelized objective value of a grid pair (mass + data rows + beta*S).
double evaluate_channelized(const ForwardOperator& op, const GridMeasure& gm,
                            const std::vector<DataRow>& rows, double mass_coeff, double beta);

}  // namespace dynpet
