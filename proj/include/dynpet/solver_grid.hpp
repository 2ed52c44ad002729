#pragma once

#include <functional>
#include <vector>

#include "dynpet/forward.hpp"
#include "dynpet/objective.hpp"

namespace dynpet {

// Prox of s -> (s-x)^2/(2 tau) - w log s: the unique positive stationary point.
inline double prox_neglog(double x, double tau, double w) {
    return 0.5 * (x + std::sqrt(x * x + 4.0 * tau * w));
}

// Matrix-free linear operator with adjoint.
struct LinOp {
    int n_in = 0, n_out = 0;
    std::function<void(const double*, double*)> apply;   // y = K x
    std::function<void(const double*, double*)> applyT;  // x = K^T y
};

// Power iteration on K^T K with a deterministic start vector; returns an
// operator-norm estimate (relative accuracy ~tol after convergence).
double estimate_opnorm(const LinOp& K, int max_iters = 2000, double tol = 1e-4);

// One measurement term: weight * -log(intensity of bin), with the bin
// intensity coeff_scatter * scatter_bin(slice mass) + coeff_det * detection.
// The standard functional uses coeff_scatter = q*p_s and coeff_det = p_d for
// every row; the combinatorial (channel-fixed) variant pins one side to zero.
struct DataRow {
    int slice = 0;
    int pair = 0;  // j*M + k
    double weight = 1.0;
    double coeff_scatter = 0.0;
    double coeff_det = 0.0;
};

struct GridSolveConfig {
    double beta = 1.0;
    double mass_coeff = 1.0;  // (p_s+p_d)/T_half, multiplies |rho|
    double tol = 1e-6;        // relative primal-dual residual target
    int max_iters = 50000;
    int check_every = 50;
    double step_balance = 1.0;  // tau = balance/|K|, sigma = 1/(balance |K|)
    double init_mass = -1.0;    // <0: maximum-likelihood scale sum(w)/mass_coeff
    int history_every = 100;
};

struct GridDiagnostics {
    int iterations = 0;
    double gap = 0.0;  // relative primal-dual residual at termination
    double continuity_l1_rel = 0.0;
    double opnorm = 0.0;
    bool diverged = false;
    std::vector<double> objective_history;
};

struct GridSolution {
    GridMeasure gm;
    GridDiagnostics diag;
};

// Minimizes mass_coeff*|rho| + sum_i w_i * -log y_i(rho) + beta*S(rho,eta)
// over rho >= 0 with the continuity equation as a linear constraint, by a
// primal-dual hybrid gradient iteration (over-relaxation theta = 1):
// nonnegativity and the linear mass term sit in the primal prox, the
// Benamou-Brenier term acts through its conjugate (projection onto the
// parabolic set {a + b^2/(4 beta) <= 0} per face), each measurement bin
// through the closed-form prox of -w log, and the continuity constraint
// through plain ascent on its multiplier. The returned iterate is polished by
// an exact projection onto the continuity constraint plus a uniform
// nonnegativity shift, so rho >= 0 holds exactly and the continuity residual
// is at solver precision.
GridSolution solve_grid(const ForwardOperator& op, const std::vector<DataRow>& rows,
                        const GridSolveConfig& cfg);

struct GridReconstruction {
    GridMeasure gm;
    ObjectiveValue objective;
    GridDiagnostics diag;
};

// Builds the measurement rows of J^{E,q} from a listmode (continuous events
// are binned first), solves, and evaluates the result.
GridReconstruction reconstruct_grid(const ForwardOperator& op, const Listmode& lm,
                                    const ObjectiveParams& params, const GridSolveConfig& cfg);

// Aggregated discrete measurement bins (slice, pair) -> multiplicity.
std::vector<DataRow> bin_events(const ForwardOperator& op, const Listmode& lm, double q,
                                double p_s, double p_d);

}  // namespace dynpet
