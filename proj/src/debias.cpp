#include "dynpet/debias.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <stdexcept>
#include <thread>

namespace dynpet {

double toy_threshold_continuous(double p_s, double G0, int m) {
    if (m < 2) throw std::invalid_argument("toy threshold: need m >= 2");
    if (!(p_s > 0 && p_s < 1)) throw std::invalid_argument("toy threshold: p_s in (0,1)");
    return (1.0 - p_s) * G0 / (p_s * (m - 1));
}

double toy_threshold_discrete(double p_s, int M, int m) {
    if (m < 2) throw std::invalid_argument("toy threshold: need m >= 2");
    if (M < 2) throw std::invalid_argument("toy threshold: need M >= 2");
    if (!(p_s > 0 && p_s < 1)) throw std::invalid_argument("toy threshold: p_s in (0,1)");
    return (1.0 - p_s) * (double)M / (p_s * (m - 1));
}

namespace {

// Unified coefficients: density at the true location u = sc*(alpha+K*beta) +
// D*alpha, at each scatter location w = sc*(alpha+K*beta) + D*beta.
struct ToyCoef {
    double sc, D;
    int m, K;
};

ToyCoef toy_coef(const ToyModel& toy, double q) {
    ToyCoef c;
    c.m = toy.m;
    c.K = toy.n - toy.m;
    if (toy.variant == ToyModel::Variant::continuous_1d) {
        c.sc = q * toy.p_s;
        c.D = (1.0 - toy.p_s) * toy.G0;
    } else {
        c.sc = q * toy.p_s / toy.M;
        c.D = 1.0 - toy.p_s;
    }
    return c;
}

}  // namespace

double toy_objective(const ToyModel& toy, double q, double alpha, double beta) {
    auto c = toy_coef(toy, q);
    double total = alpha + c.K * beta;
    double u = c.sc * total + c.D * alpha;
    double w = c.sc * total + c.D * beta;
    if ((c.m > 0 && !(u > 0)) || (c.K > 0 && !(w > 0))) return kInf;
    double J = total;
    if (c.m > 0) J -= c.m * std::log(u);
    if (c.K > 0) J -= c.K * std::log(w);
    return J;
}

ToySolution solve_toy(const ToyModel& toy, double q) {
    auto c = toy_coef(toy, q);
    const int n = toy.n;

    auto dJ_dalpha = [&](double a, double b) {
        double total = a + c.K * b;
        double u = c.sc * total + c.D * a;
        double w = c.sc * total + c.D * b;
        double v = 1.0;
        if (c.m > 0) v -= c.m * (c.sc + c.D) / u;
        if (c.K > 0) v -= c.K * c.sc / w;
        return v;
    };
    auto dJ_dbeta = [&](double a, double b) {
        double total = a + c.K * b;
        double u = c.sc * total + c.D * a;
        double w = c.sc * total + c.D * b;
        double v = (double)c.K;
        if (c.m > 0) v -= c.m * c.sc * c.K / u;
        if (c.K > 0) v -= c.K * (c.sc * c.K + c.D) / w;
        return v;
    };

    ToySolution sol;
    if (c.K == 0) {  // no off-site events: pure 1D problem, alpha = n
        sol.alpha = n;
        sol.beta = 0.0;
        sol.objective = toy_objective(toy, q, sol.alpha, sol.beta);
        return sol;
    }

    // Debias branch: at beta = 0 the alpha condition gives alpha = n exactly;
    // it is the solution iff the beta-derivative KKT test passes.
    if (dJ_dbeta((double)n, 0.0) >= 0.0) {
        sol.alpha = n;
        sol.beta = 0.0;
        sol.objective = toy_objective(toy, q, sol.alpha, sol.beta);
        return sol;
    }

    // Interior/boundary solve: alpha*(beta) by bisection on the monotone alpha
    // derivative, then bisection on the reduced beta derivative.
    const double hi_mass = 10.0 * n + 10.0;
    auto alpha_of = [&](double b) {
        if (dJ_dalpha(0.0, b) >= 0.0) return 0.0;
        double lo = 0.0, hi = hi_mass;
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (lo + hi);
            (dJ_dalpha(mid, b) < 0.0 ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };
    double lo = 0.0, hi = hi_mass;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        (dJ_dbeta(alpha_of(mid), mid) < 0.0 ? lo : hi) = mid;
    }
    sol.beta = 0.5 * (lo + hi);
    sol.alpha = alpha_of(sol.beta);
    sol.objective = toy_objective(toy, q, sol.alpha, sol.beta);
    return sol;
}

ToySolution solve_toy_bruteforce(const ToyModel& toy, double q, int grid_n, double max_mass) {
    if (max_mass <= 0) max_mass = 2.0 * toy.n + 2.0;
    ToySolution best;
    best.objective = kInf;
    for (int i = 0; i <= grid_n; ++i) {
        double a = max_mass * i / grid_n;
        for (int j = 0; j <= grid_n; ++j) {
            double b = max_mass * j / grid_n;
            double J = toy_objective(toy, q, a, b);
            if (J < best.objective) {
                best = ToySolution{a, b, J};
            }
        }
    }
    return best;
}

double heuristic_q(const ScannerGeometry& geom, double p_s, double p_d, double total_mass,
                   Mode mode, const PositronKernel& kernel) {
    if (!(p_s > 0)) throw std::invalid_argument("heuristic_q: p_s must be positive");
    if (!(total_mass > 0)) throw std::invalid_argument("heuristic_q: mass must be positive");
    double scale = mode == Mode::discrete ? (double)geom.num_detectors()
                                          : kernel.peak(geom.dim());
    double H = geom.boundary_measure();
    double d2 = geom.delta() * geom.delta();
    return std::max(1.0, p_d * scale * H / (p_s * total_mass * d2));
}

ScatterSplit scatter_sets(const ForwardOperator& op, const GridMeasure& gm, const Listmode& lm,
                          double q, double p_s, double p_d, Mode mode) {
    ScatterSplit split;
    for (std::size_t k = 0; k < lm.events.size(); ++k) {
        auto [s, d] = op.density_parts(gm, lm.events[k], p_s, p_d, mode);
        if (q * s > d) split.under.push_back((int)k);
        if (q * s >= d) split.over.push_back((int)k);
    }
    return split;
}

std::vector<SweepPoint> count_scatter_curve(const ForwardOperator& op, const Listmode& lm,
                                            const std::vector<double>& q_grid,
                                            const ObjectiveParams& base,
                                            const GridSolveConfig& solver_cfg, int threads) {
    std::vector<SweepPoint> points(q_grid.size());
    auto run_one = [&](std::size_t i) {
        auto t0 = std::chrono::steady_clock::now();
        SweepPoint pt;
        pt.q = q_grid[i];
        ObjectiveParams p = base;
        p.q = q_grid[i];
        auto rows = bin_events(op, lm, p.q, p.p_s, p.p_d);
        bool infeasible = false;
        if (p.q == 0.0) {
            // A bin with no detection reach has zero intensity for every rho.
            for (const auto& r : rows) {
                if (op.row_offsets()[r.pair + 1] == op.row_offsets()[r.pair]) {
                    infeasible = true;
                    break;
                }
            }
        }
        if (infeasible) {
            pt.min_J = kInf;
            pt.solved = false;
            pt.n_lo = 0;  // strict set is empty at q = 0 by definition
            int over = 0;
            for (const auto& r : rows)
                if (op.row_offsets()[r.pair + 1] == op.row_offsets()[r.pair])
                    over += (int)std::lround(r.weight);
            pt.n_hi = over;
        } else {
            auto rec = reconstruct_grid(op, lm, p, solver_cfg);
            auto split = scatter_sets(op, rec.gm, lm, p.q, p.p_s, p.p_d, p.mode);
            pt.min_J = rec.objective.total;
            pt.n_lo = split.n_under();
            pt.n_hi = split.n_over();
            pt.solved = true;
        }
        pt.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        points[i] = pt;
    };
    if (threads <= 1) {
        for (std::size_t i = 0; i < q_grid.size(); ++i) run_one(i);
    } else {
        std::vector<std::thread> pool;
        std::size_t next = 0;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < q_grid.size(); i += threads) run_one(i);
            });
        for (auto& th : pool) th.join();
        (void)next;
    }
    return points;
}

double evaluate_channelized(const ForwardOperator& op, const GridMeasure& gm,
                            const std::vector<DataRow>& rows, double mass_coeff, double beta) {
    double val = mass_coeff * gm.total_mass();
    std::map<int, std::vector<double>> blurred;
    std::map<int, double> smass;
    for (const auto& row : rows) {
        if (!blurred.count(row.slice)) {
            blurred[row.slice] = op.blur_slice(gm.slice(row.slice));
            double m = 0.0;
            for (int i = 0; i < gm.grid->nvox(); ++i) m += gm.slice(row.slice)[i];
            smass[row.slice] = m;
        }
        double y = row.coeff_scatter * op.scatter_bin(smass[row.slice]);
        if (row.coeff_det != 0.0) {
            const auto& bl = blurred[row.slice];
            double det = 0.0;
            for (int k = op.row_offsets()[row.pair]; k < op.row_offsets()[row.pair + 1]; ++k)
                det += op.vals()[k] * bl[op.cols()[k]];
            y += row.coeff_det * det;
        }
        if (!(y > 0)) return kInf;
        val -= row.weight * std::log(y);
    }
    double s = benamou_brenier(gm);
    if (!std::isfinite(s)) return kInf;
    return val + beta * s;
}

Prop1Result prop1_exhaustive(const ForwardOperator& op, const Listmode& lm, double q, double p_s,
                             double p_d, double beta, double T_half,
                             const GridSolveConfig& solver_cfg) {
    const std::size_t n = lm.events.size();
    if (n > 20) throw std::invalid_argument("prop1_exhaustive: |E| too large for enumeration");
    const auto& geom = op.geom();
    const int M = geom.num_detectors();

    GridSolveConfig cfg = solver_cfg;
    cfg.beta = beta;
    cfg.mass_coeff = (p_s + p_d) / T_half;

    Prop1Result out;
    out.C.assign(n + 1, kInf);
    out.min_J_bar = kInf;
    GridMeasure best_gm;
    std::size_t best_subset = 0;
    double best_value = kInf;

    for (std::size_t mask = 0; mask < (std::size_t(1) << n); ++mask) {
        // Channel-pinned rows: scatter for events in the subset, detection
        // otherwise; identical rows aggregate.
        std::map<std::tuple<int, int, int>, double> agg;
        for (std::size_t k = 0; k < n; ++k) {
            const auto& ev = lm.events[k];
            int t = ev.bin >= 0 ? ev.bin : geom.time_bin(ev.t);
            int ja = ev.ja >= 0 ? ev.ja : geom.detector_index(ev.a);
            int jb = ev.jb >= 0 ? ev.jb : geom.detector_index(ev.b);
            int channel = (mask >> k) & 1;
            agg[{t, ja * M + jb, channel}] += 1.0;
        }
        std::vector<DataRow> rows;
        for (const auto& [key, w] : agg) {
            auto [t, pair, channel] = key;
            rows.push_back(channel ? DataRow{t, pair, w, p_s, 0.0}
                                   : DataRow{t, pair, w, 0.0, p_d});
        }
        auto sol = solve_grid(op, rows, cfg);
        double value = evaluate_channelized(op, sol.gm, rows, cfg.mass_coeff, beta);
        int size = (int)std::popcount(mask);
        out.C[size] = std::min(out.C[size], value);
        double jbar = value - size * std::log(q);
        if (jbar < out.min_J_bar) {
            out.min_J_bar = jbar;
            best_gm = std::move(sol.gm);
            best_subset = mask;
            best_value = value;
        }
    }
    out.matched_Ns = (int)std::popcount(best_subset);
    out.matched_value = best_value;
    auto split = scatter_sets(op, best_gm, lm, q, p_s, p_d, Mode::discrete);
    out.under = split.n_under();
    out.over = split.n_over();
    out.consistent = out.under <= out.matched_Ns && out.matched_Ns <= out.over;
    return out;
}

}  // namespace dynpet
