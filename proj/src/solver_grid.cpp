#include "dynpet/solver_grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace dynpet {

double estimate_opnorm(const LinOp& K, int max_iters, double tol) {
    if (K.n_in == 0 || K.n_out == 0) return 0.0;
    std::vector<double> x(K.n_in), y(K.n_out), xt(K.n_in);
    for (int i = 0; i < K.n_in; ++i) x[i] = 1.0 + 0.1 * std::sin(0.7 * i + 0.3);
    double nrm = 0.0;
    for (double v : x) nrm += v * v;
    nrm = std::sqrt(nrm);
    for (double& v : x) v /= nrm;
    double est = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        K.apply(x.data(), y.data());
        K.applyT(y.data(), xt.data());
        double n2 = 0.0;
        for (double v : xt) n2 += v * v;
        double n = std::sqrt(n2);
        if (n == 0.0) return 0.0;
        double new_est = std::sqrt(n);  // |K^T K x| ~ |K|^2
        for (int i = 0; i < K.n_in; ++i) x[i] = xt[i] / n;
        if (it > 2 && std::abs(new_est - est) <= tol * new_est) return new_est;
        est = new_est;
    }
    return est;
}

namespace {

// Projection of (a0, b0) onto {(a, b) : a + b^2/(4 beta) <= 0}. With u = b/(2
// beta) the boundary stationarity condition is the depressed cubic
// u^3 + (2 + a0/beta) u - b0/beta = 0; real roots via Cardano, best kept.
std::pair<double, double> project_parabola(double a0, double b0, double beta) {
    if (a0 + b0 * b0 / (4.0 * beta) <= 0.0) return {a0, b0};
    const double p = 2.0 + a0 / beta;
    const double q = -b0 / beta;
    std::array<double, 3> roots{};
    int nroots = 0;
    const double disc = 0.25 * q * q + p * p * p / 27.0;
    if (disc >= 0.0) {
        double sq = std::sqrt(disc);
        roots[nroots++] = std::cbrt(-0.5 * q + sq) + std::cbrt(-0.5 * q - sq);
    } else {
        double m = 2.0 * std::sqrt(-p / 3.0);
        double phi = std::acos(std::clamp(3.0 * q / (p * m), -1.0, 1.0)) / 3.0;
        for (int k = 0; k < 3; ++k) roots[nroots++] = m * std::cos(phi - 2.0 * M_PI * k / 3.0);
    }
    double best_a = 0.0, best_b = 0.0, best_d = kInf;
    for (int i = 0; i < nroots; ++i) {
        double u = roots[i];
        double b = 2.0 * beta * u;
        double a = -beta * u * u;
        double d = (a - a0) * (a - a0) + (b - b0) * (b - b0);
        if (d < best_d) {
            best_d = d;
            best_a = a;
            best_b = b;
        }
    }
    return {best_a, best_b};
}

struct Problem {
    const ForwardOperator* op;
    const Grid* grid;
    std::vector<DataRow> rows;
    double beta;
    double mass_coeff;

    int N, NV, F, G, R;
    double cont_scale;  // dt / h
    std::vector<int> slices_with_rows;

    explicit Problem(const ForwardOperator& fop, std::vector<DataRow> rws, double beta_,
                     double mass_coeff_)
        : op(&fop), grid(&fop.grid()), rows(std::move(rws)), beta(beta_),
          mass_coeff(mass_coeff_) {
        N = grid->geom().num_time_bins();
        NV = grid->nvox();
        F = grid->num_faces_total();
        G = N - 1;
        R = (int)rows.size();
        cont_scale = grid->geom().bin_width() / grid->h();
        std::vector<char> seen(N, 0);
        for (const auto& r : rows) seen[r.slice] = 1;
        for (int t = 0; t < N; ++t)
            if (seen[t]) slices_with_rows.push_back(t);
    }

    int n_primal() const { return N * NV + G * F; }
    int n_dual() const { return 2 * G * F + G * NV + R; }

    // Layout helpers for the packed primal/dual vectors.
    const double* r_of(const double* u) const { return u; }
    const double* e_of(const double* u) const { return u + (std::size_t)N * NV; }
    double* r_of(double* u) const { return u; }
    double* e_of(double* u) const { return u + (std::size_t)N * NV; }
    double* a_of(double* p) const { return p; }
    double* b_of(double* p) const { return p + (std::size_t)G * F; }
    double* l_of(double* p) const { return p + 2 * (std::size_t)G * F; }
    double* z_of(double* p) const { return p + 2 * (std::size_t)G * F + (std::size_t)G * NV; }
    const double* a_of(const double* p) const { return p; }
    const double* b_of(const double* p) const { return p + (std::size_t)G * F; }
    const double* l_of(const double* p) const { return p + 2 * (std::size_t)G * F; }
    const double* z_of(const double* p) const {
        return p + 2 * (std::size_t)G * F + (std::size_t)G * NV;
    }

    void apply_K(const double* u, double* out) const {
        const double* r = r_of(u);
        const double* e = e_of(u);
        double* oa = a_of(out);
        double* ob = b_of(out);
        double* ol = l_of(out);
        double* oz = z_of(out);
        for (int t = 0; t < G; ++t) {
            const double* r0 = r + (std::size_t)t * NV;
            const double* r1 = r0 + NV;
            const double* et = e + (std::size_t)t * F;
            double* at = oa + (std::size_t)t * F;
            double* bt = ob + (std::size_t)t * F;
            double* lt = ol + (std::size_t)t * NV;
            for (int f = 0; f < F; ++f) {
                if (!grid->face_active(f)) {
                    at[f] = bt[f] = 0.0;
                    continue;
                }
                auto [lo, hi] = grid->face_voxels(f);
                at[f] = 0.25 * (r0[lo] + r0[hi] + r1[lo] + r1[hi]);
                bt[f] = et[f];
            }
            for (int x = 0; x < NV; ++x) {
                if (!grid->active(x)) {
                    lt[x] = 0.0;
                    continue;
                }
                double div = 0.0;
                auto c = grid->lattice().coords(x);
                for (int d = 0; d < grid->dim(); ++d) {
                    int fo = grid->face_of(x, d);
                    if (fo >= 0 && grid->face_active(fo)) div += et[fo];
                    if (c[d] > 0) {
                        auto lc = c;
                        lc[d] -= 1;
                        int vlo = grid->lattice().index(lc[0], lc[1], lc[2]);
                        int fi = grid->face_of(vlo, d);
                        if (fi >= 0 && grid->face_active(fi)) div -= et[fi];
                    }
                }
                lt[x] = (r1[x] - r0[x]) + cont_scale * div;
            }
        }
        // Measurement rows; slices blurred once.
        std::map<int, std::vector<double>> blurred;
        std::map<int, double> smass;
        for (int t : slices_with_rows) {
            std::vector<double> masked(NV, 0.0);
            double m = 0.0;
            const double* rt = r + (std::size_t)t * NV;
            for (int x = 0; x < NV; ++x)
                if (grid->active(x)) {
                    masked[x] = rt[x];
                    m += rt[x];
                }
            smass[t] = m;
            blurred[t] = op->blur_slice(masked.data());
        }
        for (int i = 0; i < R; ++i) {
            const auto& row = rows[i];
            double y = row.coeff_scatter * op->scatter_bin(smass[row.slice]);
            if (row.coeff_det != 0.0) {
                const auto& bl = blurred[row.slice];
                double det = 0.0;
                for (int k = op->row_offsets()[row.pair]; k < op->row_offsets()[row.pair + 1];
                     ++k)
                    det += op->vals()[k] * bl[op->cols()[k]];
                y += row.coeff_det * det;
            }
            oz[i] = y;
        }
    }

    void apply_KT(const double* p, double* out) const {
        const double* a = a_of(p);
        const double* b = b_of(p);
        const double* l = l_of(p);
        const double* z = z_of(p);
        double* gr = r_of(out);
        double* ge = e_of(out);
        std::fill(out, out + n_primal(), 0.0);
        for (int t = 0; t < G; ++t) {
            double* g0 = gr + (std::size_t)t * NV;
            double* g1 = g0 + NV;
            double* get = ge + (std::size_t)t * F;
            const double* at = a + (std::size_t)t * F;
            const double* bt = b + (std::size_t)t * F;
            const double* lt = l + (std::size_t)t * NV;
            for (int f = 0; f < F; ++f) {
                if (!grid->face_active(f)) continue;
                auto [lo, hi] = grid->face_voxels(f);
                double q = 0.25 * at[f];
                g0[lo] += q;
                g0[hi] += q;
                g1[lo] += q;
                g1[hi] += q;
                get[f] += bt[f] + cont_scale * (lt[lo] - lt[hi]);
            }
            for (int x = 0; x < NV; ++x) {
                if (!grid->active(x)) continue;
                g1[x] += lt[x];
                g0[x] -= lt[x];
            }
        }
        // Rows: scatter spreads over the slice, detection via Blur^T row^T
        // (the stencil is symmetric).
        std::map<int, std::vector<double>> rowbuf;
        for (int i = 0; i < R; ++i) {
            const auto& row = rows[i];
            double zi = z[i];
            if (zi == 0.0) continue;
            if (row.coeff_scatter != 0.0) {
                double v = row.coeff_scatter * zi / ((double)grid->geom().num_detectors() *
                                                     grid->geom().num_detectors());
                double* g0 = gr + (std::size_t)row.slice * NV;
                for (int x = 0; x < NV; ++x)
                    if (grid->active(x)) g0[x] += v;
            }
            if (row.coeff_det != 0.0) {
                auto& buf = rowbuf
                                .try_emplace(row.slice, std::vector<double>(NV, 0.0))
                                .first->second;
                for (int k = op->row_offsets()[row.pair]; k < op->row_offsets()[row.pair + 1];
                     ++k)
                    buf[op->cols()[k]] += row.coeff_det * zi * op->vals()[k];
            }
        }
        std::vector<double> tmp(NV);
        for (auto& [t, buf] : rowbuf) {
            op->blur_slice(buf.data()).swap(tmp);
            double* g0 = gr + (std::size_t)t * NV;
            for (int x = 0; x < NV; ++x)
                if (grid->active(x)) g0[x] += tmp[x];
        }
    }

    // Exact projection of (r, e) onto {cont = 0} by CG on D D^T, followed by a
    // uniform shift of rho making it nonnegative again (the shift is constant
    // across space and time, so the continuity residual and the slice-mass
    // balance are unchanged).
    void polish(double* u) const {
        const int n = G * NV;
        if (n == 0) return;
        std::vector<double> rhs(n), mu(n, 0.0), res(n), pdir(n), tmp_p(n_primal()),
            tmp_d(n_dual());
        auto apply_D = [&](const double* uu, double* out_cont) {
            apply_K(uu, tmp_d.data());
            std::copy(l_of(tmp_d.data()), l_of(tmp_d.data()) + n, out_cont);
        };
        auto apply_DDt = [&](const double* m, double* out_cont) {
            std::fill(tmp_d.begin(), tmp_d.end(), 0.0);
            std::copy(m, m + n, l_of(tmp_d.data()));
            apply_KT(tmp_d.data(), tmp_p.data());
            apply_D(tmp_p.data(), out_cont);
        };
        apply_D(u, rhs.data());
        double rhs_n2 = 0.0;
        for (double v : rhs) rhs_n2 += v * v;
        if (rhs_n2 == 0.0) return;
        // CG for (D D^T) mu = rhs.
        std::vector<double> q(n);
        res = rhs;
        pdir = res;
        double rz = rhs_n2;
        for (int it = 0; it < 4 * n; ++it) {
            apply_DDt(pdir.data(), q.data());
            double pq = 0.0;
            for (int i = 0; i < n; ++i) pq += pdir[i] * q[i];
            if (pq <= 0.0) break;
            double alpha = rz / pq;
            double rn = 0.0;
            for (int i = 0; i < n; ++i) {
                mu[i] += alpha * pdir[i];
                res[i] -= alpha * q[i];
                rn += res[i] * res[i];
            }
            if (rn <= 1e-28 * rhs_n2) break;
            double bet = rn / rz;
            rz = rn;
            for (int i = 0; i < n; ++i) pdir[i] = res[i] + bet * pdir[i];
        }
        std::fill(tmp_d.begin(), tmp_d.end(), 0.0);
        std::copy(mu.begin(), mu.end(), l_of(tmp_d.data()));
        apply_KT(tmp_d.data(), tmp_p.data());
        for (int i = 0; i < n_primal(); ++i) u[i] -= tmp_p[i];
        double* r = r_of(u);
        double mn = 0.0;
        for (int t = 0; t < N; ++t)
            for (int x = 0; x < NV; ++x)
                if (grid->active(x)) mn = std::min(mn, r[(std::size_t)t * NV + x]);
        if (mn < 0.0) {
            for (int t = 0; t < N; ++t)
                for (int x = 0; x < NV; ++x)
                    if (grid->active(x)) r[(std::size_t)t * NV + x] -= mn;
        }
    }

    // Primal objective of the current iterate with the data values y already
    // at hand; used by the divergence monitor.
    double quick_objective(const double* u, const double* y) const {
        const double* r = r_of(u);
        double mass = 0.0;
        for (int t = 0; t < N; ++t)
            for (int x = 0; x < NV; ++x)
                if (grid->active(x)) mass += r[(std::size_t)t * NV + x];
        double val = mass_coeff * mass;
        for (int i = 0; i < R; ++i) {
            if (y[i] <= 0.0) return kInf;
            val -= rows[i].weight * std::log(y[i]);
        }
        const double* e = e_of(u);
        for (int t = 0; t < G; ++t) {
            const double* r0 = r + (std::size_t)t * NV;
            const double* r1 = r0 + NV;
            const double* et = e + (std::size_t)t * F;
            for (int f = 0; f < F; ++f) {
                if (et[f] == 0.0 || !grid->face_active(f)) continue;
                auto [lo, hi] = grid->face_voxels(f);
                double rbar = 0.25 * (r0[lo] + r0[hi] + r1[lo] + r1[hi]);
                if (rbar <= 0.0) return kInf;
                val += beta * et[f] * et[f] / rbar;
            }
        }
        return val;
    }
};

}  // namespace

GridSolution solve_grid(const ForwardOperator& op, const std::vector<DataRow>& rows,
                        const GridSolveConfig& cfg) {
    if (!(cfg.beta > 0)) throw std::invalid_argument("solve_grid: beta must be positive");
    Problem pb(op, rows, cfg.beta, cfg.mass_coeff);
    const auto& grid = op.grid();

    GridSolution sol;
    sol.gm = GridMeasure(op.grid_ptr());

    double served = 0.0;
    for (const auto& r : rows) served += r.weight;
    if (rows.empty()) {
        // No data: the unique minimizer is zero.
        sol.diag.gap = 0.0;
        return sol;
    }

    LinOp K;
    K.n_in = pb.n_primal();
    K.n_out = pb.n_dual();
    K.apply = [&pb](const double* x, double* y) { pb.apply_K(x, y); };
    K.applyT = [&pb](const double* y, double* x) { pb.apply_KT(y, x); };
    const double L = std::max(estimate_opnorm(K), 1e-12);
    const double tau = 0.95 * cfg.step_balance / L;
    const double sigma = 0.95 / (cfg.step_balance * L);

    std::vector<double> u(pb.n_primal(), 0.0), ubar, u_prev, p(pb.n_dual(), 0.0), p_prev;
    std::vector<double> Ku(pb.n_dual()), KTp(pb.n_primal()), diff_p(pb.n_primal());

    // Strictly feasible start: uniform mass at the maximum-likelihood scale.
    double init_mass = cfg.init_mass > 0 ? cfg.init_mass : served / cfg.mass_coeff;
    double per_vox = init_mass / ((double)pb.N * grid.num_active());
    for (int t = 0; t < pb.N; ++t)
        for (int x = 0; x < pb.NV; ++x)
            if (grid.active(x)) pb.r_of(u.data())[(std::size_t)t * pb.NV + x] = per_vox;
    ubar = u;

    sol.diag.opnorm = L;
    double gap = kInf;
    int it = 0;
    int bad_steps = 0;
    double last_obj = kInf;
    for (; it < cfg.max_iters; ++it) {
        u_prev = u;
        p_prev = p;

        pb.apply_K(ubar.data(), Ku.data());
        // Dual updates.
        double* a = pb.a_of(p.data());
        double* b = pb.b_of(p.data());
        const double* Ka = pb.a_of(Ku.data());
        const double* Kb = pb.b_of(Ku.data());
        for (int i = 0; i < pb.G * pb.F; ++i) {
            auto [pa, pbv] = project_parabola(a[i] + sigma * Ka[i], b[i] + sigma * Kb[i],
                                              cfg.beta);
            a[i] = pa;
            b[i] = pbv;
        }
        double* l = pb.l_of(p.data());
        const double* Kl = pb.l_of(Ku.data());
        for (int i = 0; i < pb.G * pb.NV; ++i) l[i] += sigma * Kl[i];
        double* z = pb.z_of(p.data());
        const double* Kz = pb.z_of(Ku.data());
        for (int i = 0; i < pb.R; ++i) {
            double v = z[i] + sigma * Kz[i];
            z[i] = v - sigma * prox_neglog(v / sigma, 1.0 / sigma, pb.rows[i].weight);
        }

        // Primal update.
        pb.apply_KT(p.data(), KTp.data());
        double* r = pb.r_of(u.data());
        for (int t = 0; t < pb.N; ++t)
            for (int x = 0; x < pb.NV; ++x) {
                std::size_t idx = (std::size_t)t * pb.NV + x;
                if (!grid.active(x)) {
                    r[idx] = 0.0;
                    continue;
                }
                r[idx] = std::max(0.0, r[idx] - tau * (KTp[idx] + cfg.mass_coeff));
            }
        double* e = pb.e_of(u.data());
        const double* ge = pb.e_of(KTp.data());
        for (int i = 0; i < pb.G * pb.F; ++i) {
            int f = i % pb.F;
            e[i] = grid.face_active(f) ? e[i] - tau * ge[i] : 0.0;
        }
        for (std::size_t i = 0; i < u.size(); ++i) ubar[i] = 2.0 * u[i] - u_prev[i];

        // Divergence monitor on the cheap primal objective.
        double obj = pb.quick_objective(u.data(), pb.z_of(Ku.data()));
        if (std::isfinite(obj) && std::isfinite(last_obj) && obj > last_obj * (1.0 + 1e-12)) {
            if (++bad_steps >= 100) {
                sol.diag.diverged = true;
                break;
            }
        } else {
            bad_steps = 0;
        }
        last_obj = obj;
        if (it % cfg.history_every == 0) sol.diag.objective_history.push_back(obj);

        if ((it + 1) % cfg.check_every == 0) {
            // Primal-dual residuals (optimality certificate):
            // r_d = (p_prev - p)/sigma - K(u_prev - u)
            std::vector<double> Kdu(pb.n_dual());
            for (std::size_t i = 0; i < u.size(); ++i) diff_p[i] = u_prev[i] - u[i];
            pb.apply_K(diff_p.data(), Kdu.data());
            double nd = 0.0;
            for (int i = 0; i < pb.n_dual(); ++i) {
                double v = (p_prev[i] - p[i]) / sigma - Kdu[i];
                nd += v * v;
            }
            // r_p = (u_prev - u)/tau - K^T(p_prev - p)
            std::vector<double> dp(pb.n_dual());
            for (int i = 0; i < pb.n_dual(); ++i) dp[i] = p_prev[i] - p[i];
            pb.apply_KT(dp.data(), KTp.data());
            double np = 0.0;
            for (std::size_t i = 0; i < u.size(); ++i) {
                double v = (u_prev[i] - u[i]) / tau - KTp[i];
                np += v * v;
            }
            double un = 0.0, pn = 0.0;
            for (double v : u) un += v * v;
            for (double v : p) pn += v * v;
            gap = (std::sqrt(np) + std::sqrt(nd)) / (1.0 + std::sqrt(un) + std::sqrt(pn));
            if (gap <= cfg.tol) {
                ++it;
                break;
            }
        }
    }
    sol.diag.iterations = it;
    sol.diag.gap = gap;

    pb.polish(u.data());
    const double* r = pb.r_of(u.data());
    const double* e = pb.e_of(u.data());
    std::copy(r, r + (std::size_t)pb.N * pb.NV, sol.gm.rho.begin());
    std::copy(e, e + (std::size_t)pb.G * pb.F, sol.gm.eta.begin());
    auto res = check_continuity(sol.gm);
    double mass = sol.gm.total_mass();
    sol.diag.continuity_l1_rel = mass > 0 ? res.l1 / mass : res.l1;
    return sol;
}

std::vector<DataRow> bin_events(const ForwardOperator& op, const Listmode& lm, double q,
                                double p_s, double p_d) {
    const auto& geom = op.geom();
    const int M = geom.num_detectors();
    std::map<std::pair<int, int>, double> counts;
    for (const auto& ev : lm.events) {
        int t = ev.bin >= 0 ? ev.bin : geom.time_bin(ev.t);
        int ja = ev.ja >= 0 ? ev.ja : geom.detector_index(ev.a);
        int jb = ev.jb >= 0 ? ev.jb : geom.detector_index(ev.b);
        if (ja == jb) throw std::invalid_argument("bin_events: diagonal detector pair");
        counts[{t, ja * M + jb}] += 1.0;
    }
    std::vector<DataRow> rows;
    rows.reserve(counts.size());
    for (const auto& [key, w] : counts)
        rows.push_back(DataRow{key.first, key.second, w, q * p_s, p_d});
    return rows;
}

GridReconstruction reconstruct_grid(const ForwardOperator& op, const Listmode& lm,
                                    const ObjectiveParams& params, const GridSolveConfig& cfg) {
    if (!(params.q >= 0) || !(params.beta > 0) || !(params.p_s > 0) || !(params.p_d > 0))
        throw std::invalid_argument("reconstruct_grid: need beta, p_s, p_d > 0 and q >= 0");
    GridSolveConfig c = cfg;
    c.beta = params.beta;
    c.mass_coeff = (params.p_s + params.p_d) / params.T_half;
    auto rows = bin_events(op, lm, params.q, params.p_s, params.p_d);
    auto sol = solve_grid(op, rows, c);

    GridReconstruction out;
    out.gm = std::move(sol.gm);
    out.diag = std::move(sol.diag);
    ObjectiveParams pd = params;
    pd.mode = Mode::discrete;  // reconstruction always scores binned intensities
    out.objective = evaluate_J(op, out.gm, lm, pd);
    return out;
}

}  // namespace dynpet
