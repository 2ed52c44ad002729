#include "dynpet/objective.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace dynpet {

double benamou_brenier(const GridMeasure& gm) {
    const Grid& grid = *gm.grid;
    const int N = gm.num_slices();
    const int F = grid.num_faces_total();
    double s = 0.0;
    for (int t = 0; t + 1 < N; ++t) {
        const double* e = gm.eta_gap(t);
        const double* r0 = gm.slice(t);
        const double* r1 = gm.slice(t + 1);
        for (int f = 0; f < F; ++f) {
            double ef = e[f];
            if (!grid.face_active(f)) {
                if (ef != 0.0) return kInf;  // flux may not leave D
                continue;
            }
            if (ef == 0.0) continue;
            auto [lo, hi] = grid.face_voxels(f);
            double rbar = 0.25 * (r0[lo] + r0[hi] + r1[lo] + r1[hi]);
            if (rbar <= 0.0) return kInf;
            s += ef * ef / rbar;
        }
    }
    return s;
}

ContinuityResidual check_continuity(const GridMeasure& gm) {
    const Grid& grid = *gm.grid;
    const int N = gm.num_slices();
    const int nv = grid.nvox();
    const double scale = grid.geom().bin_width() / grid.h();
    ContinuityResidual res;
    for (int t = 0; t + 1 < N; ++t) {
        const double* r0 = gm.slice(t);
        const double* r1 = gm.slice(t + 1);
        const double* e = gm.eta_gap(t);
        for (int x = 0; x < nv; ++x) {
            if (!grid.active(x)) continue;
            double div = 0.0;
            auto c = grid.lattice().coords(x);
            for (int d = 0; d < grid.dim(); ++d) {
                int f_out = grid.face_of(x, d);
                if (f_out >= 0 && grid.face_active(f_out)) div += e[f_out];
                if (c[d] > 0) {
                    auto lo = c;
                    lo[d] -= 1;
                    int vlo = grid.lattice().index(lo[0], lo[1], lo[2]);
                    int f_in = grid.face_of(vlo, d);
                    if (f_in >= 0 && grid.face_active(f_in)) div -= e[f_in];
                }
            }
            double v = (r1[x] - r0[x]) + scale * div;
            res.max_abs = std::max(res.max_abs, std::abs(v));
            res.l1 += std::abs(v);
        }
    }
    return res;
}

ObjectiveValue evaluate_J(const ForwardOperator& op, const GridMeasure& gm, const Listmode& lm,
                          const ObjectiveParams& p) {
    ObjectiveValue out;
    const double mass = gm.total_mass();
    if (gm.min_rho() < 0.0) {
        out.total = kInf;
        out.feasible = false;
        return out;
    }
    auto res = check_continuity(gm);
    if (res.l1 > kContinuityRelTol * std::max(mass, 1e-300) && res.l1 > 0.0) {
        out.total = kInf;
        out.feasible = false;
        return out;
    }

    out.fidelity_mass = (p.p_s + p.p_d) * mass / p.T_half;

    // Events grouped by time slice so each slice is blurred at most once.
    std::map<int, std::vector<const ListmodeEvent*>> by_slice;
    for (const auto& ev : lm.events) {
        int t = p.mode == Mode::discrete && ev.bin >= 0 ? ev.bin
                                                        : op.geom().time_bin(ev.t);
        by_slice[t].push_back(&ev);
    }
    const int M = op.geom().num_detectors();
    const double H = op.geom().boundary_measure();
    const double dt = op.geom().bin_width();
    for (auto& [t, evs] : by_slice) {
        double slice_mass = 0.0;
        for (int i = 0; i < gm.grid->nvox(); ++i) slice_mass += gm.slice(t)[i];
        std::vector<double> blurred;
        if (p.p_d > 0) blurred = op.blur_slice(gm.slice(t));
        for (const auto* ev : evs) {
            double dens;
            if (p.mode == Mode::discrete) {
                int ja = ev->ja >= 0 ? ev->ja : op.geom().detector_index(ev->a);
                int jb = ev->jb >= 0 ? ev->jb : op.geom().detector_index(ev->b);
                dens = p.q * p.p_s * op.scatter_bin(slice_mass);
                if (p.p_d > 0) {
                    const int r = ja * M + jb;
                    double det = 0.0;
                    for (int i = op.row_offsets()[r]; i < op.row_offsets()[r + 1]; ++i)
                        det += op.vals()[i] * blurred[op.cols()[i]];
                    dens += p.p_d * det;
                }
            } else {
                dens = p.q * p.p_s * (slice_mass / dt) / (H * H);
                if (p.p_d > 0) {
                    auto lor = op.geom().line_of_response(ev->a, ev->b);
                    dens += p.p_d * lor_density_factor(op.geom(), ev->a, ev->b) *
                            op.xray_blurred_mass(blurred, lor.theta, lor.s) / dt;
                }
            }
            if (!(dens > 0.0)) {
                out.total = kInf;
                out.feasible = false;
                return out;
            }
            out.neg_log -= std::log(dens / p.T_half);
        }
    }

    double s = benamou_brenier(gm);
    if (!std::isfinite(s)) {
        out.total = kInf;
        out.feasible = false;
        return out;
    }
    out.bb = p.beta * s;
    out.total = out.fidelity_mass + out.neg_log + out.bb;
    return out;
}

double gaussian_line_profile(double dist, double sigma, int dim) {
    double norm = std::pow(2.0 * M_PI * sigma * sigma, -0.5 * (dim - 1));
    return norm * std::exp(-0.5 * dist * dist / (sigma * sigma));
}

double dist_to_line(const Vec& x, const Vec& a, const Vec& b) {
    Vec u = normalized(b - a);
    Vec d = x - a;
    return norm(d - dot(d, u) * u);
}

double lor_density_factor(const ScannerGeometry& geom, const Vec& a, const Vec& b) {
    const Vec c = geom.center();
    const double R = geom.radius_Dd();
    Vec chord = b - a;
    double len = norm(chord);
    Vec theta = chord / len;
    double cosa = std::abs(dot(theta, (a - c) / R));
    double cosb = std::abs(dot(theta, (b - c) / R));
    double sd = geom.dim() == 2 ? 2.0 * M_PI : 4.0 * M_PI;
    double ldm1 = geom.dim() == 2 ? len : len * len;
    return cosa * cosb / (sd * ldm1);
}

double evaluate_particle_J(const ScannerGeometry& geom, const std::vector<Particle>& particles,
                           const Listmode& lm, double q, double beta, double p_s, double p_d,
                           double sigma, double T_half) {
    double total_mass = 0.0;
    double kinetic = 0.0;
    for (const auto& p : particles) {
        total_mass += p.mass;
        kinetic += p.mass * p.traj.kinetic_energy();
    }
    const double H = geom.boundary_measure();
    double value = p_d * geom.time_horizon() * total_mass / T_half + beta * kinetic;
    for (const auto& ev : lm.events) {
        double dens = q * p_s * total_mass / (H * H);
        for (const auto& p : particles) {
            double d = dist_to_line(p.traj.at(ev.t), ev.a, ev.b);
            dens += p_d * lor_density_factor(geom, ev.a, ev.b) * p.mass *
                    gaussian_line_profile(d, sigma, geom.dim());
        }
        if (!(dens > 0.0)) return kInf;
        value -= std::log(dens / T_half);
    }
    return value;
}

}  // namespace dynpet
