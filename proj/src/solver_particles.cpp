#include "dynpet/solver_particles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dynpet {

namespace {

struct EventGeom {
    double t;
    Vec anchor, dir;  // line of response
    double g;         // detection density factor
    int layer;
};

std::vector<EventGeom> event_geometry(const ScannerGeometry& geom, const Listmode& lm) {
    std::vector<EventGeom> ev;
    ev.reserve(lm.events.size());
    for (const auto& e : lm.events) {
        EventGeom eg;
        eg.t = e.t;
        eg.anchor = e.a;
        eg.dir = normalized(e.b - e.a);
        eg.g = lor_density_factor(geom, e.a, e.b);
        eg.layer = geom.time_bin(e.t);
        ev.push_back(eg);
    }
    return ev;
}

double dist_point_line(const Vec& x, const EventGeom& e) {
    Vec d = x - e.anchor;
    return norm(d - dot(d, e.dir) * e.dir);
}

// Event densities under the current particle set (continuous-mode formula,
// without the 1/T_half factor which cancels in all derivatives).
std::vector<double> densities(const ScannerGeometry& geom, const std::vector<EventGeom>& ev,
                              const std::vector<Particle>& ps, const ParticleSolveConfig& cfg) {
    const double H = geom.boundary_measure();
    double total = 0.0;
    for (const auto& p : ps) total += p.mass;
    std::vector<double> dens(ev.size(), cfg.q * cfg.p_s * total / (H * H));
    for (std::size_t k = 0; k < ev.size(); ++k)
        for (const auto& p : ps)
            dens[k] += cfg.p_d * ev[k].g * p.mass *
                       gaussian_line_profile(dist_point_line(p.traj.at(ev[k].t), ev[k]),
                                             cfg.sigma, geom.dim());
    return dens;
}

double objective_of(const ScannerGeometry& geom, const std::vector<Particle>& ps,
                    const Listmode& lm, const ParticleSolveConfig& cfg) {
    return evaluate_particle_J(geom, ps, lm, cfg.q, cfg.beta, cfg.p_s, cfg.p_d, cfg.sigma,
                               cfg.T_half);
}

// Derivative of an added mass m along a fixed trajectory: phi'(m) =
// c_lin - sum_e u_e / (dens_e + m u_e), increasing in m. Root by doubling
// bracket plus bisection.
double mass_line_search(double c_lin, const std::vector<double>& dens,
                        const std::vector<double>& u) {
    auto dphi = [&](double m) {
        double v = c_lin;
        for (std::size_t k = 0; k < u.size(); ++k) {
            if (u[k] <= 0.0) continue;
            double d = dens[k] + m * u[k];
            if (d <= 0.0) return -std::numeric_limits<double>::infinity();
            v -= u[k] / d;
        }
        return v;
    };
    if (dphi(0.0) >= 0.0) return 0.0;
    double hi = 1.0;
    int guard = 0;
    while (dphi(hi) < 0.0 && guard++ < 200) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi);
        (dphi(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

InsertCandidate insert_trajectory(const ScannerGeometry& geom, const Grid& grid,
                                  const std::vector<Particle>& current, const Listmode& lm,
                                  const ParticleSolveConfig& cfg) {
    const int N = geom.num_time_bins();
    const double dt = geom.bin_width();
    const double H = geom.boundary_measure();
    auto ev = event_geometry(geom, lm);
    auto dens = densities(geom, ev, current, cfg);
    for (double& d : dens) d = std::max(d, 1e-300);  // gradient floor at the empty state

    // Candidate nodes: active voxels near at least one event line.
    double radius = cfg.prune_radius > 0 ? cfg.prune_radius
                                         : std::max({4.0 * cfg.sigma, 4.0 * grid.h()});
    std::vector<int> nodes;
    std::vector<Vec> pos;
    for (int v = 0; v < grid.nvox(); ++v) {
        if (!grid.active(v)) continue;
        Vec c = grid.lattice().center_of(v);
        bool keep = ev.empty();
        for (const auto& e : ev) {
            if (dist_point_line(c, e) <= radius) {
                keep = true;
                break;
            }
        }
        if (keep) {
            nodes.push_back(v);
            pos.push_back(c);
        }
    }
    if (nodes.empty())
        for (int v = 0; v < grid.nvox(); ++v)
            if (grid.active(v)) {
                nodes.push_back(v);
                pos.push_back(grid.lattice().center_of(v));
            }
    const int V = (int)nodes.size();

    // Node costs: p_d dt / T_half from the mass term minus the data-term
    // derivative of events in the layer.
    std::vector<double> node_cost((std::size_t)N * V, cfg.p_d * dt / cfg.T_half);
    for (std::size_t k = 0; k < ev.size(); ++k) {
        const auto& e = ev[k];
        double floor_term = cfg.q * cfg.p_s / (H * H);
        for (int i = 0; i < V; ++i) {
            double u = floor_term + cfg.p_d * e.g *
                                        gaussian_line_profile(dist_point_line(pos[i], e),
                                                              cfg.sigma, geom.dim());
            node_cost[(std::size_t)e.layer * V + i] -= u / dens[k];
        }
    }

    // Backward DP (cost-to-go); the forward walk below picks the smallest
    // voxel index among optimal choices, so ties resolve to the
    // lexicographically smallest index sequence.
    const double bol = cfg.beta / dt;
    std::vector<double> ctg((std::size_t)N * V);
    std::vector<int> nxt((std::size_t)N * V, -1);
    for (int i = 0; i < V; ++i) ctg[(std::size_t)(N - 1) * V + i] = node_cost[(std::size_t)(N - 1) * V + i];
    for (int t = N - 2; t >= 0; --t) {
        for (int i = 0; i < V; ++i) {
            double best = kInf;
            int barg = -1;
            for (int j = 0; j < V; ++j) {
                double c = bol * norm2(pos[j] - pos[i]) + ctg[(std::size_t)(t + 1) * V + j];
                if (c < best) {
                    best = c;
                    barg = j;
                }
            }
            ctg[(std::size_t)t * V + i] = node_cost[(std::size_t)t * V + i] + best;
            nxt[(std::size_t)t * V + i] = barg;
        }
    }
    double best = kInf;
    int start = -1;
    for (int i = 0; i < V; ++i)
        if (ctg[i] < best) {
            best = ctg[i];
            start = i;
        }

    InsertCandidate cand;
    cand.linearized_value = best;
    if (!(best < -cfg.insert_tol)) return cand;  // no descent
    cand.descent = true;

    std::vector<int> path{start};
    for (int t = 0; t + 1 < N; ++t) path.push_back(nxt[(std::size_t)t * V + path.back()]);
    cand.traj.times.resize(N);
    cand.traj.points.resize(N);
    for (int t = 0; t < N; ++t) {
        cand.traj.times[t] = geom.bin_center(t);
        cand.traj.points[t] = pos[path[t]];
    }

    // Exact 1D line search for the mass of the new particle.
    std::vector<double> u(ev.size());
    for (std::size_t k = 0; k < ev.size(); ++k) {
        double d = dist_point_line(cand.traj.at(ev[k].t), ev[k]);
        u[k] = cfg.q * cfg.p_s / (H * H) +
               cfg.p_d * ev[k].g * gaussian_line_profile(d, cfg.sigma, geom.dim());
    }
    double c_lin = cfg.p_d * geom.time_horizon() / cfg.T_half +
                   cfg.beta * cand.traj.kinetic_energy();
    cand.mass = mass_line_search(c_lin, dens, u);
    return cand;
}

std::vector<Particle> refine(const ScannerGeometry& geom, std::vector<Particle> particles,
                             const Listmode& lm, const ParticleSolveConfig& cfg) {
    if (particles.empty()) return particles;
    auto ev = event_geometry(geom, lm);
    const double H = geom.boundary_measure();
    double J = objective_of(geom, particles, lm, cfg);

    for (int sweep = 0; sweep < cfg.max_refine_sweeps; ++sweep) {
        // (a) coordinate-wise mass solves.
        for (std::size_t i = 0; i < particles.size(); ++i) {
            auto others = particles;
            others.erase(others.begin() + i);
            auto dens0 = densities(geom, ev, others, cfg);
            std::vector<double> u(ev.size());
            for (std::size_t k = 0; k < ev.size(); ++k)
                u[k] = cfg.q * cfg.p_s / (H * H) +
                       cfg.p_d * ev[k].g *
                           gaussian_line_profile(
                               dist_point_line(particles[i].traj.at(ev[k].t), ev[k]), cfg.sigma,
                               geom.dim());
            double c_lin = cfg.p_d * geom.time_horizon() / cfg.T_half +
                           cfg.beta * particles[i].traj.kinetic_energy();
            particles[i].mass = mass_line_search(c_lin, dens0, u);
        }

        // (b) knot gradient descent with backtracking.
        for (int step = 0; step < cfg.knot_steps_per_sweep; ++step) {
            double J_cur = objective_of(geom, particles, lm, cfg);
            auto dens = densities(geom, ev, particles, cfg);
            std::vector<std::vector<Vec>> grad(particles.size());
            double gnorm2 = 0.0;
            const double dt_knot = geom.bin_width();
            for (std::size_t i = 0; i < particles.size(); ++i) {
                const auto& tr = particles[i].traj;
                grad[i].assign(tr.points.size(), Vec{});
                // Kinetic part.
                for (std::size_t k = 0; k < tr.points.size(); ++k) {
                    Vec g{};
                    if (k > 0) g += (2.0 / dt_knot) * (tr.points[k] - tr.points[k - 1]);
                    if (k + 1 < tr.points.size())
                        g += (2.0 / dt_knot) * (tr.points[k] - tr.points[k + 1]);
                    grad[i][k] = cfg.beta * particles[i].mass * g;
                }
                // Data part: events pull the knot of their time bin.
                for (std::size_t e = 0; e < ev.size(); ++e) {
                    int k = ev[e].layer;
                    if (k >= (int)tr.points.size()) k = (int)tr.points.size() - 1;
                    Vec x = tr.points[k];
                    Vec d = x - ev[e].anchor;
                    Vec perp = d - dot(d, ev[e].dir) * ev[e].dir;
                    double dist = norm(perp);
                    double phi = gaussian_line_profile(dist, cfg.sigma, geom.dim());
                    double w = particles[i].mass * cfg.p_d * ev[e].g * phi /
                               (cfg.sigma * cfg.sigma * dens[e]);
                    grad[i][k] += w * perp;
                }
                for (const Vec& g : grad[i]) gnorm2 += norm2(g);
            }
            if (gnorm2 < 1e-24) break;
            double alpha = 1.0;
            bool accepted = false;
            for (int bt = 0; bt < 40 && !accepted; ++bt) {
                auto trial = particles;
                for (std::size_t i = 0; i < trial.size(); ++i)
                    for (std::size_t k = 0; k < trial[i].traj.points.size(); ++k) {
                        Vec x = trial[i].traj.points[k] - alpha * grad[i][k];
                        Vec rel = x - geom.center();
                        double r = norm(rel);
                        if (r > geom.radius_D()) x = geom.center() + (geom.radius_D() / r) * rel;
                        trial[i].traj.points[k] = x;
                    }
                double J_trial = objective_of(geom, trial, lm, cfg);
                if (J_trial <= J_cur - 1e-4 * alpha * gnorm2) {
                    particles = std::move(trial);
                    accepted = true;
                } else {
                    alpha *= 0.5;
                }
            }
            if (!accepted) break;
        }

        double J_new = objective_of(geom, particles, lm, cfg);
        if (J - J_new <= cfg.refine_tol * (1.0 + std::abs(J))) {
            J = J_new;
            break;
        }
        J = J_new;
    }
    return particles;
}

ParticleReconstruction reconstruct_particles(const ScannerGeometry& geom, const Grid& grid,
                                             const Listmode& lm,
                                             const ParticleSolveConfig& cfg) {
    ParticleReconstruction out;
    if (lm.events.empty()) {
        out.objective = 0.0;
        return out;
    }
    const int cap = cfg.max_particles > 0
                        ? std::min<int>(cfg.max_particles, (int)lm.events.size())
                        : (int)lm.events.size();
    double J = kInf;
    for (int outer = 0; outer < cap; ++outer) {
        ++out.outer_iterations;
        auto cand = insert_trajectory(geom, grid, out.particles, lm, cfg);
        if (!cand.descent || cand.mass <= 0.0) break;
        out.particles.push_back(Particle{cand.mass, cand.traj});
        ++out.insertions;
        out.particles = refine(geom, std::move(out.particles), lm, cfg);
        out.particles.erase(std::remove_if(out.particles.begin(), out.particles.end(),
                                           [&](const Particle& p) {
                                               return p.mass < cfg.mass_eps;
                                           }),
                            out.particles.end());
        double J_new = objective_of(geom, out.particles, lm, cfg);
        if (std::isfinite(J) && J - J_new <= cfg.insert_tol * (1.0 + std::abs(J))) {
            J = std::min(J, J_new);
            break;
        }
        J = J_new;
    }
    out.objective = objective_of(geom, out.particles, lm, cfg);
    return out;
}

}  // namespace dynpet
