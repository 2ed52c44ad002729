#include "dynpet/listmode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dynpet/philox.hpp"

namespace dynpet {

Vec Trajectory::at(double t) const {
    if (times.empty()) throw std::logic_error("trajectory: no knots");
    if (t <= times.front()) return points.front();
    if (t >= times.back()) return points.back();
    auto it = std::upper_bound(times.begin(), times.end(), t);
    std::size_t k = (std::size_t)(it - times.begin());
    double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
    return points[k - 1] + w * (points[k] - points[k - 1]);
}

double Trajectory::kinetic_energy() const {
    double e = 0.0;
    for (std::size_t k = 1; k < times.size(); ++k) {
        double dt = times[k] - times[k - 1];
        if (dt <= 0) throw std::invalid_argument("trajectory: knot times must increase");
        e += norm2(points[k] - points[k - 1]) / dt;
    }
    return e;
}

Trajectory Trajectory::static_point(const Vec& p, double T) {
    return Trajectory{{0.0, T}, {p, p}};
}

Trajectory Trajectory::linear(const Vec& p0, const Vec& p1, double T, int knots) {
    if (knots < 2) knots = 2;
    Trajectory tr;
    for (int k = 0; k < knots; ++k) {
        double w = (double)k / (knots - 1);
        tr.times.push_back(w * T);
        tr.points.push_back(p0 + w * (p1 - p0));
    }
    return tr;
}

double GroundTruth::slice_mass() const {
    double m = 0.0;
    for (const auto& p : particles) m += p.mass;
    return m;
}

GridMeasure ground_truth_to_grid(const GroundTruth& gt, std::shared_ptr<const Grid> grid,
                                 int splat_mode) {
    const auto& geom = grid->geom();
    const int N = geom.num_time_bins();
    const double dt = geom.bin_width();
    GridMeasure gm(grid);

    for (const auto& p : gt.particles) {
        if (p.mass <= 0) throw std::invalid_argument("ground truth: particle masses must be positive");
        // Positions at bin centers, checked against D.
        std::vector<Vec> pos(N);
        std::vector<std::vector<std::pair<int, double>>> w(N);
        for (int t = 0; t < N; ++t) {
            pos[t] = p.traj.at(geom.bin_center(t));
            if (norm(pos[t] - geom.center()) > geom.radius_D() + 1e-12)
                throw std::invalid_argument("ground truth: trajectory exits D");
            w[t] = splat_weights(*grid, pos[t], splat_mode);
            double* r = gm.slice(t);
            for (auto [vox, wt] : w[t]) r[vox] += p.mass * dt * wt;
        }
        // Flux between consecutive slices: momentum mass*displacement, spread
        // over the two faces adjacent to each carrying voxel and averaged over
        // the two slices, which reproduces the kinetic energy of uniform
        // motion exactly in the Benamou-Brenier sum.
        for (int t = 0; t + 1 < N; ++t) {
            Vec disp = pos[t + 1] - pos[t];
            double* e = gm.eta_gap(t);
            for (const auto* side : {&w[t], &w[t + 1]}) {
                for (auto [vox, wt] : *side) {
                    for (int d = 0; d < grid->dim(); ++d) {
                        if (disp[d] == 0.0) continue;
                        double contrib = 0.25 * p.mass * disp[d] * wt;
                        auto c = grid->lattice().coords(vox);
                        int f_hi = grid->face_of(vox, d);
                        if (f_hi >= 0 && grid->face_active(f_hi)) e[f_hi] += contrib;
                        if (c[d] > 0) {
                            auto lo = c;
                            lo[d] -= 1;
                            int vlo = grid->lattice().index(lo[0], lo[1], lo[2]);
                            int f_lo = grid->face_of(vlo, d);
                            if (f_lo >= 0 && grid->face_active(f_lo)) e[f_lo] += contrib;
                        }
                    }
                }
            }
        }
    }
    return gm;
}

SampleResult sample_poisson_listmode(const GroundTruth& gt,
                                     std::shared_ptr<const ScannerGeometry> geom, double p_s,
                                     double p_d, const PositronKernel& kernel, Mode mode,
                                     std::uint64_t seed) {
    if (p_s < 0 || p_d < 0 || p_s + p_d > 1.0 + 1e-12)
        throw std::invalid_argument("sampler: need p_s, p_d >= 0 and p_s + p_d <= 1");
    if (kernel.is_none() && mode == Mode::continuous)
        throw std::invalid_argument(
            "sampler: vanishing positron range is only valid with discrete measurements");
    kernel.validate_for(*geom);

    const double T = geom->time_horizon();
    const double total = T * gt.slice_mass();
    const double rate = p_s + p_d > 0 ? (p_s + p_d) * total / gt.T_half : 0.0;

    SampleResult res;
    res.listmode.geom = geom;
    res.listmode.mode = mode;
    res.listmode.seed = seed;
    if (rate <= 0.0) return res;

    Philox global(seed, 0);
    const std::uint64_t K = sample_poisson(global, rate);

    // Particle-mass CDF for the detection channel.
    std::vector<double> cdf;
    double acc = 0.0;
    for (const auto& p : gt.particles) {
        acc += p.mass;
        cdf.push_back(acc);
    }

    struct Raw {
        ListmodeEvent ev;
        EventLabel label;
    };
    std::vector<Raw> raws;
    raws.reserve(K);

    for (std::uint64_t k = 0; k < K; ++k) {
        Philox rng(seed, k + 1);
        double t = T * rng.next_double();
        bool scattered = rng.next_double() < p_s / (p_s + p_d);
        Vec a, b;
        int particle = -1;
        if (scattered) {
            a = geom->sample_boundary_point(rng);
            b = geom->sample_boundary_point(rng);
        } else {
            double u = acc * rng.next_double();
            particle = (int)(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
            particle = std::min<int>(particle, (int)cdf.size() - 1);
            Vec x = gt.particles[particle].traj.at(t);
            if (!kernel.is_none()) {
                const double rmax = kernel.support_radius();
                Vec off;
                do {
                    off = Vec{sample_normal(rng) * kernel.sigma, sample_normal(rng) * kernel.sigma,
                              geom->dim() == 3 ? sample_normal(rng) * kernel.sigma : 0.0};
                } while (norm(off) > rmax);
                x += off;
            }
            Vec v = sample_unit_direction(rng, geom->dim());
            auto [ea, eb] = geom->detect_ray(x, v);
            a = ea;
            b = eb;
        }
        Raw raw;
        raw.ev.t = t;
        raw.ev.a = a;
        raw.ev.b = b;
        raw.label = EventLabel{scattered, particle};
        if (mode == Mode::discrete) {
            int i = geom->time_bin(t);
            int ja = geom->detector_index(a);
            int jb = geom->detector_index(b);
            if (ja == jb) {  // diagonal bins carry no intensity; thin the event
                ++res.dropped;
                continue;
            }
            raw.ev.bin = i;
            raw.ev.ja = ja;
            raw.ev.jb = jb;
            raw.ev.t = geom->bin_center(i);
            raw.ev.a = geom->cell_representative(ja);
            raw.ev.b = geom->cell_representative(jb);
        }
        raws.push_back(std::move(raw));
    }

    std::stable_sort(raws.begin(), raws.end(),
                     [](const Raw& l, const Raw& r) { return l.ev.t < r.ev.t; });
    for (auto& r : raws) {
        res.listmode.events.push_back(r.ev);
        res.labels.push_back(r.label);
    }
    return res;
}

void write_listmode(const Listmode& lm, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_listmode: cannot open " + path);
    const auto& g = *lm.geom;
    char buf[512];
    std::snprintf(buf, sizeof buf, "# dynpet-listmode v1 mode=%c T=%.17g M=%d N=%d\n",
                  lm.mode == Mode::continuous ? 'c' : 'd', g.time_horizon(), g.num_detectors(),
                  g.num_time_bins());
    out << buf;
    for (const auto& e : lm.events) {
        if (lm.mode == Mode::discrete) {
            std::snprintf(buf, sizeof buf, "%d,%d,%d\n", e.bin, e.ja, e.jb);
        } else if (g.dim() == 2) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", e.t, e.a.x, e.a.y,
                          e.b.x, e.b.y);
        } else {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.t,
                          e.a.x, e.a.y, e.a.z, e.b.x, e.b.y, e.b.z);
        }
        out << buf;
    }
    if (!out) throw std::runtime_error("write_listmode: write failed for " + path);
}

Listmode read_listmode(const std::string& path, std::shared_ptr<const ScannerGeometry> geom) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_listmode: cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("read_listmode: empty file " + path);

    char mode_c = 0;
    double T = 0;
    int M = 0, N = 0;
    if (std::sscanf(header.c_str(), "# dynpet-listmode v1 mode=%c T=%lf M=%d N=%d", &mode_c, &T,
                    &M, &N) != 4)
        throw std::runtime_error("read_listmode: malformed header: " + header);
    if (mode_c != 'c' && mode_c != 'd')
        throw std::runtime_error("read_listmode: unknown mode in header");
    if (std::abs(T - geom->time_horizon()) > 1e-12 * std::max(1.0, T) ||
        M != geom->num_detectors() || N != geom->num_time_bins())
        throw std::runtime_error("read_listmode: header does not match geometry (T/M/N)");

    Listmode lm;
    lm.geom = geom;
    lm.mode = mode_c == 'c' ? Mode::continuous : Mode::discrete;

    std::string line;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<double> f;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                f.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw std::runtime_error("read_listmode: row " + std::to_string(row) +
                                         ": bad number '" + tok + "'");
            }
        }
        ListmodeEvent e;
        auto fail = [&](const std::string& why) {
            throw std::runtime_error("read_listmode: row " + std::to_string(row) + ": " + why);
        };
        if (lm.mode == Mode::discrete) {
            if (f.size() != 3) fail("expected 3 fields i,j,k");
            int i = (int)f[0], ja = (int)f[1], jb = (int)f[2];
            if (i < 0 || i >= N) fail("time bin out of range");
            if (ja < 0 || ja >= M || jb < 0 || jb >= M) fail("detector index out of range");
            if (ja == jb) fail("diagonal detector pair");
            e.bin = i;
            e.ja = ja;
            e.jb = jb;
            e.t = geom->bin_center(i);
            e.a = geom->cell_representative(ja);
            e.b = geom->cell_representative(jb);
        } else {
            std::size_t want = 1 + 2 * (std::size_t)geom->dim();
            if (f.size() != want) fail("expected " + std::to_string(want) + " fields");
            e.t = f[0];
            if (e.t < 0 || e.t > T) fail("t outside [0,T]");
            if (geom->dim() == 2) {
                e.a = Vec{f[1], f[2], 0};
                e.b = Vec{f[3], f[4], 0};
            } else {
                e.a = Vec{f[1], f[2], f[3]};
                e.b = Vec{f[4], f[5], f[6]};
            }
            for (const Vec* p : {&e.a, &e.b})
                if (std::abs(norm(*p - geom->center()) - geom->radius_Dd()) > 1e-6)
                    fail("endpoint off the detector surface");
        }
        lm.events.push_back(e);
    }
    return lm;
}

void write_labels(const std::vector<EventLabel>& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_labels: cannot open " + path);
    for (std::size_t k = 0; k < labels.size(); ++k)
        out << "{\"event\":" << k << ",\"scattered\":" << (labels[k].scattered ? "true" : "false")
            << ",\"particle\":" << labels[k].particle << "}\n";
}

}  // namespace dynpet
