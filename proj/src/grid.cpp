#include "dynpet/grid.hpp"

#include <algorithm>
#include <cmath>

#include "dynpet/philox.hpp"

namespace dynpet {

Grid::Grid(std::shared_ptr<const ScannerGeometry> geom, int nx) : geom_(std::move(geom)) {
    if (nx < 2) throw std::invalid_argument("grid: nx must be at least 2");
    const auto& g = *geom_;
    double r0 = g.radius_D() + 0.5 * g.delta();
    lat_.dim = g.dim();
    lat_.nx = nx;
    lat_.h = 2.0 * r0 / nx;
    lat_.origin = g.center() - Vec{r0, r0, lat_.dim == 3 ? r0 : 0.0};
    if (lat_.dim == 2) lat_.origin.z = 0.0;

    const int nv = lat_.nvox();
    active_.assign(nv, 0);
    for (int i = 0; i < nv; ++i) {
        if (norm(lat_.center_of(i) - g.center()) <= g.radius_D()) {
            active_[i] = 1;
            ++num_active_;
        }
    }
    if (num_active_ == 0) throw std::invalid_argument("grid: no voxel centers inside D");

    // Interior faces per axis: (nx-1) * nx^(dim-1), indexed by the voxel on
    // the negative side.
    face_lo_[0] = 0;
    int per_axis = (nx - 1);
    for (int d = 1; d < lat_.dim; ++d) per_axis *= nx;
    if (lat_.dim == 3) per_axis = (nx - 1) * nx * nx;
    for (int d = 0; d < 3; ++d)
        face_lo_[d + 1] = face_lo_[d] + (d < lat_.dim ? per_axis : 0);

    face_active_.assign(face_lo_[lat_.dim], 0);
    for (int f = 0; f < face_lo_[lat_.dim]; ++f) {
        auto [lo, hi] = face_voxels(f);
        face_active_[f] = active_[lo] && active_[hi];
    }
}

std::pair<int, int> Grid::face_voxels(int f) const {
    const int d = face_axis(f);
    int local = f - face_lo_[d];
    const int nx = lat_.nx;
    int ix, iy, iz = 0;
    // Local layout: the coordinate along axis d runs over nx-1 values fastest.
    if (d == 0) {
        ix = local % (nx - 1);
        iy = (local / (nx - 1)) % nx;
        iz = local / ((nx - 1) * nx);
    } else if (d == 1) {
        iy = local % (nx - 1);
        ix = (local / (nx - 1)) % nx;
        iz = local / ((nx - 1) * nx);
    } else {
        iz = local % (nx - 1);
        ix = (local / (nx - 1)) % nx;
        iy = local / ((nx - 1) * nx);
    }
    int lo = lat_.index(ix, iy, iz);
    int hi = d == 0 ? lat_.index(ix + 1, iy, iz)
                    : (d == 1 ? lat_.index(ix, iy + 1, iz) : lat_.index(ix, iy, iz + 1));
    return {lo, hi};
}

int Grid::face_of(int lin, int d) const {
    auto c = lat_.coords(lin);
    const int nx = lat_.nx;
    if (c[d] >= nx - 1) return -1;
    int local;
    if (d == 0)
        local = (c[2] * nx + c[1]) * (nx - 1) + c[0];
    else if (d == 1)
        local = (c[2] * nx + c[0]) * (nx - 1) + c[1];
    else
        local = (c[1] * nx + c[0]) * (nx - 1) + c[2];
    return face_lo_[d] + local;
}

double Grid::voxel_volume() const {
    double v = lat_.h * lat_.h;
    return lat_.dim == 3 ? v * lat_.h : v;
}

double GridMeasure::total_mass() const {
    double s = 0.0;
    for (double v : rho) s += v;
    return s;
}

std::vector<double> GridMeasure::slice_masses() const {
    std::vector<double> m(num_slices(), 0.0);
    const int nv = grid->nvox();
    for (int t = 0; t < num_slices(); ++t) {
        const double* r = slice(t);
        double s = 0.0;
        for (int i = 0; i < nv; ++i) s += r[i];
        m[t] = s;
    }
    return m;
}

double GridMeasure::min_rho() const {
    double m = 0.0;
    for (double v : rho) m = std::min(m, v);
    return m;
}

bool GridMeasure::conservative(double rel_tol) const {
    auto m = slice_masses();
    double total = 0.0;
    for (double v : m) total += v;
    if (total == 0.0) return true;
    double mean = total / m.size();
    for (double v : m)
        if (std::abs(v - mean) > rel_tol * std::max(1.0, std::abs(mean))) return false;
    return true;
}

GridMeasure random_feasible_pair(std::shared_ptr<const Grid> grid, Philox& rng,
                                 double mass_scale, double flux_rel) {
    const Grid& g = *grid;
    const int N = g.geom().num_time_bins();
    const int nv = g.nvox();
    const int F = g.num_faces_total();
    const double scale = g.geom().bin_width() / g.h();
    GridMeasure gm(grid);
    std::vector<double> r0(nv, 0.0);
    double per = mass_scale / g.num_active();
    for (int x = 0; x < nv; ++x)
        if (g.active(x)) r0[x] = per * (0.5 + rng.next_double());
    std::vector<double> flux((std::size_t)std::max(0, N - 1) * F, 0.0);
    for (int t = 0; t + 1 < N; ++t)
        for (int f = 0; f < F; ++f)
            if (g.face_active(f))
                flux[(std::size_t)t * F + f] = per * flux_rel * (2.0 * rng.next_double() - 1.0);

    for (int attempt = 0; attempt < 60; ++attempt) {
        std::copy(r0.begin(), r0.end(), gm.slice(0));
        std::copy(flux.begin(), flux.end(), gm.eta.begin());
        bool ok = true;
        for (int t = 0; t + 1 < N && ok; ++t) {
            const double* rt = gm.slice(t);
            double* rn = gm.slice(t + 1);
            const double* e = gm.eta_gap(t);
            for (int x = 0; x < nv; ++x) {
                if (!g.active(x)) {
                    rn[x] = 0.0;
                    continue;
                }
                double div = 0.0;
                auto c = g.lattice().coords(x);
                for (int d = 0; d < g.dim(); ++d) {
                    int fo = g.face_of(x, d);
                    if (fo >= 0 && g.face_active(fo)) div += e[fo];
                    if (c[d] > 0) {
                        auto lc = c;
                        lc[d] -= 1;
                        int vlo = g.lattice().index(lc[0], lc[1], lc[2]);
                        int fi = g.face_of(vlo, d);
                        if (fi >= 0 && g.face_active(fi)) div -= e[fi];
                    }
                }
                rn[x] = rt[x] - scale * div;
                if (rn[x] < 0.0) {
                    ok = false;
                    break;
                }
            }
        }
        if (ok) return gm;
        for (double& v : flux) v *= 0.5;
    }
    // Flux fully damped: static field, trivially feasible.
    std::fill(gm.eta.begin(), gm.eta.end(), 0.0);
    for (int t = 0; t < N; ++t) std::copy(r0.begin(), r0.end(), gm.slice(t));
    return gm;
}

std::vector<std::pair<int, double>> splat_weights(const Grid& grid, const Vec& p, int mode) {
    const Lattice& lat = grid.lattice();
    const int dim = lat.dim;
    std::vector<std::pair<int, double>> out;
    if (mode == 0) {
        int ix = std::clamp((int)std::floor((p.x - lat.origin.x) / lat.h), 0, lat.nx - 1);
        int iy = std::clamp((int)std::floor((p.y - lat.origin.y) / lat.h), 0, lat.nx - 1);
        int iz = dim == 3
                     ? std::clamp((int)std::floor((p.z - lat.origin.z) / lat.h), 0, lat.nx - 1)
                     : 0;
        out.emplace_back(lat.index(ix, iy, iz), 1.0);
        return out;
    }
    // Multilinear: fractional position relative to voxel centers.
    double fx = (p.x - lat.origin.x) / lat.h - 0.5;
    double fy = (p.y - lat.origin.y) / lat.h - 0.5;
    double fz = dim == 3 ? (p.z - lat.origin.z) / lat.h - 0.5 : 0.0;
    int ix = (int)std::floor(fx), iy = (int)std::floor(fy), iz = (int)std::floor(fz);
    double wx = fx - ix, wy = fy - iy, wz = fz - iz;
    const int zmax = dim == 3 ? 2 : 1;
    for (int dz = 0; dz < zmax; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                double w = (dx ? wx : 1.0 - wx) * (dy ? wy : 1.0 - wy);
                if (dim == 3) w *= dz ? wz : 1.0 - wz;
                if (w == 0.0) continue;
                int jx = std::clamp(ix + dx, 0, lat.nx - 1);
                int jy = std::clamp(iy + dy, 0, lat.nx - 1);
                int jz = dim == 3 ? std::clamp(iz + dz, 0, lat.nx - 1) : 0;
                out.emplace_back(lat.index(jx, jy, jz), w);
            }
    return out;
}

}  // namespace dynpet
