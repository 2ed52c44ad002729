#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include "dynpet/grid.hpp"

namespace dynpet {

// Flip a direction to the lexicographically nonnegative representative of
// {v, -v}. Line integrals are invariant under the flip; using the canonical
// representative makes P f(theta, s) == P f(-theta, s) hold bitwise.
inline Vec canonical_direction(Vec v) {
    if (v.x < 0 || (v.x == 0 && (v.y < 0 || (v.y == 0 && v.z < 0)))) return -v;
    return v;
}

// Walks the line p + t*dir through the lattice (Amanatides-Woo), calling
// visit(linear_voxel_index, intersection_length) for every crossed voxel.
// dir must be a unit vector.
template <class F>
void trace_ray(const Lattice& lat, const Vec& p, const Vec& dir, F&& visit) {
    const int dim = lat.dim;
    const double side = lat.nx * lat.h;
    double t_lo = -std::numeric_limits<double>::infinity();
    double t_hi = std::numeric_limits<double>::infinity();
    for (int d = 0; d < dim; ++d) {
        double o = lat.origin[d], x = p[d], v = dir[d];
        if (std::abs(v) < 1e-15) {
            if (x <= o || x >= o + side) return;
        } else {
            double t0 = (o - x) / v, t1 = (o + side - x) / v;
            if (t0 > t1) std::swap(t0, t1);
            t_lo = std::max(t_lo, t0);
            t_hi = std::min(t_hi, t1);
        }
    }
    if (!(t_lo < t_hi)) return;

    // Start voxel from a point nudged just inside the box.
    const double eps = 1e-12 * lat.h;
    double t = t_lo;
    int idx[3] = {0, 0, 0};
    for (int d = 0; d < dim; ++d) {
        double c = p[d] + (t + eps) * dir[d];
        idx[d] = std::clamp((int)std::floor((c - lat.origin[d]) / lat.h), 0, lat.nx - 1);
    }
    int step[3];
    double t_next[3], dt[3];
    for (int d = 0; d < dim; ++d) {
        double v = dir[d];
        if (std::abs(v) < 1e-15) {
            step[d] = 0;
            t_next[d] = std::numeric_limits<double>::infinity();
            dt[d] = std::numeric_limits<double>::infinity();
        } else {
            step[d] = v > 0 ? 1 : -1;
            int next_plane = idx[d] + (v > 0 ? 1 : 0);
            t_next[d] = (lat.origin[d] + next_plane * lat.h - p[d]) / v;
            dt[d] = lat.h / std::abs(v);
        }
    }
    while (t < t_hi - eps) {
        int d_min = 0;
        for (int d = 1; d < dim; ++d)
            if (t_next[d] < t_next[d_min]) d_min = d;
        double t_new = std::min(t_next[d_min], t_hi);
        double len = t_new - t;
        if (len > 0) visit(lat.index(idx[0], idx[1], idx[2]), len);
        if (t_new >= t_hi) break;
        idx[d_min] += step[d_min];
        if (idx[d_min] < 0 || idx[d_min] >= lat.nx) break;
        t_next[d_min] += dt[d_min];
        t = t_new;
    }
}

// X-ray transform of a gridded density (values per unit volume): the line
// integral over {s + r*theta}. Lines missing the box yield 0.
inline double xray_transform(const Lattice& lat, const double* density, Vec theta, const Vec& s) {
    theta = canonical_direction(theta);
    double acc = 0.0;
    trace_ray(lat, s, theta, [&](int vox, double len) { acc += density[vox] * len; });
    return acc;
}

}  // namespace dynpet
