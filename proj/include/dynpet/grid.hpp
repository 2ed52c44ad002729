#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "dynpet/geometry.hpp"

namespace dynpet {

// Cubic voxel lattice over an axis-aligned box, nx voxels per axis.
struct Lattice {
    int dim = 2;
    int nx = 0;
    Vec origin;  // corner of the box (minimum coordinates)
    double h = 0.0;

    int nvox() const { int n = nx * nx; return dim == 3 ? n * nx : n; }

    int index(int ix, int iy, int iz = 0) const { return (iz * nx + iy) * nx + ix; }

    std::array<int, 3> coords(int lin) const {
        int ix = lin % nx, iy = (lin / nx) % nx, iz = lin / (nx * nx);
        return {ix, iy, dim == 3 ? iz : 0};
    }

    Vec center_of(int lin) const {
        auto c = coords(lin);
        return Vec{origin.x + (c[0] + 0.5) * h, origin.y + (c[1] + 0.5) * h,
                   dim == 3 ? origin.z + (c[2] + 0.5) * h : 0.0};
    }

    bool contains(const Vec& p) const {
        double side = nx * h;
        if (p.x < origin.x || p.x >= origin.x + side) return false;
        if (p.y < origin.y || p.y >= origin.y + side) return false;
        if (dim == 3 && (p.z < origin.z || p.z >= origin.z + side)) return false;
        return true;
    }
};

// Spatial discretization tied to a scanner: the lattice covers the box around
// D_{delta/2}, a voxel is active when its center lies in D (mass may only sit
// there), and staggered interior faces between pairs of active voxels carry
// the flux. Face f along axis d sits between voxel x and its +d neighbour and
// is indexed by x (coordinate along d restricted to [0, nx-2]).
class Grid {
public:
    Grid(std::shared_ptr<const ScannerGeometry> geom, int nx);

    const ScannerGeometry& geom() const { return *geom_; }
    std::shared_ptr<const ScannerGeometry> geom_ptr() const { return geom_; }
    const Lattice& lattice() const { return lat_; }
    int dim() const { return lat_.dim; }
    int nx() const { return lat_.nx; }
    double h() const { return lat_.h; }
    int nvox() const { return lat_.nvox(); }

    bool active(int lin) const { return active_[lin]; }
    const std::vector<std::uint8_t>& active_mask() const { return active_; }
    int num_active() const { return num_active_; }

    // Faces along axis d, globally indexed as offset_[d] + local index.
    int num_faces(int d) const { return face_lo_[d + 1] - face_lo_[d]; }
    int num_faces_total() const { return face_lo_[lat_.dim]; }
    int face_axis(int f) const { return f < face_lo_[1] ? 0 : (f < face_lo_[2] ? 1 : 2); }
    // Linear voxel indices (negative side, positive side) of face f; the face
    // is usable for flux only when face_active(f).
    std::pair<int, int> face_voxels(int f) const;
    bool face_active(int f) const { return face_active_[f]; }
    // Face index between voxel lin and its +d neighbour, -1 at the boundary.
    int face_of(int lin, int d) const;

    double voxel_volume() const;

private:
    std::shared_ptr<const ScannerGeometry> geom_;
    Lattice lat_;
    std::vector<std::uint8_t> active_;
    std::vector<std::uint8_t> face_active_;
    std::array<int, 4> face_lo_{};
    int num_active_ = 0;
};

// Spacetime measure pair on a grid: rho holds the mass per (time bin, voxel)
// over N slices; eta holds the flux between consecutive slices (N-1 temporal
// gaps) on interior faces, in units of mass * length (time-integrated
// momentum). Inactive voxels and faces must stay zero.
struct GridMeasure {
    std::shared_ptr<const Grid> grid;
    std::vector<double> rho;  // N * nvox
    std::vector<double> eta;  // (N-1) * num_faces_total

    GridMeasure() = default;
    explicit GridMeasure(std::shared_ptr<const Grid> g)
        : grid(std::move(g)),
          rho((std::size_t)grid->geom().num_time_bins() * grid->nvox(), 0.0),
          eta((std::size_t)std::max(0, grid->geom().num_time_bins() - 1) *
                  grid->num_faces_total(),
              0.0) {}

    int num_slices() const { return grid->geom().num_time_bins(); }
    double* slice(int t) { return rho.data() + (std::size_t)t * grid->nvox(); }
    const double* slice(int t) const { return rho.data() + (std::size_t)t * grid->nvox(); }
    double* eta_gap(int t) { return eta.data() + (std::size_t)t * grid->num_faces_total(); }
    const double* eta_gap(int t) const {
        return eta.data() + (std::size_t)t * grid->num_faces_total();
    }

    double total_mass() const;
    std::vector<double> slice_masses() const;
    double min_rho() const;
    bool conservative(double rel_tol = 1e-8) const;
};

// Deposits unit-integral weights for a point mass at p over the voxels of one
// slice. mode: 0 = nearest voxel, 1 = multilinear. Returns (voxel, weight).
std::vector<std::pair<int, double>> splat_weights(const Grid& grid, const Vec& p, int mode);

class Philox;

// Random pair satisfying the discrete continuity equation exactly: rho[0] is a
// random positive field, eta random on active faces, and later slices follow
// from the flux balance; the flux is shrunk until all slices stay positive.
GridMeasure random_feasible_pair(std::shared_ptr<const Grid> grid, Philox& rng,
                                 double mass_scale = 1.0, double flux_rel = 0.2);

}  // namespace dynpet
