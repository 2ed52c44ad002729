#pragma once

#include <cstdint>
#include <vector>

#include "dynpet/vec.hpp"

namespace dynpet {

struct LineOfResponse {
    Vec theta;  // unit direction, (b-a)/|b-a|
    Vec s;      // foot point: orthogonal projection of the line onto theta^perp
    Vec a, b;   // endpoints on the detector surface
};

// Scanner geometry: reconstruction ball D (radius_D) inside detector ball
// (radius_Dd), concentric, margin delta = radius_Dd - radius_D. The detector
// surface is partitioned into M equal-measure half-open cells: equal arcs in
// 2D, a recursive zonal equal-area partition in 3D. Time interval [0,T] is
// split into N bins of width dt. Immutable after construction.
class ScannerGeometry {
public:
    ScannerGeometry(int dim, double radius_D, double radius_Dd, int M, int N, double T,
                    Vec center = {});

    int dim() const { return dim_; }
    const Vec& center() const { return center_; }
    double radius_D() const { return radius_D_; }
    double radius_Dd() const { return radius_Dd_; }
    double delta() const { return delta_; }
    int num_detectors() const { return M_; }
    int num_time_bins() const { return N_; }
    double time_horizon() const { return T_; }
    double bin_width() const { return dt_; }

    // Surface measure H^{d-1} of the detector boundary and of one cell.
    double boundary_measure() const;
    double cell_measure() const { return boundary_measure() / M_; }

    // Endpoints of the detector-surface chord through x with direction v,
    // oriented so that (b-a)/|b-a| = v. Requires |x-center| <= radius_D+delta/2.
    std::pair<Vec, Vec> detect_ray(const Vec& x, const Vec& v) const;

    LineOfResponse line_of_response(const Vec& a, const Vec& b) const;

    // Cell index of a point on the detector surface (within 1e-9 of it).
    int detector_index(const Vec& p) const;

    // Representative point z_j of cell j.
    Vec cell_representative(int j) const;

    // Midpoint-rule quadrature nodes covering cell j with equal weights
    // summing to cell_measure(). n controls the resolution per dimension.
    std::vector<Vec> cell_quadrature(int j, int n) const;

    // Uniform random point on the detector surface.
    Vec sample_boundary_point(class Philox& rng) const;

    // Time bin of t in [0,T]; t == T maps to the last bin.
    int time_bin(double t) const;
    double bin_center(int i) const { return (i + 0.5) * dt_; }

    std::uint64_t hash() const { return hash_; }

private:
    int dim_;
    Vec center_;
    double radius_D_, radius_Dd_, delta_;
    int M_, N_;
    double T_, dt_;
    std::uint64_t hash_;

    // 3D zonal partition: bands in u = cos(colatitude), descending from the
    // north cap. band_u_[i] is the upper u of band i, band_count_[i] the
    // number of equal-longitude cells, band_offset_[i] the first cell index.
    std::vector<double> band_u_;
    std::vector<int> band_count_;
    std::vector<int> band_offset_;

    void build_sphere_partition();
    int band_of(double u) const;
};

}  // namespace dynpet
