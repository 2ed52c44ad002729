#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dynpet/grid.hpp"
#include "dynpet/kernel.hpp"
#include "dynpet/listmode.hpp"

namespace dynpet {

// Expected photon-pair mass per (time bin, ordered detector pair). Diagonal
// pairs (j == k) are structurally zero: a chord needs two distinct boundary
// points, and the uniform scatter share falling on same-cell pairs is dropped
// from the model (the sampler thins those events accordingly).
struct BinnedIntensity {
    std::shared_ptr<const ScannerGeometry> geom;
    std::vector<double> values;  // N * M * M, index ((i*M)+j)*M+k

    BinnedIntensity() = default;
    explicit BinnedIntensity(std::shared_ptr<const ScannerGeometry> g)
        : geom(std::move(g)),
          values((std::size_t)geom->num_time_bins() * geom->num_detectors() *
                     geom->num_detectors(),
                 0.0) {}

    double& at(int i, int j, int k) {
        const int M = geom->num_detectors();
        return values[((std::size_t)i * M + j) * M + k];
    }
    double at(int i, int j, int k) const {
        const int M = geom->num_detectors();
        return values[((std::size_t)i * M + j) * M + k];
    }
    double total() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
};

struct BoundConstants {
    double lower = 0.0;            // coefficient of |rho| in the lower bound
    double upper = 0.0;            // coefficient of |rho| in the upper bound
    double upper_detection = 0.0;  // detection share of upper
    bool has_positive_lower = false;
};

// Measurement model on a grid: scatter spreads a slice's mass uniformly over
// off-diagonal detector pairs; detection composes the positron-range blur with
// a ray-driven projector. The detection matrix is assembled once per geometry
// by midpoint quadrature over every ordered cell pair: each sampled chord
// (a, b) carries the surface-to-chord Jacobian cos(psi_a) cos(psi_b) /
// (|S^{d-1}| |b-a|^{d-1}) and is traced through the lattice with exact voxel
// intersection lengths. Entries are normalized so that intensities are mass
// per bin; column sums of the detection matrix are 1 up to quadrature error.
class ForwardOperator {
public:
    ForwardOperator(std::shared_ptr<const Grid> grid, PositronKernel kernel,
                    int quad_per_cell = 0);

    const Grid& grid() const { return *grid_; }
    std::shared_ptr<const Grid> grid_ptr() const { return grid_; }
    const ScannerGeometry& geom() const { return grid_->geom(); }
    const PositronKernel& kernel() const { return kernel_; }
    int quad_per_cell() const { return quad_; }

    // Uniform scatter intensity of one slice: every off-diagonal pair gets
    // slice_mass * |Gamma_j||Gamma_k| / H(boundary)^2 = slice_mass / M^2.
    double scatter_bin(double slice_mass) const;
    std::vector<double> apply_scatter(const double* rho_slice) const;  // M*M
    std::vector<double> apply_scatter(const std::vector<double>& rho_slice) const;

    // Scatterless detection of one slice (blur, then project); total mass is
    // preserved up to quadrature tolerance.
    std::vector<double> apply_detection(const double* rho_slice) const;
    std::vector<double> apply_detection(const std::vector<double>& rho_slice) const;

    BinnedIntensity apply_forward(const GridMeasure& gm, double p_s, double p_d) const;
    BinnedIntensity apply_unbiased_forward(const GridMeasure& gm, double q, double p_s,
                                           double p_d) const;

    // Radon-Nikodym density of A^q rho with respect to the reference measure at
    // one event: bin mass in discrete mode, surface density in continuous mode.
    double density_at_event(const GridMeasure& gm, const ListmodeEvent& ev, double q, double p_s,
                            double p_d, Mode mode) const;
    // (scatter density without q, detection density), same conventions.
    std::pair<double, double> density_parts(const GridMeasure& gm, const ListmodeEvent& ev,
                                            double p_s, double p_d, Mode mode) const;

    BoundConstants bound_constant(double q, double p_s, double p_d, Mode mode) const;

    // Bins a continuous intensity density (with respect to dt x H x H) by
    // midpoint quadrature; diagonal pairs are skipped.
    BinnedIntensity discretize(const std::function<double(double, const Vec&, const Vec&)>& f,
                               int time_nodes = 4) const;

    // Geometric density factor g(a,b) of the scatterless detection operator.
    double g_factor(const Vec& a, const Vec& b) const;
    double g_max() const;

    // Blurred voxel masses of one slice (full lattice).
    std::vector<double> blur_slice(const double* rho_slice) const;
    // Line integral of a blurred slice interpreted as spatial density.
    double xray_blurred_mass(const std::vector<double>& blurred, const Vec& theta,
                             const Vec& s) const;

    // CSR access to the detection matrix (rows: ordered pair j*M+k).
    int num_pairs() const;
    const std::vector<int>& row_offsets() const { return row_ptr_; }
    const std::vector<int>& cols() const { return col_; }
    const std::vector<double>& vals() const { return val_; }
    double max_entry() const { return max_entry_; }

    void save_cache(const std::string& path) const;
    static std::shared_ptr<ForwardOperator> load_cache(const std::string& path,
                                                       std::shared_ptr<const Grid> grid,
                                                       PositronKernel kernel);

private:
    ForwardOperator(std::shared_ptr<const Grid> grid, PositronKernel kernel, int quad, bool);
    void assemble();

    std::shared_ptr<const Grid> grid_;
    PositronKernel kernel_;
    BlurStencil stencil_;
    int quad_;
    std::vector<int> row_ptr_, col_;
    std::vector<double> val_;
    double max_entry_ = 0.0;
};

}  // namespace dynpet
