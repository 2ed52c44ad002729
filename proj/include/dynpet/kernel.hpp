#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dynpet/grid.hpp"

namespace dynpet {

// Positron range kernel: isotropic Gaussian of width sigma truncated at 4*sigma
// and renormalized to unit mass, or "none" (a Dirac, valid only with discrete
// measurements). The support constraint 4*sigma <= delta/2 keeps blurred mass
// inside the detector's field of view.
struct PositronKernel {
    double sigma = 0.0;  // 0 means "none"

    static PositronKernel none() { return PositronKernel{0.0}; }
    static PositronKernel gaussian(double sigma) {
        if (!(sigma > 0)) throw std::invalid_argument("kernel: sigma must be positive");
        return PositronKernel{sigma};
    }

    bool is_none() const { return sigma <= 0.0; }
    double support_radius() const { return is_none() ? 0.0 : 4.0 * sigma; }

    void validate_for(const ScannerGeometry& geom) const {
        if (is_none()) return;
        if (support_radius() > 0.5 * geom.delta() + 1e-12)
            throw std::invalid_argument("kernel: 4*sigma must not exceed delta/2");
    }

    // Peak G(0) of the untruncated on-grid-equivalent density (per unit volume).
    double peak(int dim) const {
        if (is_none()) throw std::logic_error("kernel: peak undefined for none");
        return std::pow(2.0 * M_PI * sigma * sigma, -0.5 * dim);
    }

    // Peak of the line integral of G (the X-ray transform of a unit mass).
    double line_peak(int dim) const {
        if (is_none()) throw std::logic_error("kernel: line_peak undefined for none");
        return std::pow(2.0 * M_PI * sigma * sigma, -0.5 * (dim - 1));
    }
};

// Discrete convolution stencil of the kernel on a lattice: offsets within the
// truncation ball, weights normalized to sum to one. For "none" this is a
// single centered tap.
class BlurStencil {
public:
    BlurStencil(const PositronKernel& kernel, const Lattice& lat);

    // y[x + offset] += w * x-mass, clipped at the box edge.
    void apply(const Lattice& lat, const double* in, double* out) const;
    std::vector<double> apply(const Lattice& lat, const std::vector<double>& in) const;

    double weight_sum() const;
    const std::vector<std::array<int, 3>>& offsets() const { return offsets_; }
    const std::vector<double>& weights() const { return weights_; }

private:
    std::vector<std::array<int, 3>> offsets_;
    std::vector<double> weights_;
};

}  // namespace dynpet
