#include "dynpet/kernel.hpp"

#include <algorithm>

namespace dynpet {

BlurStencil::BlurStencil(const PositronKernel& kernel, const Lattice& lat) {
    if (kernel.is_none()) {
        offsets_.push_back({0, 0, 0});
        weights_.push_back(1.0);
        return;
    }
    const double s = kernel.sigma;
    const double r = kernel.support_radius();
    const int k = std::max(1, (int)std::ceil(r / lat.h));
    const int kz = lat.dim == 3 ? k : 0;
    double sum = 0.0;
    for (int dz = -kz; dz <= kz; ++dz)
        for (int dy = -k; dy <= k; ++dy)
            for (int dx = -k; dx <= k; ++dx) {
                double d2 = (dx * dx + dy * dy + dz * dz) * lat.h * lat.h;
                if (d2 > r * r) continue;
                double w = std::exp(-0.5 * d2 / (s * s));
                offsets_.push_back({dx, dy, dz});
                weights_.push_back(w);
                sum += w;
            }
    for (double& w : weights_) w /= sum;
}

void BlurStencil::apply(const Lattice& lat, const double* in, double* out) const {
    const int nx = lat.nx;
    const int nv = lat.nvox();
    std::fill(out, out + nv, 0.0);
    for (int lin = 0; lin < nv; ++lin) {
        double m = in[lin];
        if (m == 0.0) continue;
        auto c = lat.coords(lin);
        for (std::size_t s = 0; s < offsets_.size(); ++s) {
            int ix = c[0] + offsets_[s][0];
            int iy = c[1] + offsets_[s][1];
            int iz = c[2] + offsets_[s][2];
            if (ix < 0 || ix >= nx || iy < 0 || iy >= nx) continue;
            if (lat.dim == 3 && (iz < 0 || iz >= nx)) continue;
            out[lat.index(ix, iy, lat.dim == 3 ? iz : 0)] += m * weights_[s];
        }
    }
}

std::vector<double> BlurStencil::apply(const Lattice& lat, const std::vector<double>& in) const {
    std::vector<double> out(lat.nvox(), 0.0);
    apply(lat, in.data(), out.data());
    return out;
}

double BlurStencil::weight_sum() const {
    double s = 0.0;
    for (double w : weights_) s += w;
    return s;
}

}  // namespace dynpet
