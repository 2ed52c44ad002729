#include "dynpet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "dynpet/philox.hpp"

namespace dynpet {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a_d(std::uint64_t h, double v) { return fnv1a(h, &v, sizeof v); }
std::uint64_t fnv1a_i(std::uint64_t h, std::int64_t v) { return fnv1a(h, &v, sizeof v); }

// Wrap an angle to [0, 2*pi).
double wrap_angle(double phi) {
    phi = std::fmod(phi, 2.0 * M_PI);
    if (phi < 0) phi += 2.0 * M_PI;
    return phi;
}

}  // namespace

ScannerGeometry::ScannerGeometry(int dim, double radius_D, double radius_Dd, int M, int N,
                                 double T, Vec center)
    : dim_(dim), center_(center), radius_D_(radius_D), radius_Dd_(radius_Dd),
      delta_(radius_Dd - radius_D), M_(M), N_(N), T_(T), dt_(T / N) {
    if (dim != 2 && dim != 3) throw std::invalid_argument("geometry: dim must be 2 or 3");
    if (!(radius_D > 0) || !(radius_Dd > 0))
        throw std::invalid_argument("geometry: radii must be positive");
    if (!(radius_Dd > radius_D))
        throw std::invalid_argument("geometry: radius_Dd must exceed radius_D (delta > 0)");
    if (M < 4) throw std::invalid_argument("geometry: need at least 4 detector cells");
    if (N < 1) throw std::invalid_argument("geometry: need at least one time bin");
    if (!(T > 0)) throw std::invalid_argument("geometry: time horizon must be positive");
    if (dim == 2) center_.z = 0.0;

    if (dim_ == 3) build_sphere_partition();

    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = fnv1a_i(h, dim_);
    h = fnv1a_d(h, radius_D_);
    h = fnv1a_d(h, radius_Dd_);
    h = fnv1a_i(h, M_);
    h = fnv1a_i(h, N_);
    h = fnv1a_d(h, T_);
    h = fnv1a_d(h, center_.x);
    h = fnv1a_d(h, center_.y);
    h = fnv1a_d(h, center_.z);
    hash_ = h;
}

double ScannerGeometry::boundary_measure() const {
    return dim_ == 2 ? 2.0 * M_PI * radius_Dd_ : 4.0 * M_PI * radius_Dd_ * radius_Dd_;
}

void ScannerGeometry::build_sphere_partition() {
    // Recursive zonal equal-area partition (Leopardi). Collar boundaries are
    // recomputed from cumulative cell counts, so all cell areas are exactly
    // 4*pi*R^2/M up to rounding.
    const int M = M_;
    const double area = 4.0 * M_PI / M;  // per region, unit sphere
    const double theta_c = 2.0 * std::asin(std::sqrt(1.0 / M));
    const double span = M_PI - 2.0 * theta_c;
    const double delta_i = std::sqrt(area);
    int n_collars = std::max(1, (int)std::lround(span / delta_i));

    // Ideal fractional region counts per collar, rounded with carried remainder.
    std::vector<int> counts;
    double carry = 0.0;
    auto cap_area = [](double th) { return 2.0 * M_PI * (1.0 - std::cos(th)); };
    double prev = theta_c;
    int assigned = 0;
    for (int i = 1; i <= n_collars; ++i) {
        double next = theta_c + span * i / n_collars;
        double ideal = (cap_area(next) - cap_area(prev)) / area;
        int n = std::max(0, (int)std::lround(ideal + carry));
        if (i == n_collars) n = M - 2 - assigned;  // force exact total
        carry += ideal - n;
        counts.push_back(n);
        assigned += n;
        prev = next;
    }

    band_u_.clear();
    band_count_.clear();
    band_offset_.clear();
    int cell = 0;
    int cum = 0;
    auto push_band = [&](int n) {
        if (n <= 0) return;
        band_u_.push_back(1.0 - 2.0 * (double)cum / M);
        band_count_.push_back(n);
        band_offset_.push_back(cell);
        cell += n;
        cum += n;
    };
    push_band(1);  // north cap
    for (int n : counts) push_band(n);
    push_band(1);  // south cap
    if (cell != M) throw std::logic_error("geometry: sphere partition count mismatch");
}

int ScannerGeometry::band_of(double u) const {
    // Band i covers u in (lower_i, upper_i], boundaries belong to the band above.
    for (std::size_t i = 0; i + 1 < band_u_.size(); ++i)
        if (u > band_u_[i + 1]) return (int)i;
    return (int)band_u_.size() - 1;
}

std::pair<Vec, Vec> ScannerGeometry::detect_ray(const Vec& x, const Vec& v) const {
    if (std::abs(norm(v) - 1.0) > 1e-9)
        throw std::invalid_argument("detect_ray: direction must be a unit vector");
    Vec p = x - center_;
    if (norm(p) > radius_D_ + 0.5 * delta_ + 1e-12)
        throw std::invalid_argument("detect_ray: point outside D_{delta/2}");
    const double pv = dot(p, v);
    const double disc = pv * pv - (norm2(p) - radius_Dd_ * radius_Dd_);
    const double sq = std::sqrt(disc);  // disc > 0 since |p| < radius_Dd
    Vec a = x + (-pv - sq) * v;
    Vec b = x + (-pv + sq) * v;
    return {a, b};
}

LineOfResponse ScannerGeometry::line_of_response(const Vec& a, const Vec& b) const {
    if (norm(b - a) < 1e-12)
        throw std::invalid_argument("line_of_response: coincident endpoints");
    for (const Vec* p : {&a, &b})
        if (std::abs(norm(*p - center_) - radius_Dd_) > 1e-9)
            throw std::invalid_argument("line_of_response: endpoint off the detector surface");
    LineOfResponse lor;
    lor.a = a;
    lor.b = b;
    lor.theta = normalized(b - a);
    lor.s = project_orth(a, lor.theta);
    return lor;
}

int ScannerGeometry::detector_index(const Vec& p) const {
    Vec q = p - center_;
    double r = norm(q);
    if (std::abs(r - radius_Dd_) > 1e-9)
        throw std::invalid_argument("detector_index: point off the detector surface");
    if (dim_ == 2) {
        double phi = wrap_angle(std::atan2(q.y, q.x));
        int j = (int)std::floor(phi * M_ / (2.0 * M_PI));
        return std::min(j, M_ - 1);
    }
    double u = std::clamp(q.z / r, -1.0, 1.0);
    int band = band_of(u);
    int n = band_count_[band];
    if (n == 1) return band_offset_[band];
    double phi = wrap_angle(std::atan2(q.y, q.x));
    int k = std::min((int)std::floor(phi * n / (2.0 * M_PI)), n - 1);
    return band_offset_[band] + k;
}

Vec ScannerGeometry::cell_representative(int j) const {
    if (j < 0 || j >= M_) throw std::out_of_range("cell_representative: bad index");
    if (dim_ == 2) {
        double phi = (j + 0.5) * 2.0 * M_PI / M_;
        return center_ + radius_Dd_ * Vec{std::cos(phi), std::sin(phi), 0.0};
    }
    std::size_t band = 0;
    while (band + 1 < band_offset_.size() && band_offset_[band + 1] <= j) ++band;
    int k = j - band_offset_[band];
    int n = band_count_[band];
    double u_hi = band_u_[band];
    double u_lo = band + 1 < band_u_.size() ? band_u_[band + 1] : -1.0;
    double u = 0.5 * (u_hi + u_lo);
    // Caps are represented by the pole itself.
    if (band == 0) u = 1.0;
    if (band + 1 == band_u_.size()) u = -1.0;
    double phi = (k + 0.5) * 2.0 * M_PI / n;
    double rho = std::sqrt(std::max(0.0, 1.0 - u * u));
    return center_ + radius_Dd_ * Vec{rho * std::cos(phi), rho * std::sin(phi), u};
}

std::vector<Vec> ScannerGeometry::cell_quadrature(int j, int n) const {
    std::vector<Vec> nodes;
    if (dim_ == 2) {
        double lo = j * 2.0 * M_PI / M_;
        double w = 2.0 * M_PI / M_ / n;
        for (int i = 0; i < n; ++i) {
            double phi = lo + (i + 0.5) * w;
            nodes.push_back(center_ + radius_Dd_ * Vec{std::cos(phi), std::sin(phi), 0.0});
        }
        return nodes;
    }
    std::size_t band = 0;
    while (band + 1 < band_offset_.size() && band_offset_[band + 1] <= j) ++band;
    int k = j - band_offset_[band];
    int nc = band_count_[band];
    double u_hi = band_u_[band];
    double u_lo = band + 1 < band_u_.size() ? band_u_[band + 1] : -1.0;
    double phi_lo = k * 2.0 * M_PI / nc, phi_w = 2.0 * M_PI / nc;
    // Midpoints in (u, phi): u is area-uniform, so all nodes carry equal weight.
    for (int iu = 0; iu < n; ++iu) {
        double u = u_lo + (iu + 0.5) * (u_hi - u_lo) / n;
        double rho = std::sqrt(std::max(0.0, 1.0 - u * u));
        for (int ip = 0; ip < n; ++ip) {
            double phi = phi_lo + (ip + 0.5) * phi_w / n;
            nodes.push_back(center_ + radius_Dd_ * Vec{rho * std::cos(phi), rho * std::sin(phi), u});
        }
    }
    return nodes;
}

Vec ScannerGeometry::sample_boundary_point(Philox& rng) const {
    Vec v = sample_unit_direction(rng, dim_);
    return center_ + radius_Dd_ * v;
}

int ScannerGeometry::time_bin(double t) const {
    if (t < 0.0 || t > T_) throw std::invalid_argument("time_bin: t outside [0,T]");
    return std::min((int)std::floor(t / dt_), N_ - 1);
}

}  // namespace dynpet
