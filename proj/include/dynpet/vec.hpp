#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace dynpet {

// Small fixed-size vector. Code is dimension-generic with dim in {2,3};
// for dim == 2 the z component is kept at zero.
struct Vec {
    double x = 0.0, y = 0.0, z = 0.0;

    double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
    double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }

    Vec& operator+=(const Vec& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec& operator-=(const Vec& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
};

inline Vec operator+(Vec a, const Vec& b) { return a += b; }
inline Vec operator-(Vec a, const Vec& b) { return a -= b; }
inline Vec operator*(double s, Vec a) { return a *= s; }
inline Vec operator*(Vec a, double s) { return a *= s; }
inline Vec operator/(Vec a, double s) { return a *= (1.0 / s); }
inline Vec operator-(const Vec& a) { return Vec{-a.x, -a.y, -a.z}; }

inline double dot(const Vec& a, const Vec& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm2(const Vec& a) { return dot(a, a); }
inline double norm(const Vec& a) { return std::sqrt(norm2(a)); }
inline Vec normalized(const Vec& a) { return a / norm(a); }

inline bool operator==(const Vec& a, const Vec& b) { return a.x == b.x && a.y == b.y && a.z == b.z; }

// Projection of p onto the hyperplane through the origin orthogonal to unit vector u.
inline Vec project_orth(const Vec& p, const Vec& u) { return p - dot(p, u) * u; }

}  // namespace dynpet
