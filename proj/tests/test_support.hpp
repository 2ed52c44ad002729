#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

// Shared oracles and numeric helpers for the test suites. Everything here is
// independent of the library's computation paths it is used to check.

namespace testsup {

// Regularized lower incomplete gamma P(a, x) by series / continued fraction.
inline double gamma_p(double a, double x) {
    if (x < 0 || a <= 0) return 0.0;
    if (x == 0) return 0.0;
    auto gamln = [](double v) { return std::lgamma(v); };
    if (x < a + 1.0) {
        double ap = a, sum = 1.0 / a, del = sum;
        for (int n = 0; n < 500; ++n) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-15) break;
        }
        return sum * std::exp(-x + a * std::log(x) - gamln(a));
    }
    // Lentz continued fraction for Q(a,x).
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    double q = std::exp(-x + a * std::log(x) - gamln(a)) * h;
    return 1.0 - q;
}

// Survival p-value of a chi-square statistic with k degrees of freedom.
inline double chi2_sf(double stat, double k) { return 1.0 - gamma_p(0.5 * k, 0.5 * stat); }

// Largest singular value of a dense matrix (rows x cols) via Jacobi
// eigenvalue iteration on A^T A; dense oracle for the power-iteration code.
inline double dense_opnorm(const std::vector<std::vector<double>>& A) {
    if (A.empty()) return 0.0;
    const std::size_t n = A[0].size();
    std::vector<std::vector<double>> G(n, std::vector<double>(n, 0.0));
    for (const auto& row : A)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) G[i][j] += row[i] * row[j];
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += G[p][q] * G[p][q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(G[p][q]) < 1e-300) continue;
                double theta = 0.5 * std::atan2(2.0 * G[p][q], G[q][q] - G[p][p]);
                double c = std::cos(theta), s = std::sin(theta);
                for (std::size_t k = 0; k < n; ++k) {
                    double gkp = G[k][p], gkq = G[k][q];
                    G[k][p] = c * gkp - s * gkq;
                    G[k][q] = s * gkp + c * gkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double gpk = G[p][k], gqk = G[q][k];
                    G[p][k] = c * gpk - s * gqk;
                    G[q][k] = s * gpk + c * gqk;
                }
            }
    }
    double lmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) lmax = std::max(lmax, G[i][i]);
    return std::sqrt(std::max(0.0, lmax));
}

// Golden-section minimizer of a unimodal function on [lo, hi].
inline double golden_min(const std::function<double(double)>& f, double lo, double hi,
                         int iters = 200) {
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < iters; ++i) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace testsup
