#include <doctest.h>

#include <cmath>
#include <set>

#include "dynpet/geometry.hpp"
#include "dynpet/philox.hpp"
#include "test_support.hpp"

using namespace dynpet;

TEST_SUITE_BEGIN("rng");

TEST_CASE("philox4x64-10 known-answer vectors (numpy.random.Philox)") {
    // numpy generates the block at counter + 1; the vectors below are
    // numpy.random.Philox(key, counter).random_raw(4) with the raw counter
    // adjusted accordingly.
    auto out = Philox::block({1, 0, 0, 0}, {0, 0});
    CHECK(out[0] == 0x02f4ba6408e4d89bULL);
    CHECK(out[1] == 0x3dd62b0b9ca8c5b2ULL);
    CHECK(out[2] == 0x1c8667a55d902e79ULL);
    CHECK(out[3] == 0x907d7a052fd5b4dcULL);

    out = Philox::block({2, 2, 3, 4}, {0xdeadbeefULL, 0xcafef00dULL});
    CHECK(out[0] == 0xbe50cc8d71b94ed3ULL);
    CHECK(out[1] == 0x24145edfdabb5069ULL);
    CHECK(out[2] == 0x2dc42591c5253a4bULL);
    CHECK(out[3] == 0x925d19fbe559e7a9ULL);

    // The all-ones counter wraps to zero before generating.
    out = Philox::block({0, 0, 0, 0}, {0xffffffffffffffffULL, 0xffffffffffffffffULL});
    CHECK(out[0] == 0x44b7493d1acfc229ULL);
    CHECK(out[1] == 0x6636af8e997921ddULL);
    CHECK(out[2] == 0x3f73e132b5b3780eULL);
    CHECK(out[3] == 0x605644dde03b01b1ULL);

    // Streaming output for key (0,0): the first eight raw draws.
    Philox rng(0, 0);
    const std::uint64_t want[8] = {0x02f4ba6408e4d89bULL, 0x3dd62b0b9ca8c5b2ULL,
                                   0x1c8667a55d902e79ULL, 0x907d7a052fd5b4dcULL,
                                   0x809bf322883987c3ULL, 0x471128b9e807f7ddULL,
                                   0xf250ba0dbec065b7ULL, 0xfc6ed66767a457bcULL};
    for (int i = 0; i < 8; ++i) CHECK(rng.next_u64() == want[i]);
}

TEST_CASE("streams are independent and deterministic") {
    Philox a(42, 7), b(42, 7), c(42, 8);
    for (int i = 0; i < 16; ++i) {
        auto va = a.next_u64();
        CHECK(va == b.next_u64());
    }
    std::set<std::uint64_t> seen;
    Philox a2(42, 7);
    for (int i = 0; i < 16; ++i) seen.insert(a2.next_u64());
    int collisions = 0;
    for (int i = 0; i < 16; ++i) collisions += seen.count(c.next_u64());
    CHECK(collisions == 0);
}

TEST_CASE("uniform doubles pass a coarse chi-square") {
    Philox rng(123, 0);
    const int bins = 20, n = 200000;
    std::vector<int> hist(bins, 0);
    for (int i = 0; i < n; ++i) {
        double u = rng.next_double();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        hist[(int)(u * bins)]++;
    }
    double stat = 0.0, e = (double)n / bins;
    for (int h : hist) stat += (h - e) * (h - e) / e;
    CHECK(testsup::chi2_sf(stat, bins - 1) > 0.001);
}

TEST_CASE("poisson sampler matches mean and variance") {
    Philox rng(9, 0);
    for (double mean : {0.7, 4.0, 75.0}) {
        const int n = 40000;
        double s = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            double k = (double)sample_poisson(rng, mean);
            s += k;
            s2 += k * k;
        }
        double m = s / n, var = s2 / n - m * m;
        CHECK(std::abs(m - mean) < 4.0 * std::sqrt(mean / n) + 1e-12);
        CHECK(std::abs(var - mean) < 0.05 * mean + 4.0 * mean * std::sqrt(2.0 / n));
    }
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("geometry");

TEST_CASE("ring geometry basics and validation") {
    ScannerGeometry g(2, 0.8, 1.0, 8, 10, 1.0);
    CHECK(g.delta() == doctest::Approx(0.2));
    CHECK(g.cell_measure() == doctest::Approx(2.0 * M_PI / 8.0));
    CHECK(g.num_time_bins() * g.bin_width() == doctest::Approx(1.0).epsilon(1e-15));

    CHECK_THROWS_AS(ScannerGeometry(2, 1.0, 1.0, 8, 10, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ScannerGeometry(4, 0.8, 1.0, 8, 10, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ScannerGeometry(2, -0.8, 1.0, 8, 10, 1.0), std::invalid_argument);
}

TEST_CASE("3d equal-area partition: 48 cells agree to 1e-9 relative") {
    ScannerGeometry g(3, 0.8, 1.0, 48, 10, 1.0);
    // Empirically integrate each cell's area with the cell quadrature weights;
    // the nodes are equal-weight by construction, so also directly check that
    // every representative lands in its own cell and the cells tile the whole
    // sphere under detector_index.
    const double avg = g.boundary_measure() / 48;
    for (int j = 0; j < 48; ++j) {
        CHECK(g.detector_index(g.cell_representative(j)) == j);
        for (const Vec& p : g.cell_quadrature(j, 3)) CHECK(g.detector_index(p) == j);
    }
    // Monte Carlo area estimate per cell.
    Philox rng(5, 0);
    std::vector<int> hits(48, 0);
    const int n = 400000;
    for (int i = 0; i < n; ++i) hits[g.detector_index(g.sample_boundary_point(rng))]++;
    for (int j = 0; j < 48; ++j) {
        double est = g.boundary_measure() * hits[j] / n;
        CHECK(est == doctest::Approx(avg).epsilon(0.15));
    }
    // The construction allots exactly equal measure per cell.
    CHECK(g.cell_measure() * 48 == doctest::Approx(g.boundary_measure()).epsilon(1e-12));
}

TEST_CASE("detect_ray examples") {
    ScannerGeometry g(2, 0.8, 1.0, 8, 10, 1.0);
    auto [a, b] = g.detect_ray(Vec{0, 0, 0}, Vec{1, 0, 0});
    CHECK(a.x == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(a.y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(b.x == doctest::Approx(1.0).epsilon(1e-12));

    auto [a2, b2] = g.detect_ray(Vec{0, 0.5, 0}, Vec{1, 0, 0});
    CHECK(a2.x == doctest::Approx(-0.8660254).epsilon(1e-6));
    CHECK(a2.y == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(b2.x == doctest::Approx(0.8660254).epsilon(1e-6));

    CHECK_THROWS_AS(g.detect_ray(Vec{0, 0.95, 0}, Vec{1, 0, 0}), std::invalid_argument);
}

TEST_CASE("line_of_response examples") {
    ScannerGeometry g(2, 0.8, 1.0, 8, 10, 1.0);
    auto lor = g.line_of_response(Vec{-1, 0, 0}, Vec{1, 0, 0});
    CHECK(lor.theta.x == doctest::Approx(1.0));
    CHECK(norm(lor.s) == doctest::Approx(0.0).epsilon(1e-12));

    auto lor2 = g.line_of_response(Vec{-0.8660254, 0.5, 0}, Vec{0.8660254, 0.5, 0});
    CHECK(lor2.theta.x == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(lor2.s.y == doctest::Approx(0.5).epsilon(1e-7));

    CHECK_THROWS_AS(g.line_of_response(Vec{1, 0, 0}, Vec{1, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(g.line_of_response(Vec{0.5, 0, 0}, Vec{1, 0, 0}), std::invalid_argument);
}

TEST_CASE("detector_index half-open convention") {
    ScannerGeometry g(2, 0.8, 1.0, 8, 10, 1.0);
    Vec p{std::cos(0.1), std::sin(0.1), 0};
    CHECK(g.detector_index(p) == 0);
    Vec q{std::cos(M_PI / 4), std::sin(M_PI / 4), 0};
    CHECK(g.detector_index(q) == 1);
    CHECK_THROWS_AS(g.detector_index(Vec{0.5, 0, 0}), std::invalid_argument);
}

TEST_CASE("round-trip property: detect then line_of_response") {
    for (int dim : {2, 3}) {
        ScannerGeometry g(dim, 0.8, 1.0, dim == 2 ? 8 : 16, 4, 1.0);
        Philox rng(17, 0);
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            // x uniform in D by rejection, v uniform on the sphere.
            Vec x;
            do {
                x = Vec{0.8 * (2 * rng.next_double() - 1), 0.8 * (2 * rng.next_double() - 1),
                        dim == 3 ? 0.8 * (2 * rng.next_double() - 1) : 0.0};
            } while (norm(x) > 0.8);
            Vec v = sample_unit_direction(rng, dim);
            auto [a, b] = g.detect_ray(x, v);
            REQUIRE(std::abs(norm(a) - 1.0) < 1e-9);
            REQUIRE(std::abs(norm(b) - 1.0) < 1e-9);
            auto lor = g.line_of_response(a, b);
            REQUIRE(norm(lor.theta - v) < 1e-9);
            REQUIRE(norm(lor.s - project_orth(x, v)) < 1e-9);
            // Symmetry: reversing the direction swaps the endpoints.
            auto [a2, b2] = g.detect_ray(x, -v);
            REQUIRE(norm(a2 - b) < 1e-9);
            REQUIRE(norm(b2 - a) < 1e-9);
        }
    }
}

TEST_CASE("3d partition covers every index for assorted M") {
    for (int M : {4, 7, 20, 100}) {
        ScannerGeometry g(3, 0.8, 1.0, M, 2, 1.0);
        Philox rng(3, 0);
        std::set<int> seen;
        for (int i = 0; i < 20000; ++i) {
            int j = g.detector_index(g.sample_boundary_point(rng));
            REQUIRE(j >= 0);
            REQUIRE(j < M);
            seen.insert(j);
        }
        CHECK((int)seen.size() == M);
    }
}

TEST_SUITE_END();
