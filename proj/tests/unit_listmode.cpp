#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "dynpet/forward.hpp"
#include "dynpet/listmode.hpp"
#include "dynpet/objective.hpp"
#include "dynpet/philox.hpp"

using namespace dynpet;

namespace {
std::shared_ptr<const ScannerGeometry> desk_geom(int N = 10, int M = 8) {
    return std::make_shared<ScannerGeometry>(2, 0.8, 1.0, M, N, 1.0);
}
}  // namespace

TEST_SUITE_BEGIN("listmode");

TEST_CASE("ground_truth_to_grid: static particle") {
    auto geom = desk_geom();
    auto grid = std::make_shared<Grid>(geom, 24);
    GroundTruth gt;
    gt.particles.push_back(Particle{1.0, Trajectory::static_point(Vec{0.2, -0.1, 0}, 1.0)});
    auto gm = ground_truth_to_grid(gt, grid, 1);
    CHECK(gm.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
    auto sm = gm.slice_masses();
    for (double s : sm) CHECK(s == doctest::Approx(0.1).epsilon(1e-12));
    auto res = check_continuity(gm);
    CHECK(res.max_abs == 0.0);  // static: no flux, no time variation

    // Linearity in the particle list.
    GroundTruth gt2 = gt;
    gt2.particles.push_back(Particle{2.0, Trajectory::static_point(Vec{-0.3, 0.4, 0}, 1.0)});
    auto a = ground_truth_to_grid(gt, grid, 1);
    GroundTruth only2;
    only2.particles.push_back(gt2.particles[1]);
    auto b = ground_truth_to_grid(only2, grid, 1);
    auto ab = ground_truth_to_grid(gt2, grid, 1);
    for (std::size_t i = 0; i < ab.rho.size(); ++i)
        CHECK(ab.rho[i] == doctest::Approx(a.rho[i] + b.rho[i]).epsilon(1e-12));
}

TEST_CASE("ground_truth_to_grid: moving particle has O(h) continuity residual") {
    auto geom = desk_geom(20);
    GroundTruth gt;
    gt.particles.push_back(
        Particle{1.0, Trajectory::linear(Vec{-0.3, 0, 0}, Vec{0.3, 0, 0}, 1.0, 21)});
    double prev = 1e9;
    for (int nx : {16, 32, 64}) {
        auto grid = std::make_shared<Grid>(geom, nx);
        auto gm = ground_truth_to_grid(gt, grid, 1);
        auto res = check_continuity(gm);
        // Residual scale: mass dt * speed * (dt/h) forms; report and require
        // decrease with h at fixed speed.
        CHECK(res.l1 < prev * 1.2 + 1e-12);
        prev = res.l1;
        CHECK(gm.conservative(1e-10));
    }

    GroundTruth bad;
    bad.particles.push_back(
        Particle{1.0, Trajectory::linear(Vec{0, 0, 0}, Vec{0.95, 0, 0}, 1.0, 21)});
    auto grid = std::make_shared<Grid>(geom, 16);
    CHECK_THROWS_AS(ground_truth_to_grid(bad, grid, 1), std::invalid_argument);
}

TEST_CASE("sampler: empty truth, determinism, channel labels") {
    auto geom = desk_geom();
    GroundTruth empty;
    empty.T_half = 1.0;
    auto res = sample_poisson_listmode(empty, geom, 0.2, 0.6, PositronKernel::gaussian(0.02),
                                       Mode::continuous, 7);
    CHECK(res.listmode.events.empty());

    GroundTruth gt;
    gt.particles.push_back(Particle{5.0, Trajectory::static_point(Vec{0.2, 0, 0}, 1.0)});
    auto r1 = sample_poisson_listmode(gt, geom, 0.2, 0.6, PositronKernel::gaussian(0.02),
                                      Mode::continuous, 42);
    auto r2 = sample_poisson_listmode(gt, geom, 0.2, 0.6, PositronKernel::gaussian(0.02),
                                      Mode::continuous, 42);
    REQUIRE(r1.listmode.events.size() == r2.listmode.events.size());
    for (std::size_t i = 0; i < r1.listmode.events.size(); ++i) {
        CHECK(r1.listmode.events[i].t == r2.listmode.events[i].t);
        CHECK(r1.listmode.events[i].a == r2.listmode.events[i].a);
        CHECK(r1.listmode.events[i].b == r2.listmode.events[i].b);
    }
    CHECK(r1.labels.size() == r1.listmode.events.size());
    for (std::size_t i = 0; i + 1 < r1.listmode.events.size(); ++i)
        CHECK(r1.listmode.events[i].t <= r1.listmode.events[i + 1].t);

    CHECK_THROWS_AS(sample_poisson_listmode(gt, geom, 0.2, 0.6, PositronKernel::none(),
                                            Mode::continuous, 1),
                    std::invalid_argument);
}

TEST_CASE("sampler: Poisson count law (light Monte Carlo)") {
    auto geom = desk_geom();
    GroundTruth gt;
    gt.T_half = 1.0;
    gt.particles.push_back(Particle{1.0, Trajectory::static_point(Vec{0, 0.1, 0}, 1.0)});
    const int seeds = 3000;
    double s = 0, s2 = 0;
    for (int k = 0; k < seeds; ++k) {
        auto r = sample_poisson_listmode(gt, geom, 0.2, 0.6, PositronKernel::gaussian(0.02),
                                         Mode::continuous, 1000 + k);
        double n = (double)r.listmode.events.size();
        s += n;
        s2 += n * n;
    }
    double mean = s / seeds, var = s2 / seeds - mean * mean;
    // Lambda = (p_s + p_d) * |rho| / T_half = 0.8.
    CHECK(std::abs(mean - 0.8) < 3.0 * std::sqrt(0.8 / seeds));
    CHECK(std::abs(var - 0.8) < 0.08);
}

TEST_CASE("sampler: scatter thinning matches p_s share") {
    auto geom = desk_geom();
    GroundTruth gt;
    gt.particles.push_back(Particle{40.0, Trajectory::static_point(Vec{0.1, 0.1, 0}, 1.0)});
    auto r = sample_poisson_listmode(gt, geom, 0.25, 0.55, PositronKernel::gaussian(0.02),
                                     Mode::continuous, 9);
    std::size_t scattered = 0;
    for (const auto& l : r.labels) scattered += l.scattered;
    double frac = (double)scattered / r.labels.size();
    double expect = 0.25 / 0.8;
    CHECK(std::abs(frac - expect) < 4.0 * std::sqrt(expect * (1 - expect) / r.labels.size()));

    // Discrete mode: all indices set, no diagonal pairs.
    auto rd = sample_poisson_listmode(gt, geom, 0.25, 0.55, PositronKernel::gaussian(0.02),
                                      Mode::discrete, 9);
    for (const auto& e : rd.listmode.events) {
        CHECK(e.bin >= 0);
        CHECK(e.ja >= 0);
        CHECK(e.jb >= 0);
        CHECK(e.ja != e.jb);
        CHECK(e.t == doctest::Approx(geom->bin_center(e.bin)));
    }
}

TEST_CASE("listmode io round-trips bitwise") {
    auto geom = desk_geom();
    GroundTruth gt;
    gt.particles.push_back(Particle{10.0, Trajectory::static_point(Vec{0.3, -0.2, 0}, 1.0)});
    for (Mode mode : {Mode::continuous, Mode::discrete}) {
        auto r = sample_poisson_listmode(gt, geom, 0.3, 0.5, PositronKernel::gaussian(0.02), mode,
                                         3);
        std::string path = "lm_test_io.csv";
        write_listmode(r.listmode, path);
        auto back = read_listmode(path, geom);
        REQUIRE(back.events.size() == r.listmode.events.size());
        CHECK(back.mode == mode);
        for (std::size_t i = 0; i < back.events.size(); ++i) {
            CHECK(back.events[i].t == r.listmode.events[i].t);
            CHECK(back.events[i].a == r.listmode.events[i].a);
            CHECK(back.events[i].b == r.listmode.events[i].b);
            CHECK(back.events[i].ja == r.listmode.events[i].ja);
        }
        std::remove(path.c_str());
    }

    // Empty list round-trips through the header alone.
    Listmode empty;
    empty.geom = geom;
    empty.mode = Mode::discrete;
    write_listmode(empty, "lm_empty.csv");
    auto back = read_listmode("lm_empty.csv", geom);
    CHECK(back.events.empty());
    std::remove("lm_empty.csv");
}

TEST_CASE("listmode io rejects malformed rows with their number") {
    auto geom = desk_geom();
    {
        std::ofstream out("lm_bad.csv");
        out << "# dynpet-listmode v1 mode=c T=1 M=8 N=10\n";
        out << "0.5,-1,0,1,0\n";
        out << "1.5,-1,0,1,0\n";  // t > T
    }
    try {
        read_listmode("lm_bad.csv", geom);
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }
    {
        std::ofstream out("lm_bad.csv");
        out << "# dynpet-listmode v1 mode=d T=1 M=8 N=10\n";
        out << "0,3,3\n";  // diagonal pair
    }
    CHECK_THROWS_AS(read_listmode("lm_bad.csv", geom), std::runtime_error);
    {
        std::ofstream out("lm_bad.csv");
        out << "# dynpet-listmode v1 mode=d T=1 M=16 N=10\n";  // geometry mismatch
    }
    CHECK_THROWS_AS(read_listmode("lm_bad.csv", geom), std::runtime_error);
    std::remove("lm_bad.csv");
}

TEST_SUITE_END();
