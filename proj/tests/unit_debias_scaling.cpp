#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "dynpet/config.hpp"
#include "dynpet/debias.hpp"
#include "dynpet/objective.hpp"
#include "dynpet/philox.hpp"
#include "dynpet/scaling.hpp"

using namespace dynpet;

TEST_SUITE_BEGIN("debias");

TEST_CASE("toy thresholds: plug-in values") {
    CHECK(toy_threshold_continuous(0.5, 2.0, 11) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(toy_threshold_continuous(0.5, 1.0, 2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(toy_threshold_discrete(0.5, 20, 11) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(toy_threshold_discrete(0.9, 10, 2) == doctest::Approx(1.0 / 9).epsilon(1e-12));
    CHECK(toy_threshold_discrete(0.3, 7, 5) ==
          doctest::Approx(toy_threshold_continuous(0.3, 7.0, 5)).epsilon(1e-12));
    CHECK_THROWS_AS(toy_threshold_continuous(0.5, 2.0, 1), std::invalid_argument);
    // Monotone decay in m.
    double prev = 1e300;
    for (int m : {2, 5, 20, 200}) {
        double v = toy_threshold_continuous(0.4, 3.0, m);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("solve_toy: debiased above the threshold, biased below") {
    ToyModel toy;
    toy.variant = ToyModel::Variant::continuous_1d;
    toy.p_s = 0.5;
    toy.G0 = 2.0;
    toy.n = 20;
    toy.m = 11;
    double qs = toy_threshold_continuous(toy.p_s, toy.G0, toy.m);
    auto above = solve_toy(toy, qs * (1 + 1e-6));
    CHECK(above.beta == 0.0);
    CHECK(above.alpha == doctest::Approx(20.0).epsilon(1e-9));
    auto below = solve_toy(toy, qs * (1 - 1e-6));
    CHECK(below.beta > 0.0);

    // No off-site events: q arbitrary, alpha = n.
    ToyModel pure = toy;
    pure.m = pure.n;
    auto sol = solve_toy(pure, 0.0);
    CHECK(sol.alpha == doctest::Approx(20.0));
    CHECK(sol.beta == 0.0);
}

TEST_CASE("solve_toy agrees with the brute-force grid oracle") {
    Philox rng(3, 0);
    for (int rep = 0; rep < 10; ++rep) {
        ToyModel toy;
        toy.variant = rep % 2 ? ToyModel::Variant::discrete_1d
                              : ToyModel::Variant::continuous_1d;
        toy.p_s = 0.2 + 0.6 * rng.next_double();
        toy.n = 5 + (int)(rng.next_double() * 20);
        toy.m = 2 + (int)(rng.next_double() * (toy.n - 2));
        toy.G0 = 0.5 + 3.0 * rng.next_double();
        toy.M = 5 + (int)(rng.next_double() * 20);
        double qs = toy.variant == ToyModel::Variant::continuous_1d
                        ? toy_threshold_continuous(toy.p_s, toy.G0, toy.m)
                        : toy_threshold_discrete(toy.p_s, toy.M, toy.m);
        for (double q : {0.3 * qs, 1.7 * qs}) {
            auto fast = solve_toy(toy, q);
            auto oracle = solve_toy_bruteforce(toy, q, 400);
            CHECK(fast.objective <= oracle.objective + 1e-9 * (1 + std::abs(oracle.objective)));
            CHECK(toy_objective(toy, q, fast.alpha, fast.beta) ==
                  doctest::Approx(fast.objective).epsilon(1e-12));
        }
    }
}

TEST_CASE("iff threshold: bisection on q against solve_toy, 50 random instances") {
    Philox rng(4, 0);
    for (int rep = 0; rep < 50; ++rep) {
        ToyModel toy;
        toy.variant = rep % 2 ? ToyModel::Variant::discrete_1d
                              : ToyModel::Variant::continuous_1d;
        toy.p_s = 0.2 + 0.6 * rng.next_double();
        toy.n = 6 + (int)(rng.next_double() * 25);
        toy.m = 2 + (int)(rng.next_double() * (toy.n - 2));
        toy.G0 = 0.5 + 3.0 * rng.next_double();
        toy.M = 4 + (int)(rng.next_double() * 30);
        double formula = toy.variant == ToyModel::Variant::continuous_1d
                             ? toy_threshold_continuous(toy.p_s, toy.G0, toy.m)
                             : toy_threshold_discrete(toy.p_s, toy.M, toy.m);
        double lo = formula * 0.25, hi = formula * 4.0;
        REQUIRE(solve_toy(toy, lo).beta > 0.0);
        REQUIRE(solve_toy(toy, hi).beta == 0.0);
        for (int it = 0; it < 60; ++it) {
            double mid = 0.5 * (lo + hi);
            (solve_toy(toy, mid).beta > 0.0 ? lo : hi) = mid;
        }
        CHECK(0.5 * (lo + hi) == doctest::Approx(formula).epsilon(1e-4));
    }
}

TEST_CASE("heuristic_q: plug-in, clamping, continuous variant") {
    // H^1(boundary) = pi for a ring of radius 0.5; delta = 0.2.
    ScannerGeometry geom(2, 0.3, 0.5, 100, 4, 1.0);
    auto k = PositronKernel::gaussian(0.02);
    double q = heuristic_q(geom, 0.2, 0.8, 50.0, Mode::discrete, k);
    CHECK(q == doctest::Approx(628.3185).epsilon(1e-6));
    CHECK(heuristic_q(geom, 0.99, 1e-9, 50.0, Mode::discrete, k) == 1.0);
    // Continuous mode swaps M for the kernel peak G(0).
    double g0 = k.peak(2);
    double qc = heuristic_q(geom, 0.2, 0.8, 50.0, Mode::continuous, k);
    CHECK(qc == doctest::Approx(0.8 * g0 * M_PI / (0.2 * 50.0 * 0.04)).epsilon(1e-12));
    CHECK_THROWS_AS(heuristic_q(geom, 0.0, 0.8, 50.0, Mode::discrete, k),
                    std::invalid_argument);
}

TEST_CASE("scatter_sets: q=0 empty strict set, equality goes to the over set") {
    auto geom = std::make_shared<ScannerGeometry>(2, 0.8, 1.0, 8, 4, 1.0);
    auto grid = std::make_shared<Grid>(geom, 16);
    ForwardOperator op(grid, PositronKernel::gaussian(0.05));
    Philox rng(5, 0);
    auto gm = random_feasible_pair(grid, rng, 2.0);
    GroundTruth gt;
    gt.particles.push_back(Particle{20.0, Trajectory::static_point(Vec{0.1, 0.1, 0}, 1.0)});
    auto lm = sample_poisson_listmode(gt, geom, 0.3, 0.5, PositronKernel::gaussian(0.05),
                                      Mode::discrete, 6)
                  .listmode;
    REQUIRE(lm.events.size() > 3);
    auto s0 = scatter_sets(op, gm, lm, 0.0, 0.3, 0.5, Mode::discrete);
    CHECK(s0.n_under() == 0);
    auto shuge = scatter_sets(op, gm, lm, 1e12, 0.3, 0.5, Mode::discrete);
    CHECK(shuge.n_over() == (int)lm.events.size());
    // under is always contained in over.
    for (double q : {0.1, 1.0, 10.0}) {
        auto s = scatter_sets(op, gm, lm, q, 0.3, 0.5, Mode::discrete);
        CHECK(s.n_under() <= s.n_over());
        for (std::size_t i = 0, j = 0; i < s.under.size(); ++i) {
            while (j < s.over.size() && s.over[j] < s.under[i]) ++j;
            REQUIRE(j < s.over.size());
            CHECK(s.over[j] == s.under[i]);
        }
    }
    // Exact equality: zero rho makes both sides zero -> over, not under.
    GridMeasure zero(grid);
    auto sz = scatter_sets(op, zero, lm, 1.0, 0.3, 0.5, Mode::discrete);
    CHECK(sz.n_under() == 0);
    CHECK(sz.n_over() == (int)lm.events.size());
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("scaling");

TEST_CASE("rescale_measurement: identity, time and length maps, discrete error") {
    auto geom = std::make_shared<ScannerGeometry>(2, 0.8, 1.0, 8, 4, 1.0);
    Listmode lm;
    lm.geom = geom;
    lm.mode = Mode::continuous;
    ListmodeEvent e;
    e.t = 0.5;
    std::tie(e.a, e.b) = geom->detect_ray(Vec{0.1, 0, 0}, Vec{0, 1, 0});
    lm.events.push_back(e);

    auto id = rescale_measurement(lm, ScaleTriple{1, 1, 1}, geom);
    CHECK(id.events[0].t == e.t);
    CHECK(id.events[0].a == e.a);

    auto g2 = rescale_geometry(*geom, ScaleTriple{2, 1, 1});
    auto r2 = rescale_measurement(lm, ScaleTriple{2, 1, 1}, g2);
    CHECK(r2.events[0].t == doctest::Approx(0.25));
    CHECK(r2.events[0].a == e.a);

    auto g3 = rescale_geometry(*geom, ScaleTriple{1, 2, 1});
    auto r3 = rescale_measurement(lm, ScaleTriple{1, 2, 1}, g3);
    CHECK(r3.events[0].a.x == doctest::Approx(0.5 * e.a.x));
    CHECK(r3.events[0].b.y == doctest::Approx(0.5 * e.b.y));

    Listmode disc = lm;
    disc.mode = Mode::discrete;
    CHECK_THROWS_AS(rescale_measurement(disc, ScaleTriple{2, 1, 1}, g2),
                    std::invalid_argument);
}

TEST_CASE("rescaled_parameters: lemma formulas") {
    auto r = rescaled_parameters(1.0, 10.0, 1.0, 0.8, ScaleTriple{4.0, 3.0, 2.0});
    CHECK(r.beta == doctest::Approx(1.0 * 2.0 * 9.0 / 4.0).epsilon(1e-15));  // 4.5
    CHECK(r.T_half == doctest::Approx(10.0 / 8.0).epsilon(1e-15));
    CHECK(r.T == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(r.radius_D == doctest::Approx(0.8 / 3.0).epsilon(1e-15));
    auto r2 = rescaled_parameters(1.0, 10.0, 1.0, 0.8, ScaleTriple{5.0, 1.0, 2.0});
    CHECK(r2.T_half == doctest::Approx(1.0).epsilon(1e-15));
    auto rid = rescaled_parameters(0.7, 2.0, 1.5, 0.8, ScaleTriple{});
    CHECK(rid.beta == 0.7);
    CHECK(rid.T_half == 2.0);
}

TEST_CASE("rescale_solution: identity bit-exact, mass scaling") {
    auto geom = std::make_shared<ScannerGeometry>(2, 0.8, 1.0, 8, 4, 1.0);
    auto grid = std::make_shared<Grid>(geom, 12);
    Philox rng(6, 0);
    auto gm = random_feasible_pair(grid, rng, 2.0);
    auto id = rescale_solution(gm, ScaleTriple{1, 1, 1}, grid);
    CHECK(id.rho == gm.rho);
    CHECK(id.eta == gm.eta);
    auto halved = rescale_solution(gm, ScaleTriple{1, 1, 2}, grid);
    for (std::size_t i = 0; i < gm.rho.size(); ++i)
        CHECK(halved.rho[i] == doctest::Approx(0.5 * gm.rho[i]).epsilon(1e-15));
}

TEST_CASE("functional scaling identity on random pairs") {
    auto geom = std::make_shared<ScannerGeometry>(2, 0.8, 1.0, 8, 4, 1.0);
    auto grid = std::make_shared<Grid>(geom, 12);
    PositronKernel kernel = PositronKernel::gaussian(0.05);
    ForwardOperator op(grid, kernel);
    GroundTruth gt;
    gt.particles.push_back(Particle{25.0, Trajectory::static_point(Vec{0.2, 0.1, 0}, 1.0)});
    auto lm = sample_poisson_listmode(gt, geom, 0.2, 0.6, kernel, Mode::continuous, 31).listmode;
    REQUIRE(lm.events.size() > 5);
    ObjectiveParams p;
    p.q = 1.5;
    p.beta = 0.3;
    p.p_s = 0.2;
    p.p_d = 0.6;
    p.T_half = 2.0;
    p.mode = Mode::continuous;
    Philox rng(7, 0);
    for (ScaleTriple s : {ScaleTriple{1.7, 0.8, 2.3}, ScaleTriple{0.6, 1.4, 0.9}}) {
        auto geom2 = rescale_geometry(*geom, s);
        auto grid2 = std::make_shared<Grid>(geom2, 12);
        ForwardOperator op2(grid2, PositronKernel::gaussian(kernel.sigma / s.lambda));
        auto lm2 = rescale_measurement(lm, s, geom2);
        auto rp = rescaled_parameters(p.beta, p.T_half, geom->time_horizon(), geom->radius_D(),
                                      s);
        ObjectiveParams p2 = p;
        p2.beta = rp.beta;
        p2.T_half = rp.T_half;
        double ref = 0.0;
        bool have = false;
        for (int k = 0; k < 6; ++k) {
            auto gm = random_feasible_pair(grid, rng, 1.0 + rng.next_double());
            auto gm2 = rescale_solution(gm, s, grid2);
            double J1 = evaluate_J(op, gm, lm, p).total;
            double J2 = evaluate_J(op2, gm2, lm2, p2).total;
            REQUIRE(std::isfinite(J1));
            REQUIRE(std::isfinite(J2));
            double diff = J1 - J2;
            if (!have) {
                ref = diff;
                have = true;
            } else {
                CHECK(diff == doctest::Approx(ref).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("beta heuristic: table lookup") {
    std::vector<std::pair<double, double>> constant{{0.0, 1.0}, {10.0, 1.0}};
    auto r = beta_heuristic(1.0, 1.0, 1.0, 1.0, constant);
    CHECK(r.beta == doctest::Approx(1.0));
    CHECK_FALSE(r.clamped);
    auto r2 = beta_heuristic(2.0, 1.0, 1.0, 1.0, constant);
    CHECK(r2.beta == doctest::Approx(0.25));  // 1/v^2

    std::vector<std::pair<double, double>> table{{1.0, 2.0}, {3.0, 6.0}};
    auto r3 = beta_heuristic(2.0, 1.0, 1.0, 1.0, table);  // arg = 2 -> beta_hat = 4
    CHECK(r3.beta == doctest::Approx(4.0 / (1.0 * 4.0)));
    auto r4 = beta_heuristic(100.0, 1.0, 1.0, 1.0, table);
    CHECK(r4.clamped);

    std::ofstream out("beta_table_test.csv");
    out << "# arg,value\n1.0,2.0\n3.0,6.0\n";
    out.close();
    auto parsed = read_beta_table("beta_table_test.csv");
    CHECK(parsed.size() == 2);
    CHECK(parsed[1].second == 6.0);
    std::remove("beta_table_test.csv");
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("config");

TEST_CASE("parse, serialize, reparse is a fixed point") {
    std::string text = R"({
      "version": 1,
      "geometry": {"dim": 2, "radius_D": 0.8, "radius_Dd": 1.0, "M": 16, "N": 10, "T": 1.0},
      "model": {"p_s": 0.2, "p_d": 0.6, "q": "heuristic", "beta": 0.05, "sigma": 0.05,
                "T_half": 1.0, "mode": "discrete"},
      "solver": {"type": "grid", "nx": 32, "tol": 1e-5, "max_iters": 2000, "seed": 7},
      "io": {"out_dir": "out", "listmode": "lm.csv"},
      "truth": {"particles": [{"mass": 2.0, "static": [0.2, 0.1]}]}
    })";
    auto cfg = parse_config(text);
    CHECK(cfg.model.q_heuristic);
    CHECK(cfg.geometry.M == 16);
    REQUIRE(cfg.truth.has_value());
    CHECK(cfg.truth->particles[0].mass == 2.0);
    auto s1 = serialize_config(cfg);
    auto cfg2 = parse_config(s1);
    auto s2 = serialize_config(cfg2);
    CHECK(s1 == s2);
}

TEST_CASE("unknown keys fail fast with the field path") {
    try {
        parse_config(R"({"version":1, "geometry": {"dim":2, "radios_D": 0.8}})");
        FAIL("expected failure");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("$.geometry.radios_D") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("{nonsense"), std::runtime_error);
    CHECK_THROWS_AS(parse_config(R"({"version": 3})"), std::runtime_error);
}

TEST_CASE("reconstruction hypotheses are validated") {
    auto cfg = parse_config(R"({"model": {"p_s": 0.0, "p_d": 0.6}})");
    CHECK_THROWS_AS(validate_for_reconstruction(cfg), std::runtime_error);
    auto cfg2 = parse_config(R"({"model": {"p_s": 0.5, "p_d": 0.6}})");
    CHECK_THROWS_AS(validate_for_reconstruction(cfg2), std::runtime_error);
    auto ok = parse_config(R"({"model": {"p_s": 0.2, "p_d": 0.6, "q": 1.0, "beta": 0.1}})");
    validate_for_reconstruction(ok);
}

TEST_SUITE_END();
