#include "dynpet/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "dynpet/config.hpp"
#include "dynpet/debias.hpp"
#include "dynpet/forward.hpp"
#include "dynpet/objective.hpp"
#include "dynpet/philox.hpp"
#include "dynpet/scaling.hpp"
#include "dynpet/solver_grid.hpp"
#include "dynpet/solver_particles.hpp"
#include "dynpet/svg.hpp"

namespace dynpet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunSetup {
    ReconConfig cfg;
    std::string out_dir;
    std::uint64_t seed;
};

RunSetup setup(const CliOptions& opt) {
    RunSetup rs;
    rs.cfg = load_config(opt.config_path);
    rs.out_dir = opt.out_dir.empty() ? rs.cfg.io.out_dir : opt.out_dir;
    rs.seed = opt.seed ? *opt.seed : rs.cfg.solver.seed;
    fs::create_directories(rs.out_dir);
    return rs;
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << text;
}

void write_grid_file(const std::string& path, const GridMeasure& gm) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    const Grid& g = *gm.grid;
    char header[256];
    std::snprintf(header, sizeof header,
                  "{\"format\":\"dynpet-grid v1\",\"geometry_hash\":%llu,\"dim\":%d,\"nx\":%d,"
                  "\"N\":%d,\"faces\":%d}\n",
                  (unsigned long long)g.geom().hash(), g.dim(), g.nx(),
                  g.geom().num_time_bins(), g.num_faces_total());
    out << header;
    out.write(reinterpret_cast<const char*>(gm.rho.data()),
              (std::streamsize)(gm.rho.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(gm.eta.data()),
              (std::streamsize)(gm.eta.size() * sizeof(double)));
}

json objective_json(const ObjectiveValue& v) {
    auto num = [](double x) {
        return std::isfinite(x) ? json(x) : json("inf");
    };
    return json{{"total", num(v.total)},
                {"fidelity_mass", num(v.fidelity_mass)},
                {"neg_log", num(v.neg_log)},
                {"bb", num(v.bb)},
                {"feasible", v.feasible}};
}

std::shared_ptr<ForwardOperator> build_operator(const RunSetup& rs,
                                                std::shared_ptr<const Grid> grid,
                                                const PositronKernel& kernel) {
    if (!rs.cfg.io.operator_cache.empty()) {
        if (auto op = ForwardOperator::load_cache(rs.cfg.io.operator_cache, grid, kernel))
            return op;
    }
    auto op = std::make_shared<ForwardOperator>(grid, kernel, rs.cfg.solver.quad_per_cell);
    if (!rs.cfg.io.operator_cache.empty()) op->save_cache(rs.cfg.io.operator_cache);
    return op;
}

double resolve_q(const RunSetup& rs, const ScannerGeometry& geom, const PositronKernel& kernel,
                 std::size_t n_events) {
    if (!rs.cfg.model.q_heuristic) return rs.cfg.model.q;
    const auto& m = rs.cfg.model;
    // Slice-mass estimate at the maximum-likelihood scale.
    double mass = std::max<double>(1, n_events) * m.T_half /
                  ((m.p_s + m.p_d) * rs.cfg.geometry.T);
    return heuristic_q(geom, m.p_s, m.p_d, mass, m.mode, kernel);
}

double resolve_beta(const RunSetup& rs, std::size_t n_events) {
    const auto& m = rs.cfg.model;
    if (!m.beta_heuristic) return m.beta;
    if (m.beta_table.empty())
        throw std::runtime_error("config: beta=heuristic requires $.model.beta_table");
    auto table = read_beta_table(m.beta_table);
    double mass = std::max<double>(1, n_events) * m.T_half /
                  ((m.p_s + m.p_d) * rs.cfg.geometry.T);
    auto r = beta_heuristic(m.typical_speed, m.typical_length, mass, m.T_half, table);
    if (r.clamped)
        std::cerr << "warning: beta heuristic argument outside table range, clamped\n";
    return r.beta;
}

int classify(const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
}

}  // namespace

int cmd_simulate(const CliOptions& opt) {
    RunSetup rs;
    try {
        rs = setup(opt);
    } catch (const std::exception& e) {
        return classify(e);
    }
    try {
        auto geom = make_geometry(rs.cfg);
        auto kernel = make_kernel(rs.cfg);
        auto gt = make_ground_truth(rs.cfg);
        auto res = sample_poisson_listmode(gt, geom, rs.cfg.model.p_s, rs.cfg.model.p_d, kernel,
                                           rs.cfg.model.mode, rs.seed);
        std::string lm_path = join(rs.out_dir, rs.cfg.io.listmode);
        write_listmode(res.listmode, lm_path);
        write_labels(res.labels, lm_path + ".diag.jsonl");
        std::size_t scattered = 0;
        for (const auto& l : res.labels) scattered += l.scattered ? 1 : 0;
        json summary{{"events", res.listmode.events.size()},
                     {"scatter_fraction", res.labels.empty()
                                              ? 0.0
                                              : (double)scattered / res.labels.size()},
                     {"dropped_same_cell", res.dropped},
                     {"seed", rs.seed},
                     {"listmode", lm_path}};
        write_text(join(rs.out_dir, "simulate_summary.json"), summary.dump(2) + "\n");
        std::cout << summary.dump(2) << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        return classify(e);
    }
}

int cmd_reconstruct(const CliOptions& opt) {
    RunSetup rs;
    std::shared_ptr<const ScannerGeometry> geom;
    Listmode lm;
    try {
        rs = setup(opt);
        validate_for_reconstruction(rs.cfg);
        geom = make_geometry(rs.cfg);
        std::string lm_path = opt.listmode_path.empty()
                                  ? join(rs.cfg.io.out_dir, rs.cfg.io.listmode)
                                  : opt.listmode_path;
        lm = read_listmode(lm_path, geom);
    } catch (const std::exception& e) {
        return classify(e);
    }

    try {
        auto kernel = make_kernel(rs.cfg);
        auto grid = std::make_shared<Grid>(geom, rs.cfg.solver.nx);
        auto op = build_operator(rs, grid, kernel);
        double q = resolve_q(rs, *geom, kernel, lm.size());
        double beta = resolve_beta(rs, lm.size());

        json report;
        report["q"] = q;
        report["beta"] = beta;
        report["events"] = lm.size();
        bool all_pass = true;
        auto check = [&](const std::string& name, double value, bool pass) {
            report["checks"][name] = {{"value", std::isfinite(value) ? json(value) : json("inf")},
                                      {"pass", pass}};
            all_pass = all_pass && pass;
        };

        if (rs.cfg.solver.type == "particles") {
            ParticleSolveConfig pc;
            pc.q = q;
            pc.beta = beta;
            pc.sigma = rs.cfg.model.sigma_none ? 0.5 * grid->h() : rs.cfg.model.sigma;
            pc.p_s = rs.cfg.model.p_s;
            pc.p_d = rs.cfg.model.p_d;
            pc.T_half = rs.cfg.model.T_half;
            pc.mass_eps = rs.cfg.solver.mass_eps;
            pc.prune_radius = rs.cfg.solver.prune_radius;
            auto rec = reconstruct_particles(*geom, *grid, lm, pc);
            json parts = json::array();
            for (const auto& p : rec.particles) {
                json pj{{"mass", p.mass}, {"knots_t", p.traj.times}};
                json ks = json::array();
                for (const auto& k : p.traj.points) {
                    json kk = json::array({k.x, k.y});
                    if (geom->dim() == 3) kk.push_back(k.z);
                    ks.push_back(kk);
                }
                pj["knots"] = ks;
                parts.push_back(pj);
            }
            write_text(join(rs.out_dir, "particles.json"),
                       json{{"particles", parts}}.dump(2) + "\n");
            report["objective"] = {{"total", std::isfinite(rec.objective)
                                                 ? json(rec.objective)
                                                 : json("inf")}};
            check("sparsity_n_le_E", (double)rec.particles.size(),
                  rec.particles.size() <= lm.size());
            // Trajectory overlay plot.
            SvgDocument doc(420, 420);
            auto X = [&](double x) { return 210 + 190 * (x - geom->center().x) / geom->radius_Dd(); };
            auto Y = [&](double y) { return 210 - 190 * (y - geom->center().y) / geom->radius_Dd(); };
            for (const auto& e : lm.events)
                doc.line(X(e.a.x), Y(e.a.y), X(e.b.x), Y(e.b.y), "#dddddd", 0.5);
            for (const auto& p : rec.particles) {
                std::vector<std::pair<double, double>> pts;
                for (const auto& k : p.traj.points) pts.emplace_back(X(k.x), Y(k.y));
                doc.polyline(pts, "#c0392b", 2.0);
            }
            doc.save(join(rs.out_dir, "trajectories.svg"));
        } else {
            ObjectiveParams params;
            params.q = q;
            params.beta = beta;
            params.p_s = rs.cfg.model.p_s;
            params.p_d = rs.cfg.model.p_d;
            params.T_half = rs.cfg.model.T_half;
            params.mode = Mode::discrete;
            GridSolveConfig sc;
            sc.tol = rs.cfg.solver.tol;
            sc.max_iters = (int)rs.cfg.solver.max_iters;
            auto rec = reconstruct_grid(*op, lm, params, sc);
            if (rec.diag.diverged) {
                std::cerr << "error: solver diverged (objective increased for 100 consecutive "
                             "iterations)\n";
                return kExitSolverFailure;
            }
            write_grid_file(join(rs.out_dir, "grid.bin"), rec.gm);
            report["objective"] = objective_json(rec.objective);
            report["iterations"] = rec.diag.iterations;
            double mass = rec.gm.total_mass();
            auto res = check_continuity(rec.gm);
            auto slices = rec.gm.slice_masses();
            double mean = mass / slices.size(), spread = 0.0;
            for (double s : slices) spread = std::max(spread, std::abs(s - mean));
            check("rho_min", rec.gm.min_rho(), rec.gm.min_rho() >= -1e-14);
            check("continuity_l1_rel", mass > 0 ? res.l1 / mass : res.l1,
                  res.l1 <= 1e-8 * std::max(mass, 1e-300));
            check("slice_mass_rel_spread", mean > 0 ? spread / mean : spread,
                  spread <= 1e-8 * std::max(mean, 1e-300));
            check("gap", rec.diag.gap, !(rec.diag.gap > sc.tol) || lm.events.empty());
            check("feasible", rec.objective.feasible ? 1.0 : 0.0, rec.objective.feasible);
            // Per-slice heatmaps and objective decay.
            save_slice_heatmaps(join(rs.out_dir, "slices.svg"), rec.gm.rho,
                                geom->num_time_bins(), grid->nx());
            std::vector<double> xs(rec.diag.objective_history.size());
            for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = (double)i;
            save_curve(join(rs.out_dir, "objective.svg"), xs, rec.diag.objective_history,
                       "checkpoint", "objective");
        }
        report["all_pass"] = all_pass;
        write_text(join(rs.out_dir, "report.json"), report.dump(2) + "\n");
        std::cout << report.dump(2) << "\n";
        return all_pass ? kExitOk : kExitSolverFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolverFailure;
    }
}

int cmd_sweep_q(const CliOptions& opt) {
    RunSetup rs;
    std::shared_ptr<const ScannerGeometry> geom;
    Listmode lm;
    try {
        rs = setup(opt);
        if (!rs.cfg.sweep || rs.cfg.sweep->q_grid.empty())
            throw std::runtime_error("config: sweep-q requires $.sweep.q_grid");
        validate_for_reconstruction(rs.cfg);
        geom = make_geometry(rs.cfg);
        std::string lm_path = opt.listmode_path.empty()
                                  ? join(rs.cfg.io.out_dir, rs.cfg.io.listmode)
                                  : opt.listmode_path;
        lm = read_listmode(lm_path, geom);
    } catch (const std::exception& e) {
        return classify(e);
    }
    try {
        auto kernel = make_kernel(rs.cfg);
        auto grid = std::make_shared<Grid>(geom, rs.cfg.solver.nx);
        auto op = build_operator(rs, grid, kernel);
        ObjectiveParams base;
        base.beta = resolve_beta(rs, lm.size());
        base.p_s = rs.cfg.model.p_s;
        base.p_d = rs.cfg.model.p_d;
        base.T_half = rs.cfg.model.T_half;
        base.mode = Mode::discrete;
        GridSolveConfig sc;
        sc.tol = rs.cfg.solver.tol;
        sc.max_iters = (int)rs.cfg.solver.max_iters;
        auto points = count_scatter_curve(*op, lm, rs.cfg.sweep->q_grid, base, sc,
                                          std::max(1, opt.threads));
        std::string csv = "q,N_s_lo,N_s_hi,minJ,runtime\n";
        char buf[256];
        std::vector<double> xs, lo, hi;
        for (const auto& p : points) {
            std::snprintf(buf, sizeof buf, "%.17g,%d,%d,%.17g,%.3f\n", p.q, p.n_lo, p.n_hi,
                          p.min_J, p.runtime_s);
            csv += buf;
            xs.push_back(p.q);
            lo.push_back(p.n_lo);
            hi.push_back(p.n_hi);
        }
        write_text(join(rs.out_dir, "sweep.csv"), csv);
        save_curve(join(rs.out_dir, "sweep_lo.svg"), xs, lo, "q", "N_s lower");
        save_curve(join(rs.out_dir, "sweep_hi.svg"), xs, hi, "q", "N_s upper");
        std::cout << csv;
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolverFailure;
    }
}

int cmd_toy_bias(const CliOptions& opt) {
    RunSetup rs;
    try {
        rs = setup(opt);
        if (!rs.cfg.toy) throw std::runtime_error("config: toy-bias requires $.toy");
        const auto& t = *rs.cfg.toy;
        ToyModel toy;
        toy.variant = t.variant == "discrete" ? ToyModel::Variant::discrete_1d
                                              : ToyModel::Variant::continuous_1d;
        toy.p_s = t.p_s;
        toy.G0 = t.G0;
        toy.M = t.M;
        toy.n = t.n;
        toy.m = t.m;
        double threshold = toy.variant == ToyModel::Variant::continuous_1d
                               ? toy_threshold_continuous(toy.p_s, toy.G0, toy.m)
                               : toy_threshold_discrete(toy.p_s, toy.M, toy.m);
        std::vector<double> q_grid = t.q_grid;
        if (q_grid.empty())
            for (int i = 0; i <= 20; ++i) q_grid.push_back(threshold * 0.1 * i);
        std::string csv = "q,alpha,beta,objective,threshold\n";
        char buf[256];
        std::vector<double> xs, betas;
        for (double q : q_grid) {
            auto sol = solve_toy(toy, q);
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", q, sol.alpha,
                          sol.beta, sol.objective, threshold);
            csv += buf;
            xs.push_back(q);
            betas.push_back(sol.beta);
        }
        write_text(join(rs.out_dir, "toy_bias.csv"), csv);
        save_curve(join(rs.out_dir, "toy_bias.svg"), xs, betas, "q", "beta");
        std::cout << csv;
        return kExitOk;
    } catch (const std::exception& e) {
        return classify(e);
    }
}

int cmd_verify_scaling(const CliOptions& opt) {
    RunSetup rs;
    try {
        rs = setup(opt);
    } catch (const std::exception& e) {
        return classify(e);
    }
    try {
        ScalingVerifyConfig sv = rs.cfg.scaling ? *rs.cfg.scaling : ScalingVerifyConfig{};
        if (sv.triples.empty()) sv.triples.push_back({1.0, 1.0, 1.0});
        auto geom = make_geometry(rs.cfg);
        auto kernel = make_kernel(rs.cfg);
        if (kernel.is_none())
            throw std::runtime_error("verify-scaling requires a positive-width kernel");
        auto gt = make_ground_truth(rs.cfg);
        auto grid = std::make_shared<Grid>(geom, rs.cfg.solver.nx);
        ForwardOperator op(grid, kernel, rs.cfg.solver.quad_per_cell);
        auto sampled = sample_poisson_listmode(gt, geom, rs.cfg.model.p_s, rs.cfg.model.p_d,
                                               kernel, Mode::continuous, rs.seed);
        ObjectiveParams params;
        params.q = rs.cfg.model.q_heuristic ? 1.0 : rs.cfg.model.q;
        params.beta = rs.cfg.model.beta_heuristic ? 1.0 : rs.cfg.model.beta;
        params.p_s = rs.cfg.model.p_s;
        params.p_d = rs.cfg.model.p_d;
        params.T_half = rs.cfg.model.T_half;
        params.mode = Mode::continuous;

        std::string csv = "theta,lambda,mu,identity_max_dev\n";
        char buf[256];
        std::vector<double> devs;
        for (const auto& tr : sv.triples) {
            ScaleTriple s{tr[0], tr[1], tr[2]};
            auto geom2 = rescale_geometry(*geom, s);
            auto grid2 = std::make_shared<Grid>(geom2, rs.cfg.solver.nx);
            PositronKernel kernel2 = PositronKernel::gaussian(kernel.sigma / s.lambda);
            ForwardOperator op2(grid2, kernel2, rs.cfg.solver.quad_per_cell);
            auto lm2 = rescale_measurement(sampled.listmode, s, geom2);
            auto rp = rescaled_parameters(params.beta, params.T_half, geom->time_horizon(),
                                          geom->radius_D(), s);
            ObjectiveParams params2 = params;
            params2.beta = rp.beta;
            params2.T_half = rp.T_half;
            Philox rng(rs.seed, 1u << 20);
            double dev = 0.0, ref = 0.0;
            bool have_ref = false;
            for (int k = 0; k < sv.n_pairs; ++k) {
                auto gm = random_feasible_pair(grid, rng, 1.0 + rng.next_double());
                auto gm2 = rescale_solution(gm, s, grid2);
                double J1 = evaluate_J(op, gm, sampled.listmode, params).total;
                double J2 = evaluate_J(op2, gm2, lm2, params2).total;
                double diff = J1 - J2;
                if (!have_ref) {
                    ref = diff;
                    have_ref = true;
                } else {
                    dev = std::max(dev, std::abs(diff - ref) /
                                            std::max(1.0, std::abs(ref)));
                }
            }
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.3e\n", s.theta, s.lambda, s.mu,
                          dev);
            csv += buf;
            devs.push_back(dev);
        }
        write_text(join(rs.out_dir, "scaling.csv"), csv);
        std::vector<double> xs(devs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = (double)i;
        save_curve(join(rs.out_dir, "scaling.svg"), xs, devs, "triple", "identity deviation");
        double worst = 0.0;
        for (double d : devs) worst = std::max(worst, d);
        std::cout << csv << "max deviation: " << worst << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolverFailure;
    }
}

}  // namespace dynpet

#include <CLI11.hpp>

namespace dynpet {

int run_cli(int argc, char** argv) {
    CLI::App app{"dynpet: dynamic PET listmode simulation and optimal-transport reconstruction"};
    app.require_subcommand(1);

    CliOptions opt;
    auto add_common = [&](CLI::App* sub, bool with_listmode) {
        sub->add_option("--config", opt.config_path, "JSON run configuration")->required();
        sub->add_option("--out", opt.out_dir, "output directory (overrides config)");
        sub->add_option("--seed", opt.seed, "RNG seed (overrides config)");
        sub->add_option("--threads", opt.threads, "worker threads (1 = bit-deterministic)")
            ->default_val(1);
        if (with_listmode)
            sub->add_option("--listmode", opt.listmode_path, "listmode CSV path");
    };
    auto* sim = app.add_subcommand("simulate", "sample a Poisson listmode from ground truth");
    add_common(sim, false);
    auto* rec = app.add_subcommand("reconstruct", "reconstruct from a listmode file");
    add_common(rec, true);
    auto* swp = app.add_subcommand("sweep-q", "reconstruct along a q grid, count scatter");
    add_common(swp, true);
    auto* toy = app.add_subcommand("toy-bias", "solve the reduced 1D bias examples");
    add_common(toy, false);
    auto* ver = app.add_subcommand("verify-scaling", "check the rescaling invariances");
    add_common(ver, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInputError;
    }
    if (sim->parsed()) return cmd_simulate(opt);
    if (rec->parsed()) return cmd_reconstruct(opt);
    if (swp->parsed()) return cmd_sweep_q(opt);
    if (toy->parsed()) return cmd_toy_bias(opt);
    if (ver->parsed()) return cmd_verify_scaling(opt);
    return kExitInputError;
}

}  // namespace dynpet
