#include "dynpet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dynpet {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
    if (!j.is_object()) throw std::runtime_error("config: " + path + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::runtime_error("config: unknown key " + path + "." + it.key());
}

template <class T>
T get_or(const json& j, const std::string& key, const T& def) {
    return j.contains(key) ? j.at(key).get<T>() : def;
}

Vec parse_point(const json& j, int dim, const std::string& path) {
    if (!j.is_array() || (int)j.size() != dim)
        throw std::runtime_error("config: " + path + " must be an array of " +
                                 std::to_string(dim) + " numbers");
    Vec p;
    p.x = j[0].get<double>();
    p.y = j[1].get<double>();
    if (dim == 3) p.z = j[2].get<double>();
    return p;
}

json point_json(const Vec& p, int dim) {
    json a = json::array({p.x, p.y});
    if (dim == 3) a.push_back(p.z);
    return a;
}

}  // namespace

ReconConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(j, {"version", "geometry", "model", "solver", "io", "truth", "sweep", "toy",
                   "scaling"},
               "$");
    ReconConfig cfg;
    cfg.version = get_or(j, "version", 1);
    if (cfg.version != 1) throw std::runtime_error("config: unsupported version");

    if (j.contains("geometry")) {
        const auto& g = j.at("geometry");
        check_keys(g, {"dim", "radius_D", "radius_Dd", "M", "N", "T"}, "$.geometry");
        cfg.geometry.dim = get_or(g, "dim", 2);
        cfg.geometry.radius_D = get_or(g, "radius_D", 0.8);
        cfg.geometry.radius_Dd = get_or(g, "radius_Dd", 1.0);
        cfg.geometry.M = get_or(g, "M", 16);
        cfg.geometry.N = get_or(g, "N", 10);
        cfg.geometry.T = get_or(g, "T", 1.0);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m,
                   {"p_s", "p_d", "q", "beta", "beta_table", "typical_speed", "typical_length",
                    "sigma", "T_half", "mode"},
                   "$.model");
        cfg.model.p_s = get_or(m, "p_s", 0.1);
        cfg.model.p_d = get_or(m, "p_d", 0.7);
        if (m.contains("q")) {
            if (m.at("q").is_string()) {
                if (m.at("q").get<std::string>() != "heuristic")
                    throw std::runtime_error("config: $.model.q must be a number or 'heuristic'");
                cfg.model.q_heuristic = true;
            } else {
                cfg.model.q_heuristic = false;
                cfg.model.q = m.at("q").get<double>();
            }
        }
        if (m.contains("beta")) {
            if (m.at("beta").is_string()) {
                if (m.at("beta").get<std::string>() != "heuristic")
                    throw std::runtime_error(
                        "config: $.model.beta must be a number or 'heuristic'");
                cfg.model.beta_heuristic = true;
            } else {
                cfg.model.beta_heuristic = false;
                cfg.model.beta = m.at("beta").get<double>();
            }
        }
        cfg.model.beta_table = get_or(m, "beta_table", std::string());
        cfg.model.typical_speed = get_or(m, "typical_speed", 1.0);
        cfg.model.typical_length = get_or(m, "typical_length", 1.0);
        if (m.contains("sigma")) {
            if (m.at("sigma").is_string()) {
                if (m.at("sigma").get<std::string>() != "none")
                    throw std::runtime_error("config: $.model.sigma must be a number or 'none'");
                cfg.model.sigma_none = true;
            } else {
                cfg.model.sigma_none = false;
                cfg.model.sigma = m.at("sigma").get<double>();
            }
        }
        cfg.model.T_half = get_or(m, "T_half", 1.0);
        if (m.contains("mode")) {
            std::string mode = m.at("mode").get<std::string>();
            if (mode == "continuous")
                cfg.model.mode = Mode::continuous;
            else if (mode == "discrete")
                cfg.model.mode = Mode::discrete;
            else
                throw std::runtime_error("config: $.model.mode must be continuous or discrete");
        }
    }
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        check_keys(s,
                   {"type", "nx", "tol", "max_iters", "seed", "quad_per_cell", "splat",
                    "mass_eps", "prune_radius"},
                   "$.solver");
        cfg.solver.type = get_or(s, "type", std::string("grid"));
        if (cfg.solver.type != "grid" && cfg.solver.type != "particles")
            throw std::runtime_error("config: $.solver.type must be grid or particles");
        cfg.solver.nx = get_or(s, "nx", 32);
        cfg.solver.tol = get_or(s, "tol", 1e-5);
        cfg.solver.max_iters = get_or(s, "max_iters", 50000L);
        cfg.solver.seed = get_or(s, "seed", (std::uint64_t)1);
        cfg.solver.quad_per_cell = get_or(s, "quad_per_cell", 0);
        if (s.contains("splat")) {
            std::string sp = s.at("splat").get<std::string>();
            if (sp == "nearest")
                cfg.solver.splat_mode = 0;
            else if (sp == "linear")
                cfg.solver.splat_mode = 1;
            else
                throw std::runtime_error("config: $.solver.splat must be nearest or linear");
        }
        cfg.solver.mass_eps = get_or(s, "mass_eps", 1e-6);
        cfg.solver.prune_radius = get_or(s, "prune_radius", 0.0);
    }
    if (j.contains("io")) {
        const auto& io = j.at("io");
        check_keys(io, {"out_dir", "listmode", "operator_cache"}, "$.io");
        cfg.io.out_dir = get_or(io, "out_dir", std::string("out"));
        cfg.io.listmode = get_or(io, "listmode", std::string("listmode.csv"));
        cfg.io.operator_cache = get_or(io, "operator_cache", std::string());
    }
    if (j.contains("truth")) {
        const auto& t = j.at("truth");
        check_keys(t, {"particles"}, "$.truth");
        TruthConfig tc;
        if (!t.contains("particles") || !t.at("particles").is_array())
            throw std::runtime_error("config: $.truth.particles must be an array");
        int idx = 0;
        for (const auto& pj : t.at("particles")) {
            std::string path = "$.truth.particles[" + std::to_string(idx++) + "]";
            check_keys(pj, {"mass", "static", "from", "to", "knots_t", "knots"}, path);
            Particle p;
            p.mass = get_or(pj, "mass", 1.0);
            if (p.mass <= 0) throw std::runtime_error("config: " + path + ".mass must be > 0");
            const int dim = cfg.geometry.dim;
            const double T = cfg.geometry.T;
            if (pj.contains("static")) {
                p.traj = Trajectory::static_point(parse_point(pj.at("static"), dim, path), T);
            } else if (pj.contains("from") && pj.contains("to")) {
                p.traj = Trajectory::linear(parse_point(pj.at("from"), dim, path),
                                            parse_point(pj.at("to"), dim, path), T,
                                            cfg.geometry.N + 1);
            } else if (pj.contains("knots_t") && pj.contains("knots")) {
                for (const auto& tv : pj.at("knots_t")) p.traj.times.push_back(tv.get<double>());
                for (const auto& kv : pj.at("knots"))
                    p.traj.points.push_back(parse_point(kv, dim, path + ".knots"));
                if (p.traj.times.size() != p.traj.points.size() || p.traj.times.empty())
                    throw std::runtime_error("config: " + path +
                                             ": knots_t and knots must match and be nonempty");
            } else {
                throw std::runtime_error("config: " + path +
                                         ": need static, from/to, or knots_t/knots");
            }
            tc.particles.push_back(std::move(p));
        }
        cfg.truth = std::move(tc);
    }
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        check_keys(s, {"q_grid"}, "$.sweep");
        SweepConfig sc;
        for (const auto& v : s.at("q_grid")) sc.q_grid.push_back(v.get<double>());
        cfg.sweep = std::move(sc);
    }
    if (j.contains("toy")) {
        const auto& t = j.at("toy");
        check_keys(t, {"variant", "p_s", "G0", "M", "n", "m", "q_grid"}, "$.toy");
        ToyConfig tc;
        tc.variant = get_or(t, "variant", std::string("continuous"));
        if (tc.variant != "continuous" && tc.variant != "discrete")
            throw std::runtime_error("config: $.toy.variant must be continuous or discrete");
        tc.p_s = get_or(t, "p_s", 0.5);
        tc.G0 = get_or(t, "G0", 2.0);
        tc.M = get_or(t, "M", 20);
        tc.n = get_or(t, "n", 20);
        tc.m = get_or(t, "m", 11);
        if (t.contains("q_grid"))
            for (const auto& v : t.at("q_grid")) tc.q_grid.push_back(v.get<double>());
        cfg.toy = std::move(tc);
    }
    if (j.contains("scaling")) {
        const auto& s = j.at("scaling");
        check_keys(s, {"triples", "n_pairs", "n_seeds"}, "$.scaling");
        ScalingVerifyConfig sc;
        if (s.contains("triples"))
            for (const auto& tr : s.at("triples")) {
                if (!tr.is_array() || tr.size() != 3)
                    throw std::runtime_error(
                        "config: $.scaling.triples entries must be [theta,lambda,mu]");
                sc.triples.push_back({tr[0].get<double>(), tr[1].get<double>(),
                                      tr[2].get<double>()});
            }
        sc.n_pairs = get_or(s, "n_pairs", 20);
        sc.n_seeds = get_or(s, "n_seeds", 2000);
        cfg.scaling = std::move(sc);
    }
    return cfg;
}

ReconConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ReconConfig& cfg) {
    json j;
    j["version"] = cfg.version;
    j["geometry"] = {{"dim", cfg.geometry.dim},   {"radius_D", cfg.geometry.radius_D},
                     {"radius_Dd", cfg.geometry.radius_Dd}, {"M", cfg.geometry.M},
                     {"N", cfg.geometry.N},       {"T", cfg.geometry.T}};
    json m;
    m["p_s"] = cfg.model.p_s;
    m["p_d"] = cfg.model.p_d;
    if (cfg.model.q_heuristic)
        m["q"] = "heuristic";
    else
        m["q"] = cfg.model.q;
    if (cfg.model.beta_heuristic)
        m["beta"] = "heuristic";
    else
        m["beta"] = cfg.model.beta;
    if (!cfg.model.beta_table.empty()) m["beta_table"] = cfg.model.beta_table;
    m["typical_speed"] = cfg.model.typical_speed;
    m["typical_length"] = cfg.model.typical_length;
    if (cfg.model.sigma_none)
        m["sigma"] = "none";
    else
        m["sigma"] = cfg.model.sigma;
    m["T_half"] = cfg.model.T_half;
    m["mode"] = mode_name(cfg.model.mode);
    j["model"] = m;
    j["solver"] = {{"type", cfg.solver.type},
                   {"nx", cfg.solver.nx},
                   {"tol", cfg.solver.tol},
                   {"max_iters", cfg.solver.max_iters},
                   {"seed", cfg.solver.seed},
                   {"quad_per_cell", cfg.solver.quad_per_cell},
                   {"splat", cfg.solver.splat_mode == 0 ? "nearest" : "linear"},
                   {"mass_eps", cfg.solver.mass_eps},
                   {"prune_radius", cfg.solver.prune_radius}};
    json io;
    io["out_dir"] = cfg.io.out_dir;
    io["listmode"] = cfg.io.listmode;
    if (!cfg.io.operator_cache.empty()) io["operator_cache"] = cfg.io.operator_cache;
    j["io"] = io;
    if (cfg.truth) {
        json parts = json::array();
        for (const auto& p : cfg.truth->particles) {
            json pj;
            pj["mass"] = p.mass;
            pj["knots_t"] = p.traj.times;
            json ks = json::array();
            for (const auto& k : p.traj.points) ks.push_back(point_json(k, cfg.geometry.dim));
            pj["knots"] = ks;
            parts.push_back(pj);
        }
        j["truth"] = {{"particles", parts}};
    }
    if (cfg.sweep) j["sweep"] = {{"q_grid", cfg.sweep->q_grid}};
    if (cfg.toy) {
        j["toy"] = {{"variant", cfg.toy->variant}, {"p_s", cfg.toy->p_s}, {"G0", cfg.toy->G0},
                    {"M", cfg.toy->M},             {"n", cfg.toy->n},     {"m", cfg.toy->m},
                    {"q_grid", cfg.toy->q_grid}};
    }
    if (cfg.scaling) {
        json trs = json::array();
        for (const auto& t : cfg.scaling->triples) trs.push_back({t[0], t[1], t[2]});
        j["scaling"] = {{"triples", trs},
                        {"n_pairs", cfg.scaling->n_pairs},
                        {"n_seeds", cfg.scaling->n_seeds}};
    }
    return j.dump(2) + "\n";
}

std::shared_ptr<const ScannerGeometry> make_geometry(const ReconConfig& cfg) {
    return std::make_shared<ScannerGeometry>(cfg.geometry.dim, cfg.geometry.radius_D,
                                             cfg.geometry.radius_Dd, cfg.geometry.M,
                                             cfg.geometry.N, cfg.geometry.T);
}

PositronKernel make_kernel(const ReconConfig& cfg) {
    return cfg.model.sigma_none ? PositronKernel::none()
                                : PositronKernel::gaussian(cfg.model.sigma);
}

GroundTruth make_ground_truth(const ReconConfig& cfg) {
    if (!cfg.truth) throw std::runtime_error("config: missing $.truth block");
    GroundTruth gt;
    gt.T_half = cfg.model.T_half;
    gt.particles = cfg.truth->particles;
    return gt;
}

void validate_for_reconstruction(const ReconConfig& cfg) {
    const auto& m = cfg.model;
    if (!(m.p_s > 0)) throw std::runtime_error("config: $.model.p_s must be > 0");
    if (!(m.p_d > 0)) throw std::runtime_error("config: $.model.p_d must be > 0");
    if (m.p_s + m.p_d > 1.0 + 1e-12)
        throw std::runtime_error("config: $.model.p_s + p_d must not exceed 1");
    if (!m.q_heuristic && !(m.q > 0))
        throw std::runtime_error("config: $.model.q must be > 0");
    if (!m.beta_heuristic && !(m.beta > 0))
        throw std::runtime_error("config: $.model.beta must be > 0");
}

}  // namespace dynpet
