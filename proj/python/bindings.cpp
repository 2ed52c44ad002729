#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dynpet/debias.hpp"
#include "dynpet/forward.hpp"
#include "dynpet/objective.hpp"
#include "dynpet/philox.hpp"
#include "dynpet/scaling.hpp"
#include "dynpet/solver_grid.hpp"
#include "dynpet/solver_particles.hpp"
#include "dynpet/xray.hpp"

namespace py = pybind11;
using namespace dynpet;

namespace {

Vec to_vec(py::sequence s) {
    Vec v;
    v.x = s[0].cast<double>();
    v.y = s[1].cast<double>();
    if (py::len(s) > 2) v.z = s[2].cast<double>();
    return v;
}

py::tuple from_vec(const Vec& v, int dim) {
    return dim == 3 ? py::make_tuple(v.x, v.y, v.z) : py::make_tuple(v.x, v.y);
}

GridMeasure measure_from_arrays(std::shared_ptr<const Grid> grid, py::array_t<double> rho,
                                py::array_t<double> eta) {
    GridMeasure gm(grid);
    if ((std::size_t)rho.size() != gm.rho.size())
        throw std::invalid_argument("rho has wrong size");
    if ((std::size_t)eta.size() != gm.eta.size())
        throw std::invalid_argument("eta has wrong size");
    auto r = rho.unchecked();
    auto e = eta.unchecked();
    std::copy(r.data(0), r.data(0) + gm.rho.size(), gm.rho.begin());
    if (gm.eta.size()) std::copy(e.data(0), e.data(0) + gm.eta.size(), gm.eta.begin());
    return gm;
}

py::dict objective_dict(const ObjectiveValue& v) {
    py::dict d;
    d["total"] = v.total;
    d["fidelity_mass"] = v.fidelity_mass;
    d["neg_log"] = v.neg_log;
    d["bb"] = v.bb;
    d["feasible"] = v.feasible;
    return d;
}

}  // namespace

PYBIND11_MODULE(_dynpet, m) {
    m.doc() = "Dynamic PET listmode simulation and optimal-transport reconstruction";

    py::enum_<Mode>(m, "Mode")
        .value("continuous", Mode::continuous)
        .value("discrete", Mode::discrete);

    py::class_<ScannerGeometry, std::shared_ptr<ScannerGeometry>>(m, "ScannerGeometry")
        .def(py::init<int, double, double, int, int, double>(), py::arg("dim"),
             py::arg("radius_D"), py::arg("radius_Dd"), py::arg("M"), py::arg("N"), py::arg("T"))
        .def_property_readonly("dim", &ScannerGeometry::dim)
        .def_property_readonly("radius_D", &ScannerGeometry::radius_D)
        .def_property_readonly("radius_Dd", &ScannerGeometry::radius_Dd)
        .def_property_readonly("delta", &ScannerGeometry::delta)
        .def_property_readonly("M", &ScannerGeometry::num_detectors)
        .def_property_readonly("N", &ScannerGeometry::num_time_bins)
        .def_property_readonly("T", &ScannerGeometry::time_horizon)
        .def_property_readonly("boundary_measure", &ScannerGeometry::boundary_measure)
        .def("detect_ray",
             [](const ScannerGeometry& g, py::sequence x, py::sequence v) {
                 auto [a, b] = g.detect_ray(to_vec(x), to_vec(v));
                 return py::make_tuple(from_vec(a, g.dim()), from_vec(b, g.dim()));
             })
        .def("line_of_response",
             [](const ScannerGeometry& g, py::sequence a, py::sequence b) {
                 auto lor = g.line_of_response(to_vec(a), to_vec(b));
                 py::dict d;
                 d["theta"] = from_vec(lor.theta, g.dim());
                 d["s"] = from_vec(lor.s, g.dim());
                 return d;
             })
        .def("detector_index",
             [](const ScannerGeometry& g, py::sequence p) { return g.detector_index(to_vec(p)); })
        .def("cell_representative",
             [](const ScannerGeometry& g, int j) { return from_vec(g.cell_representative(j), g.dim()); })
        .def("hash", &ScannerGeometry::hash);

    py::class_<Grid, std::shared_ptr<Grid>>(m, "Grid")
        .def(py::init([](std::shared_ptr<ScannerGeometry> geom, int nx) {
                 return std::make_shared<Grid>(geom, nx);
             }),
             py::arg("geom"), py::arg("nx"))
        .def_property_readonly("nx", &Grid::nx)
        .def_property_readonly("h", &Grid::h)
        .def_property_readonly("nvox", &Grid::nvox)
        .def_property_readonly("num_faces", &Grid::num_faces_total)
        .def_property_readonly("num_active", &Grid::num_active);

    py::class_<PositronKernel>(m, "PositronKernel")
        .def_static("none", &PositronKernel::none)
        .def_static("gaussian", &PositronKernel::gaussian, py::arg("sigma"))
        .def_property_readonly("sigma", [](const PositronKernel& k) { return k.sigma; });

    py::class_<Particle>(m, "Particle")
        .def(py::init([](double mass, std::vector<double> times, py::array_t<double> pts) {
                 Particle p;
                 p.mass = mass;
                 p.traj.times = std::move(times);
                 auto r = pts.unchecked<2>();
                 for (py::ssize_t i = 0; i < r.shape(0); ++i)
                     p.traj.points.push_back(
                         Vec{r(i, 0), r(i, 1), r.shape(1) > 2 ? r(i, 2) : 0.0});
                 return p;
             }),
             py::arg("mass"), py::arg("times"), py::arg("points"))
        .def_property_readonly("mass", [](const Particle& p) { return p.mass; })
        .def("position", [](const Particle& p, double t) {
            Vec v = p.traj.at(t);
            return py::make_tuple(v.x, v.y, v.z);
        });

    py::class_<Listmode>(m, "Listmode")
        .def_property_readonly("mode", [](const Listmode& lm) { return lm.mode; })
        .def("__len__", [](const Listmode& lm) { return lm.events.size(); })
        .def("event",
             [](const Listmode& lm, std::size_t k) {
                 const auto& e = lm.events.at(k);
                 py::dict d;
                 d["t"] = e.t;
                 d["a"] = from_vec(e.a, lm.geom->dim());
                 d["b"] = from_vec(e.b, lm.geom->dim());
                 d["bin"] = e.bin;
                 d["ja"] = e.ja;
                 d["jb"] = e.jb;
                 return d;
             })
        .def("times", [](const Listmode& lm) {
            std::vector<double> t;
            for (const auto& e : lm.events) t.push_back(e.t);
            return t;
        });

    m.def("simulate",
          [](std::shared_ptr<ScannerGeometry> geom, std::vector<Particle> particles, double p_s,
             double p_d, const PositronKernel& kernel, Mode mode, std::uint64_t seed,
             double T_half) {
              GroundTruth gt;
              gt.particles = std::move(particles);
              gt.T_half = T_half;
              auto res = sample_poisson_listmode(gt, geom, p_s, p_d, kernel, mode, seed);
              std::vector<bool> scattered;
              for (const auto& l : res.labels) scattered.push_back(l.scattered);
              return py::make_tuple(res.listmode, scattered, res.dropped);
          },
          py::arg("geom"), py::arg("particles"), py::arg("p_s"), py::arg("p_d"),
          py::arg("kernel"), py::arg("mode"), py::arg("seed"), py::arg("T_half") = 1.0);

    m.def("write_listmode", &write_listmode);
    m.def("read_listmode", [](const std::string& path, std::shared_ptr<ScannerGeometry> geom) {
        return read_listmode(path, geom);
    });

    m.def("ground_truth_to_grid",
          [](std::vector<Particle> particles, std::shared_ptr<Grid> grid, int splat_mode,
             double T_half) {
              GroundTruth gt;
              gt.particles = std::move(particles);
              gt.T_half = T_half;
              auto gm = ground_truth_to_grid(gt, grid, splat_mode);
              return py::make_tuple(py::array_t<double>((py::ssize_t)gm.rho.size(), gm.rho.data()),
                                    py::array_t<double>((py::ssize_t)gm.eta.size(), gm.eta.data()));
          },
          py::arg("particles"), py::arg("grid"), py::arg("splat_mode") = 1,
          py::arg("T_half") = 1.0);

    py::class_<ForwardOperator, std::shared_ptr<ForwardOperator>>(m, "ForwardOperator")
        .def(py::init([](std::shared_ptr<Grid> grid, const PositronKernel& k, int quad) {
                 return std::make_shared<ForwardOperator>(grid, k, quad);
             }),
             py::arg("grid"), py::arg("kernel"), py::arg("quad_per_cell") = 0)
        .def("apply_scatter",
             [](const ForwardOperator& op, py::array_t<double> slice) {
                 auto out = op.apply_scatter(slice.data());
                 return py::array_t<double>((py::ssize_t)out.size(), out.data());
             })
        .def("apply_detection",
             [](const ForwardOperator& op, py::array_t<double> slice) {
                 auto out = op.apply_detection(slice.data());
                 return py::array_t<double>((py::ssize_t)out.size(), out.data());
             })
        .def("apply_forward",
             [](const ForwardOperator& op, py::array_t<double> rho, py::array_t<double> eta,
                double p_s, double p_d) {
                 auto gm = measure_from_arrays(op.grid_ptr(), rho, eta);
                 auto out = op.apply_forward(gm, p_s, p_d);
                 return py::array_t<double>((py::ssize_t)out.values.size(), out.values.data());
             })
        .def("apply_unbiased_forward",
             [](const ForwardOperator& op, py::array_t<double> rho, py::array_t<double> eta,
                double q, double p_s, double p_d) {
                 auto gm = measure_from_arrays(op.grid_ptr(), rho, eta);
                 auto out = op.apply_unbiased_forward(gm, q, p_s, p_d);
                 return py::array_t<double>((py::ssize_t)out.values.size(), out.values.data());
             })
        .def("bound_constant",
             [](const ForwardOperator& op, double q, double p_s, double p_d, Mode mode) {
                 auto b = op.bound_constant(q, p_s, p_d, mode);
                 py::dict d;
                 d["lower"] = b.lower;
                 d["upper"] = b.upper;
                 d["has_positive_lower"] = b.has_positive_lower;
                 return d;
             })
        .def("save_cache", &ForwardOperator::save_cache);

    m.def("xray_transform",
          [](std::shared_ptr<Grid> grid, py::array_t<double> density, py::sequence theta,
             py::sequence s) {
              return xray_transform(grid->lattice(), density.data(), to_vec(theta), to_vec(s));
          });

    m.def("evaluate_J",
          [](const ForwardOperator& op, py::array_t<double> rho, py::array_t<double> eta,
             const Listmode& lm, double q, double beta, double p_s, double p_d, double T_half,
             Mode mode) {
              auto gm = measure_from_arrays(op.grid_ptr(), rho, eta);
              ObjectiveParams p{q, beta, p_s, p_d, T_half, mode};
              return objective_dict(evaluate_J(op, gm, lm, p));
          },
          py::arg("op"), py::arg("rho"), py::arg("eta"), py::arg("listmode"), py::arg("q"),
          py::arg("beta"), py::arg("p_s"), py::arg("p_d"), py::arg("T_half") = 1.0,
          py::arg("mode") = Mode::discrete);

    m.def("evaluate_particle_J",
          [](std::shared_ptr<ScannerGeometry> geom, std::vector<Particle> particles,
             const Listmode& lm, double q, double beta, double p_s, double p_d, double sigma,
             double T_half) {
              return evaluate_particle_J(*geom, particles, lm, q, beta, p_s, p_d, sigma, T_half);
          },
          py::arg("geom"), py::arg("particles"), py::arg("listmode"), py::arg("q"),
          py::arg("beta"), py::arg("p_s"), py::arg("p_d"), py::arg("sigma"),
          py::arg("T_half") = 1.0);

    m.def("benamou_brenier", [](std::shared_ptr<Grid> grid, py::array_t<double> rho,
                                py::array_t<double> eta) {
        return benamou_brenier(measure_from_arrays(grid, rho, eta));
    });
    m.def("check_continuity", [](std::shared_ptr<Grid> grid, py::array_t<double> rho,
                                 py::array_t<double> eta) {
        auto r = check_continuity(measure_from_arrays(grid, rho, eta));
        return py::make_tuple(r.max_abs, r.l1);
    });

    m.def("reconstruct_grid",
          [](const ForwardOperator& op, const Listmode& lm, double q, double beta, double p_s,
             double p_d, double T_half, double tol, int max_iters) {
              ObjectiveParams p{q, beta, p_s, p_d, T_half, Mode::discrete};
              GridSolveConfig cfg;
              cfg.tol = tol;
              cfg.max_iters = max_iters;
              auto rec = reconstruct_grid(op, lm, p, cfg);
              py::dict d;
              d["rho"] = py::array_t<double>((py::ssize_t)rec.gm.rho.size(), rec.gm.rho.data());
              d["eta"] = py::array_t<double>((py::ssize_t)rec.gm.eta.size(), rec.gm.eta.data());
              d["objective"] = objective_dict(rec.objective);
              d["gap"] = rec.diag.gap;
              d["iterations"] = rec.diag.iterations;
              return d;
          },
          py::arg("op"), py::arg("listmode"), py::arg("q"), py::arg("beta"), py::arg("p_s"),
          py::arg("p_d"), py::arg("T_half") = 1.0, py::arg("tol") = 1e-5,
          py::arg("max_iters") = 50000);

    m.def("reconstruct_particles",
          [](std::shared_ptr<ScannerGeometry> geom, std::shared_ptr<Grid> grid,
             const Listmode& lm, double q, double beta, double sigma, double p_s, double p_d,
             double T_half) {
              ParticleSolveConfig cfg;
              cfg.q = q;
              cfg.beta = beta;
              cfg.sigma = sigma;
              cfg.p_s = p_s;
              cfg.p_d = p_d;
              cfg.T_half = T_half;
              auto rec = reconstruct_particles(*geom, *grid, lm, cfg);
              py::list parts;
              for (const auto& p : rec.particles) {
                  py::dict pd;
                  pd["mass"] = p.mass;
                  pd["times"] = p.traj.times;
                  py::list ks;
                  for (const auto& k : p.traj.points) ks.append(from_vec(k, geom->dim()));
                  pd["points"] = ks;
                  parts.append(pd);
              }
              py::dict d;
              d["particles"] = parts;
              d["objective"] = rec.objective;
              return d;
          },
          py::arg("geom"), py::arg("grid"), py::arg("listmode"), py::arg("q"), py::arg("beta"),
          py::arg("sigma"), py::arg("p_s"), py::arg("p_d"), py::arg("T_half") = 1.0);

    m.def("prox_neglog", &prox_neglog, py::arg("x"), py::arg("tau"), py::arg("w"));
    m.def("toy_threshold_continuous", &toy_threshold_continuous);
    m.def("toy_threshold_discrete", &toy_threshold_discrete);
    m.def("solve_toy", [](const std::string& variant, double p_s, int n, int m, double G0, int M,
                          double q) {
        ToyModel toy;
        toy.variant = variant == "discrete" ? ToyModel::Variant::discrete_1d
                                            : ToyModel::Variant::continuous_1d;
        toy.p_s = p_s;
        toy.n = n;
        toy.m = m;
        toy.G0 = G0;
        toy.M = M;
        auto sol = solve_toy(toy, q);
        return py::make_tuple(sol.alpha, sol.beta, sol.objective);
    });
    m.def("heuristic_q",
          [](std::shared_ptr<ScannerGeometry> geom, double p_s, double p_d, double mass,
             Mode mode, const PositronKernel& k) {
              return heuristic_q(*geom, p_s, p_d, mass, mode, k);
          });
    m.def("rescaled_parameters", [](double beta, double T_half, double T, double radius_D,
                                    double theta, double lambda, double mu) {
        auto r = rescaled_parameters(beta, T_half, T, radius_D, ScaleTriple{theta, lambda, mu});
        return py::make_tuple(r.beta, r.T_half, r.T, r.radius_D);
    });
    m.def("beta_heuristic", [](double v, double l, double mass, double T_half,
                               std::vector<std::pair<double, double>> table) {
        auto r = beta_heuristic(v, l, mass, T_half, table);
        return py::make_tuple(r.beta, r.clamped);
    });

    // Raw Philox block and stream, for cross-checking the RNG against numpy.
    m.def("philox_block", [](std::array<std::uint64_t, 4> ctr, std::array<std::uint64_t, 2> key) {
        auto out = Philox::block(ctr, key);
        return std::vector<std::uint64_t>(out.begin(), out.end());
    });
    m.def("philox_stream", [](std::uint64_t seed, std::uint64_t stream, int n) {
        Philox rng(seed, stream);
        std::vector<std::uint64_t> out;
        for (int i = 0; i < n; ++i) out.push_back(rng.next_u64());
        return out;
    });
}
