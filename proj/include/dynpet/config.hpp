#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dynpet/geometry.hpp"
#include "dynpet/kernel.hpp"
#include "dynpet/listmode.hpp"

namespace dynpet {

// Versioned JSON run configuration. Parsing is fail-fast: unknown keys are
// errors reported with their field path, and parse -> serialize -> parse is a
// fixed point on the canonical form.

struct GeometryConfig {
    int dim = 2;
    double radius_D = 0.8, radius_Dd = 1.0;
    int M = 16, N = 10;
    double T = 1.0;
};

struct ModelConfig {
    double p_s = 0.1, p_d = 0.7;
    bool q_heuristic = true;
    double q = 1.0;
    bool beta_heuristic = false;
    double beta = 0.05;
    std::string beta_table;         // CSV path for the heuristic beta-hat table
    double typical_speed = 1.0;     // heuristic inputs
    double typical_length = 1.0;
    bool sigma_none = false;
    double sigma = 0.05;
    double T_half = 1.0;
    Mode mode = Mode::discrete;
};

struct SolverConfig {
    std::string type = "grid";  // grid | particles
    int nx = 32;
    double tol = 1e-5;
    long max_iters = 50000;
    std::uint64_t seed = 1;
    int quad_per_cell = 0;  // 0: geometry-dependent default
    int splat_mode = 1;     // 0 nearest, 1 linear
    double mass_eps = 1e-6;
    double prune_radius = 0.0;
};

struct IoConfig {
    std::string out_dir = "out";
    std::string listmode = "listmode.csv";
    std::string operator_cache;  // optional on-disk operator cache
};

struct TruthConfig {
    std::vector<Particle> particles;
};

struct SweepConfig {
    std::vector<double> q_grid;
};

struct ToyConfig {
    std::string variant = "continuous";  // continuous | discrete
    double p_s = 0.5;
    double G0 = 2.0;
    int M = 20;
    int n = 20, m = 11;
    std::vector<double> q_grid;
};

struct ScalingVerifyConfig {
    std::vector<std::array<double, 3>> triples;  // (theta, lambda, mu)
    int n_pairs = 20;
    int n_seeds = 2000;
};

struct ReconConfig {
    int version = 1;
    GeometryConfig geometry;
    ModelConfig model;
    SolverConfig solver;
    IoConfig io;
    std::optional<TruthConfig> truth;
    std::optional<SweepConfig> sweep;
    std::optional<ToyConfig> toy;
    std::optional<ScalingVerifyConfig> scaling;
};

ReconConfig parse_config(const std::string& json_text);
ReconConfig load_config(const std::string& path);
std::string serialize_config(const ReconConfig& cfg);

// Factory helpers tying the config to core objects.
std::shared_ptr<const ScannerGeometry> make_geometry(const ReconConfig& cfg);
PositronKernel make_kernel(const ReconConfig& cfg);
GroundTruth make_ground_truth(const ReconConfig& cfg);

// Theorem hypotheses for reconstruction: p_s, p_d, beta, q > 0, p_s+p_d <= 1.
void validate_for_reconstruction(const ReconConfig& cfg);

}  // namespace dynpet
