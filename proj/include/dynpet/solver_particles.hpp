#pragma once

#include <vector>

#include "dynpet/objective.hpp"

namespace dynpet {

struct ParticleSolveConfig {
    double q = 1.0;
    double beta = 1.0;
    double sigma = 0.05;
    double p_s = 0.1;
    double p_d = 0.7;
    double T_half = 1.0;
    double mass_eps = 1e-6;       // particles below this mass are pruned
    double insert_tol = 1e-9;     // linearized descent threshold
    double refine_tol = 1e-9;     // relative objective decrease per sweep
    int max_particles = 0;        // 0: capped at |E|
    int max_refine_sweeps = 40;
    int knot_steps_per_sweep = 4;
    double prune_radius = 0.0;    // DP node radius around event lines; 0: auto
};

struct InsertCandidate {
    bool descent = false;
    double linearized_value = 0.0;  // per unit mass
    double mass = 0.0;              // line-search step
    Trajectory traj;
};

struct ParticleReconstruction {
    std::vector<Particle> particles;
    double objective = 0.0;     // evaluate_particle_J at the output
    int insertions = 0;
    int outer_iterations = 0;
};

// Conditional-gradient style insertion: minimizes the objective linearized in
// an added unit mass over piecewise-linear trajectories with one knot per time
// bin, by dynamic programming on the time-layered voxel graph (node cost =
// mass derivative of the data terms, edge cost = beta |dx|^2 / dt). Ties break
// toward the lexicographically smallest voxel index sequence. The returned
// mass is the exact 1D line-search minimizer along the candidate.
InsertCandidate insert_trajectory(const ScannerGeometry& geom, const Grid& grid,
                                  const std::vector<Particle>& current, const Listmode& lm,
                                  const ParticleSolveConfig& cfg);

// Block refinement of the lifted objective: per-particle 1D mass solves
// (convex) alternated with backtracking gradient steps on the knots (smooth
// through the Gaussian data term); knots leaving D are projected back. The
// objective never increases.
std::vector<Particle> refine(const ScannerGeometry& geom, std::vector<Particle> particles,
                             const Listmode& lm, const ParticleSolveConfig& cfg);

// Alternates insertion, refinement and pruning until insertion finds no
// descent direction; emits at most |E| particles.
ParticleReconstruction reconstruct_particles(const ScannerGeometry& geom, const Grid& grid,
                                             const Listmode& lm,
                                             const ParticleSolveConfig& cfg);

}  // namespace dynpet
