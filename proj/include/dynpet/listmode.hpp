#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dynpet/geometry.hpp"
#include "dynpet/grid.hpp"
#include "dynpet/kernel.hpp"

namespace dynpet {

enum class Mode { continuous, discrete };

inline const char* mode_name(Mode m) { return m == Mode::continuous ? "continuous" : "discrete"; }

// One detected photon pair. In discrete mode t is the bin-center time and
// a, b are the representative points z_j, z_k of the detector cells.
struct ListmodeEvent {
    double t = 0.0;
    Vec a, b;
    int bin = -1, ja = -1, jb = -1;  // set in discrete mode
};

struct Listmode {
    std::shared_ptr<const ScannerGeometry> geom;
    Mode mode = Mode::discrete;
    std::vector<ListmodeEvent> events;
    std::uint64_t seed = 0;  // provenance

    std::size_t size() const { return events.size(); }
};

// Hidden per-event truth labels kept out of the reconstruction path; written
// to a sidecar diagnostics file by the simulate command.
struct EventLabel {
    bool scattered = false;
    int particle = -1;
};

// Piecewise-linear trajectory with explicit knot times, extended constant
// outside the knot span.
struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> points;

    Vec at(double t) const;
    Vec displacement(double t0, double t1) const { return at(t1) - at(t0); }
    double kinetic_energy() const;  // integral of |velocity|^2 over the span

    static Trajectory static_point(const Vec& p, double T);
    // Uniform motion from p0 at t=0 to p1 at t=T, knots at every bin edge.
    static Trajectory linear(const Vec& p0, const Vec& p1, double T, int knots);
};

struct Particle {
    double mass = 0.0;
    Trajectory traj;
};

struct GroundTruth {
    std::vector<Particle> particles;
    double T_half = 1.0;

    double slice_mass() const;  // sum of particle masses
};

// Deposits each particle's mass at its bin-center position per slice and the
// displacement between consecutive bin centers as face flux; the result is
// conservative by construction, with an O(h) continuity residual.
// splat_mode: 0 nearest voxel, 1 multilinear.
GridMeasure ground_truth_to_grid(const GroundTruth& gt, std::shared_ptr<const Grid> grid,
                                 int splat_mode = 1);

struct SampleResult {
    Listmode listmode;
    std::vector<EventLabel> labels;      // parallel to listmode.events
    std::uint64_t dropped = 0;           // discrete-mode same-cell pairs thinned out
};

// Poisson listmode sampler: K ~ Poisson((p_s+p_d)*T*slice_mass/T_half), then K
// independent events, each generated in its own counter-based RNG stream.
// Scatter events pick a uniform detector-surface pair; detection events pick a
// particle by mass, apply the positron-range offset, and shoot a uniform
// direction. Discrete mode bins events and thins same-cell pairs (the model's
// diagonal bins are structurally zero).
SampleResult sample_poisson_listmode(const GroundTruth& gt,
                                     std::shared_ptr<const ScannerGeometry> geom, double p_s,
                                     double p_d, const PositronKernel& kernel, Mode mode,
                                     std::uint64_t seed);

void write_listmode(const Listmode& lm, const std::string& path);
Listmode read_listmode(const std::string& path, std::shared_ptr<const ScannerGeometry> geom);

void write_labels(const std::vector<EventLabel>& labels, const std::string& path);

}  // namespace dynpet
