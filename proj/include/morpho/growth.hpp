#ifndef MORPHO_GROWTH_HPP
#define MORPHO_GROWTH_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "morpho/fem.hpp"
#include "morpho/mapping.hpp"

namespace morpho {
namespace fem {

/// Piecewise-linear-in-time boundary motion. Each stage holds a
/// displacement field whose sources are the boundary sample positions at
/// the stage start time t and whose time span is the field's dt; samples
/// move linearly across the span. Consecutive stages chain sample-wise:
/// the next stage's sources coincide with the previous stage's endpoints.
/// Time gaps between stages mean the boundary holds still.
struct GrowthSeries {
    struct Stage {
        double t = 0;
        mapping::DisplacementField field;
    };
    std::vector<Stage> stages; // sorted by t

    bool empty() const { return stages.empty(); }
    double t_begin() const;
    double t_end() const;
    bool covers(double a, double b) const;

    /// Throws InputError unless stages are sorted, non-overlapping, have
    /// positive spans and equal sample counts, and chain within 1e-6.
    void validate() const;

    /// Sample positions at time a paired with their displacement to time b.
    /// Requires covers(a, b).
    mapping::DisplacementField window(double a, double b) const;
};

/// One conservative moving-mesh step: the mesh moves with the boundary
/// displacement over [t, t + dt] (interior motion by harmonic extension)
/// and concentrations update as
///   (M_new + dt D_i K_new) c_new = M_old (c_old + dt R(c_old)) + dt flux,
/// so zero-flux transport conserves total mass exactly while area growth
/// dilutes concentrations. An empty series degenerates to the static step.
/// Throws ComputeError (advising a smaller dt) if the motion inverts the
/// mesh within one step.
FieldState step_rd_growing(const FieldState& state, const ReactionModel& model,
                           const BoundaryCondition& bc,
                           const GrowthSeries& growth, double dt,
                           std::vector<std::string>* warnings = nullptr);

struct Schedule {
    double t_end = 0;
    double dt = 1e-2;
    std::size_t stride = 1;        // record every stride-th step
    bool equilibrate = false;      // settle on the static domain first
    double equilibrate_tol = 1e-6; // threshold on max |dc| / dt
    std::size_t equilibrate_max_steps = 200000;
};

/// Time loop from the initial state to schedule.t_end. With a growth
/// series, steps covered by the series use the moving-mesh update and any
/// remaining time advances on the frozen domain. Optional pre-equilibration
/// first settles the initial domain to steady state (time is not advanced
/// by it). The returned trajectory starts with the (equilibrated) initial
/// state, then holds every stride-th step plus the final state.
std::vector<FieldState> simulate(const ReactionModel& model,
                                 const BoundaryCondition& bc,
                                 const FieldState& initial,
                                 const Schedule& schedule,
                                 const GrowthSeries* growth = nullptr,
                                 std::vector<std::string>* warnings = nullptr);

/// Uniform per-species values with a seeded uniform relative perturbation:
/// c = value * (1 + amplitude * xi), xi drawn from [-1, 1). Deterministic
/// for a given seed.
FieldState noisy_uniform(std::shared_ptr<const mesh::TriMesh> mesh,
                         const std::vector<double>& values, double amplitude,
                         std::uint64_t seed, double t = 0);

} // namespace fem
} // namespace morpho

#endif
