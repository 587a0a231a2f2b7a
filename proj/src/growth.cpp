#include "morpho/growth.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>
#include <utility>

#include <Eigen/SparseCholesky>

#include "fem_internal.hpp"
#include "morpho/deform.hpp"
#include "morpho/error.hpp"

namespace morpho {
namespace fem {

using mapping::DisplacementField;
using mesh::TriMesh;

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

void warn(std::vector<std::string>* sink, const std::string& msg) {
    if (sink) sink->push_back(msg);
}

constexpr double kChainTol = 1e-6;

double time_tol(double a, double b) {
    return 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

} // namespace

// ---------------------------------------------------------------------------
// GrowthSeries

double GrowthSeries::t_begin() const {
    if (stages.empty()) throw InputError("growth series has no stages");
    return stages.front().t;
}

double GrowthSeries::t_end() const {
    if (stages.empty()) throw InputError("growth series has no stages");
    return stages.back().t + stages.back().field.dt;
}

bool GrowthSeries::covers(double a, double b) const {
    if (stages.empty()) return false;
    const double tol = time_tol(t_begin(), t_end());
    return b >= a && a >= t_begin() - tol && b <= t_end() + tol;
}

void GrowthSeries::validate() const {
    if (stages.empty()) throw InputError("growth series has no stages");
    const std::size_t n = stages.front().field.sources.size();
    for (std::size_t k = 0; k < stages.size(); ++k) {
        const Stage& st = stages[k];
        if (!std::isfinite(st.t))
            throw InputError("growth stage " + std::to_string(k) +
                             " has a non-finite time");
        st.field.validate();
        if (st.field.sources.size() != n)
            throw InputError("growth stage " + std::to_string(k) + " has " +
                             std::to_string(st.field.sources.size()) +
                             " boundary samples, stage 0 has " +
                             std::to_string(n));
        if (k == 0) continue;
        const Stage& prev = stages[k - 1];
        const double tol = time_tol(prev.t, st.t);
        if (!(st.t > prev.t))
            throw InputError("growth stage times must increase strictly");
        if (st.t < prev.t + prev.field.dt - tol)
            throw InputError("growth stages " + std::to_string(k - 1) +
                             " and " + std::to_string(k) + " overlap in time");
        for (std::size_t i = 0; i < n; ++i) {
            const double gap =
                geometry::dist(st.field.sources[i], prev.field.endpoint(i));
            if (gap > kChainTol)
                throw InputError(
                    "growth stages " + std::to_string(k - 1) + " and " +
                    std::to_string(k) + " do not chain: sample " +
                    std::to_string(i) + " is " + fmt(gap) +
                    " from the previous endpoint");
        }
    }
}

namespace {

/// Position of sample i at time tau under piecewise-linear stage motion;
/// the boundary holds still in gaps and outside the series span.
geometry::Point2 sample_position(const GrowthSeries& g, std::size_t i,
                                 double tau) {
    std::size_t k = 0;
    for (std::size_t j = 0; j < g.stages.size(); ++j) {
        if (g.stages[j].t <= tau + time_tol(g.stages[j].t, tau)) k = j;
        else break;
    }
    const GrowthSeries::Stage& st = g.stages[k];
    double frac = (tau - st.t) / st.field.dt;
    frac = std::clamp(frac, 0.0, 1.0);
    return st.field.sources[i] + st.field.vectors[i] * frac;
}

} // namespace

DisplacementField GrowthSeries::window(double a, double b) const {
    validate();
    if (!covers(a, b))
        throw InputError("growth series spans [" + fmt(t_begin()) + ", " +
                         fmt(t_end()) + "] and does not cover [" + fmt(a) +
                         ", " + fmt(b) + "]");
    DisplacementField out;
    out.method = "growth";
    out.t = a;
    out.dt = b - a;
    const std::size_t n = stages.front().field.sources.size();
    out.sources.reserve(n);
    out.vectors.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const geometry::Point2 pa = sample_position(*this, i, a);
        out.sources.push_back(pa);
        out.vectors.push_back(sample_position(*this, i, b) - pa);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Conservative moving-mesh stepping

FieldState step_rd_growing(const FieldState& state, const ReactionModel& model,
                           const BoundaryCondition& bc,
                           const GrowthSeries& growth, double dt,
                           std::vector<std::string>* warnings) {
    if (growth.empty()) return step_rd(state, model, bc, dt, warnings);

    state.validate();
    if (!(dt > 0) || !std::isfinite(dt))
        throw InputError("time step must be finite and > 0");
    model.validate();
    if (state.n_species != model.n_species)
        throw InputError("field state has " + std::to_string(state.n_species) +
                         " species, model has " +
                         std::to_string(model.n_species));
    if (!growth.covers(state.t, state.t + dt))
        throw InputError("growth series does not cover the step from t = " +
                         fmt(state.t) + " to " + fmt(state.t + dt));

    const DisplacementField motion = growth.window(state.t, state.t + dt);
    TriMesh moved;
    try {
        moved = mesh::deform(*state.mesh, motion, 1.0);
    } catch (const ComputeError& err) {
        throw ComputeError(std::string(err.what()) +
                           "; reduce dt to substep the growth");
    }
    auto new_mesh = std::make_shared<const TriMesh>(std::move(moved));
    bc.validate(*new_mesh, model.n_species);

    const std::size_t nv = state.mesh->vertex_count();
    const int ns = model.n_species;

    std::vector<double> mean;
    const std::vector<double> rates = detail::nodal_rates(model, state, &mean);
    const double max_row = detail::reaction_scale_bound(model, mean);
    if (dt * max_row > 1.0)
        warn(warnings,
             "time step " + fmt(dt) +
                 " exceeds the reaction stability budget (dt * |dR/dc| = " +
                 fmt(dt * max_row) + " > 1); expect reduced accuracy");

    const FemMatrices old_mats = assemble(*state.mesh);
    const FemMatrices mats = assemble(*new_mesh);

    FieldState out;
    out.mesh = new_mesh;
    out.n_species = ns;
    out.t = state.t + dt;
    out.c.resize(state.c.size());

    for (int s = 0; s < ns; ++s) {
        const detail::SpeciesBC sbc =
            detail::build_species_bc(*new_mesh, mats, bc, s);
        SpMat A = mats.mass + SpMat(dt * model.D[s] * mats.stiffness) +
                  SpMat(dt * sbc.robin);
        SpMat reduced;
        Eigen::VectorXd correction;
        detail::eliminate_dirichlet(A, sbc, &reduced, &correction);

        Eigen::Map<const Eigen::VectorXd> cs(state.c.data() + s * nv, nv);
        Eigen::Map<const Eigen::VectorXd> rs(rates.data() + s * nv, nv);
        Eigen::VectorXd rhs =
            old_mats.mass * (cs + dt * rs).eval() + dt * sbc.flux_load;
        rhs = detail::finish_rhs(std::move(rhs), sbc, correction);

        Eigen::SimplicialLDLT<SpMat> solver;
        solver.compute(reduced);
        if (solver.info() != Eigen::Success)
            throw ComputeError("moving-mesh factorization failed for species " +
                               std::to_string(s));
        Eigen::VectorXd x = solver.solve(rhs);
        if (solver.info() != Eigen::Success)
            throw ComputeError("moving-mesh solve failed for species " +
                               std::to_string(s));
        std::copy(x.data(), x.data() + nv, out.c.begin() + s * nv);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Time-loop driver

std::vector<FieldState> simulate(const ReactionModel& model,
                                 const BoundaryCondition& bc,
                                 const FieldState& initial,
                                 const Schedule& schedule,
                                 const GrowthSeries* growth,
                                 std::vector<std::string>* warnings) {
    model.validate();
    initial.validate();
    if (!(schedule.dt > 0) || !std::isfinite(schedule.dt))
        throw InputError("schedule time step must be finite and > 0");
    if (schedule.stride == 0)
        throw InputError("output stride must be at least 1");
    const bool growing = growth && !growth->empty();
    if (growing) growth->validate();

    FieldState state = initial;
    const double t0 = initial.t;

    if (schedule.equilibrate) {
        RDStepper stepper(state.mesh, model, bc, schedule.dt, warnings);
        bool settled = false;
        for (std::size_t i = 0; i < schedule.equilibrate_max_steps; ++i) {
            FieldState next = stepper.step(state);
            double diff = 0;
            for (std::size_t j = 0; j < next.c.size(); ++j)
                diff = std::max(diff, std::abs(next.c[j] - state.c[j]));
            state = std::move(next);
            if (diff / schedule.dt < schedule.equilibrate_tol) {
                settled = true;
                break;
            }
        }
        if (!settled)
            warn(warnings, "pre-equilibration did not reach steady state "
                           "within " +
                               std::to_string(schedule.equilibrate_max_steps) +
                               " steps");
        state.t = t0; // equilibration does not consume simulated time
    }

    std::vector<FieldState> out;
    out.push_back(state);
    const double horizon = schedule.t_end;
    const double eps_t = time_tol(t0, horizon);
    if (horizon <= t0 + eps_t) return out;

    std::unique_ptr<RDStepper> static_stepper;
    const TriMesh* stepper_mesh = nullptr;
    double stepper_dt = 0;
    std::size_t step_index = 0;
    std::vector<std::string> step_warnings;

    while (state.t < horizon - eps_t) {
        const double dt_k = std::min(schedule.dt, horizon - state.t);
        const bool grow_now =
            growing && growth->covers(state.t, state.t + dt_k);
        if (grow_now) {
            state = step_rd_growing(state, model, bc, *growth, dt_k,
                                    &step_warnings);
            static_stepper.reset(); // the mesh moved
        } else {
            if (!static_stepper || stepper_mesh != state.mesh.get() ||
                stepper_dt != dt_k) {
                static_stepper = std::make_unique<RDStepper>(
                    state.mesh, model, bc, dt_k, &step_warnings);
                stepper_mesh = state.mesh.get();
                stepper_dt = dt_k;
            }
            state = static_stepper->step(state);
        }
        ++step_index;
        if (state.t >= horizon - eps_t || step_index % schedule.stride == 0)
            out.push_back(state);
    }

    if (warnings) // forward per-step warnings once each
        for (const std::string& msg : step_warnings)
            if (std::find(warnings->begin(), warnings->end(), msg) ==
                warnings->end())
                warnings->push_back(msg);
    return out;
}

FieldState noisy_uniform(std::shared_ptr<const TriMesh> mesh,
                         const std::vector<double>& values, double amplitude,
                         std::uint64_t seed, double t) {
    if (!(amplitude >= 0) || !std::isfinite(amplitude))
        throw InputError("noise amplitude must be finite and >= 0");
    FieldState st = FieldState::uniform(std::move(mesh), values, t);
    if (amplitude == 0) return st;
    std::mt19937_64 rng(seed);
    for (double& c : st.c) {
        const double xi = 2.0 * ((rng() >> 11) * 0x1.0p-53) - 1.0;
        c *= 1.0 + amplitude * xi;
    }
    return st;
}

} // namespace fem
} // namespace morpho
