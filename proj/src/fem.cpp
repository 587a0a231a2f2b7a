#include "morpho/fem.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <Eigen/SparseCholesky>

#include "fem_internal.hpp"
#include "morpho/error.hpp"

namespace morpho {
namespace fem {

namespace {

using geometry::Point2;
using Triplet = Eigen::Triplet<double>;

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

void warn(std::vector<std::string>* sink, const std::string& msg) {
    if (sink) sink->push_back(msg);
}

} // namespace

// ---------------------------------------------------------------------------
// ReactionModel

double ReactionModel::param(const std::string& name, double fallback) const {
    auto it = params.find(name);
    return it == params.end() ? fallback : it->second;
}

void ReactionModel::validate() const {
    if (n_species < 1)
        throw InputError("reaction model needs at least one species");
    if (static_cast<int>(D.size()) != n_species)
        throw InputError("reaction model has " + std::to_string(D.size()) +
                         " diffusion coefficients for " +
                         std::to_string(n_species) + " species");
    for (int s = 0; s < n_species; ++s) {
        if (!(D[s] >= 0) || !std::isfinite(D[s]))
            throw InputError("diffusion coefficient for species " +
                             std::to_string(s) + " must be finite and >= 0");
    }
    if (kinetics == "custom") {
        if (!custom_rate)
            throw InputError("custom kinetics selected but no rate function set");
    } else if (kinetics == "schnakenberg" || kinetics == "gierer_meinhardt" ||
               kinetics == "ligand_receptor_turing") {
        if (n_species != 2)
            throw InputError("kinetics '" + kinetics +
                             "' model two species, got " +
                             std::to_string(n_species));
    } else {
        throw InputError("unknown kinetics '" + kinetics + "'");
    }
}

void ReactionModel::rates(const double* c, double* out) const {
    if (kinetics == "schnakenberg") {
        const double a = param("a", 0.1);
        const double b = param("b", 0.9);
        const double g = param("gamma", 1.0);
        const double uuv = c[0] * c[0] * c[1];
        out[0] = g * (a - c[0] + uuv);
        out[1] = g * (b - uuv);
    } else if (kinetics == "gierer_meinhardt") {
        const double mu_a = param("mu_a", 1.0);
        const double mu_h = param("mu_h", 1.0);
        const double sigma_a = param("sigma_a", 0.0);
        const double g = param("gamma", 1.0);
        const double a = c[0];
        const double h = std::max(c[1], 1e-12);
        out[0] = g * (a * a / h - mu_a * a + sigma_a);
        out[1] = g * (a * a - mu_h * c[1]);
    } else if (kinetics == "ligand_receptor_turing") {
        const double rho_R = param("rho_R", 0.1);
        const double rho_L = param("rho_L", 0.9);
        const double delta_R = param("delta_R", 1.0);
        const double g = param("gamma", 1.0);
        const double rrl = c[0] * c[0] * c[1];
        out[0] = g * (rho_R - delta_R * c[0] + rrl);
        out[1] = g * (rho_L - rrl);
    } else {
        std::vector<double> in(c, c + n_species);
        std::vector<double> r = custom_rate(in);
        if (static_cast<int>(r.size()) != n_species)
            throw ComputeError("custom rate function returned " +
                               std::to_string(r.size()) + " rates for " +
                               std::to_string(n_species) + " species");
        std::copy(r.begin(), r.end(), out);
    }
}

ReactionModel schnakenberg(double a, double b, double gamma, double Du,
                           double Dv) {
    ReactionModel m;
    m.n_species = 2;
    m.D = {Du, Dv};
    m.kinetics = "schnakenberg";
    m.params = {{"a", a}, {"b", b}, {"gamma", gamma}};
    return m;
}

ReactionModel gierer_meinhardt(double mu_a, double mu_h, double sigma_a,
                               double gamma, double Da, double Dh) {
    ReactionModel m;
    m.n_species = 2;
    m.D = {Da, Dh};
    m.kinetics = "gierer_meinhardt";
    m.params = {{"mu_a", mu_a},
                {"mu_h", mu_h},
                {"sigma_a", sigma_a},
                {"gamma", gamma}};
    return m;
}

ReactionModel ligand_receptor_turing(double rho_R, double rho_L,
                                     double delta_R, double gamma, double DR,
                                     double DL) {
    ReactionModel m;
    m.n_species = 2;
    m.D = {DR, DL};
    m.kinetics = "ligand_receptor_turing";
    m.params = {{"rho_R", rho_R},
                {"rho_L", rho_L},
                {"delta_R", delta_R},
                {"gamma", gamma}};
    return m;
}

// ---------------------------------------------------------------------------
// BoundaryCondition

BoundaryCondition::Entry BoundaryCondition::dirichlet(
    const std::string& boundary, int species, double g) {
    Entry e;
    e.boundary = boundary;
    e.species = species;
    e.kind = "dirichlet";
    e.value = g;
    return e;
}

BoundaryCondition::Entry BoundaryCondition::neumann(const std::string& boundary,
                                                    int species, double q) {
    Entry e;
    e.boundary = boundary;
    e.species = species;
    e.kind = "neumann";
    e.flux = q;
    return e;
}

BoundaryCondition::Entry BoundaryCondition::robin(const std::string& boundary,
                                                  int species, double alpha,
                                                  double beta) {
    Entry e;
    e.boundary = boundary;
    e.species = species;
    e.kind = "robin";
    e.alpha = alpha;
    e.beta = beta;
    return e;
}

const BoundaryCondition::Entry* BoundaryCondition::find(
    const std::string& boundary, int species) const {
    for (const Entry& e : entries)
        if (e.boundary == boundary && e.species == species) return &e;
    return nullptr;
}

void BoundaryCondition::validate(const TriMesh& mesh, int n_species) const {
    std::set<std::pair<std::string, int>> seen;
    for (const Entry& e : entries) {
        if (mesh.boundary_tag_index(e.boundary) < 0)
            throw InputError("boundary condition references unknown boundary '" +
                             e.boundary + "'");
        if (e.species < 0 || e.species >= n_species)
            throw InputError("boundary condition on '" + e.boundary +
                             "' references species " +
                             std::to_string(e.species) + " of " +
                             std::to_string(n_species));
        if (e.kind != "dirichlet" && e.kind != "neumann" && e.kind != "robin")
            throw InputError("boundary condition on '" + e.boundary +
                             "' has unknown kind '" + e.kind + "'");
        if (e.kind == "robin" && (!std::isfinite(e.alpha) || e.alpha < 0))
            throw InputError("robin coefficient alpha on '" + e.boundary +
                             "' must be finite and >= 0");
        if (!std::isfinite(e.value) || !std::isfinite(e.flux) ||
            !std::isfinite(e.beta))
            throw InputError("boundary condition on '" + e.boundary +
                             "' has a non-finite value");
        if (!seen.insert({e.boundary, e.species}).second)
            throw InputError("duplicate boundary condition for '" + e.boundary +
                             "', species " + std::to_string(e.species));
    }
}

// ---------------------------------------------------------------------------
// FieldState

FieldState FieldState::uniform(std::shared_ptr<const TriMesh> mesh,
                               const std::vector<double>& values, double t) {
    if (!mesh) throw InputError("field state needs a mesh");
    FieldState st;
    st.mesh = std::move(mesh);
    st.n_species = static_cast<int>(values.size());
    st.t = t;
    const std::size_t nv = st.mesh->vertex_count();
    st.c.resize(nv * values.size());
    for (std::size_t s = 0; s < values.size(); ++s)
        std::fill(st.c.begin() + s * nv, st.c.begin() + (s + 1) * nv,
                  values[s]);
    return st;
}

double& FieldState::at(std::size_t v, int s) {
    return c[static_cast<std::size_t>(s) * mesh->vertex_count() + v];
}

double FieldState::at(std::size_t v, int s) const {
    return c[static_cast<std::size_t>(s) * mesh->vertex_count() + v];
}

void FieldState::validate() const {
    if (!mesh) throw InputError("field state has no mesh");
    if (n_species < 1) throw InputError("field state has no species");
    if (c.size() != mesh->vertex_count() * static_cast<std::size_t>(n_species))
        throw InputError("field state stores " + std::to_string(c.size()) +
                         " values for " + std::to_string(mesh->vertex_count()) +
                         " vertices x " + std::to_string(n_species) +
                         " species");
}

// ---------------------------------------------------------------------------
// Assembly

FemMatrices assemble(const TriMesh& mesh) {
    const int nv = static_cast<int>(mesh.vertex_count());
    std::vector<Triplet> kt, mt;
    kt.reserve(mesh.triangle_count() * 9);
    mt.reserve(mesh.triangle_count() * 9);

    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Point2& p0 = mesh.vertices[tri[0]];
        const Point2& p1 = mesh.vertices[tri[1]];
        const Point2& p2 = mesh.vertices[tri[2]];
        const double twice_area = (p1 - p0).cross(p2 - p0);
        if (!(twice_area > 0))
            throw InputError("triangle " + std::to_string(t) +
                             " is inverted or degenerate (signed area " +
                             fmt(twice_area / 2) + ")");
        const double area = twice_area / 2;
        // Gradient of the barycentric basis: for vertex i with opposite
        // edge (j, k), grad = (y_j - y_k, x_k - x_j) / (2 area).
        double b[3], cc[3];
        for (int i = 0; i < 3; ++i) {
            const Point2& pj = mesh.vertices[tri[(i + 1) % 3]];
            const Point2& pk = mesh.vertices[tri[(i + 2) % 3]];
            b[i] = pj.y - pk.y;
            cc[i] = pk.x - pj.x;
        }
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                kt.emplace_back(tri[i], tri[j],
                                (b[i] * b[j] + cc[i] * cc[j]) /
                                    (2 * twice_area));
                mt.emplace_back(tri[i], tri[j],
                                area / 12.0 * (i == j ? 2.0 : 1.0));
            }
        }
    }

    FemMatrices out;
    out.stiffness.resize(nv, nv);
    out.stiffness.setFromTriplets(kt.begin(), kt.end());
    out.mass.resize(nv, nv);
    out.mass.setFromTriplets(mt.begin(), mt.end());

    out.boundary_mass.resize(mesh.boundary_names.size());
    std::vector<std::vector<Triplet>> bt(mesh.boundary_names.size());
    for (std::size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
        const int a = mesh.boundary_edges[e][0];
        const int bbv = mesh.boundary_edges[e][1];
        const int tag = mesh.boundary_edge_tag[e];
        const double len = dist(mesh.vertices[a], mesh.vertices[bbv]);
        auto& tl = bt[tag];
        tl.emplace_back(a, a, len / 3.0);
        tl.emplace_back(bbv, bbv, len / 3.0);
        tl.emplace_back(a, bbv, len / 6.0);
        tl.emplace_back(bbv, a, len / 6.0);
    }
    for (std::size_t l = 0; l < bt.size(); ++l) {
        out.boundary_mass[l].resize(nv, nv);
        out.boundary_mass[l].setFromTriplets(bt[l].begin(), bt[l].end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Boundary-condition application

namespace detail {

SpeciesBC build_species_bc(const TriMesh& mesh, const FemMatrices& mats,
                           const BoundaryCondition& bc, int species) {
    const int nv = static_cast<int>(mesh.vertex_count());
    SpeciesBC out;
    out.is_dir.assign(nv, 0);
    out.dir_value.assign(nv, 0.0);
    out.robin.resize(nv, nv);
    out.flux_load = Eigen::VectorXd::Zero(nv);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(nv);

    for (std::size_t l = 0; l < mesh.boundary_names.size(); ++l) {
        const BoundaryCondition::Entry* e =
            bc.find(mesh.boundary_names[l], species);
        if (!e) continue; // default: zero flux
        if (e->kind == "dirichlet") {
            for (std::size_t be = 0; be < mesh.boundary_edges.size(); ++be) {
                if (mesh.boundary_edge_tag[be] != static_cast<int>(l)) continue;
                for (int v : mesh.boundary_edges[be]) {
                    if (!out.is_dir[v]) {
                        out.is_dir[v] = 1;
                        out.dir_value[v] = e->value;
                        out.has_dirichlet = true;
                    }
                }
            }
        } else if (e->kind == "neumann") {
            out.flux_load += e->flux * (mats.boundary_mass[l] * ones);
        } else { // robin: inward flux = beta - alpha * c
            out.robin = out.robin + SpMat(e->alpha * mats.boundary_mass[l]);
            out.flux_load += e->beta * (mats.boundary_mass[l] * ones);
            if (e->alpha > 0 && mats.boundary_mass[l].nonZeros() > 0)
                out.has_absorbing_robin = true;
        }
    }
    return out;
}

void eliminate_dirichlet(const SpMat& A, const SpeciesBC& sbc, SpMat* out,
                         Eigen::VectorXd* correction) {
    const int n = static_cast<int>(A.rows());
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(A.nonZeros()) + sbc.is_dir.size());
    *correction = Eigen::VectorXd::Zero(n);
    for (int col = 0; col < A.outerSize(); ++col) {
        for (SpMat::InnerIterator it(A, col); it; ++it) {
            const int row = static_cast<int>(it.row());
            if (sbc.is_dir[row]) continue;
            if (sbc.is_dir[col])
                (*correction)[row] += it.value() * sbc.dir_value[col];
            else
                trips.emplace_back(row, col, it.value());
        }
    }
    for (int v = 0; v < n; ++v)
        if (sbc.is_dir[v]) trips.emplace_back(v, v, 1.0);
    out->resize(n, n);
    out->setFromTriplets(trips.begin(), trips.end());
}

Eigen::VectorXd finish_rhs(Eigen::VectorXd rhs, const SpeciesBC& sbc,
                           const Eigen::VectorXd& correction) {
    rhs -= correction;
    for (int v = 0; v < rhs.size(); ++v)
        if (sbc.is_dir[v]) rhs[v] = sbc.dir_value[v];
    return rhs;
}

std::vector<double> nodal_rates(const ReactionModel& model,
                                const FieldState& state,
                                std::vector<double>* mean) {
    const std::size_t nv = state.mesh->vertex_count();
    const int ns = model.n_species;
    std::vector<double> rates(static_cast<std::size_t>(ns) * nv);
    std::vector<double> cv(ns), rv(ns);
    mean->assign(ns, 0.0);
    for (std::size_t v = 0; v < nv; ++v) {
        for (int s = 0; s < ns; ++s) cv[s] = state.c[s * nv + v];
        model.rates(cv.data(), rv.data());
        for (int s = 0; s < ns; ++s) {
            if (!std::isfinite(rv[s]))
                throw ComputeError("reaction rate for species " +
                                   std::to_string(s) +
                                   " is not finite at vertex " +
                                   std::to_string(v));
            rates[s * nv + v] = rv[s];
            (*mean)[s] += cv[s];
        }
    }
    for (int s = 0; s < ns; ++s) (*mean)[s] /= static_cast<double>(nv);
    return rates;
}

double reaction_scale_bound(const ReactionModel& model,
                            const std::vector<double>& at) {
    const int ns = model.n_species;
    std::vector<double> lo(at), hi(at), rlo(ns), rhi(ns);
    double max_row = 0;
    for (int j = 0; j < ns; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(at[j]));
        lo = at;
        hi = at;
        lo[j] -= h;
        hi[j] += h;
        model.rates(lo.data(), rlo.data());
        model.rates(hi.data(), rhi.data());
        for (int i = 0; i < ns; ++i) {
            const double d = std::abs(rhi[i] - rlo[i]) / (2 * h);
            if (std::isfinite(d)) max_row = std::max(max_row, d);
        }
    }
    return max_row;
}

} // namespace detail

using detail::build_species_bc;
using detail::eliminate_dirichlet;
using detail::finish_rhs;
using detail::SpeciesBC;

// ---------------------------------------------------------------------------
// Steady diffusion

FieldState solve_laplace(std::shared_ptr<const TriMesh> mesh,
                         const BoundaryCondition& bc) {
    if (!mesh) throw InputError("solve_laplace needs a mesh");
    bc.validate(*mesh, 1);
    const FemMatrices mats = assemble(*mesh);
    const SpeciesBC sbc = build_species_bc(*mesh, mats, bc, 0);
    if (!sbc.has_dirichlet && !sbc.has_absorbing_robin)
        throw InputError(
            "steady-state diffusion is singular without a Dirichlet or "
            "absorbing Robin boundary (pure-Neumann problem)");

    SpMat A = mats.stiffness + sbc.robin;
    SpMat reduced;
    Eigen::VectorXd correction;
    eliminate_dirichlet(A, sbc, &reduced, &correction);
    Eigen::VectorXd rhs = finish_rhs(sbc.flux_load, sbc, correction);

    Eigen::SimplicialLDLT<SpMat> solver;
    solver.compute(reduced);
    if (solver.info() != Eigen::Success)
        throw ComputeError("steady-state factorization failed");
    Eigen::VectorXd x = solver.solve(rhs);
    if (solver.info() != Eigen::Success)
        throw ComputeError("steady-state solve failed");
    const double resid = (reduced * x - rhs).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
    if (!(resid <= 1e-10 * scale))
        throw ComputeError("steady-state solve residual " + fmt(resid) +
                           " exceeds tolerance");

    FieldState st;
    st.mesh = std::move(mesh);
    st.n_species = 1;
    st.t = 0;
    st.c.assign(x.data(), x.data() + x.size());
    return st;
}

Eigen::MatrixXd harmonic_extension(const TriMesh& mesh,
                                   const std::vector<char>& fixed,
                                   const Eigen::MatrixXd& values) {
    const std::size_t nv = mesh.vertex_count();
    if (fixed.size() != nv ||
        values.rows() != static_cast<Eigen::Index>(nv))
        throw InputError("harmonic extension data must match the vertex count");
    if (std::count_if(fixed.begin(), fixed.end(),
                      [](char f) { return f != 0; }) == 0)
        throw InputError("harmonic extension needs at least one fixed vertex");

    const FemMatrices mats = assemble(mesh);
    Eigen::MatrixXd out(values.rows(), values.cols());
    Eigen::SimplicialLDLT<SpMat> solver;
    for (Eigen::Index col = 0; col < values.cols(); ++col) {
        SpeciesBC sbc;
        sbc.is_dir.assign(fixed.begin(), fixed.end());
        sbc.dir_value.assign(values.col(col).data(),
                             values.col(col).data() + nv);
        sbc.has_dirichlet = true;

        SpMat reduced;
        Eigen::VectorXd correction;
        eliminate_dirichlet(mats.stiffness, sbc, &reduced, &correction);
        Eigen::VectorXd rhs =
            finish_rhs(Eigen::VectorXd::Zero(nv), sbc, correction);

        if (col == 0) {
            solver.compute(reduced);
            if (solver.info() != Eigen::Success)
                throw ComputeError("harmonic extension factorization failed");
        }
        Eigen::VectorXd x = solver.solve(rhs);
        if (solver.info() != Eigen::Success)
            throw ComputeError("harmonic extension solve failed");
        out.col(col) = x;
    }
    return out;
}

Eigen::VectorXd harmonic_extension(const TriMesh& mesh,
                                   const std::vector<char>& fixed,
                                   const Eigen::VectorXd& values) {
    return harmonic_extension(mesh, fixed, Eigen::MatrixXd(values)).col(0);
}

// ---------------------------------------------------------------------------
// Reaction-diffusion stepping

struct RDStepper::Impl {
    struct PerSpecies {
        Eigen::SimplicialLDLT<SpMat> solver;
        SpMat reduced;
        SpeciesBC sbc;
        Eigen::VectorXd correction;
        Eigen::VectorXd flux_dt;
    };

    std::shared_ptr<const TriMesh> mesh;
    ReactionModel model;
    double dt = 0;
    std::vector<std::string>* warnings = nullptr;
    SpMat mass;
    std::vector<std::unique_ptr<PerSpecies>> species;
    bool warned_stiff = false;

    void check_reaction_scale(const std::vector<double>& mean) {
        if (warned_stiff) return;
        const double max_row = detail::reaction_scale_bound(model, mean);
        if (dt * max_row > 1.0) {
            warned_stiff = true;
            warn(warnings,
                 "time step " + fmt(dt) +
                     " exceeds the reaction stability budget (dt * |dR/dc| = " +
                     fmt(dt * max_row) + " > 1); expect reduced accuracy");
        }
    }
};

RDStepper::RDStepper(std::shared_ptr<const TriMesh> mesh,
                     const ReactionModel& model, const BoundaryCondition& bc,
                     double dt, std::vector<std::string>* warnings)
    : impl_(std::make_unique<Impl>()) {
    if (!mesh) throw InputError("reaction-diffusion stepper needs a mesh");
    if (!(dt > 0) || !std::isfinite(dt))
        throw InputError("time step must be finite and > 0");
    model.validate();
    bc.validate(*mesh, model.n_species);

    impl_->mesh = std::move(mesh);
    impl_->model = model;
    impl_->dt = dt;
    impl_->warnings = warnings;

    const FemMatrices mats = assemble(*impl_->mesh);
    impl_->mass = mats.mass;
    for (int s = 0; s < model.n_species; ++s) {
        auto ps = std::make_unique<Impl::PerSpecies>();
        ps->sbc = build_species_bc(*impl_->mesh, mats, bc, s);
        SpMat A = impl_->mass + SpMat(dt * model.D[s] * mats.stiffness) +
                  SpMat(dt * ps->sbc.robin);
        eliminate_dirichlet(A, ps->sbc, &ps->reduced, &ps->correction);
        ps->flux_dt = dt * ps->sbc.flux_load;
        ps->solver.compute(ps->reduced);
        if (ps->solver.info() != Eigen::Success)
            throw ComputeError("factorization failed for species " +
                               std::to_string(s));
        impl_->species.push_back(std::move(ps));
    }
}

RDStepper::~RDStepper() = default;
RDStepper::RDStepper(RDStepper&&) noexcept = default;
RDStepper& RDStepper::operator=(RDStepper&&) noexcept = default;

double RDStepper::dt() const { return impl_->dt; }

FieldState RDStepper::step(const FieldState& state) {
    Impl& im = *impl_;
    state.validate();
    if (state.mesh.get() != im.mesh.get())
        throw InputError("stepper was built for a different mesh");
    if (state.n_species != im.model.n_species)
        throw InputError("field state has " + std::to_string(state.n_species) +
                         " species, model has " +
                         std::to_string(im.model.n_species));

    const std::size_t nv = im.mesh->vertex_count();
    const int ns = im.model.n_species;

    // Nodal reaction rates, plus the mean concentration for the
    // stiffness warning.
    std::vector<double> mean;
    const std::vector<double> rates =
        detail::nodal_rates(im.model, state, &mean);
    im.check_reaction_scale(mean);

    FieldState out;
    out.mesh = state.mesh;
    out.n_species = ns;
    out.t = state.t + im.dt;
    out.c.resize(state.c.size());

    for (int s = 0; s < ns; ++s) {
        auto& ps = *im.species[s];
        Eigen::Map<const Eigen::VectorXd> cs(state.c.data() + s * nv, nv);
        Eigen::Map<const Eigen::VectorXd> rs(rates.data() + s * nv, nv);
        Eigen::VectorXd rhs = im.mass * (cs + im.dt * rs).eval() + ps.flux_dt;
        rhs = finish_rhs(std::move(rhs), ps.sbc, ps.correction);
        Eigen::VectorXd x = ps.solver.solve(rhs);
        if (ps.solver.info() != Eigen::Success)
            throw ComputeError("time step solve failed for species " +
                               std::to_string(s));
        std::copy(x.data(), x.data() + nv, out.c.begin() + s * nv);
    }
    return out;
}

FieldState step_rd(const FieldState& state, const ReactionModel& model,
                   const BoundaryCondition& bc, double dt,
                   std::vector<std::string>* warnings) {
    state.validate();
    RDStepper stepper(state.mesh, model, bc, dt, warnings);
    return stepper.step(state);
}

} // namespace fem
} // namespace morpho
