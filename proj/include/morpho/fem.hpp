#ifndef MORPHO_FEM_HPP
#define MORPHO_FEM_HPP

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "morpho/mesh.hpp"

namespace morpho {
namespace fem {

using mesh::TriMesh;
using SpMat = Eigen::SparseMatrix<double>;

/// Reaction-diffusion model: per-species diffusion coefficients (um^2/s)
/// plus reaction rates. Built-in kinetics are selected by tag and read their
/// rate constants from `params`; "custom" calls `custom_rate`.
struct ReactionModel {
    int n_species = 0;
    std::vector<double> D;
    std::string kinetics = "custom";
    std::map<std::string, double> params;
    std::function<std::vector<double>(const std::vector<double>&)> custom_rate;

    /// Reaction rates for one concentration vector (length n_species).
    void rates(const double* c, double* out) const;
    double param(const std::string& name, double fallback) const;
    void validate() const;
};

/// R_u = gamma (a - u + u^2 v), R_v = gamma (b - u^2 v).
/// Homogeneous steady state: u* = a + b, v* = b / (a + b)^2.
ReactionModel schnakenberg(double a, double b, double gamma, double Du,
                           double Dv);

/// Activator-inhibitor: R_a = gamma (a^2/h - mu_a a + sigma_a),
/// R_h = gamma (a^2 - mu_h h).
ReactionModel gierer_meinhardt(double mu_a, double mu_h, double sigma_a,
                               double gamma, double Da, double Dh);

/// Receptor-ligand coupling with R^2 L activation:
/// R_R = gamma (rho_R - delta_R R + R^2 L), R_L = gamma (rho_L - R^2 L).
ReactionModel ligand_receptor_turing(double rho_R, double rho_L,
                                     double delta_R, double gamma, double DR,
                                     double DL);

/// Boundary conditions per (boundary label, species). Anything not covered
/// defaults to zero flux. Flux values count into the domain: positive adds
/// material. Robin entries impose alpha * c + flux_out = beta, i.e. the
/// inward flux is beta - alpha * c.
struct BoundaryCondition {
    struct Entry {
        std::string boundary;
        int species = 0;
        std::string kind; // dirichlet | neumann | robin
        double value = 0; // dirichlet concentration
        double flux = 0;  // neumann inward flux (concentration * um / s)
        double alpha = 0; // robin
        double beta = 0;  // robin
    };
    std::vector<Entry> entries;

    static Entry dirichlet(const std::string& boundary, int species, double g);
    static Entry neumann(const std::string& boundary, int species, double q);
    static Entry robin(const std::string& boundary, int species, double alpha,
                       double beta);

    const Entry* find(const std::string& boundary, int species) const;
    void validate(const TriMesh& mesh, int n_species) const;
};

/// Concentrations on a mesh at one instant. Storage is species-major:
/// c[s * vertex_count + v].
struct FieldState {
    std::shared_ptr<const TriMesh> mesh;
    int n_species = 0;
    std::vector<double> c;
    double t = 0;

    static FieldState uniform(std::shared_ptr<const TriMesh> mesh,
                              const std::vector<double>& values, double t = 0);
    double& at(std::size_t v, int s);
    double at(std::size_t v, int s) const;
    void validate() const;
};

/// P1 stiffness and mass matrices plus one boundary mass matrix per
/// boundary label (index-aligned with mesh.boundary_names).
struct FemMatrices {
    SpMat stiffness;
    SpMat mass;
    std::vector<SpMat> boundary_mass;
};

/// Assembles K (symmetric, K*1 = 0), M (symmetric positive definite,
/// 1^T M 1 = domain area), and per-label boundary mass matrices.
/// Throws InputError on inverted triangles.
FemMatrices assemble(const TriMesh& mesh);

/// Steady diffusion (Laplace) for a single species with the species-0
/// boundary entries. Needs at least one Dirichlet or absorbing Robin entry;
/// pure-Neumann systems are singular and rejected.
FieldState solve_laplace(std::shared_ptr<const TriMesh> mesh,
                         const BoundaryCondition& bc);

/// Discrete harmonic interpolation: vertices with fixed[v] != 0 are pinned
/// to values[v]; every other vertex gets the P1 Laplace solution. Needs at
/// least one pinned vertex. The matrix overload treats each column as an
/// independent right-hand side sharing one factorization.
Eigen::VectorXd harmonic_extension(const TriMesh& mesh,
                                   const std::vector<char>& fixed,
                                   const Eigen::VectorXd& values);
Eigen::MatrixXd harmonic_extension(const TriMesh& mesh,
                                   const std::vector<char>& fixed,
                                   const Eigen::MatrixXd& values);

/// Repeated IMEX stepping with cached factorizations: diffusion implicit
/// (backward Euler), reaction explicit,
///   (M + dt D_i (K + alpha B)) c_i_new = M (c_i + dt R_i(c)) + dt flux.
class RDStepper {
public:
    RDStepper(std::shared_ptr<const TriMesh> mesh, const ReactionModel& model,
              const BoundaryCondition& bc, double dt,
              std::vector<std::string>* warnings = nullptr);
    ~RDStepper();
    RDStepper(RDStepper&&) noexcept;
    RDStepper& operator=(RDStepper&&) noexcept;

    /// One step of length dt; checks the reaction for NaN and logs a
    /// warning (once) if dt * |dR/dc| exceeds 1 at the field average.
    FieldState step(const FieldState& state);

    double dt() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// One-shot convenience wrapper around RDStepper.
FieldState step_rd(const FieldState& state, const ReactionModel& model,
                   const BoundaryCondition& bc, double dt,
                   std::vector<std::string>* warnings = nullptr);

} // namespace fem
} // namespace morpho

#endif
