#ifndef MORPHO_FEM_INTERNAL_HPP
#define MORPHO_FEM_INTERNAL_HPP

// Boundary-condition machinery shared between the static stepper, the
// steady solver, and the moving-mesh stepper. Not part of the public API.

#include <vector>

#include "morpho/fem.hpp"

namespace morpho {
namespace fem {
namespace detail {

/// Everything one species needs beyond the raw matrices: Dirichlet node
/// set, Robin stiffness contribution, and the constant inward-flux load.
struct SpeciesBC {
    std::vector<char> is_dir;
    std::vector<double> dir_value;
    SpMat robin;
    Eigen::VectorXd flux_load;
    bool has_absorbing_robin = false;
    bool has_dirichlet = false;
};

SpeciesBC build_species_bc(const mesh::TriMesh& mesh, const FemMatrices& mats,
                           const BoundaryCondition& bc, int species);

/// Replaces Dirichlet rows/columns of A by the identity and returns the
/// right-hand-side correction sum_{j dirichlet} A(i, j) g_j for free rows i.
void eliminate_dirichlet(const SpMat& A, const SpeciesBC& sbc, SpMat* out,
                         Eigen::VectorXd* correction);

Eigen::VectorXd finish_rhs(Eigen::VectorXd rhs, const SpeciesBC& sbc,
                           const Eigen::VectorXd& correction);

/// Species-major nodal reaction rates for the whole field, rejecting
/// non-finite values; also reports the per-species mean concentration.
std::vector<double> nodal_rates(const ReactionModel& model,
                                const FieldState& state,
                                std::vector<double>* mean);

/// Numeric bound on |dR/dc| (max row sum of the Jacobian taken entrywise)
/// at the given concentration, for the explicit-reaction stability warning.
double reaction_scale_bound(const ReactionModel& model,
                            const std::vector<double>& at);

} // namespace detail
} // namespace fem
} // namespace morpho

#endif
