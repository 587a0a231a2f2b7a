#ifndef MORPHO_DEFORM_HPP
#define MORPHO_DEFORM_HPP

#include "morpho/mapping.hpp"
#include "morpho/mesh.hpp"

namespace morpho {
namespace mesh {

/// Moves the mesh by a boundary displacement field: every boundary vertex
/// must match a field source (nearest within 1e-6) and is moved by
/// s * vector; interior vertices follow the discrete harmonic extension of
/// the boundary motion. Connectivity and tags are unchanged. s = 0 returns
/// the input exactly. Throws ComputeError if the motion inverts any
/// triangle (remesh, lower s, or coarsen the field).
TriMesh deform(const TriMesh& mesh, const mapping::DisplacementField& field,
               double s);

} // namespace mesh
} // namespace morpho

#endif
