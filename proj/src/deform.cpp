#include "morpho/deform.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "morpho/error.hpp"
#include "morpho/fem.hpp"

namespace morpho {
namespace mesh {

using geometry::Point2;
using geometry::Vec2;
using mapping::DisplacementField;

TriMesh deform(const TriMesh& mesh, const DisplacementField& field,
               double s) {
    mesh.validate();
    field.validate();
    if (!(s >= 0.0 && s <= 1.0))
        throw InputError("deform step fraction must lie in [0, 1], got " +
                         std::to_string(s));
    if (s == 0.0) return mesh;

    const std::size_t nv = mesh.vertex_count();
    constexpr double match_tol2 = 1e-6 * 1e-6;

    // Pin every boundary vertex to s times its matching sample's vector.
    std::vector<char> fixed(nv, 0);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(nv, 2);
    for (std::size_t v = 0; v < nv; ++v) {
        if (mesh.vertex_boundary_tag[v] < 0) continue;
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < field.sources.size(); ++i) {
            const double d2 = (field.sources[i] - mesh.vertices[v]).norm2();
            if (d2 < best) {
                best = d2;
                best_i = i;
            }
        }
        if (!(best <= match_tol2))
            throw InputError(
                "boundary vertex " + std::to_string(v) +
                " has no displacement sample within 1e-6 (nearest is " +
                std::to_string(std::sqrt(best)) +
                " away); sample the field at the mesh boundary vertices");
        fixed[v] = 1;
        d(static_cast<Eigen::Index>(v), 0) = s * field.vectors[best_i].x;
        d(static_cast<Eigen::Index>(v), 1) = s * field.vectors[best_i].y;
    }

    const Eigen::MatrixXd h = fem::harmonic_extension(mesh, fixed, d);

    TriMesh out = mesh;
    for (std::size_t v = 0; v < nv; ++v) {
        out.vertices[v].x += h(static_cast<Eigen::Index>(v), 0);
        out.vertices[v].y += h(static_cast<Eigen::Index>(v), 1);
    }

    int n_inverted = 0;
    for (std::size_t t = 0; t < out.triangle_count(); ++t) {
        const auto& tri = out.triangles[t];
        const double twice_area =
            (out.vertices[tri[1]] - out.vertices[tri[0]])
                .cross(out.vertices[tri[2]] - out.vertices[tri[0]]);
        if (!(twice_area > 0)) ++n_inverted;
    }
    if (n_inverted > 0)
        throw ComputeError(
            "deformation inverted " + std::to_string(n_inverted) + " of " +
            std::to_string(out.triangle_count()) +
            " triangles; remesh the domain, use a smaller step fraction s, "
            "or a coarser displacement field");
    return out;
}

} // namespace mesh
} // namespace morpho
