#ifndef MORPHO_MESH_HPP
#define MORPHO_MESH_HPP

#include <array>
#include <string>
#include <vector>

#include "morpho/geometry.hpp"

namespace morpho {
namespace mesh {

using geometry::Curve;
using geometry::Point2;

/// Conforming triangle mesh. Triangles are counter-clockwise index triples.
/// Boundary edges are the constrained input polyline pieces, tagged by the
/// label of the curve they came from; vertex tags mirror the edge tags.
struct TriMesh {
    std::vector<Point2> vertices;
    std::vector<std::array<int, 3>> triangles;

    std::vector<std::string> boundary_names;
    std::vector<std::array<int, 2>> boundary_edges;
    std::vector<int> boundary_edge_tag;  // index into boundary_names
    std::vector<int> vertex_boundary_tag; // -1 interior, else boundary_names idx

    std::vector<std::string> region_names;
    std::vector<int> triangle_region_tag; // -1 untagged, else region_names idx

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t triangle_count() const { return triangles.size(); }

    double triangle_area(std::size_t t) const;
    Point2 triangle_centroid(std::size_t t) const;

    /// Sorted list of unique undirected edges.
    std::vector<std::array<int, 2>> unique_edges() const;

    /// Index of the triangle containing p (ties resolved toward the lowest
    /// index), -1 if outside the mesh.
    int find_triangle(const Point2& p) const;

    int boundary_tag_index(const std::string& name) const; // -1 if absent
    int region_index(const std::string& name) const;       // -1 if absent

    /// Throws InputError on inverted triangles, non-conforming adjacency,
    /// out-of-range indices, or boundary edges missing from the mesh.
    void validate() const;
};

/// Labeled point marking which connected region of the triangulation gets
/// which region name.
struct RegionSeed {
    Point2 point;
    std::string label;
};

/// Constrained Delaunay triangulation of the area inside `outer`, refined
/// until every kept triangle has min angle >= 20 degrees and max edge <=
/// target_h. Inner curves: clockwise closed = hole; counter-clockwise closed
/// or open = internal constraint/interface. Region tags come from seeds.
/// Curves must not intersect each other.
TriMesh triangulate(const Curve& outer, const std::vector<Curve>& inner,
                    double target_h,
                    const std::vector<RegionSeed>& regions = {},
                    std::vector<std::string>* warnings = nullptr);

struct MeshQualityReport {
    double min_edge_ratio = 1.0; // min over triangles of shortest/longest side
    double max_edge_length = 0;
    double min_angle = 180.0; // degrees
    int n_inverted = 0;
    bool pass = false;
};

/// Quality thresholds: side ratio >= 0.1, no inverted elements, max edge <=
/// gradient_length / gradient_factor.
MeshQualityReport quality_report(const TriMesh& mesh, double gradient_length,
                                 double gradient_factor = 5.0);

/// Uniform midpoint subdivision: every triangle splits into four, boundary
/// edges split in two with tags carried along.
TriMesh refine(const TriMesh& mesh);

/// Edge-collapse decimation toward vertex_count/factor vertices. Interior
/// vertices collapse into neighbors; boundary vertices only slide along
/// their own boundary chain, and only if the removed vertex stays within
/// max_boundary_deviation of the new edge (0 = one tenth of the mean edge
/// length). Collapses that would invert or fold triangles are rejected;
/// result is best effort if no legal collapse remains.
TriMesh coarsen(const TriMesh& mesh, double factor,
                double max_boundary_deviation = 0);

/// Gmsh MSH 2.2 ASCII. Boundary edges are written as 2-node lines and
/// triangles as 3-node elements; physical names carry boundary/region labels.
void save_msh(const std::string& path, const TriMesh& mesh);
TriMesh load_msh(const std::string& path);

} // namespace mesh
} // namespace morpho

#endif
