#ifndef MORPHO_MAPPING_HPP
#define MORPHO_MAPPING_HPP

#include <string>
#include <utility>
#include <vector>

#include "morpho/geometry.hpp"

namespace morpho {
namespace mapping {

using geometry::Curve;
using geometry::Point2;
using geometry::Vec2;

/// Sampled correspondence between a stage-t boundary curve and the matching
/// stage-(t + dt) curve: for every source point on the first curve, the
/// vector (um) to its image on the second. velocity(i) = vectors[i] / dt.
struct DisplacementField {
    std::vector<Point2> sources;
    std::vector<Vec2> vectors;
    double t = 0;
    double dt = 1;
    std::string method; // minimal_distance | uniform | normal | reverse_normal
                        // | diffusion | reverse_diffusion | tps

    Vec2 velocity(std::size_t i) const { return vectors[i] / dt; }
    Point2 endpoint(std::size_t i) const { return sources[i] + vectors[i]; }
    void validate() const;
};

/// Three complementary defect measures of a displacement field.
struct FieldQuality {
    int crossing_count = 0;      // pairwise crossing displacement segments
    double unmapped_fraction = 0; // target arc length far from any endpoint
    double max_stretch = 0;       // max mapped spacing / source spacing
};

/// Hand-picked corresponding point pairs between two stages.
struct LandmarkSet {
    std::vector<std::pair<Point2, Point2>> pairs;
    void validate() const; // >= 3 distinct, non-collinear sources
};

/// Maps every c1 vertex to its nearest point on the c2 polyline.
DisplacementField map_minimal_distance(const Curve& c1, const Curve& c2);

/// Resamples both curves to n equidistant points and pairs them index-wise,
/// conserving order. Closed curves first choose the cyclic offset with the
/// least total squared displacement. Mixing open and closed inputs fails.
DisplacementField map_uniform(const Curve& c1, const Curve& c2, std::size_t n);

/// Casts the outward vertex normal (angle-bisector of adjacent segment
/// normals) from every c1 vertex and maps to the nearest intersection with
/// c2, preferring the forward direction. Samples whose ray misses c2 are
/// dropped; more than 20% missing is an error suggesting diffusion mapping.
/// reverse=true casts from c2 instead and inverts the pairs, so the result
/// still maps c1 to c2.
DisplacementField map_normal(const Curve& c1, const Curve& c2,
                             bool reverse = false);

/// Solves steady-state diffusion in the gap between the nested curves
/// (value 1 on the start curve, 0 on the other) and traces n_stream
/// streamlines down the gradient; vectors connect streamline start and end.
/// reverse=true starts from c2 and inverts. target_h 0 picks a mesh size
/// from the curve lengths.
DisplacementField map_diffusion(const Curve& c1, const Curve& c2,
                                bool reverse = false,
                                std::size_t n_stream = 64,
                                double target_h = 0);

/// Thin-plate-spline interpolation of the landmark pairs (kernel
/// r^2 log r^2 plus an affine part), evaluated at the queries; returns the
/// displacement image - query per query. ridge > 0 relaxes exact
/// interpolation toward a smoother map.
std::vector<Vec2> map_tps(const LandmarkSet& landmarks,
                          const std::vector<Point2>& queries,
                          double ridge = 0);

/// Measures a field against the target curve: exact pairwise crossing count,
/// the fraction of c2 arc length farther than eps from every mapped
/// endpoint, and the worst adjacent-spacing stretch.
FieldQuality field_quality(const DisplacementField& field, const Curve& c2,
                           double eps);

struct MappingConfig {
    std::string method = "auto"; // auto | minimal_distance | uniform | normal
                                 // | reverse_normal | diffusion
                                 // | reverse_diffusion
    bool prescale = false;
    std::size_t samples = 128;  // resampling density for both curves
    std::size_t n_stream = 64;  // diffusion streamline count
    double target_h = 0;        // diffusion mesh size, 0 = automatic
    double eps = 0;             // coverage radius, 0 = 0.75 * spacing
    double t = 0;
    double dt = 1;
};

struct MappingResult {
    DisplacementField field;
    FieldQuality quality;
};

/// Full pipeline: optional similarity prescale of c1, equidistant
/// resampling, direction normalization, then the configured method.
/// method "auto" uses uniform mapping for open curves and normal mapping
/// for closed ones, escalating to reverse-normal and then diffusion while
/// the field has crossings. Sources are reported on the original c1.
MappingResult run_mapping_pipeline(const Curve& c1, const Curve& c2,
                                   const MappingConfig& config = {});

} // namespace mapping
} // namespace morpho

#endif
