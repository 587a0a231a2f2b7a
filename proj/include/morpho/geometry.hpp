#ifndef MORPHO_GEOMETRY_HPP
#define MORPHO_GEOMETRY_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "morpho/error.hpp"

namespace morpho {
namespace geometry {

/// Planar point/vector, coordinates in micrometers.
struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }

    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm2() const { return x * x + y * y; }
    double norm() const { return std::sqrt(norm2()); }
    Vec2 normalized() const {
        double n = norm();
        return n > 0 ? Vec2{x / n, y / n} : Vec2{0, 0};
    }
    /// Rotate by +90 degrees.
    Vec2 perp() const { return {-y, x}; }
    bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }
inline double dist(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

using Point2 = Vec2;

/// Ordered planar polyline, open or closed.
///
/// Closed curves are stored without repeating the first point; the closing
/// segment points.back() -> points.front() is implicit.
struct Curve {
    std::vector<Point2> points;
    bool closed = false;
    std::string label;

    Curve() = default;
    Curve(std::vector<Point2> pts, bool closed_, std::string label_ = {})
        : points(std::move(pts)), closed(closed_), label(std::move(label_)) {}

    std::size_t size() const { return points.size(); }
    /// Number of polyline segments (n for closed, n-1 for open).
    std::size_t segment_count() const {
        return closed ? points.size() : (points.empty() ? 0 : points.size() - 1);
    }
    Point2 segment_start(std::size_t i) const { return points[i]; }
    Point2 segment_end(std::size_t i) const {
        return points[(i + 1) % points.size()];
    }

    double length() const;
    /// Cumulative arc length table, size segment_count()+1, front()==0.
    std::vector<double> cumulative_lengths() const;
    /// Point at arc-length position s in [0, length()].
    Point2 point_at_arclength(double s) const;

    Curve reversed() const;

    /// Throws InputError on violated invariants: point count, consecutive
    /// duplicates (1e-9 um), closed self-intersection, non-finite coords.
    void validate() const;
};

/// Uniform scale about a reference point plus translation.
struct CurveTransform {
    double scale = 1.0;
    Vec2 translation{0, 0};
    Point2 reference{0, 0};

    Point2 apply(const Point2& p) const {
        return reference + (p - reference) * scale + translation;
    }
    Point2 apply_inverse(const Point2& p) const {
        return reference + (p - reference - translation) / scale;
    }
    Curve apply(const Curve& c) const;
    Curve apply_inverse(const Curve& c) const;
};

/// Shoelace area of a closed curve; positive iff counter-clockwise.
/// Throws InputError for open curves.
double signed_area(const Curve& curve);

/// Arc-length-weighted centroid of the polyline.
Point2 polyline_centroid(const Curve& curve);

/// Arc-length-weighted RMS distance from the centroid.
double rms_radius(const Curve& curve);

/// Resample to exactly n points with identical Euclidean distance between
/// consecutive points (equal chords, solved by bisection on the chord
/// length). Closed: n equal chords around the loop, starting at points[0].
/// Open: endpoints preserved exactly, n-1 equal chords.
Curve resample_equidistant(const Curve& curve, std::size_t n);

/// Make closed curves counter-clockwise; reverse an open c2 iff that lowers
/// the sum of endpoint-to-endpoint distances to c1.
std::pair<Curve, Curve> normalize_direction(const Curve& c1, const Curve& c2);

/// Scale c1 about its centroid so that its RMS radius (closed) or total
/// length (open) matches c2's. Returns the scaled curve and the transform.
std::pair<Curve, CurveTransform> similarity_prescale(const Curve& c1,
                                                     const Curve& c2);

/// All intersection points between the two polylines plus b1 partitioned at
/// those points into open segments. b2 is not modified. No intersections:
/// b1 is returned unsplit with an empty point list.
struct SplitResult {
    std::vector<Curve> segments;
    std::vector<Point2> intersections;
};
SplitResult split_at_intersection(const Curve& b1, const Curve& b2);

/// Closest point on the polyline to p; returns the point, the arc-length
/// position, and the squared distance.
struct ClosestPoint {
    Point2 point;
    double arclength = 0;
    double dist2 = 0;
};
ClosestPoint closest_point(const Curve& curve, const Point2& p);

/// Segment intersection with exact-arithmetic orientation fallback on ties.
/// Returns true and the intersection point if [a0,a1] and [b0,b1] meet.
/// Collinear overlap reports the midpoint of the shared part. Tangential
/// touches count as intersections.
bool segment_intersection(const Point2& a0, const Point2& a1,
                          const Point2& b0, const Point2& b1, Point2& out);

/// True if the open interiors of the two segments cross (shared endpoints
/// and endpoint touches excluded).
bool segments_cross(const Point2& a0, const Point2& a1,
                    const Point2& b0, const Point2& b1);

/// Winding-number point-in-polygon test on the closed curve.
bool point_in_polygon(const Curve& polygon, const Point2& p);

/// Sign of the orientation determinant (b-a) x (c-a): +1 left turn,
/// -1 right turn, 0 collinear. Exact for ties.
int orient2d_sign(const Point2& a, const Point2& b, const Point2& c);

/// Sign of the incircle determinant: +1 if d is strictly inside the circle
/// through a,b,c (counter-clockwise), -1 outside, 0 cocircular. Exact for
/// ties.
int incircle_sign(const Point2& a, const Point2& b, const Point2& c,
                  const Point2& d);

} // namespace geometry
} // namespace morpho

#endif
