#include "morpho/mapping.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <unordered_map>

#include <Eigen/Dense>

#include "morpho/error.hpp"
#include "morpho/fem.hpp"
#include "morpho/mesh.hpp"

namespace morpho {
namespace mapping {

namespace {

using geometry::ClosestPoint;
using geometry::closest_point;
using geometry::orient2d_sign;
using geometry::point_in_polygon;
using geometry::resample_equidistant;
using geometry::signed_area;
using mesh::TriMesh;

constexpr double kEps = 1e-12;

double curve_scale(const Curve& c) {
    double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (const Point2& p : c.points) {
        lo_x = std::min(lo_x, p.x);
        hi_x = std::max(hi_x, p.x);
        lo_y = std::min(lo_y, p.y);
        hi_y = std::max(hi_y, p.y);
    }
    return std::max({hi_x - lo_x, hi_y - lo_y, 1e-9});
}

} // namespace

// ---------------------------------------------------------------------------
// Types

void DisplacementField::validate() const {
    if (sources.size() != vectors.size())
        throw InputError("displacement field has " +
                         std::to_string(sources.size()) + " sources but " +
                         std::to_string(vectors.size()) + " vectors");
    if (sources.size() < 2)
        throw InputError("displacement field needs at least 2 samples");
    for (std::size_t i = 0; i < sources.size(); ++i)
        if (!sources[i].finite() || !vectors[i].finite())
            throw InputError("displacement field sample " + std::to_string(i) +
                             " is not finite");
    if (!(dt > 0) || !std::isfinite(dt))
        throw InputError("displacement field time increment must be positive");
}

void LandmarkSet::validate() const {
    if (pairs.size() < 3)
        throw InputError("landmark set needs at least 3 pairs, got " +
                         std::to_string(pairs.size()));
    double scale = 1e-9;
    for (const auto& pr : pairs) {
        if (!pr.first.finite() || !pr.second.finite())
            throw InputError("landmark coordinates must be finite");
        scale = std::max({scale, std::abs(pr.first.x), std::abs(pr.first.y)});
    }
    for (std::size_t i = 0; i < pairs.size(); ++i)
        for (std::size_t j = i + 1; j < pairs.size(); ++j)
            if (dist(pairs[i].first, pairs[j].first) < 1e-9 * scale)
                throw InputError("landmark sources " + std::to_string(i) +
                                 " and " + std::to_string(j) + " coincide");
    // Non-collinearity: some triple must span a non-degenerate triangle.
    const Point2 a = pairs[0].first;
    const Point2 b = pairs[1].first;
    const double ab = dist(a, b);
    for (std::size_t k = 2; k < pairs.size(); ++k) {
        const double h = std::abs((b - a).cross(pairs[k].first - a)) / ab;
        if (h > 1e-9 * scale) return;
    }
    throw InputError("landmark sources are collinear");
}

// ---------------------------------------------------------------------------
// Minimal-distance mapping

DisplacementField map_minimal_distance(const Curve& c1, const Curve& c2) {
    c1.validate();
    c2.validate();
    DisplacementField f;
    f.method = "minimal_distance";
    f.sources = c1.points;
    f.vectors.reserve(c1.size());
    for (const Point2& p : c1.points)
        f.vectors.push_back(closest_point(c2, p).point - p);
    return f;
}

// ---------------------------------------------------------------------------
// Uniform (order-conserving) mapping

DisplacementField map_uniform(const Curve& c1, const Curve& c2,
                              std::size_t n) {
    c1.validate();
    c2.validate();
    if (c1.closed != c2.closed)
        throw InputError(
            "uniform mapping needs both curves open or both closed");
    if (n < 2) throw InputError("uniform mapping needs at least 2 samples");
    const Curve r1 = resample_equidistant(c1, n);
    const Curve r2 = resample_equidistant(c2, n);

    std::size_t offset = 0;
    if (c1.closed) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k) {
            double total = 0;
            for (std::size_t i = 0; i < n; ++i)
                total += (r2.points[(i + k) % n] - r1.points[i]).norm2();
            if (total < best) {
                best = total;
                offset = k;
            }
        }
    }

    DisplacementField f;
    f.method = "uniform";
    f.sources = r1.points;
    f.vectors.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        f.vectors.push_back(r2.points[(i + offset) % n] - r1.points[i]);
    return f;
}

// ---------------------------------------------------------------------------
// Normal mapping

namespace {

/// Outward vertex normals: angle-bisector average of the adjacent segment
/// normals. For counter-clockwise closed curves the interior lies left of
/// travel, so the outward segment normal is the direction rotated -90.
std::vector<Vec2> vertex_normals(const Curve& c) {
    const std::size_t n = c.size();
    std::vector<Vec2> seg(c.segment_count());
    for (std::size_t s = 0; s < c.segment_count(); ++s) {
        const Vec2 d = (c.segment_end(s) - c.segment_start(s)).normalized();
        seg[s] = {d.y, -d.x};
    }
    std::vector<Vec2> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 sum{0, 0};
        if (c.closed) {
            const std::size_t prev = (i + n - 1) % n;
            sum = seg[prev] + seg[i % seg.size()];
        } else {
            if (i > 0) sum += seg[i - 1];
            if (i < seg.size()) sum += seg[i];
        }
        if (sum.norm() < 1e-9 && !seg.empty())
            sum = seg[std::min(i, seg.size() - 1)]; // hairpin: pick one side
        out[i] = sum.normalized();
    }
    return out;
}

/// Nearest intersection of the ray p + s * dir with the polyline, searching
/// both directions but preferring s > 0. Returns false if the ray misses.
bool ray_hit(const Point2& p, const Vec2& dir, const Curve& target,
             double* s_out) {
    const double zero_tol = 1e-9 * std::max(target.length(), kEps);
    double best_pos = std::numeric_limits<double>::infinity();
    double best_neg = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < target.segment_count(); ++s) {
        const Point2 a = target.segment_start(s);
        const Point2 b = target.segment_end(s);
        const Vec2 e = b - a;
        const double denom = dir.cross(e);
        if (std::abs(denom) < kEps) continue; // parallel
        const Vec2 ap = a - p;
        const double t = ap.cross(e) / denom;   // along the ray
        const double u = ap.cross(dir) / denom; // along the segment
        if (u < -1e-9 || u > 1 + 1e-9) continue;
        if (std::abs(t) <= zero_tol) {
            // The source already lies on the target: map it to itself.
            *s_out = 0.0;
            return true;
        }
        if (t > 0)
            best_pos = std::min(best_pos, t);
        else
            best_neg = std::max(best_neg, t);
    }
    if (std::isfinite(best_pos)) {
        *s_out = best_pos;
        return true;
    }
    if (std::isfinite(best_neg)) {
        *s_out = best_neg;
        return true;
    }
    return false;
}

DisplacementField map_normal_forward(const Curve& from, const Curve& to) {
    const std::vector<Vec2> normals = vertex_normals(from);
    DisplacementField f;
    f.method = "normal";
    std::size_t missing = 0;
    for (std::size_t i = 0; i < from.size(); ++i) {
        double s = 0;
        if (!ray_hit(from.points[i], normals[i], to, &s)) {
            ++missing;
            continue;
        }
        f.sources.push_back(from.points[i]);
        f.vectors.push_back(normals[i] * s);
    }
    if (missing * 5 > from.size())
        throw ComputeError(
            "normal mapping lost " + std::to_string(missing) + " of " +
            std::to_string(from.size()) +
            " samples (no normal-ray intersection); use diffusion mapping "
            "for this curve pair");
    return f;
}

} // namespace

DisplacementField map_normal(const Curve& c1, const Curve& c2, bool reverse) {
    c1.validate();
    c2.validate();
    if (!reverse) return map_normal_forward(c1, c2);
    DisplacementField raw = map_normal_forward(c2, c1);
    DisplacementField f;
    f.method = "reverse_normal";
    f.sources.reserve(raw.sources.size());
    f.vectors.reserve(raw.sources.size());
    for (std::size_t i = 0; i < raw.sources.size(); ++i) {
        f.sources.push_back(raw.endpoint(i)); // landed on c1
        f.vectors.push_back(raw.vectors[i] * -1.0);
    }
    return f;
}

// ---------------------------------------------------------------------------
// Diffusion mapping

namespace {

/// Point location by neighbor walking with a full-scan fallback, tolerant
/// of non-convex domains with holes.
struct ElementWalker {
    const TriMesh& m;
    std::vector<std::array<int, 3>> neighbor;
    double scale = 0; // bounding-box diagonal, for boundary tolerances

    explicit ElementWalker(const TriMesh& mesh) : m(mesh) {
        Point2 lo{1e300, 1e300}, hi{-1e300, -1e300};
        for (const Point2& v : m.vertices) {
            lo.x = std::min(lo.x, v.x);
            lo.y = std::min(lo.y, v.y);
            hi.x = std::max(hi.x, v.x);
            hi.y = std::max(hi.y, v.y);
        }
        scale = (hi - lo).norm();
        neighbor.assign(m.triangle_count(), {-1, -1, -1});
        std::unordered_map<long long, std::pair<int, int>> half;
        const long long nv = static_cast<long long>(m.vertex_count());
        for (std::size_t t = 0; t < m.triangle_count(); ++t)
            for (int e = 0; e < 3; ++e) {
                const int a = m.triangles[t][e];
                const int b = m.triangles[t][(e + 1) % 3];
                const long long key =
                    std::min(a, b) * nv + std::max(a, b);
                auto it = half.find(key);
                if (it == half.end()) {
                    half[key] = {static_cast<int>(t), e};
                } else {
                    neighbor[t][e] = it->second.first;
                    neighbor[it->second.first][it->second.second] =
                        static_cast<int>(t);
                }
            }
    }

    bool contains(int t, const Point2& p) const {
        for (int e = 0; e < 3; ++e) {
            const Point2& a = m.vertices[m.triangles[t][e]];
            const Point2& b = m.vertices[m.triangles[t][(e + 1) % 3]];
            if (orient2d_sign(a, b, p) < 0) return false;
        }
        return true;
    }

    int locate(const Point2& p, int hint) const {
        int t = (hint >= 0 && hint < static_cast<int>(m.triangle_count()))
                    ? hint
                    : 0;
        std::size_t guard = m.triangle_count() + 8;
        while (guard-- > 0) {
            int next = -1;
            bool inside = true;
            for (int e = 0; e < 3; ++e) {
                const Point2& a = m.vertices[m.triangles[t][e]];
                const Point2& b = m.vertices[m.triangles[t][(e + 1) % 3]];
                if (orient2d_sign(a, b, p) < 0) {
                    inside = false;
                    if (neighbor[t][e] >= 0) {
                        next = neighbor[t][e];
                        break;
                    }
                }
            }
            if (inside) return t;
            if (next < 0) break; // fell off the domain (or into a hole)
            t = next;
        }
        for (std::size_t i = 0; i < m.triangle_count(); ++i)
            if (contains(static_cast<int>(i), p)) return static_cast<int>(i);
        // Tolerant fallback: a point on the domain boundary can land a
        // rounding error outside every triangle. Accept the triangle it is
        // barely outside of, measured as a distance past the worst edge.
        double best = std::numeric_limits<double>::infinity();
        int best_t = -1;
        for (std::size_t i = 0; i < m.triangle_count(); ++i) {
            double out_dist = 0;
            for (int e = 0; e < 3; ++e) {
                const Point2& a = m.vertices[m.triangles[i][e]];
                const Point2& b = m.vertices[m.triangles[i][(e + 1) % 3]];
                const double len = (b - a).norm();
                if (len <= 0) {
                    out_dist = std::numeric_limits<double>::infinity();
                    break;
                }
                out_dist = std::max(out_dist, -(b - a).cross(p - a) / len);
            }
            if (out_dist < best) {
                best = out_dist;
                best_t = static_cast<int>(i);
            }
        }
        if (best_t >= 0 && best <= 1e-9 * scale) return best_t;
        return -1;
    }
};

struct Streamlines {
    std::vector<Point2> start;
    std::vector<Point2> end;
};

/// Laplace solve in the gap plus downhill RK4 streamline tracing from
/// equidistant seeds on the start curve to the end curve.
Streamlines trace_gap(const Curve& start_curve, const Curve& end_curve,
                      std::size_t n_stream, double target_h) {
    // Orient for meshing: outer counter-clockwise, hole clockwise.
    const bool start_is_outer =
        point_in_polygon(start_curve, end_curve.points[0]);
    Curve outer = start_is_outer ? start_curve : end_curve;
    Curve inner = start_is_outer ? end_curve : start_curve;
    if (signed_area(outer) < 0)
        std::reverse(outer.points.begin(), outer.points.end());
    if (signed_area(inner) > 0)
        std::reverse(inner.points.begin(), inner.points.end());
    outer.label = "outer";
    inner.label = "inner";

    if (target_h <= 0)
        target_h = std::min(outer.length(), inner.length()) / 64.0;
    TriMesh m = mesh::triangulate(outer, {inner}, target_h);
    auto shared = std::make_shared<const TriMesh>(std::move(m));

    fem::BoundaryCondition bc;
    bc.entries = {fem::BoundaryCondition::dirichlet(
                      start_is_outer ? "outer" : "inner", 0, 1.0),
                  fem::BoundaryCondition::dirichlet(
                      start_is_outer ? "inner" : "outer", 0, 0.0)};
    fem::FieldState sol = fem::solve_laplace(shared, bc);

    const TriMesh& mesh = *shared;
    std::vector<Vec2> grad(mesh.triangle_count());
    std::vector<double> step_len(mesh.triangle_count());
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Point2& p0 = mesh.vertices[tri[0]];
        const Point2& p1 = mesh.vertices[tri[1]];
        const Point2& p2 = mesh.vertices[tri[2]];
        const double a2 = (p1 - p0).cross(p2 - p0);
        Vec2 g{0, 0};
        for (int i = 0; i < 3; ++i) {
            const Point2& pj = mesh.vertices[tri[(i + 1) % 3]];
            const Point2& pk = mesh.vertices[tri[(i + 2) % 3]];
            g += Vec2{pj.y - pk.y, pk.x - pj.x} * (sol.at(tri[i], 0) / a2);
        }
        grad[t] = g;
        step_len[t] = 0.35 * std::sqrt(a2);
    }

    ElementWalker walker(mesh);
    const Curve seeds_curve = resample_equidistant(start_curve, n_stream);
    const double snap_tol = 1e-6 * curve_scale(outer);

    Streamlines out;
    int hint = 0;
    for (std::size_t i = 0; i < seeds_curve.size(); ++i) {
        Point2 x = seeds_curve.points[i];
        const int t0 = walker.locate(x, hint);
        if (t0 < 0)
            throw ComputeError("streamline seed " + std::to_string(i) +
                               " lies outside the meshed gap");
        hint = t0;
        int cur = t0;
        // Downhill unit direction, evaluated at the element containing q.
        auto dir_at = [&](const Point2& q) {
            const int t = walker.locate(q, cur);
            if (t >= 0) cur = t;
            const Vec2 g = grad[cur];
            const double n = g.norm();
            if (n < 1e-12)
                throw ComputeError("streamline from seed " +
                                   std::to_string(i) +
                                   " stalled in a flat gradient region");
            return g / (-n);
        };

        bool done = false;
        for (int step = 0; step < 100000 && !done; ++step) {
            const double h = step_len[cur];
            const Vec2 k1 = dir_at(x);
            const Vec2 k2 = dir_at(x + k1 * (h / 2));
            const Vec2 k3 = dir_at(x + k2 * (h / 2));
            const Vec2 k4 = dir_at(x + k3 * h);
            const Point2 xn = x + (k1 + k2 * 2 + k3 * 2 + k4) * (h / 6);

            // Crossing the end curve terminates the trace exactly there.
            double best_t = std::numeric_limits<double>::infinity();
            Point2 best_q;
            for (std::size_t s = 0; s < end_curve.segment_count(); ++s) {
                Point2 q;
                if (geometry::segment_intersection(x, xn,
                                                   end_curve.segment_start(s),
                                                   end_curve.segment_end(s),
                                                   q)) {
                    const double tpos = (q - x).norm();
                    if (tpos < best_t) {
                        best_t = tpos;
                        best_q = q;
                    }
                }
            }
            if (std::isfinite(best_t)) {
                out.start.push_back(seeds_curve.points[i]);
                out.end.push_back(best_q);
                done = true;
                break;
            }
            const ClosestPoint cp = closest_point(end_curve, xn);
            if (cp.dist2 < snap_tol * snap_tol) {
                out.start.push_back(seeds_curve.points[i]);
                out.end.push_back(cp.point);
                done = true;
                break;
            }
            x = xn;
        }
        if (!done)
            throw ComputeError("streamline from seed " + std::to_string(i) +
                               " did not reach the target curve");
    }
    return out;
}

} // namespace

DisplacementField map_diffusion(const Curve& c1, const Curve& c2, bool reverse,
                                std::size_t n_stream, double target_h) {
    c1.validate();
    c2.validate();
    if (!c1.closed || !c2.closed)
        throw InputError("diffusion mapping needs two closed curves");
    if (n_stream < 2)
        throw InputError("diffusion mapping needs at least 2 streamlines");

    if (!geometry::split_at_intersection(c1, c2).intersections.empty())
        throw InputError(
            "the curves intersect, so no gap region exists; partition them "
            "with split_at_intersection and map the pieces separately");
    const bool c1_in_c2 = point_in_polygon(c2, c1.points[0]);
    const bool c2_in_c1 = point_in_polygon(c1, c2.points[0]);
    if (!c1_in_c2 && !c2_in_c1)
        throw InputError(
            "diffusion mapping needs one curve nested inside the other");

    const Curve& start = reverse ? c2 : c1;
    const Curve& end = reverse ? c1 : c2;
    Streamlines tr = trace_gap(start, end, n_stream, target_h);

    DisplacementField f;
    f.method = reverse ? "reverse_diffusion" : "diffusion";
    f.sources.reserve(tr.start.size());
    f.vectors.reserve(tr.start.size());
    for (std::size_t i = 0; i < tr.start.size(); ++i) {
        if (reverse) {
            f.sources.push_back(tr.end[i]); // landed on c1
            f.vectors.push_back(tr.start[i] - tr.end[i]);
        } else {
            f.sources.push_back(tr.start[i]);
            f.vectors.push_back(tr.end[i] - tr.start[i]);
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// Thin-plate splines

namespace {

double tps_kernel(double r2) {
    return r2 > 0 ? r2 * std::log(r2) : 0.0; // r^2 log r^2
}

} // namespace

std::vector<Vec2> map_tps(const LandmarkSet& landmarks,
                          const std::vector<Point2>& queries, double ridge) {
    landmarks.validate();
    if (!(ridge >= 0) || !std::isfinite(ridge))
        throw InputError("thin-plate ridge parameter must be finite and >= 0");
    const int n = static_cast<int>(landmarks.pairs.size());

    // Bordered system: [K + ridge I, P; P^T, 0] [w; a] = [v; 0] per output
    // coordinate, where P = [1 x y] removes affine content from the kernel.
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 3, n + 3);
    for (int i = 0; i < n; ++i) {
        const Point2& pi = landmarks.pairs[i].first;
        for (int j = 0; j < n; ++j)
            A(i, j) = tps_kernel((pi - landmarks.pairs[j].first).norm2());
        A(i, i) += ridge;
        A(i, n) = A(n, i) = 1;
        A(i, n + 1) = A(n + 1, i) = pi.x;
        A(i, n + 2) = A(n + 2, i) = pi.y;
    }
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, 2);
    for (int i = 0; i < n; ++i) {
        rhs(i, 0) = landmarks.pairs[i].second.x;
        rhs(i, 1) = landmarks.pairs[i].second.y;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible())
        throw ComputeError(
            "thin-plate system is singular (collinear or duplicate landmarks)");
    Eigen::MatrixXd coef = lu.solve(rhs);

    std::vector<Vec2> out;
    out.reserve(queries.size());
    for (const Point2& q : queries) {
        if (!q.finite()) throw InputError("thin-plate query is not finite");
        Vec2 img{coef(n, 0) + coef(n + 1, 0) * q.x + coef(n + 2, 0) * q.y,
                 coef(n, 1) + coef(n + 1, 1) * q.x + coef(n + 2, 1) * q.y};
        for (int i = 0; i < n; ++i) {
            const double u =
                tps_kernel((q - landmarks.pairs[i].first).norm2());
            img.x += coef(i, 0) * u;
            img.y += coef(i, 1) * u;
        }
        out.push_back(img - q);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Quality measures

FieldQuality field_quality(const DisplacementField& field, const Curve& c2,
                           double eps) {
    field.validate();
    c2.validate();
    FieldQuality q;

    const std::size_t n = field.sources.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (geometry::segments_cross(field.sources[i], field.endpoint(i),
                                         field.sources[j], field.endpoint(j)))
                ++q.crossing_count;

    // Arc-length coverage of c2 by a dense deterministic sweep.
    const std::size_t sweeps = 4096;
    const double total = c2.length();
    std::size_t uncovered = 0;
    for (std::size_t k = 0; k < sweeps; ++k) {
        const Point2 p = c2.point_at_arclength(
            total * (static_cast<double>(k) + 0.5) / sweeps);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i)
            best = std::min(best, (field.endpoint(i) - p).norm2());
        if (best > eps * eps) ++uncovered;
    }
    q.unmapped_fraction = static_cast<double>(uncovered) / sweeps;

    q.max_stretch = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double src = dist(field.sources[i], field.sources[i + 1]);
        const double img = dist(field.endpoint(i), field.endpoint(i + 1));
        if (src > kEps)
            q.max_stretch = std::max(q.max_stretch, img / src);
    }
    return q;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

DisplacementField apply_method(const std::string& method, const Curve& r1,
                               const Curve& r2, const MappingConfig& cfg) {
    if (method == "minimal_distance") return map_minimal_distance(r1, r2);
    if (method == "uniform") return map_uniform(r1, r2, cfg.samples);
    if (method == "normal") return map_normal(r1, r2, false);
    if (method == "reverse_normal") return map_normal(r1, r2, true);
    if (method == "diffusion")
        return map_diffusion(r1, r2, false, cfg.n_stream, cfg.target_h);
    if (method == "reverse_diffusion")
        return map_diffusion(r1, r2, true, cfg.n_stream, cfg.target_h);
    throw InputError("unknown mapping method '" + method + "'");
}

} // namespace

MappingResult run_mapping_pipeline(const Curve& c1, const Curve& c2,
                                   const MappingConfig& config) {
    c1.validate();
    c2.validate();
    if (config.samples < 2)
        throw InputError("mapping pipeline needs at least 2 samples");

    Curve w1 = c1;
    geometry::CurveTransform transform; // identity unless prescaled
    if (config.prescale) {
        auto pres = geometry::similarity_prescale(c1, c2);
        w1 = pres.first;
        transform = pres.second;
    }
    auto normalized = geometry::normalize_direction(w1, c2);
    const Curve r1 = resample_equidistant(normalized.first, config.samples);
    const Curve r2 = resample_equidistant(normalized.second, config.samples);

    const double eps = config.eps > 0
                           ? config.eps
                           : 0.75 * r2.length() /
                                 static_cast<double>(config.samples);

    DisplacementField field;
    if (config.method == "auto") {
        if (r1.closed != r2.closed)
            throw InputError(
                "auto method selection needs both curves open or both "
                "closed; choose a method explicitly");
        if (!r1.closed) {
            field = apply_method("uniform", r1, r2, config);
        } else {
            // Escalate while the field crosses itself: normal, then
            // reverse-normal, then diffusion.
            const char* ladder[] = {"normal", "reverse_normal", "diffusion"};
            bool have = false;
            for (int step = 0; step < 3 && !have; ++step) {
                try {
                    DisplacementField cand =
                        apply_method(ladder[step], r1, r2, config);
                    if (field_quality(cand, r2, eps).crossing_count == 0 ||
                        step == 2) {
                        field = std::move(cand);
                        have = true;
                    }
                } catch (const Error&) {
                    if (step == 2) throw;
                }
            }
            if (!have)
                throw ComputeError("no mapping method produced a field");
        }
    } else {
        field = apply_method(config.method, r1, r2, config);
    }

    if (config.prescale) {
        // Report sources on the original curve; endpoints stay on c2.
        for (std::size_t i = 0; i < field.sources.size(); ++i) {
            const Point2 end = field.endpoint(i);
            field.sources[i] = transform.apply_inverse(field.sources[i]);
            field.vectors[i] = end - field.sources[i];
        }
    }
    field.t = config.t;
    field.dt = config.dt;

    MappingResult out;
    out.quality = field_quality(field, r2, eps);
    out.field = std::move(field);
    return out;
}

} // namespace mapping
} // namespace morpho
