#include "morpho/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace morpho {
namespace geometry {

namespace {
constexpr double kDuplicateTol = 1e-9;
constexpr double kDegenerateLength = 1e-9;
} // namespace

double Curve::length() const {
    double L = 0;
    for (std::size_t i = 0; i < segment_count(); ++i)
        L += dist(segment_start(i), segment_end(i));
    return L;
}

std::vector<double> Curve::cumulative_lengths() const {
    std::vector<double> cum(segment_count() + 1, 0.0);
    for (std::size_t i = 0; i < segment_count(); ++i)
        cum[i + 1] = cum[i] + dist(segment_start(i), segment_end(i));
    return cum;
}

Point2 Curve::point_at_arclength(double s) const {
    auto cum = cumulative_lengths();
    double L = cum.back();
    if (closed) {
        s = std::fmod(s, L);
        if (s < 0) s += L;
    } else {
        s = std::clamp(s, 0.0, L);
    }
    auto it = std::upper_bound(cum.begin(), cum.end(), s);
    std::size_t i = (it == cum.begin()) ? 0 : (it - cum.begin() - 1);
    if (i >= segment_count()) i = segment_count() - 1;
    double seg_len = cum[i + 1] - cum[i];
    double t = seg_len > 0 ? (s - cum[i]) / seg_len : 0.0;
    return segment_start(i) + (segment_end(i) - segment_start(i)) * t;
}

Curve Curve::reversed() const {
    Curve out = *this;
    std::reverse(out.points.begin(), out.points.end());
    if (closed && !out.points.empty()) {
        // Keep the original start point first so reversal only flips
        // orientation, not the parameterization origin.
        std::rotate(out.points.begin(), out.points.end() - 1, out.points.end());
    }
    return out;
}

void Curve::validate() const {
    std::size_t n = points.size();
    if (closed && n < 3)
        throw InputError("curve: closed curve needs at least 3 points");
    if (!closed && n < 2)
        throw InputError("curve: open curve needs at least 2 points");
    for (const auto& p : points)
        if (!p.finite())
            throw InputError("curve: non-finite coordinate");
    for (std::size_t i = 0; i < segment_count(); ++i)
        if (dist(segment_start(i), segment_end(i)) < kDuplicateTol)
            throw InputError("curve: consecutive duplicate point at index " +
                             std::to_string(i));
    if (closed) {
        // Simplicity: no two non-adjacent segments may meet.
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
                if (adjacent) continue;
                Point2 dummy;
                if (segment_intersection(segment_start(i), segment_end(i),
                                         segment_start(j), segment_end(j),
                                         dummy))
                    throw InputError(
                        "curve: closed curve self-intersects (segments " +
                        std::to_string(i) + ", " + std::to_string(j) + ")");
            }
        }
    }
}

Curve CurveTransform::apply(const Curve& c) const {
    Curve out = c;
    for (auto& p : out.points) p = apply(p);
    return out;
}

Curve CurveTransform::apply_inverse(const Curve& c) const {
    Curve out = c;
    for (auto& p : out.points) p = apply_inverse(p);
    return out;
}

double signed_area(const Curve& curve) {
    if (!curve.closed) throw InputError("signed_area: curve must be closed");
    double a = 0;
    for (std::size_t i = 0; i < curve.size(); ++i)
        a += curve.segment_start(i).cross(curve.segment_end(i));
    return 0.5 * a;
}

Point2 polyline_centroid(const Curve& curve) {
    // Arc-length weighted so the result does not depend on how densely
    // individual sections happen to be sampled.
    double L = 0;
    Vec2 acc{0, 0};
    for (std::size_t i = 0; i < curve.segment_count(); ++i) {
        Point2 a = curve.segment_start(i), b = curve.segment_end(i);
        double len = dist(a, b);
        acc += (a + b) * (0.5 * len);
        L += len;
    }
    if (L < kDegenerateLength)
        throw InputError("polyline_centroid: degenerate curve");
    return acc / L;
}

double rms_radius(const Curve& curve) {
    Point2 c = polyline_centroid(curve);
    // Exact integral of |x - c|^2 along each segment.
    double L = 0, acc = 0;
    for (std::size_t i = 0; i < curve.segment_count(); ++i) {
        Vec2 a = curve.segment_start(i) - c;
        Vec2 b = curve.segment_end(i) - c;
        double len = dist(curve.segment_start(i), curve.segment_end(i));
        // int_0^1 |a + t(b-a)|^2 dt = (|a|^2 + a.b + |b|^2) / 3
        acc += len * (a.norm2() + a.dot(b) + b.norm2()) / 3.0;
        L += len;
    }
    return std::sqrt(acc / L);
}

namespace {

// Walk the polyline from arc position `s0`, placing `steps` chords of
// Euclidean length `chord`. Returns the consumed arc length and optionally
// the placed points. Points are on the polyline; chords may cut corners.
struct WalkResult {
    double arc_consumed = 0;
    bool ran_out = false;
};

WalkResult walk_chords(const Curve& curve, const std::vector<double>& cum,
                       double chord, std::size_t steps,
                       std::vector<Point2>* out) {
    WalkResult res;
    double L = cum.back();
    double s = 0;             // current arc position
    Point2 cur = curve.points[0];
    std::size_t seg = 0;      // segment containing position s (or next)
    double total_span = curve.closed ? 2.0 * L : L;

    if (out) out->push_back(cur);
    for (std::size_t k = 0; k < steps; ++k) {
        // Advance along segments until the distance from `cur` first
        // reaches `chord`.
        bool placed = false;
        double walk_s = s;
        std::size_t walk_seg = seg;
        while (walk_s < total_span + kDegenerateLength) {
            std::size_t nseg =
                curve.closed ? walk_seg % curve.segment_count() : walk_seg;
            if (!curve.closed && nseg >= curve.segment_count()) break;
            Point2 a = curve.segment_start(nseg);
            Point2 b = curve.segment_end(nseg);
            double seg_lo = cum[nseg] + (walk_seg >= curve.segment_count() ? L : 0);
            double seg_hi = seg_lo + (cum[nseg + 1] - cum[nseg]);
            double t_lo = 0;
            if (walk_s > seg_lo && seg_hi > seg_lo)
                t_lo = (walk_s - seg_lo) / (seg_hi - seg_lo);
            // |a + t d - cur|^2 = chord^2, t in (t_lo, 1]
            Vec2 d = b - a;
            Vec2 m = a - cur;
            double A = d.norm2();
            double B = 2 * m.dot(d);
            double C = m.norm2() - chord * chord;
            double best_t = -1;
            if (A > 0) {
                double disc = B * B - 4 * A * C;
                if (disc >= 0) {
                    double sq = std::sqrt(disc);
                    for (double t : {(-B - sq) / (2 * A), (-B + sq) / (2 * A)}) {
                        if (t > t_lo + 1e-15 && t <= 1.0 + 1e-12) {
                            // first crossing going forward
                            if (best_t < 0 || t < best_t) best_t = t;
                        }
                    }
                }
            }
            if (best_t >= 0) {
                best_t = std::min(best_t, 1.0);
                cur = a + d * best_t;
                s = seg_lo + best_t * (seg_hi - seg_lo);
                seg = walk_seg;
                placed = true;
                break;
            }
            walk_s = seg_hi;
            ++walk_seg;
        }
        if (!placed) {
            res.ran_out = true;
            res.arc_consumed = total_span;
            return res;
        }
        if (out) out->push_back(cur);
    }
    res.arc_consumed = s;
    return res;
}

} // namespace

Curve resample_equidistant(const Curve& curve, std::size_t n) {
    std::size_t min_n = curve.closed ? 3 : 2;
    if (n < min_n)
        throw InputError("resample_equidistant: n too small");
    if (curve.points.size() < 2)
        throw InputError("resample_equidistant: empty curve");
    auto cum = curve.cumulative_lengths();
    double L = cum.back();
    if (L < kDegenerateLength)
        throw InputError("resample_equidistant: degenerate curve (zero length)");

    std::size_t chords = curve.closed ? n : n - 1;
    double target = L;

    // Chords cut corners, so the arc consumed by k chords of length s is
    // >= k*s and increases with s. Bisect on s until the walk consumes
    // exactly the full arc length.
    double hi = L / static_cast<double>(chords);
    double lo = hi;
    for (int i = 0; i < 64; ++i) {
        WalkResult w = walk_chords(curve, cum, lo, chords, nullptr);
        if (!w.ran_out && w.arc_consumed < target) break;
        lo *= 0.5;
        if (lo < 1e-300)
            throw ComputeError("resample_equidistant: bisection bracket failed");
    }
    for (int it = 0; it < 100; ++it) {
        double mid = 0.5 * (lo + hi);
        WalkResult w = walk_chords(curve, cum, mid, chords, nullptr);
        if (w.ran_out || w.arc_consumed >= target)
            hi = mid;
        else
            lo = mid;
        if (hi - lo <= 1e-16 * L) break;
    }
    double chord = 0.5 * (lo + hi);

    std::vector<Point2> pts;
    pts.reserve(n + 1);
    walk_chords(curve, cum, chord, chords, &pts);

    Curve out;
    out.closed = curve.closed;
    out.label = curve.label;
    if (curve.closed) {
        pts.resize(n); // drop the landing point, it coincides with pts[0]
        out.points = std::move(pts);
    } else {
        pts.resize(n);
        pts.front() = curve.points.front();
        pts.back() = curve.points.back(); // endpoints exact
        out.points = std::move(pts);
    }
    return out;
}

std::pair<Curve, Curve> normalize_direction(const Curve& c1, const Curve& c2) {
    Curve a = c1, b = c2;
    if (a.closed && signed_area(a) < 0) a = a.reversed();
    if (b.closed && signed_area(b) < 0) b = b.reversed();
    if (!a.closed && !b.closed) {
        double keep = dist(a.points.front(), b.points.front()) +
                      dist(a.points.back(), b.points.back());
        double flip = dist(a.points.front(), b.points.back()) +
                      dist(a.points.back(), b.points.front());
        if (flip < keep) b = b.reversed();
    }
    return {a, b};
}

std::pair<Curve, CurveTransform> similarity_prescale(const Curve& c1,
                                                     const Curve& c2) {
    if (c1.closed != c2.closed)
        throw InputError("similarity_prescale: both curves must be open or both closed");
    double s1, s2;
    if (c1.closed) {
        s1 = rms_radius(c1);
        s2 = rms_radius(c2);
    } else {
        s1 = c1.length();
        s2 = c2.length();
    }
    if (s1 < kDegenerateLength || s2 < kDegenerateLength)
        throw InputError("similarity_prescale: zero-size curve");
    CurveTransform t;
    t.scale = s2 / s1;
    t.reference = polyline_centroid(c1);
    t.translation = {0, 0};
    return {t.apply(c1), t};
}

namespace {

// p is exactly collinear with [q0,q1]; is it within the segment's box?
bool on_segment_box(const Point2& q0, const Point2& q1, const Point2& p) {
    return std::min(q0.x, q1.x) <= p.x && p.x <= std::max(q0.x, q1.x) &&
           std::min(q0.y, q1.y) <= p.y && p.y <= std::max(q0.y, q1.y);
}

} // namespace

bool segment_intersection(const Point2& a0, const Point2& a1,
                          const Point2& b0, const Point2& b1, Point2& out) {
    int o1 = orient2d_sign(a0, a1, b0);
    int o2 = orient2d_sign(a0, a1, b1);
    int o3 = orient2d_sign(b0, b1, a0);
    int o4 = orient2d_sign(b0, b1, a1);

    if (((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) &&
        ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0))) {
        Vec2 r = a1 - a0, s = b1 - b0;
        double denom = r.cross(s);
        double t = (b0 - a0).cross(s) / denom;
        out = a0 + r * std::clamp(t, 0.0, 1.0);
        return true;
    }

    // Degenerate contacts: endpoints on the other segment, or collinear
    // overlap. Tangential touches count as one intersection point.
    std::vector<Point2> touches;
    if (o1 == 0 && on_segment_box(a0, a1, b0)) touches.push_back(b0);
    if (o2 == 0 && on_segment_box(a0, a1, b1)) touches.push_back(b1);
    if (o3 == 0 && on_segment_box(b0, b1, a0)) touches.push_back(a0);
    if (o4 == 0 && on_segment_box(b0, b1, a1)) touches.push_back(a1);
    if (touches.empty()) return false;
    Vec2 acc{0, 0};
    std::size_t count = 0;
    for (const auto& p : touches) {
        bool dup = false;
        for (std::size_t i = 0; i < count; ++i)
            if (dist(touches[i], p) < 1e-12) { dup = true; break; }
        if (!dup) {
            touches[count++] = p;
            acc += p;
        }
    }
    out = acc / static_cast<double>(count);
    return true;
}

bool segments_cross(const Point2& a0, const Point2& a1,
                    const Point2& b0, const Point2& b1) {
    int o1 = orient2d_sign(a0, a1, b0);
    int o2 = orient2d_sign(a0, a1, b1);
    int o3 = orient2d_sign(b0, b1, a0);
    int o4 = orient2d_sign(b0, b1, a1);
    if (((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) &&
        ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0)))
        return true;
    // Collinear interior overlap (not a mere endpoint touch).
    if (o1 == 0 && o2 == 0 && o3 == 0 && o4 == 0) {
        Vec2 d = a1 - a0;
        double lo_a = 0, hi_a = d.dot(d);
        double tb0 = (b0 - a0).dot(d), tb1 = (b1 - a0).dot(d);
        double lo_b = std::min(tb0, tb1), hi_b = std::max(tb0, tb1);
        return std::min(hi_a, hi_b) - std::max(lo_a, lo_b) > 1e-18;
    }
    return false;
}

ClosestPoint closest_point(const Curve& curve, const Point2& p) {
    ClosestPoint best;
    best.dist2 = std::numeric_limits<double>::infinity();
    double arc = 0;
    for (std::size_t i = 0; i < curve.segment_count(); ++i) {
        Point2 a = curve.segment_start(i), b = curve.segment_end(i);
        Vec2 d = b - a;
        double len2 = d.norm2();
        double t = len2 > 0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
        Point2 q = a + d * t;
        double d2 = (p - q).norm2();
        double len = std::sqrt(len2);
        if (d2 < best.dist2) {
            best.dist2 = d2;
            best.point = q;
            best.arclength = arc + t * len;
        }
        arc += len;
    }
    return best;
}

bool point_in_polygon(const Curve& polygon, const Point2& p) {
    // Winding number via crossing counts; robust for points off the boundary.
    int winding = 0;
    for (std::size_t i = 0; i < polygon.size(); ++i) {
        Point2 a = polygon.segment_start(i), b = polygon.segment_end(i);
        if (a.y <= p.y) {
            if (b.y > p.y && orient2d_sign(a, b, p) > 0) ++winding;
        } else {
            if (b.y <= p.y && orient2d_sign(a, b, p) < 0) --winding;
        }
    }
    return winding != 0;
}

SplitResult split_at_intersection(const Curve& b1, const Curve& b2) {
    struct Hit {
        double arc;      // arc position along b1
        Point2 point;
    };
    std::vector<Hit> hits;
    auto cum = b1.cumulative_lengths();
    for (std::size_t i = 0; i < b1.segment_count(); ++i) {
        Point2 a0 = b1.segment_start(i), a1 = b1.segment_end(i);
        double seg_len = dist(a0, a1);
        for (std::size_t j = 0; j < b2.segment_count(); ++j) {
            Point2 q;
            if (segment_intersection(a0, a1, b2.segment_start(j),
                                     b2.segment_end(j), q)) {
                double t = seg_len > 0 ? dist(a0, q) / seg_len : 0.0;
                hits.push_back({cum[i] + t * seg_len, q});
            }
        }
    }
    std::sort(hits.begin(), hits.end(),
              [](const Hit& a, const Hit& b) { return a.arc < b.arc; });
    // Merge duplicates (shared vertices, tangential contacts).
    std::vector<Hit> uniq;
    for (const auto& h : hits) {
        if (!uniq.empty() && (dist(uniq.back().point, h.point) < 1e-9 ||
                              h.arc - uniq.back().arc < 1e-12))
            continue;
        uniq.push_back(h);
    }
    // A hit at the very end of a closed loop duplicates one at arc 0.
    if (b1.closed && uniq.size() > 1 &&
        dist(uniq.front().point, uniq.back().point) < 1e-9)
        uniq.pop_back();

    SplitResult res;
    for (const auto& h : uniq) res.intersections.push_back(h.point);
    if (uniq.empty()) {
        res.segments.push_back(b1);
        return res;
    }

    double L = cum.back();
    auto slice = [&](double s0, double s1) {
        // Collect b1 vertices with arc position strictly inside (s0, s1),
        // wrapping for closed curves.
        Curve seg;
        seg.closed = false;
        seg.label = b1.label;
        seg.points.push_back(b1.point_at_arclength(s0));
        double span = s1 - s0;
        if (span <= 0) span += L;
        // vertex k sits at arc cum[k]
        std::size_t nv = b1.closed ? b1.size() : b1.size();
        for (double base : b1.closed ? std::vector<double>{0.0, L}
                                     : std::vector<double>{0.0}) {
            for (std::size_t k = 0; k < nv; ++k) {
                double a = cum[k] + base;
                if (a > s0 + 1e-12 && a < s0 + span - 1e-12)
                    seg.points.push_back(b1.points[k]);
            }
        }
        seg.points.push_back(b1.point_at_arclength(s1));
        // Drop accidental duplicates from hits coinciding with vertices.
        Curve clean;
        clean.closed = false;
        clean.label = seg.label;
        for (const auto& p : seg.points)
            if (clean.points.empty() || dist(clean.points.back(), p) >= 1e-12)
                clean.points.push_back(p);
        return clean;
    };

    if (b1.closed) {
        for (std::size_t i = 0; i < uniq.size(); ++i) {
            double s0 = uniq[i].arc;
            double s1 = uniq[(i + 1) % uniq.size()].arc;
            res.segments.push_back(slice(s0, s1));
        }
    } else {
        std::vector<double> cuts;
        cuts.push_back(0.0);
        for (const auto& h : uniq) cuts.push_back(h.arc);
        cuts.push_back(L);
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            if (cuts[i + 1] - cuts[i] < 1e-12) continue; // hit at an endpoint
            res.segments.push_back(slice(cuts[i], cuts[i + 1]));
        }
    }
    return res;
}

} // namespace geometry
} // namespace morpho
