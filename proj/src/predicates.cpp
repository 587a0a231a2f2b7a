// Orientation and incircle predicates with a floating-point filter and an
// exact rational fallback for near-degenerate cases.

#include "morpho/geometry.hpp"

#include <boost/multiprecision/cpp_int.hpp>

namespace morpho {
namespace geometry {

namespace {

using Rational = boost::multiprecision::cpp_rational;

Rational rat(double v) { return Rational(v); }

int exact_orient2d(const Point2& a, const Point2& b, const Point2& c) {
    Rational det = (rat(b.x) - rat(a.x)) * (rat(c.y) - rat(a.y)) -
                   (rat(b.y) - rat(a.y)) * (rat(c.x) - rat(a.x));
    if (det > 0) return 1;
    if (det < 0) return -1;
    return 0;
}

int exact_incircle(const Point2& a, const Point2& b, const Point2& c,
                   const Point2& d) {
    Rational adx = rat(a.x) - rat(d.x), ady = rat(a.y) - rat(d.y);
    Rational bdx = rat(b.x) - rat(d.x), bdy = rat(b.y) - rat(d.y);
    Rational cdx = rat(c.x) - rat(d.x), cdy = rat(c.y) - rat(d.y);
    Rational ad = adx * adx + ady * ady;
    Rational bd = bdx * bdx + bdy * bdy;
    Rational cd = cdx * cdx + cdy * cdy;
    Rational det = adx * (bdy * cd - cdy * bd) - ady * (bdx * cd - cdx * bd) +
                   ad * (bdx * cdy - cdx * bdy);
    if (det > 0) return 1;
    if (det < 0) return -1;
    return 0;
}

} // namespace

int orient2d_sign(const Point2& a, const Point2& b, const Point2& c) {
    double detleft = (b.x - a.x) * (c.y - a.y);
    double detright = (b.y - a.y) * (c.x - a.x);
    double det = detleft - detright;
    // Filter constant from the standard error analysis of the 2x2
    // difference determinant.
    double errbound = 3.3306690738754716e-16 *
                      (std::fabs(detleft) + std::fabs(detright));
    if (det > errbound) return 1;
    if (det < -errbound) return -1;
    return exact_orient2d(a, b, c);
}

int incircle_sign(const Point2& a, const Point2& b, const Point2& c,
                  const Point2& d) {
    double adx = a.x - d.x, ady = a.y - d.y;
    double bdx = b.x - d.x, bdy = b.y - d.y;
    double cdx = c.x - d.x, cdy = c.y - d.y;
    double ad = adx * adx + ady * ady;
    double bd = bdx * bdx + bdy * bdy;
    double cd = cdx * cdx + cdy * cdy;
    double det = adx * (bdy * cd - cdy * bd) - ady * (bdx * cd - cdx * bd) +
                 ad * (bdx * cdy - cdx * bdy);
    // Conservative permanent-based filter; falls back to exact arithmetic
    // well before the double evaluation can misreport the sign.
    double perm = std::fabs(adx) * (std::fabs(bdy * cd) + std::fabs(cdy * bd)) +
                  std::fabs(ady) * (std::fabs(bdx * cd) + std::fabs(cdx * bd)) +
                  ad * (std::fabs(bdx * cdy) + std::fabs(cdx * bdy));
    double errbound = 1e-14 * perm;
    if (det > errbound) return 1;
    if (det < -errbound) return -1;
    return exact_incircle(a, b, c, d);
}

} // namespace geometry
} // namespace morpho
