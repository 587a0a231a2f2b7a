#include "morpho/infer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "morpho/error.hpp"
#include "morpho/geometry.hpp"
#include "morpho/mesh.hpp"

namespace morpho {
namespace infer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using geometry::Point2;
using mesh::TriMesh;

/// Piecewise-linear interpolation of `src` at the vertices of `onto`.
/// Each query point takes barycentric values from the triangle containing
/// it; points that fall outside every triangle (boundary rounding, or
/// genuinely outside the source hull) use the least-outside triangle with
/// clamped barycentric weights.
std::vector<double> interpolate_nodal(const fem::FieldState& src,
                                      const TriMesh& onto) {
    const TriMesh& m = *src.mesh;
    const std::size_t nv_src = m.vertex_count();
    const std::size_t nv = onto.vertex_count();
    std::vector<double> out(static_cast<std::size_t>(src.n_species) * nv, 0.0);

    for (std::size_t v = 0; v < nv; ++v) {
        const Point2 p = onto.vertices[v];
        double best_out = kInf;
        double l0 = 0, l1 = 0, l2 = 0;
        std::size_t best_t = 0;
        for (std::size_t t = 0; t < m.triangle_count(); ++t) {
            const Point2& a = m.vertices[m.triangles[t][0]];
            const Point2& b = m.vertices[m.triangles[t][1]];
            const Point2& c = m.vertices[m.triangles[t][2]];
            const double area2 = (b - a).cross(c - a);
            if (!(area2 > 0)) continue;
            const double w0 = (b - p).cross(c - p) / area2;
            const double w1 = (c - p).cross(a - p) / area2;
            const double w2 = (a - p).cross(b - p) / area2;
            const double outside = -std::min({w0, w1, w2});
            if (outside < best_out) {
                best_out = outside;
                best_t = t;
                l0 = w0;
                l1 = w1;
                l2 = w2;
            }
            if (outside <= 0) break; // strictly inside: done
        }
        // Clamp slightly (or fully) negative weights and renormalize.
        l0 = std::max(l0, 0.0);
        l1 = std::max(l1, 0.0);
        l2 = std::max(l2, 0.0);
        const double sum = l0 + l1 + l2;
        if (!(sum > 0))
            throw ComputeError("field interpolation found no usable source "
                               "triangle for a query vertex");
        for (int s = 0; s < src.n_species; ++s) {
            const double* cs = src.c.data() +
                               static_cast<std::size_t>(s) * nv_src;
            out[static_cast<std::size_t>(s) * nv + v] =
                (l0 * cs[m.triangles[best_t][0]] +
                 l1 * cs[m.triangles[best_t][1]] +
                 l2 * cs[m.triangles[best_t][2]]) /
                sum;
        }
    }
    return out;
}

bool same_geometry(const TriMesh& a, const TriMesh& b) {
    if (&a == &b) return true;
    if (a.vertex_count() != b.vertex_count()) return false;
    if (a.triangles != b.triangles) return false;
    for (std::size_t v = 0; v < a.vertex_count(); ++v)
        if (a.vertices[v].x != b.vertices[v].x ||
            a.vertices[v].y != b.vertices[v].y)
            return false;
    return true;
}

double metric_sse(const fem::FieldState& sim, const std::vector<double>& tgt,
                  double scale) {
    const fem::FemMatrices mats = fem::assemble(*sim.mesh);
    const std::size_t nv = sim.mesh->vertex_count();
    double total = 0;
    for (int s = 0; s < sim.n_species; ++s) {
        Eigen::VectorXd d(static_cast<Eigen::Index>(nv));
        for (std::size_t v = 0; v < nv; ++v) {
            const std::size_t i = static_cast<std::size_t>(s) * nv + v;
            d[static_cast<Eigen::Index>(v)] = (sim.c[i] - tgt[i]) / scale;
        }
        total += d.dot(mats.mass * d);
    }
    return total;
}

double metric_correlation(const std::vector<double>& a,
                          const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0 && sbb == 0) return 0; // two constant fields agree
    if (saa == 0 || sbb == 0) return 1; // one constant: no correlation
    return 1.0 - sab / std::sqrt(saa * sbb);
}

/// Area of {la > 0} (and of {la > 0 and lb > 0}) accumulated over one
/// triangle, where la/lb are the linear interpolants of the given vertex
/// values. Clips the triangle by each half-plane in turn.
struct ClipAreas {
    double a = 0, b = 0, both = 0;
};

std::vector<std::pair<Point2, double>>
clip_polygon(const std::vector<std::pair<Point2, double>>& poly) {
    std::vector<std::pair<Point2, double>> out;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& [p, vp] = poly[i];
        const auto& [q, vq] = poly[(i + 1) % n];
        if (vp > 0) out.push_back({p, vp});
        if ((vp > 0) != (vq > 0)) {
            const double t = vp / (vp - vq);
            out.push_back(
                {{p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)}, 0.0});
        }
    }
    return out;
}

double polygon_area(const std::vector<std::pair<Point2, double>>& poly) {
    double a = 0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Point2& p = poly[i].first;
        const Point2& q = poly[(i + 1) % poly.size()].first;
        a += p.cross(q);
    }
    return a / 2;
}

double metric_overlap(const fem::FieldState& sim,
                      const std::vector<double>& tgt, double scale,
                      double threshold) {
    const TriMesh& m = *sim.mesh;
    const std::size_t nv = m.vertex_count();
    double inter = 0, uni = 0;
    for (int s = 0; s < sim.n_species; ++s) {
        const std::size_t off = static_cast<std::size_t>(s) * nv;
        for (std::size_t t = 0; t < m.triangle_count(); ++t) {
            std::vector<std::pair<Point2, double>> tri_a, tri_b;
            for (int e = 0; e < 3; ++e) {
                const std::size_t v = m.triangles[t][e];
                tri_a.push_back(
                    {m.vertices[v], sim.c[off + v] / scale - threshold});
                tri_b.push_back(
                    {m.vertices[v], tgt[off + v] / scale - threshold});
            }
            const auto in_a = clip_polygon(tri_a);
            const double area_a = polygon_area(in_a);
            const double area_b = polygon_area(clip_polygon(tri_b));
            // Intersection: re-clip the a-region by the b-function, whose
            // linear interpolation stays exact on the clipped vertices.
            std::vector<std::pair<Point2, double>> ab;
            const Point2& p0 = tri_b[0].first;
            const Point2& p1 = tri_b[1].first;
            const Point2& p2 = tri_b[2].first;
            const double area2 = (p1 - p0).cross(p2 - p0);
            for (const auto& [p, unused] : in_a) {
                (void)unused;
                const double w0 = (p1 - p).cross(p2 - p) / area2;
                const double w1 = (p2 - p).cross(p0 - p) / area2;
                const double w2 = (p0 - p).cross(p1 - p) / area2;
                ab.push_back({p, w0 * tri_b[0].second + w1 * tri_b[1].second +
                                     w2 * tri_b[2].second});
            }
            const double area_ab = polygon_area(clip_polygon(ab));
            inter += area_ab;
            uni += area_a + area_b - area_ab;
        }
    }
    if (uni <= 0) return 0; // both regions empty: identical
    return 1.0 - inter / uni;
}

double scaled_to_param(const ParamBounds& b, double s) {
    if (b.scale == ParamBounds::Scale::log)
        return std::exp(std::log(b.lo) + s * (std::log(b.hi) - std::log(b.lo)));
    return b.lo + s * (b.hi - b.lo);
}

double param_to_scaled(const ParamBounds& b, double p) {
    if (b.scale == ParamBounds::Scale::log)
        return (std::log(p) - std::log(b.lo)) /
               (std::log(b.hi) - std::log(b.lo));
    return (p - b.lo) / (b.hi - b.lo);
}

void validate_bounds(const std::vector<ParamBounds>& bounds) {
    if (bounds.empty()) throw InputError("parameter bounds must not be empty");
    for (const ParamBounds& b : bounds) b.validate();
}

double guarded_objective(const Objective& objective,
                         const std::vector<double>& params) {
    try {
        const double v = evaluate_objective(objective, params);
        return std::isnan(v) ? kInf : v;
    } catch (const std::exception&) {
        return kInf;
    }
}

} // namespace

void Metric::validate() const {
    if (!(scale > 0) || !std::isfinite(scale))
        throw InputError("metric scale must be positive and finite");
    if (!std::isfinite(threshold))
        throw InputError("metric threshold must be finite");
}

double evaluate_metric(const fem::FieldState& sim,
                       const fem::FieldState& target, const Metric& metric) {
    metric.validate();
    sim.validate();
    target.validate();
    if (sim.n_species != target.n_species)
        throw InputError("metric fields have " +
                         std::to_string(sim.n_species) + " and " +
                         std::to_string(target.n_species) +
                         " species; they must match");

    const std::vector<double>& tgt =
        same_geometry(*sim.mesh, *target.mesh)
            ? target.c
            : interpolate_nodal(target, *sim.mesh);

    switch (metric.kind) {
    case Metric::Kind::sse:
        return metric_sse(sim, tgt, metric.scale);
    case Metric::Kind::normalized_correlation:
        return metric_correlation(sim.c, tgt);
    case Metric::Kind::threshold_overlap:
        return metric_overlap(sim, tgt, metric.scale, metric.threshold);
    }
    throw InputError("unknown metric kind");
}

void Objective::validate() const {
    if (datasets.empty())
        throw InputError("objective needs at least one dataset");
    if (!run) throw InputError("objective has no simulation runner");
    for (const Dataset& d : datasets) {
        d.metric.validate();
        if (!(d.weight > 0) || !std::isfinite(d.weight))
            throw InputError("dataset weights must be positive and finite");
    }
}

double evaluate_objective(const Objective& objective,
                          const std::vector<double>& params) {
    objective.validate();
    const fem::FieldState sim = objective.run(params);
    double total = 0;
    for (const Objective::Dataset& d : objective.datasets)
        total += d.weight * evaluate_metric(sim, d.target, d.metric);
    return total;
}

void ParamBounds::validate() const {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
        throw InputError("parameter bounds need finite lo < hi (" + name +
                         ")");
    if (scale == Scale::log && !(lo > 0))
        throw InputError("log-scaled parameter bounds must be positive (" +
                         name + ")");
}

ScreenResult grid_screen(const Objective& objective,
                         const std::vector<ParamBounds>& bounds,
                         int n_per_dim, const ScreenOptions& options) {
    objective.validate();
    validate_bounds(bounds);
    if (n_per_dim < 1)
        throw InputError("grid screens need at least one node per axis");
    if (options.budget < 1) throw InputError("screen budget must be positive");

    const std::size_t dim = bounds.size();
    std::size_t factorial = 1;
    bool overflow = false;
    for (std::size_t d = 0; d < dim; ++d) {
        factorial *= static_cast<std::size_t>(n_per_dim);
        if (factorial > options.budget) {
            overflow = true;
            break;
        }
    }

    std::vector<std::vector<double>> scaled; // per sample, per dim in [0,1]
    if (!overflow) {
        // Full factorial grid, endpoints included.
        scaled.assign(factorial, std::vector<double>(dim, 0.5));
        for (std::size_t i = 0; i < factorial; ++i) {
            std::size_t rest = i;
            for (std::size_t d = 0; d < dim; ++d) {
                const std::size_t k =
                    rest % static_cast<std::size_t>(n_per_dim);
                rest /= static_cast<std::size_t>(n_per_dim);
                if (n_per_dim > 1)
                    scaled[i][d] = static_cast<double>(k) /
                                   static_cast<double>(n_per_dim - 1);
            }
        }
    } else {
        // Latin hypercube: one sample per stratum per axis, stratum
        // centers, axis order shuffled by the seeded generator.
        const std::size_t m = options.budget;
        scaled.assign(m, std::vector<double>(dim, 0.0));
        std::mt19937_64 rng(options.seed);
        std::vector<std::size_t> perm(m);
        for (std::size_t d = 0; d < dim; ++d) {
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            std::shuffle(perm.begin(), perm.end(), rng);
            for (std::size_t i = 0; i < m; ++i)
                scaled[i][d] = (static_cast<double>(perm[i]) + 0.5) /
                               static_cast<double>(m);
        }
    }

    ScreenResult result;
    result.bounds = bounds;
    result.samples.resize(scaled.size());
    for (std::size_t i = 0; i < scaled.size(); ++i) {
        result.samples[i].params.resize(dim);
        for (std::size_t d = 0; d < dim; ++d)
            result.samples[i].params[d] =
                scaled_to_param(bounds[d], scaled[i][d]);
    }

    const auto evaluate_range = [&](std::atomic<std::size_t>* next) {
        for (std::size_t i = (*next)++; i < result.samples.size();
             i = (*next)++)
            result.samples[i].value =
                guarded_objective(objective, result.samples[i].params);
    };
    std::atomic<std::size_t> next{0};
    const int n_threads = std::max(1, options.n_threads);
    if (n_threads == 1 || result.samples.size() < 2) {
        evaluate_range(&next);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back(evaluate_range, &next);
        for (std::thread& t : pool) t.join();
    }

    result.best = 0;
    for (std::size_t i = 1; i < result.samples.size(); ++i)
        if (result.samples[i].value < result.samples[result.best].value)
            result.best = i;
    if (result.samples[result.best].value == kInf)
        throw ComputeError("every sampled simulation in the screen failed");
    return result;
}

RefineResult local_refine(const Objective& objective,
                          const std::vector<double>& start,
                          const std::vector<ParamBounds>& bounds,
                          const RefineOptions& options) {
    objective.validate();
    validate_bounds(bounds);
    const std::size_t dim = bounds.size();
    if (start.size() != dim)
        throw InputError("refinement start has " +
                         std::to_string(start.size()) + " parameters, bounds "
                         "describe " + std::to_string(dim));
    for (std::size_t d = 0; d < dim; ++d)
        if (!(start[d] >= bounds[d].lo && start[d] <= bounds[d].hi))
            throw InputError("refinement start is outside the bounds (" +
                             bounds[d].name + ")");
    if (!(options.tol > 0) || options.max_evals < 1 || !(options.step > 0))
        throw InputError("refinement options need tol > 0, step > 0, and a "
                         "positive evaluation budget");

    struct Vertex {
        std::vector<double> x; // scaled coordinates in [0,1]^dim
        double f = 0;
    };
    RefineResult result;
    result.params = start;

    const auto clip = [](std::vector<double>* x) {
        for (double& v : *x) v = std::clamp(v, 0.0, 1.0);
    };
    const auto unscale = [&](const std::vector<double>& x) {
        std::vector<double> p(dim);
        for (std::size_t d = 0; d < dim; ++d)
            p[d] = scaled_to_param(bounds[d], x[d]);
        return p;
    };
    const auto eval = [&](const std::vector<double>& x,
                          const std::vector<double>* exact_params) {
        const std::vector<double> p = exact_params ? *exact_params
                                                   : unscale(x);
        const double f = guarded_objective(objective, p);
        ++result.n_evals;
        if (f < result.value || result.n_evals == 1) {
            result.value = f;
            result.params = p;
        }
        return f;
    };

    std::vector<Vertex> simplex(dim + 1);
    simplex[0].x.resize(dim);
    for (std::size_t d = 0; d < dim; ++d)
        simplex[0].x[d] = std::clamp(param_to_scaled(bounds[d], start[d]),
                                     0.0, 1.0);
    simplex[0].f = eval(simplex[0].x, &start);
    for (std::size_t d = 0; d < dim; ++d) {
        simplex[d + 1] = simplex[0];
        double& c = simplex[d + 1].x[d];
        c += (c + options.step <= 1.0) ? options.step : -options.step;
        clip(&simplex[d + 1].x);
        if (result.n_evals >= options.max_evals) {
            simplex[d + 1].f = kInf;
            continue;
        }
        simplex[d + 1].f = eval(simplex[d + 1].x, nullptr);
    }

    while (result.n_evals < options.max_evals) {
        std::sort(simplex.begin(), simplex.end(),
                  [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
        result.trace.push_back(result.value);

        double diameter = 0;
        for (std::size_t i = 1; i < simplex.size(); ++i)
            for (std::size_t d = 0; d < dim; ++d)
                diameter = std::max(
                    diameter, std::abs(simplex[i].x[d] - simplex[0].x[d]));
        if (diameter < options.tol) {
            result.converged = true;
            break;
        }

        std::vector<double> centroid(dim, 0.0);
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t d = 0; d < dim; ++d)
                centroid[d] += simplex[i].x[d] / static_cast<double>(dim);
        Vertex& worst = simplex[dim];

        const auto along = [&](double coeff) {
            std::vector<double> x(dim);
            for (std::size_t d = 0; d < dim; ++d)
                x[d] = centroid[d] + coeff * (centroid[d] - worst.x[d]);
            clip(&x);
            return x;
        };

        Vertex reflected{along(1.0), 0};
        reflected.f = eval(reflected.x, nullptr);
        if (reflected.f < simplex[0].f &&
            result.n_evals < options.max_evals) {
            Vertex expanded{along(2.0), 0};
            expanded.f = eval(expanded.x, nullptr);
            worst = expanded.f < reflected.f ? expanded : reflected;
            continue;
        }
        if (reflected.f < simplex[dim - 1].f) {
            worst = reflected;
            continue;
        }
        if (result.n_evals >= options.max_evals) break;
        const bool outside = reflected.f < worst.f;
        Vertex contracted{along(outside ? 0.5 : -0.5), 0};
        contracted.f = eval(contracted.x, nullptr);
        if (contracted.f < std::min(reflected.f, worst.f)) {
            worst = contracted;
            continue;
        }
        for (std::size_t i = 1; i <= dim; ++i) {
            for (std::size_t d = 0; d < dim; ++d)
                simplex[i].x[d] =
                    simplex[0].x[d] + 0.5 * (simplex[i].x[d] - simplex[0].x[d]);
            if (result.n_evals >= options.max_evals) {
                simplex[i].f = kInf;
                continue;
            }
            simplex[i].f = eval(simplex[i].x, nullptr);
        }
    }
    if (!result.trace.empty() || result.n_evals > 0)
        result.trace.push_back(result.value);
    return result;
}

std::vector<ModelScore> compare_models(const std::vector<ModelFit>& fits,
                                       bool use_bic) {
    if (fits.empty())
        throw InputError("model comparison needs at least one fitted model");
    for (const ModelFit& f : fits) {
        if (f.metric != Metric::Kind::sse)
            throw InputError(
                "model comparison requires the sse metric for every model; "
                "other metrics are not likelihood-commensurate");
        if (!(f.objective >= 0) || !std::isfinite(f.objective))
            throw InputError("model objective values must be finite and "
                             "nonnegative (" + f.tag + ")");
        if (f.n_params < 0)
            throw InputError("model parameter counts must be nonnegative (" +
                             f.tag + ")");
        if (f.n_data < 1)
            throw InputError("model data size must be positive (" + f.tag +
                             ")");
    }

    std::vector<ModelScore> scores(fits.size());
    for (std::size_t i = 0; i < fits.size(); ++i) {
        const double n = static_cast<double>(fits[i].n_data);
        const double penalty = use_bic
                                   ? static_cast<double>(fits[i].n_params) *
                                         std::log(n)
                                   : 2.0 * fits[i].n_params;
        scores[i].tag = fits[i].tag;
        scores[i].score = n * std::log(fits[i].objective / n) + penalty;
    }
    std::stable_sort(scores.begin(), scores.end(),
                     [](const ModelScore& a, const ModelScore& b) {
                         return a.score < b.score;
                     });
    for (ModelScore& s : scores) {
        s.delta = s.score - scores[0].score;
        s.rel_likelihood = std::exp(-s.delta / 2);
    }
    return scores;
}

} // namespace infer
} // namespace morpho
