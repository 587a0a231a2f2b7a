#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "morpho/error.hpp"
#include "morpho/fem.hpp"
#include "morpho/growth.hpp"
#include "morpho/infer.hpp"
#include "morpho/mesh.hpp"
#include "test_helpers.hpp"

using morpho::ComputeError;
using morpho::InputError;
using morpho::fem::FieldState;
using morpho::mesh::TriMesh;
using namespace morpho::infer;

namespace {

std::shared_ptr<const TriMesh> shared(TriMesh m) {
    return std::make_shared<const TriMesh>(std::move(m));
}

/// Nodal field built by evaluating f at every vertex.
FieldState nodal_field(std::shared_ptr<const TriMesh> mesh,
                       const std::function<double(double, double)>& f) {
    FieldState st;
    st.n_species = 1;
    st.c.resize(mesh->vertex_count());
    for (std::size_t v = 0; v < mesh->vertex_count(); ++v)
        st.c[v] = f(mesh->vertices[v].x, mesh->vertices[v].y);
    st.mesh = std::move(mesh);
    return st;
}

/// Wraps a plain nonnegative function of the parameters as an objective:
/// the runner returns a uniform field of value sqrt(f) on the unit square,
/// compared against zero with the integral metric, so the objective value
/// equals f exactly (the square has unit area).
Objective synthetic(std::function<double(const std::vector<double>&)> f) {
    auto m = shared(testutil::structured_square(2));
    Objective obj;
    obj.datasets.push_back({FieldState::uniform(m, {0.0}), Metric{}, 1.0});
    obj.run = [m, f = std::move(f)](const std::vector<double>& p) {
        return FieldState::uniform(m, {std::sqrt(f(p))});
    };
    return obj;
}

double rosenbrock(const std::vector<double>& p) {
    const double x = p[0], y = p[1];
    return 100.0 * (y - x * x) * (y - x * x) + (1 - x) * (1 - x);
}

} // namespace

TEST_CASE("metrics quantify differences between fields") {
    auto mesh = shared(testutil::structured_square(9));

    SUBCASE("identical fields are at distance zero under every metric") {
        FieldState a = nodal_field(mesh, [](double x, double y) {
            return std::sin(3 * x) + y;
        });
        for (Metric::Kind kind :
             {Metric::Kind::sse, Metric::Kind::normalized_correlation,
              Metric::Kind::threshold_overlap}) {
            Metric m;
            m.kind = kind;
            CHECK(evaluate_metric(a, a, m) < 1e-12);
        }
    }

    SUBCASE("the integral metric reproduces hand-computed integrals") {
        FieldState zero = FieldState::uniform(mesh, {0.0});
        FieldState flat = FieldState::uniform(mesh, {0.3});
        Metric sse;
        CHECK(std::abs(evaluate_metric(flat, zero, sse) - 0.09) < 1e-12);

        // The squared integral of c(x, y) = x over the unit square is 1/3,
        // and piecewise-linear quadrature is exact for it.
        FieldState ramp = nodal_field(mesh, [](double x, double) {
            return x;
        });
        CHECK(std::abs(evaluate_metric(ramp, zero, sse) - 1.0 / 3.0) < 1e-12);

        Metric halved = sse;
        halved.scale = 2.0;
        CHECK(std::abs(evaluate_metric(flat, zero, halved) - 0.09 / 4) <
              1e-12);
    }

    SUBCASE("correlation distance ignores affine rescaling") {
        FieldState a = nodal_field(mesh, [](double x, double y) {
            return x + 0.5 * y;
        });
        FieldState b = a;
        for (double& c : b.c) c = 2.0 * c + 3.0;
        Metric corr;
        corr.kind = Metric::Kind::normalized_correlation;
        CHECK(evaluate_metric(a, b, corr) < 1e-12);
        Metric sse;
        CHECK(evaluate_metric(a, b, sse) > 1.0);
    }

    SUBCASE("overlap distance measures the Jaccard index of regions") {
        // Region {x < 1/2} against region {1/4 < x < 3/4}: both have area
        // 1/2 and intersect on 1/4, so the Jaccard index is 1/3.
        FieldState a = nodal_field(mesh, [](double x, double) {
            return 1.0 - x;
        });
        FieldState b = nodal_field(mesh, [](double x, double) {
            return 1.0 - 2.0 * std::abs(x - 0.5);
        });
        Metric overlap;
        overlap.kind = Metric::Kind::threshold_overlap;
        overlap.threshold = 0.5;
        CHECK(std::abs(evaluate_metric(a, b, overlap) - 2.0 / 3.0) < 1e-12);

        // Disjoint regions {x < 1/4} and {x > 3/4} are at full distance.
        FieldState left = nodal_field(mesh, [](double x, double) {
            return 1.0 - 2.0 * x;
        });
        FieldState right = nodal_field(mesh, [](double x, double) {
            return 2.0 * x - 1.0;
        });
        CHECK(std::abs(evaluate_metric(left, right, overlap) - 1.0) < 1e-12);

        // Nothing above the threshold: identical empty regions.
        Metric high = overlap;
        high.threshold = 5.0;
        CHECK(evaluate_metric(a, b, high) == 0.0);
    }

    SUBCASE("all metrics are symmetric") {
        std::mt19937_64 rng(99);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        FieldState a = nodal_field(mesh, [&](double, double) {
            return u(rng);
        });
        FieldState b = nodal_field(mesh, [&](double, double) {
            return u(rng);
        });
        for (Metric::Kind kind :
             {Metric::Kind::sse, Metric::Kind::normalized_correlation,
              Metric::Kind::threshold_overlap}) {
            Metric m;
            m.kind = kind;
            CHECK(std::abs(evaluate_metric(a, b, m) -
                           evaluate_metric(b, a, m)) < 1e-12);
        }
    }

    SUBCASE("a target on a different mesh is interpolated") {
        auto fine = shared(testutil::structured_square(13));
        const auto linear = [](double x, double y) {
            return 2.0 * x + 3.0 * y + 1.0;
        };
        FieldState sim = nodal_field(fine, linear);
        FieldState target = nodal_field(mesh, linear);
        Metric sse;
        CHECK(evaluate_metric(sim, target, sse) < 1e-20);
    }

    SUBCASE("species mismatches and bad metrics are rejected") {
        FieldState one = FieldState::uniform(mesh, {1.0});
        FieldState two = FieldState::uniform(mesh, {1.0, 2.0});
        CHECK_THROWS_AS(evaluate_metric(one, two, Metric{}), InputError);
        Metric bad;
        bad.scale = 0.0;
        CHECK_THROWS_AS(evaluate_metric(one, one, bad), InputError);
    }
}

TEST_CASE("parameter screens sweep grids and Latin hypercubes") {
    SUBCASE("a quadratic objective is minimized at the grid point on it") {
        Objective obj = synthetic([](const std::vector<double>& p) {
            return (p[0] - 1.0) * (p[0] - 1.0);
        });
        std::vector<ParamBounds> bounds(1);
        bounds[0].lo = 0.0;
        bounds[0].hi = 2.0;
        ScreenResult r = grid_screen(obj, bounds, 11);
        REQUIRE(r.samples.size() == 11);
        CHECK(r.samples[r.best].params[0] == 1.0);
        CHECK(r.samples[r.best].value < 1e-28);
        for (const ScreenResult::Sample& s : r.samples)
            CHECK(s.value >= r.samples[r.best].value);
    }

    SUBCASE("log-scaled bounds sample at decade multiples") {
        Objective obj = synthetic([](const std::vector<double>& p) {
            return (p[0] - 1.0) * (p[0] - 1.0);
        });
        std::vector<ParamBounds> bounds(1);
        bounds[0].lo = 1e-3;
        bounds[0].hi = 1e1;
        bounds[0].scale = ParamBounds::Scale::log;
        ScreenResult r = grid_screen(obj, bounds, 5);
        REQUIRE(r.samples.size() == 5);
        const double expect[] = {1e-3, 1e-2, 1e-1, 1.0, 10.0};
        for (int i = 0; i < 5; ++i)
            CHECK(std::abs(r.samples[i].params[0] - expect[i]) <
                  1e-12 * expect[i]);
        CHECK(std::abs(r.samples[r.best].params[0] - 1.0) < 1e-12);
    }

    SUBCASE("oversized factorials fall back to a Latin hypercube") {
        Objective obj = synthetic([](const std::vector<double>& p) {
            return p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        });
        std::vector<ParamBounds> bounds(3);
        for (ParamBounds& b : bounds) {
            b.lo = 0.0;
            b.hi = 1.0;
        }
        ScreenOptions opt;
        opt.budget = 50;
        opt.seed = 4;
        ScreenResult r = grid_screen(obj, bounds, 10, opt);
        REQUIRE(r.samples.size() == 50); // 1000 nodes exceed the budget

        // One sample per stratum per axis is the design's defining trait.
        for (int d = 0; d < 3; ++d) {
            std::set<int> strata;
            for (const ScreenResult::Sample& s : r.samples)
                strata.insert(static_cast<int>(s.params[d] * 50.0));
            CHECK(strata.size() == 50);
        }

        ScreenResult again = grid_screen(obj, bounds, 10, opt);
        REQUIRE(again.samples.size() == r.samples.size());
        for (std::size_t i = 0; i < r.samples.size(); ++i) {
            CHECK(again.samples[i].params == r.samples[i].params);
            CHECK(again.samples[i].value == r.samples[i].value);
        }

        ScreenOptions reseeded = opt;
        reseeded.seed = 5;
        ScreenResult other = grid_screen(obj, bounds, 10, reseeded);
        bool any_differ = false;
        for (std::size_t i = 0; i < r.samples.size(); ++i)
            if (other.samples[i].params != r.samples[i].params)
                any_differ = true;
        CHECK(any_differ);
    }

    SUBCASE("failed simulations are kept at infinite objective") {
        Objective obj = synthetic([](const std::vector<double>& p) {
            if (p[0] < 0.5) throw std::runtime_error("simulation diverged");
            return p[0];
        });
        std::vector<ParamBounds> bounds(1);
        bounds[0].lo = 0.0;
        bounds[0].hi = 1.0;
        ScreenResult r = grid_screen(obj, bounds, 11);
        int failed = 0;
        for (const ScreenResult::Sample& s : r.samples)
            if (std::isinf(s.value)) ++failed;
        CHECK(failed == 5); // parameters 0.0 through 0.4
        CHECK(std::isfinite(r.samples[r.best].value));
        CHECK(std::abs(r.samples[r.best].params[0] - 0.5) < 1e-12);

        Objective doomed = synthetic([](const std::vector<double>&) -> double {
            throw std::runtime_error("always fails");
        });
        CHECK_THROWS_AS(grid_screen(doomed, bounds, 5), ComputeError);
    }

    SUBCASE("concurrent evaluation matches the serial result exactly") {
        Objective obj = synthetic([](const std::vector<double>& p) {
            return std::sin(5 * p[0]) * std::sin(5 * p[0]) +
                   (p[1] - 0.3) * (p[1] - 0.3);
        });
        std::vector<ParamBounds> bounds(2);
        for (ParamBounds& b : bounds) {
            b.lo = 0.0;
            b.hi = 1.0;
        }
        ScreenResult serial = grid_screen(obj, bounds, 7);
        ScreenOptions opt;
        opt.n_threads = 4;
        ScreenResult parallel = grid_screen(obj, bounds, 7, opt);
        REQUIRE(parallel.samples.size() == serial.samples.size());
        for (std::size_t i = 0; i < serial.samples.size(); ++i) {
            CHECK(parallel.samples[i].params == serial.samples[i].params);
            CHECK(parallel.samples[i].value == serial.samples[i].value);
        }
        CHECK(parallel.best == serial.best);
    }
}

TEST_CASE("simplex refinement descends to nearby minima") {
    std::vector<ParamBounds> box(2);
    for (ParamBounds& b : box) {
        b.lo = -2.0;
        b.hi = 2.0;
    }

    SUBCASE("a quadratic bowl is solved to high accuracy") {
        Objective obj = synthetic([](const std::vector<double>& p) {
            return (p[0] - 1.0) * (p[0] - 1.0) +
                   (p[1] - 1.0) * (p[1] - 1.0);
        });
        RefineResult r = local_refine(obj, {2.0, 2.0}, box);
        CHECK(r.converged);
        CHECK(std::abs(r.params[0] - 1.0) < 1e-4);
        CHECK(std::abs(r.params[1] - 1.0) < 1e-4);
        CHECK(r.value < 1e-8);
        for (std::size_t i = 1; i < r.trace.size(); ++i)
            CHECK(r.trace[i] <= r.trace[i - 1]);
    }

    SUBCASE("the banana valley is followed within the evaluation budget") {
        Objective obj = synthetic(rosenbrock);
        RefineOptions opt;
        opt.max_evals = 2000;
        RefineResult r = local_refine(obj, {-1.2, 1.0}, box, opt);
        CHECK(r.value < 1e-3);
        CHECK(r.n_evals <= 2000);
        CHECK(r.value <= rosenbrock({-1.2, 1.0}));
    }

    SUBCASE("starting at the optimum returns it unchanged") {
        Objective obj = synthetic([](const std::vector<double>& p) {
            return (p[0] - 1.0) * (p[0] - 1.0) +
                   (p[1] - 1.0) * (p[1] - 1.0);
        });
        RefineResult r = local_refine(obj, {1.0, 1.0}, box);
        CHECK(r.params[0] == 1.0);
        CHECK(r.params[1] == 1.0);
        CHECK(r.value == 0.0);
    }

    SUBCASE("minima on the boundary are reached by clipping") {
        Objective obj = synthetic([](const std::vector<double>& p) {
            return p[0];
        });
        std::vector<ParamBounds> bounds(1);
        bounds[0].lo = 0.2;
        bounds[0].hi = 1.0;
        RefineResult r = local_refine(obj, {0.5}, bounds);
        CHECK(std::abs(r.params[0] - 0.2) < 1e-3);
    }

    SUBCASE("an exhausted budget returns the best point unconverged") {
        Objective obj = synthetic(rosenbrock);
        RefineOptions opt;
        opt.max_evals = 5;
        RefineResult r = local_refine(obj, {-1.2, 1.0}, box, opt);
        CHECK(!r.converged);
        CHECK(r.n_evals <= 5);
        CHECK(r.value <= rosenbrock({-1.2, 1.0}) + 1e-12);
    }

    SUBCASE("starts outside the bounds are rejected") {
        Objective obj = synthetic(rosenbrock);
        CHECK_THROWS_AS(local_refine(obj, {-3.0, 0.0}, box), InputError);
        CHECK_THROWS_AS(local_refine(obj, {0.0}, box), InputError);
    }
}

TEST_CASE("information criteria rank competing models") {
    SUBCASE("equal fits favor the model with fewer parameters") {
        std::vector<ModelFit> fits(2);
        fits[0] = {"complex", 10.0, 4, 50, Metric::Kind::sse};
        fits[1] = {"simple", 10.0, 2, 50, Metric::Kind::sse};
        std::vector<ModelScore> r = compare_models(fits);
        REQUIRE(r.size() == 2);
        CHECK(r[0].tag == "simple");
        CHECK(r[0].delta == 0.0);
        CHECK(r[0].rel_likelihood == 1.0);
        CHECK(std::abs(r[1].delta - 4.0) < 1e-12);
        CHECK(std::abs(r[1].rel_likelihood - std::exp(-2.0)) < 1e-12);
    }

    SUBCASE("a fit improvement exactly offsetting the penalty ties") {
        // With n data points, adding two parameters is neutral when the
        // objective shrinks by the factor exp(-4 / n).
        const double n = 100.0;
        std::vector<ModelFit> fits(2);
        fits[0] = {"small", 2.0, 2, 100, Metric::Kind::sse};
        fits[1] = {"large", 2.0 * std::exp(-4.0 / n), 4, 100,
                   Metric::Kind::sse};
        std::vector<ModelScore> r = compare_models(fits);
        CHECK(std::abs(r[0].score - r[1].score) < 1e-9);
    }

    SUBCASE("a single model ranks first trivially") {
        std::vector<ModelScore> r =
            compare_models({{"only", 3.0, 2, 40, Metric::Kind::sse}});
        REQUIRE(r.size() == 1);
        CHECK(r[0].delta == 0.0);
        CHECK(r[0].rel_likelihood == 1.0);
    }

    SUBCASE("rescaling all objectives together preserves the ranking") {
        std::vector<ModelFit> fits(3);
        fits[0] = {"a", 3.0, 1, 77, Metric::Kind::sse};
        fits[1] = {"b", 5.0, 3, 77, Metric::Kind::sse};
        fits[2] = {"c", 1.0, 6, 77, Metric::Kind::sse};
        std::vector<ModelScore> before = compare_models(fits);
        for (ModelFit& f : fits) f.objective *= 7.3;
        std::vector<ModelScore> after = compare_models(fits);
        REQUIRE(after.size() == before.size());
        for (std::size_t i = 0; i < before.size(); ++i)
            CHECK(after[i].tag == before[i].tag);
    }

    SUBCASE("a perfect fit dominates outright") {
        std::vector<ModelFit> fits(2);
        fits[0] = {"other", 1.0, 2, 10, Metric::Kind::sse};
        fits[1] = {"perfect", 0.0, 2, 10, Metric::Kind::sse};
        std::vector<ModelScore> r = compare_models(fits);
        CHECK(r[0].tag == "perfect");
        CHECK(r[1].rel_likelihood == 0.0);
    }

    SUBCASE("non-commensurate metrics are rejected") {
        std::vector<ModelFit> fits(2);
        fits[0] = {"a", 1.0, 2, 10, Metric::Kind::sse};
        fits[1] = {"b", 1.0, 2, 10, Metric::Kind::normalized_correlation};
        CHECK_THROWS_AS(compare_models(fits), InputError);
    }

    SUBCASE("the sample-size penalty variant is available") {
        std::vector<ModelFit> fits(2);
        fits[0] = {"complex", 10.0, 4, 100, Metric::Kind::sse};
        fits[1] = {"simple", 10.0, 2, 100, Metric::Kind::sse};
        std::vector<ModelScore> r = compare_models(fits, true);
        CHECK(r[0].tag == "simple");
        CHECK(std::abs(r[1].delta - 2.0 * std::log(100.0)) < 1e-12);
    }
}

TEST_CASE("screening then refining recovers generating parameters") {
    using namespace morpho::fem;
    auto mesh = shared(testutil::structured_square(17));
    const BoundaryCondition bc;

    // Forward model: kinetics parameters (a, b), everything else fixed,
    // deterministic seeded initial noise, short transient toward pattern
    // onset so the final field varies smoothly with the parameters.
    const auto run_model = [&](const std::vector<double>& p) {
        ReactionModel model = schnakenberg(p[0], p[1], 200.0, 1.0, 40.0);
        Schedule sched;
        sched.t_end = 0.1;
        sched.dt = 2e-3;
        sched.stride = 1000000;
        FieldState init = noisy_uniform(mesh, {1.0, 0.9}, 0.01, 5);
        return simulate(model, bc, init, sched).back();
    };

    const std::vector<double> truth = {0.1, 0.9};
    Objective obj;
    obj.datasets.push_back({run_model(truth), Metric{}, 1.0});
    obj.run = run_model;

    // Rerunning the generating parameters reproduces the data exactly.
    CHECK(evaluate_objective(obj, truth) < 1e-12);

    // The generating point lies strictly between grid nodes on both axes.
    std::vector<ParamBounds> bounds(2);
    bounds[0] = {"a", 0.05, 0.17, ParamBounds::Scale::linear};
    bounds[1] = {"b", 0.70, 1.06, ParamBounds::Scale::linear};

    ScreenOptions opt;
    opt.n_threads = 4;
    ScreenResult screen = grid_screen(obj, bounds, 7, opt);
    REQUIRE(screen.samples.size() == 49);
    const std::vector<double>& coarse = screen.samples[screen.best].params;
    CHECK(std::abs(coarse[0] - truth[0]) <= 0.02 + 1e-12); // one cell
    CHECK(std::abs(coarse[1] - truth[1]) <= 0.06 + 1e-12);

    RefineOptions ropt;
    ropt.max_evals = 400;
    ropt.tol = 1e-5;
    RefineResult fit = local_refine(obj, coarse, bounds, ropt);
    CHECK(fit.value <= screen.samples[screen.best].value);
    CHECK(std::abs(fit.params[0] - truth[0]) < 0.05 * truth[0]);
    CHECK(std::abs(fit.params[1] - truth[1]) < 0.05 * truth[1]);
}
