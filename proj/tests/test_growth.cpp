#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "morpho/deform.hpp"
#include "morpho/error.hpp"
#include "morpho/fem.hpp"
#include "morpho/growth.hpp"
#include "morpho/mesh.hpp"
#include "test_helpers.hpp"

using morpho::ComputeError;
using morpho::InputError;
using morpho::geometry::Point2;
using morpho::geometry::Vec2;
using morpho::mapping::DisplacementField;
using morpho::mesh::TriMesh;
using namespace morpho::fem;

namespace {

std::shared_ptr<const TriMesh> shared(TriMesh m) {
    return std::make_shared<const TriMesh>(std::move(m));
}

double mesh_area(const TriMesh& m) {
    double a = 0;
    for (std::size_t t = 0; t < m.triangle_count(); ++t)
        a += m.triangle_area(t);
    return a;
}

double total_mass(const FieldState& st, int species = 0) {
    const FemMatrices mats = assemble(*st.mesh);
    const std::size_t nv = st.mesh->vertex_count();
    Eigen::Map<const Eigen::VectorXd> c(st.c.data() + species * nv, nv);
    return (mats.mass * c).sum();
}

/// Displacement field sampled at the mesh's boundary vertices.
DisplacementField boundary_field(const TriMesh& m,
                                 const std::function<Vec2(Point2)>& f,
                                 double t = 0, double dt = 1) {
    DisplacementField out;
    out.t = t;
    out.dt = dt;
    for (std::size_t v = 0; v < m.vertex_count(); ++v) {
        if (m.vertex_boundary_tag[v] < 0) continue;
        out.sources.push_back(m.vertices[v]);
        out.vectors.push_back(f(m.vertices[v]));
    }
    return out;
}

ReactionModel no_reaction(std::vector<double> D) {
    ReactionModel m;
    m.n_species = static_cast<int>(D.size());
    m.D = std::move(D);
    m.kinetics = "custom";
    m.custom_rate = [](const std::vector<double>& c) {
        return std::vector<double>(c.size(), 0.0);
    };
    return m;
}

/// Largest real part over the two eigenvalues of J - k^2 diag(D) for the
/// linearized Schnakenberg kinetics at its homogeneous steady state.
double schnakenberg_growth_rate(double a, double b, double gamma, double Du,
                                double Dv, double k2) {
    const double u = a + b, v = b / ((a + b) * (a + b));
    const double fu = gamma * (2 * u * v - 1), fv = gamma * u * u;
    const double gu = -gamma * 2 * u * v, gv = -gamma * u * u;
    const double a11 = fu - k2 * Du, a22 = gv - k2 * Dv;
    const double tr = a11 + a22, det = a11 * a22 - fv * gu;
    const double disc = tr * tr / 4 - det;
    if (disc >= 0) return tr / 2 + std::sqrt(disc);
    return tr / 2;
}

} // namespace

TEST_CASE("mesh deformation follows the boundary field") {
    TriMesh disk = morpho::mesh::triangulate(testutil::circle(128, 1.0), {},
                                             0.05);

    SUBCASE("zero step fraction returns the mesh unchanged") {
        DisplacementField f = boundary_field(disk, [](Point2 p) {
            return Vec2{p.x, p.y};
        });
        TriMesh out = morpho::mesh::deform(disk, f, 0.0);
        REQUIRE(out.vertex_count() == disk.vertex_count());
        for (std::size_t v = 0; v < disk.vertex_count(); ++v) {
            CHECK(out.vertices[v].x == disk.vertices[v].x);
            CHECK(out.vertices[v].y == disk.vertices[v].y);
        }
    }

    SUBCASE("a zero field moves nothing") {
        DisplacementField f =
            boundary_field(disk, [](Point2) { return Vec2{0, 0}; });
        TriMesh out = morpho::mesh::deform(disk, f, 1.0);
        for (std::size_t v = 0; v < disk.vertex_count(); ++v)
            CHECK(morpho::geometry::dist(out.vertices[v], disk.vertices[v]) <
                  1e-12);
    }

    SUBCASE("a uniform field translates rigidly") {
        DisplacementField f =
            boundary_field(disk, [](Point2) { return Vec2{0.7, -0.3}; });
        TriMesh out = morpho::mesh::deform(disk, f, 1.0);
        for (std::size_t v = 0; v < disk.vertex_count(); ++v) {
            CHECK(std::abs(out.vertices[v].x - disk.vertices[v].x - 0.7) <
                  1e-10);
            CHECK(std::abs(out.vertices[v].y - disk.vertices[v].y + 0.3) <
                  1e-10);
        }
    }

    SUBCASE("unit radial motion of the unit circle doubles every radius") {
        DisplacementField f = boundary_field(disk, [](Point2 p) {
            return Vec2{p.x, p.y}; // unit outward motion at radius one
        });
        TriMesh out = morpho::mesh::deform(disk, f, 1.0);
        for (std::size_t v = 0; v < disk.vertex_count(); ++v) {
            const double r0 = disk.vertices[v].norm();
            const double r1 = out.vertices[v].norm();
            CHECK(std::abs(r1 - 2 * r0) < 2e-2); // contract bound
            CHECK(std::abs(r1 - 2 * r0) < 1e-9); // linear data is exact
        }
        CHECK(std::abs(mesh_area(out) - 4 * mesh_area(disk)) <
              1e-8 * mesh_area(disk));
        out.validate(); // conformity and orientation preserved
        REQUIRE(out.triangles == disk.triangles);
        CHECK(out.boundary_edges == disk.boundary_edges);
        CHECK(out.boundary_names == disk.boundary_names);
    }

    SUBCASE("interior motion matches the continuum harmonic extension") {
        // Boundary displacement eps (cos 2t, sin 2t) on the unit circle
        // extends harmonically to eps r^2 (cos 2t, sin 2t) on the disk.
        const double eps = 0.05;
        DisplacementField f = boundary_field(disk, [&](Point2 p) {
            const double th = std::atan2(p.y, p.x);
            return Vec2{eps * std::cos(2 * th), eps * std::sin(2 * th)};
        });
        TriMesh out = morpho::mesh::deform(disk, f, 1.0);
        for (std::size_t v = 0; v < disk.vertex_count(); ++v) {
            const Point2 p = disk.vertices[v];
            const double r2 = p.norm2();
            const double th = std::atan2(p.y, p.x);
            const Vec2 expect{eps * r2 * std::cos(2 * th),
                              eps * r2 * std::sin(2 * th)};
            const Vec2 got = out.vertices[v] - p;
            CHECK(morpho::geometry::dist(got, expect) < 5e-3);
        }
    }

    SUBCASE("vertex positions are linear in the step fraction") {
        DisplacementField f = boundary_field(disk, [](Point2 p) {
            const double th = std::atan2(p.y, p.x);
            return Vec2{0.3 * p.x + 0.1 * std::cos(2 * th), 0.3 * p.y};
        });
        TriMesh half = morpho::mesh::deform(disk, f, 0.5);
        TriMesh full = morpho::mesh::deform(disk, f, 1.0);
        for (std::size_t v = 0; v < disk.vertex_count(); ++v) {
            const Point2 mid{(disk.vertices[v].x + full.vertices[v].x) / 2,
                             (disk.vertices[v].y + full.vertices[v].y) / 2};
            CHECK(morpho::geometry::dist(half.vertices[v], mid) < 1e-9);
        }
    }

    SUBCASE("unmatched boundary vertices are rejected") {
        DisplacementField f = boundary_field(disk, [](Point2) {
            return Vec2{0.1, 0};
        });
        for (Point2& p : f.sources) p.x += 0.5; // sources off the boundary
        try {
            morpho::mesh::deform(disk, f, 1.0);
            FAIL("expected an InputError for unmatched boundary vertices");
        } catch (const InputError& err) {
            CHECK(std::string(err.what()).find("displacement sample") !=
                  std::string::npos);
        }
    }

    SUBCASE("inverting motion is rejected with remeshing advice") {
        DisplacementField f = boundary_field(disk, [](Point2 p) {
            return Vec2{-1.5 * p.x, 0.0}; // folds the disk across x = 0
        });
        try {
            morpho::mesh::deform(disk, f, 1.0);
            FAIL("expected a ComputeError for inverted triangles");
        } catch (const ComputeError& err) {
            CHECK(std::string(err.what()).find("remesh") != std::string::npos);
        }
    }

    SUBCASE("step fractions outside [0, 1] are rejected") {
        DisplacementField f =
            boundary_field(disk, [](Point2) { return Vec2{0, 0}; });
        CHECK_THROWS_AS(morpho::mesh::deform(disk, f, -0.1), InputError);
        CHECK_THROWS_AS(morpho::mesh::deform(disk, f, 1.5), InputError);
    }
}

TEST_CASE("growth series interpolate boundary motion in time") {
    auto make_field = [](std::vector<Point2> src, Vec2 v, double t,
                         double dt) {
        DisplacementField f;
        f.sources = std::move(src);
        f.vectors.assign(f.sources.size(), v);
        f.t = t;
        f.dt = dt;
        return f;
    };
    const std::vector<Point2> base = {{0, 0}, {1, 0}, {2, 0}};

    SUBCASE("windows interpolate within and across stages") {
        GrowthSeries g;
        g.stages.push_back({0.0, make_field(base, {1, 0}, 0.0, 1.0)});
        std::vector<Point2> moved = {{1, 0}, {2, 0}, {3, 0}};
        g.stages.push_back({1.0, make_field(moved, {0, 2}, 1.0, 1.0)});
        g.validate();
        CHECK(g.t_begin() == 0.0);
        CHECK(g.t_end() == 2.0);
        CHECK(g.covers(0.0, 2.0));
        CHECK(!g.covers(-0.5, 1.0));
        CHECK(!g.covers(1.0, 2.5));

        DisplacementField w = g.window(0.5, 1.5);
        REQUIRE(w.sources.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(std::abs(w.sources[i].x - (base[i].x + 0.5)) < 1e-12);
            CHECK(std::abs(w.sources[i].y - 0.0) < 1e-12);
            CHECK(std::abs(w.vectors[i].x - 0.5) < 1e-12);
            CHECK(std::abs(w.vectors[i].y - 1.0) < 1e-12);
        }
        CHECK(w.t == 0.5);
        CHECK(w.dt == 1.0);
    }

    SUBCASE("the boundary holds still inside a gap") {
        GrowthSeries g;
        g.stages.push_back({0.0, make_field(base, {1, 0}, 0.0, 1.0)});
        std::vector<Point2> moved = {{1, 0}, {2, 0}, {3, 0}};
        g.stages.push_back({2.0, make_field(moved, {0, 1}, 2.0, 1.0)});
        g.validate();
        DisplacementField still = g.window(1.2, 1.8);
        for (const Vec2& v : still.vectors) CHECK(v.norm() < 1e-12);
        DisplacementField w = g.window(0.5, 2.5);
        for (const Vec2& v : w.vectors) {
            CHECK(std::abs(v.x - 0.5) < 1e-12);
            CHECK(std::abs(v.y - 0.5) < 1e-12);
        }
    }

    SUBCASE("inconsistent series are rejected") {
        GrowthSeries overlap;
        overlap.stages.push_back({0.0, make_field(base, {1, 0}, 0.0, 1.0)});
        overlap.stages.push_back({0.5, make_field(base, {1, 0}, 0.5, 1.0)});
        CHECK_THROWS_AS(overlap.validate(), InputError);

        GrowthSeries broken_chain;
        broken_chain.stages.push_back(
            {0.0, make_field(base, {1, 0}, 0.0, 1.0)});
        std::vector<Point2> off = {{1.01, 0}, {2, 0}, {3, 0}};
        broken_chain.stages.push_back({1.0, make_field(off, {0, 1}, 1.0, 1.0)});
        CHECK_THROWS_AS(broken_chain.validate(), InputError);

        GrowthSeries count_mismatch;
        count_mismatch.stages.push_back(
            {0.0, make_field(base, {1, 0}, 0.0, 1.0)});
        std::vector<Point2> fewer = {{1, 0}, {2, 0}};
        count_mismatch.stages.push_back(
            {1.0, make_field(fewer, {0, 1}, 1.0, 1.0)});
        CHECK_THROWS_AS(count_mismatch.validate(), InputError);

        GrowthSeries ok;
        ok.stages.push_back({0.0, make_field(base, {1, 0}, 0.0, 1.0)});
        CHECK_THROWS_AS(ok.window(0.5, 1.5), InputError); // beyond the span
    }
}

TEST_CASE("moving-mesh steps conserve mass and dilute concentrations") {
    SUBCASE("doubling the area halves a transported concentration") {
        auto disk = shared(
            morpho::mesh::triangulate(testutil::circle(128, 1.0), {}, 0.05));
        const double k = std::sqrt(2.0) - 1.0; // radius 1 -> sqrt(2)
        GrowthSeries g;
        g.stages.push_back(
            {0.0, boundary_field(*disk, [&](Point2 p) {
                 return Vec2{k * p.x, k * p.y};
             })});

        ReactionModel model = no_reaction({0.0});
        BoundaryCondition bc;
        FieldState st = FieldState::uniform(disk, {1.0});
        const double m0 = total_mass(st);
        const double a0 = mesh_area(*disk);

        const double dt = 0.05;
        for (int i = 0; i < 20; ++i) st = step_rd_growing(st, model, bc, g, dt);

        CHECK(std::abs(st.t - 1.0) < 1e-12);
        const double a1 = mesh_area(*st.mesh);
        CHECK(std::abs(a1 - 2 * a0) < 1e-9 * a0);
        for (std::size_t v = 0; v < st.mesh->vertex_count(); ++v) {
            CHECK(std::abs(st.mesh->vertices[v].norm() -
                           std::sqrt(2.0) * disk->vertices[v].norm()) < 1e-9);
            CHECK(std::abs(st.c[v] - 0.5) < 1e-9); // uniform dilution
        }
        CHECK(std::abs(total_mass(st) - m0) < 1e-10 * m0);
    }

    SUBCASE("a zero growth series reproduces the static step") {
        auto mesh = shared(testutil::structured_square(17));
        ReactionModel model = schnakenberg(0.1, 0.9, 10.0, 1.0, 40.0);
        BoundaryCondition bc;
        bc.entries = {BoundaryCondition::dirichlet("left", 0, 1.0),
                      BoundaryCondition::neumann("right", 0, 0.2),
                      BoundaryCondition::robin("top", 1, 0.5, 0.3)};
        FieldState st = noisy_uniform(mesh, {1.0, 0.9}, 0.05, 3);

        const double dt = 0.01;
        FieldState ref = step_rd(st, model, bc, dt);

        GrowthSeries zero;
        zero.stages.push_back(
            {0.0, boundary_field(*mesh, [](Point2) { return Vec2{0, 0}; },
                                 0.0, dt)});
        FieldState grown = step_rd_growing(st, model, bc, zero, dt);
        REQUIRE(grown.c.size() == ref.c.size());
        for (std::size_t i = 0; i < ref.c.size(); ++i)
            CHECK(std::abs(grown.c[i] - ref.c[i]) < 1e-12);
        for (std::size_t v = 0; v < mesh->vertex_count(); ++v)
            CHECK(morpho::geometry::dist(grown.mesh->vertices[v],
                                         mesh->vertices[v]) < 1e-15);

        GrowthSeries empty;
        FieldState degen = step_rd_growing(st, model, bc, empty, dt);
        for (std::size_t i = 0; i < ref.c.size(); ++i)
            CHECK(degen.c[i] == ref.c[i]);
    }

    SUBCASE("production on an exponentially stretching strip matches a "
            "method-of-lines reference") {
        auto strip = shared(testutil::structured_rect(41, 5, 1.0, 0.1));
        const double g_rate = std::log(2.0); // area doubles per unit time
        const double t_end = 3.0;
        const int n_stages = 48;

        // Original x-coordinates drive the stretch; capture them per sample.
        std::vector<Point2> base;
        for (std::size_t v = 0; v < strip->vertex_count(); ++v)
            if (strip->vertex_boundary_tag[v] >= 0)
                base.push_back(strip->vertices[v]);

        GrowthSeries series;
        for (int s = 0; s < n_stages; ++s) {
            const double ta = t_end * s / n_stages;
            const double tb = t_end * (s + 1) / n_stages;
            const double ga = std::exp(g_rate * ta);
            const double gb = std::exp(g_rate * tb);
            DisplacementField f;
            f.t = ta;
            f.dt = tb - ta;
            for (const Point2& p : base) {
                f.sources.push_back({p.x * ga, p.y});
                f.vectors.push_back({p.x * (gb - ga), 0.0});
            }
            series.stages.push_back({ta, std::move(f)});
        }
        series.validate();

        const double p = 2.0, k_decay = 1.0;
        ReactionModel model;
        model.n_species = 1;
        model.D = {0.01};
        model.kinetics = "custom";
        model.custom_rate = [&](const std::vector<double>& c) {
            return std::vector<double>{p - k_decay * c[0]};
        };
        BoundaryCondition bc;

        Schedule sched;
        sched.t_end = t_end;
        sched.dt = 0.005;
        sched.stride = 100;
        std::vector<FieldState> traj =
            simulate(model, bc, FieldState::uniform(strip, {0.0}), sched,
                     &series);
        const FieldState& last = traj.back();
        CHECK(std::abs(last.t - t_end) < 1e-9);

        double fem_mean = 0;
        for (double c : last.c) fem_mean += c;
        fem_mean /= static_cast<double>(last.c.size());

        // Reference: Lagrangian finite-volume cells on the same piecewise-
        // linear stretch, integrated with RK4 at a much finer step.
        const auto gamma_pl = [&](double t) {
            const double span = t_end / n_stages;
            int s = std::clamp(static_cast<int>(t / span), 0, n_stages - 1);
            const double ta = span * s, tb = span * (s + 1);
            const double ga = std::exp(g_rate * ta);
            const double gb = std::exp(g_rate * tb);
            return ga + (gb - ga) * (t - ta) / (tb - ta);
        };
        const auto gamma_rate = [&](double t) {
            const double span = t_end / n_stages;
            int s = std::clamp(static_cast<int>(t / span), 0, n_stages - 1);
            const double ta = span * s, tb = span * (s + 1);
            return (std::exp(g_rate * tb) - std::exp(g_rate * ta)) /
                   (tb - ta);
        };
        const int n_cells = 200;
        std::vector<double> c_ref(n_cells, 0.0), k1(n_cells), k2(n_cells),
            k3(n_cells), k4(n_cells), tmp(n_cells);
        const double dx0 = 1.0 / n_cells;
        auto rhs = [&](double t, const std::vector<double>& c,
                       std::vector<double>* out) {
            const double dil = gamma_rate(t) / gamma_pl(t);
            const double dx = dx0 * gamma_pl(t);
            for (int i = 0; i < n_cells; ++i) {
                const double left = c[std::max(i - 1, 0)];
                const double right = c[std::min(i + 1, n_cells - 1)];
                (*out)[i] = p - k_decay * c[i] - dil * c[i] +
                            model.D[0] * (left - 2 * c[i] + right) / (dx * dx);
            }
        };
        const double h = 1e-4;
        for (double t = 0; t < t_end - 1e-12; t += h) {
            rhs(t, c_ref, &k1);
            for (int i = 0; i < n_cells; ++i)
                tmp[i] = c_ref[i] + h / 2 * k1[i];
            rhs(t + h / 2, tmp, &k2);
            for (int i = 0; i < n_cells; ++i)
                tmp[i] = c_ref[i] + h / 2 * k2[i];
            rhs(t + h / 2, tmp, &k3);
            for (int i = 0; i < n_cells; ++i) tmp[i] = c_ref[i] + h * k3[i];
            rhs(t + h, tmp, &k4);
            for (int i = 0; i < n_cells; ++i)
                c_ref[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        }
        double ref_mean = 0;
        for (double c : c_ref) ref_mean += c;
        ref_mean /= n_cells;

        CHECK(std::abs(fem_mean - ref_mean) < 2e-2 * ref_mean);
        const double c_star = p / (k_decay + g_rate);
        CHECK(std::abs(fem_mean - c_star) < 5e-2 * c_star);
    }

    SUBCASE("motion that folds the mesh advises substepping") {
        auto square = shared(testutil::structured_square(9));
        GrowthSeries g;
        g.stages.push_back(
            {0.0, boundary_field(*square, [](Point2 q) {
                 return Vec2{1.5 * (1.0 - q.x), 0.0}; // left overtakes right
             })});
        ReactionModel model = no_reaction({0.1});
        BoundaryCondition bc;
        FieldState st = FieldState::uniform(square, {1.0});
        try {
            step_rd_growing(st, model, bc, g, 1.0);
            FAIL("expected a ComputeError for a folded mesh");
        } catch (const ComputeError& err) {
            CHECK(std::string(err.what()).find("substep") != std::string::npos);
        }
    }

    SUBCASE("steps outside the series span are rejected") {
        auto square = shared(testutil::structured_square(5));
        GrowthSeries g;
        g.stages.push_back(
            {0.0, boundary_field(*square,
                                 [](Point2) { return Vec2{0.01, 0}; })});
        ReactionModel model = no_reaction({0.1});
        BoundaryCondition bc;
        FieldState st = FieldState::uniform(square, {1.0});
        st.t = 0.9;
        CHECK_THROWS_AS(step_rd_growing(st, model, bc, g, 0.2), InputError);
    }
}

TEST_CASE("the simulation driver runs schedules, growth, and equilibration") {
    SUBCASE("a zero-length schedule returns only the initial state") {
        auto mesh = shared(testutil::structured_square(9));
        ReactionModel model = no_reaction({1.0});
        BoundaryCondition bc;
        FieldState init = FieldState::uniform(mesh, {0.7});
        Schedule sched;
        sched.t_end = 0.0;
        std::vector<FieldState> traj = simulate(model, bc, init, sched);
        REQUIRE(traj.size() == 1);
        CHECK(traj[0].c == init.c);
        CHECK(traj[0].t == init.t);
    }

    SUBCASE("the stride controls which frames are recorded") {
        auto mesh = shared(testutil::structured_square(9));
        ReactionModel model = no_reaction({1.0});
        BoundaryCondition bc;
        FieldState init = FieldState::uniform(mesh, {0.7});
        Schedule sched;
        sched.t_end = 0.10;
        sched.dt = 0.01;
        sched.stride = 3;
        std::vector<FieldState> traj = simulate(model, bc, init, sched);
        REQUIRE(traj.size() == 5); // initial + steps 3, 6, 9, 10
        CHECK(std::abs(traj[1].t - 0.03) < 1e-12);
        CHECK(std::abs(traj[2].t - 0.06) < 1e-12);
        CHECK(std::abs(traj[3].t - 0.09) < 1e-12);
        CHECK(std::abs(traj[4].t - 0.10) < 1e-12);
    }

    SUBCASE("pre-equilibration settles to the kinetic fixed point") {
        auto mesh = shared(testutil::structured_square(9));
        ReactionModel model;
        model.n_species = 1;
        model.D = {1.0};
        model.kinetics = "custom";
        model.custom_rate = [](const std::vector<double>& c) {
            return std::vector<double>{1.0 - c[0]};
        };
        BoundaryCondition bc;
        FieldState init = FieldState::uniform(mesh, {0.2});
        Schedule sched;
        sched.t_end = 0.0;
        sched.dt = 0.1;
        sched.equilibrate = true;
        sched.equilibrate_tol = 1e-10;
        std::vector<FieldState> traj = simulate(model, bc, init, sched);
        REQUIRE(traj.size() == 1);
        CHECK(traj[0].t == init.t); // equilibration consumes no model time
        for (double c : traj[0].c) CHECK(std::abs(c - 1.0) < 1e-9);
    }

    SUBCASE("trajectories are deterministic for a fixed seed") {
        auto mesh = shared(testutil::structured_square(17));
        ReactionModel model = schnakenberg(0.1, 0.9, 200.0, 1.0, 40.0);
        BoundaryCondition bc;
        Schedule sched;
        sched.t_end = 0.05;
        sched.dt = 2.5e-3;
        FieldState a0 = noisy_uniform(mesh, {1.0, 0.9}, 0.01, 11);
        FieldState b0 = noisy_uniform(mesh, {1.0, 0.9}, 0.01, 11);
        CHECK(a0.c == b0.c);
        std::vector<FieldState> ta = simulate(model, bc, a0, sched);
        std::vector<FieldState> tb = simulate(model, bc, b0, sched);
        REQUIRE(ta.size() == tb.size());
        CHECK(ta.back().c == tb.back().c);
        FieldState c0 = noisy_uniform(mesh, {1.0, 0.9}, 0.01, 12);
        CHECK(c0.c != a0.c);
    }

    SUBCASE("growth hands over to static stepping when the series ends") {
        auto disk = shared(
            morpho::mesh::triangulate(testutil::circle(96, 1.0), {}, 0.08));
        const double k = std::sqrt(2.0) - 1.0;
        GrowthSeries g;
        DisplacementField f = boundary_field(*disk, [&](Point2 p) {
            return Vec2{k * p.x, k * p.y};
        });
        f.dt = 0.5;
        g.stages.push_back({0.0, f});

        ReactionModel model = no_reaction({0.1});
        BoundaryCondition bc;
        FieldState init = FieldState::uniform(disk, {1.0});
        const double m0 = total_mass(init);

        Schedule sched;
        sched.t_end = 1.0;
        sched.dt = 0.025;
        sched.stride = 4;
        std::vector<FieldState> traj = simulate(model, bc, init, sched, &g);
        REQUIRE(traj.size() == 11); // initial + every 4th of 40 steps

        const FieldState& last = traj.back();
        CHECK(std::abs(last.t - 1.0) < 1e-9);
        CHECK(std::abs(mesh_area(*last.mesh) - 2 * mesh_area(*disk)) <
              1e-6 * mesh_area(*disk));
        CHECK(std::abs(total_mass(last) - m0) < 1e-9 * m0);
        double mean = 0;
        for (double c : last.c) mean += c;
        mean /= static_cast<double>(last.c.size());
        CHECK(std::abs(mean - 0.5) < 1e-6);
        // Area stops growing once the series is exhausted.
        for (const FieldState& fr : traj)
            if (fr.t > 0.5 + 1e-9)
                CHECK(std::abs(mesh_area(*fr.mesh) - 2 * mesh_area(*disk)) <
                      1e-6 * mesh_area(*disk));
    }
}

TEST_CASE("patterns emerge inside the predicted instability band") {
    auto mesh = shared(testutil::structured_square(33));
    const double a = 0.1, b = 0.9, gamma = 200.0, Du = 1.0, Dv = 40.0;
    BoundaryCondition bc;
    Schedule sched;
    sched.t_end = 1.5;
    sched.dt = 2e-3;
    sched.stride = 1000000; // only the final frame matters

    SUBCASE("an unstable diffusion ratio forms a banded pattern") {
        ReactionModel model = schnakenberg(a, b, gamma, Du, Dv);
        FieldState init = noisy_uniform(mesh, {a + b, b / ((a + b) * (a + b))},
                                        0.01, 7);
        std::vector<FieldState> traj = simulate(model, bc, init, sched);
        const FieldState& last = traj.back();
        const std::size_t nv = mesh->vertex_count();

        double mean = 0;
        for (std::size_t v = 0; v < nv; ++v) mean += last.c[v];
        mean /= static_cast<double>(nv);
        double var = 0;
        for (std::size_t v = 0; v < nv; ++v)
            var += (last.c[v] - mean) * (last.c[v] - mean);
        var /= static_cast<double>(nv);
        CHECK(std::sqrt(var) > 0.02); // a pattern actually formed

        // Project the activator onto cos(m pi x) cos(n pi y) modes and
        // check the dominant wavenumber sits in the unstable band.
        const FemMatrices mats = assemble(*mesh);
        Eigen::VectorXd w = mats.mass * Eigen::VectorXd::Ones(nv);
        double best = 0;
        int best_m = 0, best_n = 0;
        for (int m = 0; m <= 6; ++m)
            for (int n = 0; n <= 6; ++n) {
                if (m == 0 && n == 0) continue;
                double num = 0, den = 0;
                for (std::size_t v = 0; v < nv; ++v) {
                    const Point2 p = mesh->vertices[v];
                    const double phi = std::cos(m * M_PI * p.x) *
                                       std::cos(n * M_PI * p.y);
                    num += w[static_cast<Eigen::Index>(v)] *
                           (last.c[v] - mean) * phi;
                    den += w[static_cast<Eigen::Index>(v)] * phi * phi;
                }
                const double amp = std::abs(num / den);
                if (amp > best) {
                    best = amp;
                    best_m = m;
                    best_n = n;
                }
            }
        const double k2 = (best_m * best_m + best_n * best_n) * M_PI * M_PI;
        CHECK(schnakenberg_growth_rate(a, b, gamma, Du, Dv, k2) > 0.0);
    }

    SUBCASE("a sub-threshold diffusion ratio stays homogeneous") {
        const double Dv_low = 5.0;
        double worst = -1e300;
        for (double k2 = 0.25; k2 <= 400.0; k2 += 0.25)
            worst = std::max(
                worst, schnakenberg_growth_rate(a, b, gamma, Du, Dv_low, k2));
        REQUIRE(worst < 0.0); // the oracle confirms no unstable mode

        ReactionModel model = schnakenberg(a, b, gamma, Du, Dv_low);
        FieldState init = noisy_uniform(mesh, {a + b, b / ((a + b) * (a + b))},
                                        0.01, 7);
        Schedule quick = sched;
        quick.t_end = 0.5;
        std::vector<FieldState> traj = simulate(model, bc, init, quick);
        const FieldState& last = traj.back();
        const std::size_t nv = mesh->vertex_count();
        double mean = 0;
        for (std::size_t v = 0; v < nv; ++v) mean += last.c[v];
        mean /= static_cast<double>(nv);
        double var = 0;
        for (std::size_t v = 0; v < nv; ++v)
            var += (last.c[v] - mean) * (last.c[v] - mean);
        var /= static_cast<double>(nv);
        CHECK(var < 1e-6 * mean * mean);
    }
}

TEST_CASE("seeded noisy fields perturb a uniform baseline") {
    auto mesh = shared(testutil::structured_square(9));

    SUBCASE("zero amplitude reproduces the uniform field") {
        FieldState st = noisy_uniform(mesh, {2.0, 0.5}, 0.0, 42);
        FieldState ref = FieldState::uniform(mesh, {2.0, 0.5});
        CHECK(st.c == ref.c);
    }

    SUBCASE("values stay inside the relative amplitude") {
        FieldState st = noisy_uniform(mesh, {2.0}, 0.1, 42);
        bool any_off = false;
        for (double c : st.c) {
            CHECK(c >= 2.0 * 0.9 - 1e-12);
            CHECK(c <= 2.0 * 1.1 + 1e-12);
            if (std::abs(c - 2.0) > 1e-6) any_off = true;
        }
        CHECK(any_off);
    }

    SUBCASE("negative amplitudes are rejected") {
        CHECK_THROWS_AS(noisy_uniform(mesh, {1.0}, -0.1, 1), InputError);
    }
}
