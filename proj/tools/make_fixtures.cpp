// Regenerates the shipped data files under data/. Run from the repository
// root after changing any of the outline or growth definitions:
//
//   ./build/tools/morphokit_make_fixtures data
//
// The outputs are deterministic, so a rerun must leave the files unchanged.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "morpho/deform.hpp"
#include "morpho/geometry.hpp"
#include "morpho/growth.hpp"
#include "morpho/io.hpp"
#include "morpho/mapping.hpp"
#include "morpho/mesh.hpp"

using namespace morpho;
using geometry::Curve;
using geometry::Point2;

namespace {

Curve circle(double cx, double cy, double r, std::size_t n,
             const std::string& label) {
    Curve c;
    c.closed = true;
    c.label = label;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 2.0 * M_PI * double(i) / double(n);
        c.points.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
    }
    return c;
}

/// Egg-shaped outline with an apical bulge: a unit circle blended with a
/// smooth Gaussian bump at the top.
Curve bud_outline(std::size_t n) {
    Curve c;
    c.closed = true;
    c.label = "bud";
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 2.0 * M_PI * double(i) / double(n);
        // Wrap-aware angular distance to the apex at pi/2.
        const double d = std::atan2(std::sin(a - M_PI / 2.0),
                                    std::cos(a - M_PI / 2.0));
        const double r = 1.0 + 0.25 * std::exp(-3.0 * d * d);
        c.points.push_back({r * std::cos(a), r * std::sin(a)});
    }
    return c;
}

/// Bean-shaped outline (a gently indented oval).
Curve kidney_outline(std::size_t n) {
    Curve c;
    c.closed = true;
    c.label = "kidney";
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 2.0 * M_PI * double(i) / double(n);
        c.points.push_back({0.5 * std::cos(a) + 0.2 * std::cos(2.0 * a) - 0.1,
                            0.5 * std::sin(a)});
    }
    return c;
}

Point2 polygon_centroid(const Curve& c) {
    double area2 = 0, cx = 0, cy = 0;
    for (std::size_t i = 0; i < c.segment_count(); ++i) {
        const Point2 p = c.segment_start(i);
        const Point2 q = c.segment_end(i);
        const double w = p.cross(q);
        area2 += w;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    return {cx / (3.0 * area2), cy / (3.0 * area2)};
}

/// Radial growth of the mesh boundary about `center`: chained stages that
/// scale the outline from factor s[k] to s[k+1] over [t[k], t[k+1]].
fem::GrowthSeries radial_growth(const mesh::TriMesh& m, Point2 center,
                                const std::vector<double>& times,
                                const std::vector<double>& scales,
                                const std::string& method) {
    fem::GrowthSeries series;
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
        fem::GrowthSeries::Stage stage;
        stage.t = times[k];
        stage.field.t = times[k];
        stage.field.dt = times[k + 1] - times[k];
        stage.field.method = method;
        for (std::size_t v = 0; v < m.vertex_count(); ++v) {
            if (m.vertex_boundary_tag[v] < 0) continue;
            const Point2 radial = m.vertices[v] - center;
            stage.field.sources.push_back(center + radial * scales[k]);
            stage.field.vectors.push_back(radial *
                                          (scales[k + 1] - scales[k]));
        }
        series.stages.push_back(stage);
    }
    series.validate();
    return series;
}

int fail(const std::string& why) {
    std::cerr << "make_fixtures: " << why << "\n";
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    const std::string dir = argc > 1 ? argv[1] : "data";
    std::filesystem::create_directories(dir);
    const auto path = [&](const std::string& name) { return dir + "/" + name; };

    // Offset circles: the same outline grown and shifted, so that a plain
    // normal mapping leaves part of the target uncovered while a
    // similarity prealignment covers it completely.
    const Curve src = circle(0.0, 0.0, 1.0, 96, "stage1");
    const Curve dst = circle(0.55, 0.35, 1.3, 96, "stage2");
    io::save_curve(path("offset_circles_source.csv"), src);
    io::save_curve(path("offset_circles_target.csv"), dst);
    {
        mapping::MappingConfig cfg;
        cfg.method = "normal";
        mapping::MappingConfig pre = cfg;
        pre.prescale = true;
        const double plain =
            mapping::run_mapping_pipeline(src, dst, cfg).quality
                .unmapped_fraction;
        const double scaled =
            mapping::run_mapping_pipeline(src, dst, pre).quality
                .unmapped_fraction;
        if (!(scaled < plain))
            return fail("offset circles: prealignment does not improve "
                        "coverage (" +
                        std::to_string(scaled) + " vs " +
                        std::to_string(plain) + ")");
    }

    // Kidney-in-circle pair for direction-dependent mapping checks.
    io::save_curve(path("circle_outer.csv"), circle(0.0, 0.0, 1.0, 128, "outer"));
    io::save_curve(path("kidney_inner.csv"), kidney_outline(128));

    // Growing bud: outline, plus a boundary growth series built on the
    // exact mesh the shipped config produces (target edge length 0.15).
    const Curve bud = bud_outline(96);
    io::save_curve(path("bud_boundary.csv"), bud);
    const mesh::TriMesh mesh = mesh::triangulate(bud, {}, 0.15);
    const Point2 center = polygon_centroid(bud);
    const fem::GrowthSeries series = radial_growth(
        mesh, center, {0.0, 0.3, 0.6}, {1.0, 1.15, 1.3}, "radial");
    io::save_growth_series(path("bud_growth.json"), series);

    // The series must drive the mesh it was built on without remeshing.
    try {
        mesh::TriMesh grown = mesh;
        for (const auto& stage : series.stages)
            grown = mesh::deform(grown, stage.field, 1.0);
        grown.validate();
    } catch (const std::exception& e) {
        return fail(std::string("bud growth does not deform its mesh: ") +
                    e.what());
    }

    std::cout << "fixtures written to " << dir << "/\n";
    return 0;
}
