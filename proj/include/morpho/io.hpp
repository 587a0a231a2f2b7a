#ifndef MORPHO_IO_HPP
#define MORPHO_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "morpho/fem.hpp"
#include "morpho/geometry.hpp"
#include "morpho/growth.hpp"
#include "morpho/infer.hpp"
#include "morpho/mapping.hpp"

namespace morpho {
namespace io {

/// Library version stamped into run manifests.
const char* version();

/// Doubles in CSV files are written with 17 significant digits so they
/// round-trip exactly.
std::string format_double(double v);

/// FNV-1a 64-bit hash, used to fingerprint configurations in manifests.
std::uint64_t fnv1a64(const std::string& text);

/// Path of the JSON sidecar that accompanies a data file: the extension is
/// replaced by ".json" (appended when there is none).
std::string sidecar_path(const std::string& path);

// --- curves ------------------------------------------------------------
// CSV with header "x,y", one point per row. Closedness and label travel in
// the sidecar: { "closed": bool, "label": str, "units": "um" }.

void save_curve(const std::string& csv_path, const geometry::Curve& curve);
geometry::Curve load_curve(const std::string& csv_path);

// --- displacement fields -----------------------------------------------
// CSV with header "x,y,dx,dy", one sample per row. Timing and provenance
// travel in the sidecar: { "t": num, "dt": num, "method": str }.

void save_displacement(const std::string& csv_path,
                       const mapping::DisplacementField& field);
mapping::DisplacementField load_displacement(const std::string& csv_path);

// --- growth series ------------------------------------------------------
// Single JSON document: { "stages": [ { "t", "dt", "method", "sources":
// [[x, y], ...], "vectors": [[dx, dy], ...] }, ... ] }.

void save_growth_series(const std::string& json_path,
                        const fem::GrowthSeries& series);
fem::GrowthSeries load_growth_series(const std::string& json_path);

// --- trajectory frames --------------------------------------------------
// One CSV per frame with header "vertex_id,x,y,c_0,..,c_{n-1}". The frame
// stores the (possibly grown) vertex positions; connectivity comes from the
// mesh file referenced by the run manifest.

void save_frame(const std::string& csv_path, const fem::FieldState& state);

/// Rebuilds a field state from a frame CSV: `topology` supplies the
/// connectivity and labels, the frame supplies positions and values.
fem::FieldState load_frame(const std::string& csv_path,
                           const mesh::TriMesh& topology, double t = 0);

// --- run manifests ------------------------------------------------------

struct RunManifest {
    std::string command;
    std::string tool_version;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    double wall_time_s = 0;
    std::vector<double> times;        // frame times, when the run has them
    std::vector<std::string> outputs; // files the run wrote
};

void save_manifest(const std::string& json_path, const RunManifest& manifest);
RunManifest load_manifest(const std::string& json_path);

// --- parameter screens --------------------------------------------------
// CSV with one row per sample: named parameter columns (falling back to
// p0, p1, ...) plus a final "objective" column.

void save_screen(const std::string& csv_path,
                 const infer::ScreenResult& screen);

// --- SVG plots ----------------------------------------------------------
// Static, self-contained SVG files; content is fit into the viewport with
// preserved aspect ratio and the y axis pointing up.

struct SvgOptions {
    double width = 640;
    double height = 480;
    double margin = 24;
};

void svg_curves(const std::string& path,
                const std::vector<geometry::Curve>& curves,
                const SvgOptions& options = {});

/// Curves for context plus one line glyph per displacement sample.
void svg_displacement(const std::string& path,
                      const mapping::DisplacementField& field,
                      const std::vector<geometry::Curve>& context = {},
                      const SvgOptions& options = {});

/// Flat-shaded per-triangle heatmap of one species, scaled to the field's
/// min and max.
void svg_heatmap(const std::string& path, const fem::FieldState& state,
                 int species = 0, const SvgOptions& options = {});

/// Mesh wireframe: every edge drawn once, boundary edges emphasized.
void svg_mesh(const std::string& path, const mesh::TriMesh& mesh,
              const SvgOptions& options = {});

} // namespace io
} // namespace morpho

#endif
