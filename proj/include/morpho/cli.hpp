#ifndef MORPHO_CLI_HPP
#define MORPHO_CLI_HPP

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace morpho {
namespace cli {

/// Shared run context assembled by run_cli: the directory every output is
/// written under, the effective random seed, and the worker-thread cap.
/// Precedence for each value: the MORPHOKIT_SEED environment variable (seed
/// only) beats command-line flags, which beat the JSON config, which beats
/// the built-in default.
struct RunContext {
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    int jobs = 1;
};

// Each command is an ordinary function over an already-merged option
// struct, so tests can drive it directly; run_cli only parses, merges, and
// dispatches. Progress goes to `out`; errors are thrown (InputError for
// bad input, ComputeError for failed computations) and mapped to exit
// codes by run_cli. Every command writes `<name>_manifest.json` into the
// output directory.

/// Threshold segmentation of a grayscale image into labeled curves, one
/// CSV per extracted contour.
struct SegmentOptions {
    std::string input;                   // PGM image
    std::vector<std::string> thresholds; // "LO:HI" or "LO:HI:LABEL"
    double blur = 0;                     // Gaussian sigma in pixels, 0 = off
    std::size_t points = 0;              // resample each contour, 0 = keep
};
int cmd_segment(const SegmentOptions& opt, const RunContext& ctx,
                std::ostream& out);

/// Displacement field between two stage outlines.
struct MapOptions {
    std::string source; // curve CSV at the earlier stage
    std::string target; // curve CSV at the later stage
    std::string method = "auto";
    bool prescale = false;
    std::size_t samples = 128;
    double t = 0;
    double dt = 1;
    std::string output = "displacement.csv"; // name under the output dir
    bool svg = false;                        // also plot the field
};
int cmd_map(const MapOptions& opt, const RunContext& ctx, std::ostream& out);

/// Triangulation of a boundary curve (or quality check of an existing
/// mesh with --check-only).
struct MeshOptions {
    std::string boundary;             // outer curve CSV
    std::vector<std::string> inner;   // hole / interface curve CSVs
    std::vector<std::string> regions; // "LABEL:X:Y" seed points
    double h = 1.0;                   // target maximum edge length
    std::string output = "mesh.msh";  // name under the output dir
    bool check_only = false;
    std::string input;          // existing mesh to check
    double gradient_length = 0; // 0 = derive from h (build) / skip (check)
    double gradient_factor = 5.0;
};
int cmd_mesh(const MeshOptions& opt, const RunContext& ctx, std::ostream& out);

/// Reaction-diffusion run on a static or growing mesh, configured by the
/// "simulate" section of the JSON config; one CSV frame per recorded step.
struct SimulateOptions {
    std::string config_path; // required
    std::optional<std::string> mesh;
    std::optional<std::string> growth;
    std::optional<double> t_end;
    std::optional<double> dt;
    std::optional<std::size_t> stride;
    bool svg = false; // heatmap per recorded frame
    int svg_species = 0;
};
int cmd_simulate(const SimulateOptions& opt, const RunContext& ctx,
                 std::ostream& out);

/// Parameter screen + local refinement against a target frame, configured
/// by the "fit" section (forward model from the "simulate" section).
struct FitOptions {
    std::string config_path; // required
    std::optional<int> screen;
    std::optional<bool> refine;
    bool use_bic = false;
};
int cmd_fit(const FitOptions& opt, const RunContext& ctx, std::ostream& out);

/// Static SVG plot of a curve, displacement, mesh, or trajectory frame;
/// the input kind is recognized from the file itself.
struct PlotOptions {
    std::string input;
    std::string mesh; // topology, needed for frame heatmaps
    int species = 0;
    std::string output; // default: input stem + ".svg"
};
int cmd_plot(const PlotOptions& opt, const RunContext& ctx, std::ostream& out);

/// Parses argv, merges the JSON config (command-line flags win; the
/// MORPHOKIT_SEED environment variable wins over both for the seed),
/// dispatches to the subcommand, and maps errors to exit codes:
/// 0 success, 1 computational failure, 2 usage or input error.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

} // namespace cli
} // namespace morpho

#endif
