#include "morpho/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>

#include "morpho/error.hpp"
#include "morpho/growth.hpp"
#include "morpho/infer.hpp"
#include "morpho/ingest.hpp"
#include "morpho/io.hpp"
#include "morpho/mapping.hpp"
#include "morpho/mesh.hpp"

namespace morpho {
namespace cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// --- config plumbing ----------------------------------------------------

json read_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open config " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("config " + path + ": " + e.what());
    }
}

template <typename T>
T jget(const json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError("config key \"" + key +
                         "\" is missing or has the wrong type");
    }
}

template <typename T>
T jval(const json& j, const std::string& key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError("config key \"" + key + "\" has the wrong type");
    }
}

json section(const json& cfg, const std::string& name) {
    if (!cfg.contains(name)) return json::object();
    if (!cfg.at(name).is_object())
        throw InputError("config section \"" + name + "\" must be an object");
    return cfg.at(name);
}

/// Paths inside a config file are taken relative to the config file's
/// directory; absolute paths and flag-given paths pass through unchanged.
std::string resolve(const std::string& base_dir, const std::string& path) {
    if (path.empty() || base_dir.empty() || fs::path(path).is_absolute())
        return path;
    return (fs::path(base_dir) / path).string();
}

std::string dir_of(const std::string& path) {
    return fs::path(path).parent_path().string();
}

/// All outputs land under the run's output directory; names must not
/// escape it.
std::string out_path(const RunContext& ctx, const std::string& name) {
    if (name.empty()) throw InputError("empty output name");
    if (fs::path(name).is_absolute() ||
        name.find("..") != std::string::npos)
        throw InputError("output name \"" + name +
                         "\" must be relative to the output directory");
    fs::path full = fs::path(ctx.output_dir) / name;
    fs::create_directories(full.parent_path());
    return full.string();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
}

void finish_manifest(const RunContext& ctx, io::RunManifest& manifest,
                     std::chrono::steady_clock::time_point start) {
    manifest.tool_version = io::version();
    manifest.seed = ctx.seed;
    manifest.wall_time_s = seconds_since(start);
    save_manifest(out_path(ctx, manifest.command + "_manifest.json"),
                  manifest);
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : text) {
        if (ch == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    parts.push_back(cur);
    return parts;
}

double parse_number(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw InputError(what + ": \"" + text + "\" is not a number");
}

ingest::ThresholdInterval parse_threshold(const std::string& text,
                                          int& anonymous) {
    const std::vector<std::string> parts = split(text, ':');
    if (parts.size() != 2 && parts.size() != 3)
        throw InputError("threshold \"" + text +
                         "\" must be LO:HI or LO:HI:LABEL");
    ingest::ThresholdInterval interval;
    interval.lo = parse_number(parts[0], "threshold");
    interval.hi = parse_number(parts[1], "threshold");
    interval.label = parts.size() == 3 && !parts[2].empty()
                         ? parts[2]
                         : "region" + std::to_string(anonymous++);
    return interval;
}

mesh::RegionSeed parse_region(const std::string& text) {
    const std::vector<std::string> parts = split(text, ':');
    if (parts.size() != 3 || parts[0].empty())
        throw InputError("region seed \"" + text + "\" must be LABEL:X:Y");
    mesh::RegionSeed seed;
    seed.label = parts[0];
    seed.point.x = parse_number(parts[1], "region seed");
    seed.point.y = parse_number(parts[2], "region seed");
    return seed;
}

std::string frame_name(std::size_t index, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04zu.%s", index, ext);
    return buf;
}

// --- model construction from the "simulate" section ---------------------

fem::ReactionModel model_from_config(const json& sec) {
    fem::ReactionModel model;
    model.kinetics = jval<std::string>(sec, "kinetics", "");
    if (model.kinetics.empty() || model.kinetics == "custom")
        throw InputError(
            "config key \"kinetics\" must name built-in kinetics "
            "(schnakenberg, gierer_meinhardt, ligand_receptor_turing)");
    model.D = jget<std::vector<double>>(sec, "diffusion");
    model.n_species = static_cast<int>(model.D.size());
    model.params = jval<std::map<std::string, double>>(sec, "params", {});
    model.validate();
    return model;
}

fem::BoundaryCondition bc_from_config(const json& sec) {
    fem::BoundaryCondition bc;
    if (!sec.contains("bc")) return bc;
    if (!sec.at("bc").is_array())
        throw InputError("config key \"bc\" must be an array");
    for (const json& e : sec.at("bc")) {
        const std::string boundary = jget<std::string>(e, "boundary");
        const int species = jget<int>(e, "species");
        const std::string kind = jget<std::string>(e, "kind");
        if (kind == "dirichlet")
            bc.entries.push_back(fem::BoundaryCondition::dirichlet(
                boundary, species, jget<double>(e, "value")));
        else if (kind == "neumann")
            bc.entries.push_back(fem::BoundaryCondition::neumann(
                boundary, species, jget<double>(e, "flux")));
        else if (kind == "robin")
            bc.entries.push_back(fem::BoundaryCondition::robin(
                boundary, species, jget<double>(e, "alpha"),
                jget<double>(e, "beta")));
        else
            throw InputError("boundary condition kind \"" + kind +
                             "\" must be dirichlet, neumann, or robin");
    }
    return bc;
}

fem::Schedule schedule_from_config(const json& sec) {
    const json ss = section(sec, "schedule");
    fem::Schedule sch;
    sch.t_end = jval<double>(ss, "t_end", 0.0);
    sch.dt = jval<double>(ss, "dt", sch.dt);
    sch.stride = jval<std::size_t>(ss, "stride", sch.stride);
    sch.equilibrate = jval<bool>(ss, "equilibrate", false);
    sch.equilibrate_tol =
        jval<double>(ss, "equilibrate_tol", sch.equilibrate_tol);
    return sch;
}

json schedule_to_json(const fem::Schedule& sch) {
    return json{{"t_end", sch.t_end},
                {"dt", sch.dt},
                {"stride", sch.stride},
                {"equilibrate", sch.equilibrate},
                {"equilibrate_tol", sch.equilibrate_tol}};
}

struct SimulationSetup {
    std::shared_ptr<const mesh::TriMesh> mesh;
    fem::ReactionModel model;
    fem::BoundaryCondition bc;
    fem::Schedule schedule;
    std::vector<double> initial_values;
    double noise_amplitude = 0;
    fem::GrowthSeries growth; // empty when the domain is static
    std::string mesh_path;
    std::string growth_path;
};

/// Builds everything a simulation run needs from the "simulate" section,
/// honoring the flag overrides.
SimulationSetup load_simulation(const json& sec, const std::string& config_dir,
                                const SimulateOptions& opt) {
    SimulationSetup setup;
    setup.mesh_path = opt.mesh ? *opt.mesh
                               : resolve(config_dir,
                                         jget<std::string>(sec, "mesh"));
    setup.mesh = std::make_shared<const mesh::TriMesh>(
        mesh::load_msh(setup.mesh_path));

    setup.model = model_from_config(sec);
    setup.bc = bc_from_config(sec);
    setup.bc.validate(*setup.mesh, setup.model.n_species);

    setup.schedule = schedule_from_config(sec);
    if (opt.t_end) setup.schedule.t_end = *opt.t_end;
    if (opt.dt) setup.schedule.dt = *opt.dt;
    if (opt.stride) setup.schedule.stride = *opt.stride;

    const json init = section(sec, "initial");
    setup.initial_values = jget<std::vector<double>>(init, "values");
    setup.noise_amplitude = jval<double>(init, "noise_amplitude", 0.0);

    setup.growth_path =
        opt.growth ? *opt.growth
                   : resolve(config_dir, jval<std::string>(sec, "growth", ""));
    if (!setup.growth_path.empty()) {
        setup.growth = io::load_growth_series(setup.growth_path);
        setup.growth.validate();
    }
    return setup;
}

json canonical_simulation(const SimulationSetup& setup) {
    json canon{{"mesh", setup.mesh_path},
               {"kinetics", setup.model.kinetics},
               {"diffusion", setup.model.D},
               {"params", setup.model.params},
               {"schedule", schedule_to_json(setup.schedule)},
               {"initial",
                json{{"values", setup.initial_values},
                     {"noise_amplitude", setup.noise_amplitude}}}};
    if (!setup.growth_path.empty()) canon["growth"] = setup.growth_path;
    json bc = json::array();
    for (const auto& e : setup.bc.entries)
        bc.push_back(json{{"boundary", e.boundary},
                          {"species", e.species},
                          {"kind", e.kind},
                          {"value", e.value},
                          {"flux", e.flux},
                          {"alpha", e.alpha},
                          {"beta", e.beta}});
    canon["bc"] = bc;
    return canon;
}

void print_quality(std::ostream& out, const mesh::TriMesh& m,
                   const mesh::MeshQualityReport& q) {
    out << "mesh: " << m.vertex_count() << " vertices, " << m.triangle_count()
        << " triangles\n";
    out << "mesh: min edge ratio " << q.min_edge_ratio << ", min angle "
        << q.min_angle << " deg, max edge " << q.max_edge_length
        << ", inverted " << q.n_inverted << "\n";
    out << "mesh: quality " << (q.pass ? "PASS" : "FAIL") << "\n";
}

std::string read_first_line(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

} // namespace

// --- segment ------------------------------------------------------------

int cmd_segment(const SegmentOptions& opt, const RunContext& ctx,
                std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    if (opt.input.empty()) throw InputError("--input image is required");
    if (opt.thresholds.empty())
        throw InputError("at least one --threshold LO:HI[:LABEL] is required");

    ingest::SegmentationSpec spec;
    spec.smoothing_radius = opt.blur;
    int anonymous = 0;
    for (const std::string& text : opt.thresholds)
        spec.thresholds.push_back(parse_threshold(text, anonymous));

    const ingest::GrayImage image = ingest::load_image(opt.input);
    const ingest::LabelImage labels = ingest::segment_threshold(image, spec);

    io::RunManifest manifest;
    manifest.command = "segment";
    manifest.config_hash = io::fnv1a64(
        json{{"command", "segment"},
             {"input", opt.input},
             {"thresholds", opt.thresholds},
             {"blur", opt.blur},
             {"points", opt.points}}
            .dump());
    for (const ingest::ThresholdInterval& interval : spec.thresholds) {
        const std::vector<geometry::Curve> curves =
            ingest::extract_contours(labels, interval.label, opt.points);
        out << "segment: " << interval.label << ": " << curves.size()
            << " contour(s)\n";
        for (std::size_t k = 0; k < curves.size(); ++k) {
            const std::string name =
                interval.label + "_" + std::to_string(k) + ".csv";
            io::save_curve(out_path(ctx, name), curves[k]);
            manifest.outputs.push_back(name);
            manifest.outputs.push_back(io::sidecar_path(name));
        }
    }
    finish_manifest(ctx, manifest, start);
    return 0;
}

// --- map ----------------------------------------------------------------

int cmd_map(const MapOptions& opt, const RunContext& ctx, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    if (opt.source.empty() || opt.target.empty())
        throw InputError("--source and --target curves are required");

    const geometry::Curve c1 = io::load_curve(opt.source);
    const geometry::Curve c2 = io::load_curve(opt.target);

    mapping::MappingConfig config;
    config.method = opt.method;
    config.prescale = opt.prescale;
    config.samples = opt.samples;
    config.t = opt.t;
    config.dt = opt.dt;
    const mapping::MappingResult result =
        mapping::run_mapping_pipeline(c1, c2, config);

    io::save_displacement(out_path(ctx, opt.output), result.field);
    out << "map: method=" << result.field.method
        << " crossings=" << result.quality.crossing_count
        << " unmapped_fraction=" << result.quality.unmapped_fraction
        << " max_stretch=" << result.quality.max_stretch << "\n";

    io::RunManifest manifest;
    manifest.command = "map";
    manifest.config_hash = io::fnv1a64(
        json{{"command", "map"},
             {"source", opt.source},
             {"target", opt.target},
             {"method", opt.method},
             {"prescale", opt.prescale},
             {"samples", opt.samples},
             {"t", opt.t},
             {"dt", opt.dt}}
            .dump());
    manifest.outputs = {opt.output, io::sidecar_path(opt.output)};
    if (opt.svg) {
        const std::string svg_name =
            fs::path(opt.output).replace_extension(".svg").string();
        io::svg_displacement(out_path(ctx, svg_name), result.field, {c1, c2});
        manifest.outputs.push_back(svg_name);
    }
    finish_manifest(ctx, manifest, start);
    return 0;
}

// --- mesh ---------------------------------------------------------------

int cmd_mesh(const MeshOptions& opt, const RunContext& ctx,
             std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    const double inf = std::numeric_limits<double>::infinity();

    if (opt.check_only) {
        if (opt.input.empty())
            throw InputError("--check-only needs --input mesh.msh");
        const mesh::TriMesh m = mesh::load_msh(opt.input);
        const double gl =
            opt.gradient_length > 0 ? opt.gradient_length : inf;
        const mesh::MeshQualityReport q =
            mesh::quality_report(m, gl, opt.gradient_factor);
        print_quality(out, m, q);
        return q.pass ? 0 : 1;
    }

    if (opt.boundary.empty())
        throw InputError("--boundary curve is required");
    if (!(opt.h > 0)) throw InputError("--h must be positive");

    const geometry::Curve outer = io::load_curve(opt.boundary);
    std::vector<geometry::Curve> inner;
    for (const std::string& path : opt.inner)
        inner.push_back(io::load_curve(path));
    std::vector<mesh::RegionSeed> seeds;
    for (const std::string& text : opt.regions)
        seeds.push_back(parse_region(text));

    std::vector<std::string> warnings;
    const mesh::TriMesh m =
        mesh::triangulate(outer, inner, opt.h, seeds, &warnings);
    for (const std::string& w : warnings) out << "mesh: warning: " << w << "\n";

    const double gl = opt.gradient_length > 0
                          ? opt.gradient_length
                          : opt.gradient_factor * opt.h;
    const mesh::MeshQualityReport q =
        mesh::quality_report(m, gl, opt.gradient_factor);
    print_quality(out, m, q);
    mesh::save_msh(out_path(ctx, opt.output), m);

    io::RunManifest manifest;
    manifest.command = "mesh";
    manifest.config_hash = io::fnv1a64(
        json{{"command", "mesh"},
             {"boundary", opt.boundary},
             {"inner", opt.inner},
             {"regions", opt.regions},
             {"h", opt.h},
             {"gradient_length", gl},
             {"gradient_factor", opt.gradient_factor}}
            .dump());
    manifest.outputs = {opt.output};
    finish_manifest(ctx, manifest, start);
    return q.pass ? 0 : 1;
}

// --- simulate -----------------------------------------------------------

int cmd_simulate(const SimulateOptions& opt, const RunContext& ctx,
                 std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    if (opt.config_path.empty())
        throw InputError("--config run.json is required");
    const json cfg = read_config(opt.config_path);
    if (!cfg.contains("simulate"))
        throw InputError("config has no \"simulate\" section");
    const SimulationSetup setup =
        load_simulation(section(cfg, "simulate"), dir_of(opt.config_path), opt);

    const fem::FieldState initial =
        fem::noisy_uniform(setup.mesh, setup.initial_values,
                           setup.noise_amplitude, ctx.seed);
    std::vector<std::string> warnings;
    const std::vector<fem::FieldState> frames =
        fem::simulate(setup.model, setup.bc, initial, setup.schedule,
                      setup.growth.empty() ? nullptr : &setup.growth,
                      &warnings);
    for (const std::string& w : warnings)
        out << "simulate: warning: " << w << "\n";

    io::RunManifest manifest;
    manifest.command = "simulate";
    manifest.config_hash = io::fnv1a64(json{{"command", "simulate"},
                                            {"config",
                                             canonical_simulation(setup)},
                                            {"seed", ctx.seed}}
                                           .dump());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const std::string name = frame_name(i, "csv");
        io::save_frame(out_path(ctx, name), frames[i]);
        manifest.outputs.push_back(name);
        manifest.times.push_back(frames[i].t);
        if (opt.svg) {
            const std::string svg = frame_name(i, "svg");
            io::svg_heatmap(out_path(ctx, svg), frames[i], opt.svg_species);
            manifest.outputs.push_back(svg);
        }
    }
    out << "simulate: " << frames.size() << " frame(s) on "
        << setup.mesh->vertex_count() << " vertices, t = " << frames.front().t
        << " .. " << frames.back().t << "\n";
    finish_manifest(ctx, manifest, start);
    return 0;
}

// --- fit ----------------------------------------------------------------

namespace {

infer::Metric metric_from_config(const json& fsec) {
    const json msec = section(fsec, "metric");
    infer::Metric metric;
    const std::string kind = jval<std::string>(msec, "kind", "sse");
    if (kind == "sse")
        metric.kind = infer::Metric::Kind::sse;
    else if (kind == "normalized_correlation")
        metric.kind = infer::Metric::Kind::normalized_correlation;
    else if (kind == "threshold_overlap")
        metric.kind = infer::Metric::Kind::threshold_overlap;
    else
        throw InputError("metric kind \"" + kind +
                         "\" must be sse, normalized_correlation, or "
                         "threshold_overlap");
    metric.scale = jval<double>(msec, "scale", 1.0);
    metric.threshold = jval<double>(msec, "threshold", 0.5);
    metric.validate();
    return metric;
}

std::vector<infer::ParamBounds> bounds_from_config(const json& fsec) {
    if (!fsec.contains("bounds") || !fsec.at("bounds").is_array() ||
        fsec.at("bounds").empty())
        throw InputError("config key \"bounds\" must be a non-empty array");
    std::vector<infer::ParamBounds> bounds;
    for (const json& b : fsec.at("bounds")) {
        infer::ParamBounds pb;
        pb.name = jget<std::string>(b, "name");
        pb.lo = jget<double>(b, "lo");
        pb.hi = jget<double>(b, "hi");
        const std::string scale = jval<std::string>(b, "scale", "linear");
        if (scale == "linear")
            pb.scale = infer::ParamBounds::Scale::linear;
        else if (scale == "log")
            pb.scale = infer::ParamBounds::Scale::log;
        else
            throw InputError("bounds scale \"" + scale +
                             "\" must be linear or log");
        pb.validate();
        bounds.push_back(pb);
    }
    return bounds;
}

/// One model variant: the base "simulate" section with this entry's
/// kinetics / params / diffusion keys replacing the base ones.
json apply_variant(const json& base, const json& variant) {
    json merged = base;
    for (const char* key : {"kinetics", "diffusion"})
        if (variant.contains(key)) merged[key] = variant.at(key);
    if (variant.contains("params")) {
        json params = jval<json>(base, "params", json::object());
        for (const auto& [k, v] : variant.at("params").items()) params[k] = v;
        merged["params"] = params;
    }
    return merged;
}

} // namespace

int cmd_fit(const FitOptions& opt, const RunContext& ctx, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    if (opt.config_path.empty())
        throw InputError("--config run.json is required");
    const json cfg = read_config(opt.config_path);
    if (!cfg.contains("fit")) throw InputError("config has no \"fit\" section");
    if (!cfg.contains("simulate"))
        throw InputError(
            "config needs a \"simulate\" section as the forward model");
    const std::string cdir = dir_of(opt.config_path);
    const json fsec = section(cfg, "fit");
    const json base = section(cfg, "simulate");

    // Target frame, loaded against its topology mesh.
    const std::string target_path =
        resolve(cdir, jget<std::string>(fsec, "target"));
    const std::string topo_path =
        resolve(cdir, jval<std::string>(fsec, "mesh",
                                        jget<std::string>(base, "mesh")));
    const mesh::TriMesh topology = mesh::load_msh(topo_path);
    const fem::FieldState target = io::load_frame(target_path, topology);

    const infer::Metric metric = metric_from_config(fsec);
    const std::vector<infer::ParamBounds> bounds = bounds_from_config(fsec);

    const int n_screen = opt.screen ? *opt.screen : jval<int>(fsec, "screen", 5);
    const bool refine =
        opt.refine ? *opt.refine : jval<bool>(fsec, "refine", true);
    infer::ScreenOptions screen_options;
    screen_options.budget = jval<std::size_t>(fsec, "budget", 10000);
    screen_options.seed = ctx.seed;
    screen_options.n_threads = ctx.jobs;
    infer::RefineOptions refine_options;
    refine_options.max_evals =
        jval<std::size_t>(fsec, "max_evals", refine_options.max_evals);
    refine_options.tol = jval<double>(fsec, "tol", refine_options.tol);

    json variants = jval<json>(fsec, "models", json::array());
    if (!variants.is_array())
        throw InputError("config key \"models\" must be an array");
    if (variants.empty()) variants.push_back(json::object());

    io::RunManifest manifest;
    manifest.command = "fit";

    struct FittedModel {
        std::string tag;
        infer::RefineResult result;
    };
    std::vector<FittedModel> fitted;
    std::vector<infer::ModelFit> fits;
    json canon_models = json::array();

    for (const json& variant : variants) {
        const json msec = apply_variant(base, variant);
        const std::string tag =
            jval<std::string>(variant, "tag",
                              jval<std::string>(msec, "kinetics", "model"));
        SimulateOptions sim_opt; // no flag overrides inside a fit
        const SimulationSetup setup = load_simulation(msec, cdir, sim_opt);
        canon_models.push_back(canonical_simulation(setup));
        for (const infer::ParamBounds& b : bounds)
            if (!setup.model.params.count(b.name))
                throw InputError("model \"" + tag +
                                 "\" has no rate parameter \"" + b.name +
                                 "\" to fit");

        infer::Objective objective;
        objective.datasets.push_back({target, metric, 1.0});
        objective.run = [setup, bounds,
                         seed = ctx.seed](const std::vector<double>& p) {
            fem::ReactionModel model = setup.model;
            for (std::size_t d = 0; d < bounds.size(); ++d)
                model.params[bounds[d].name] = p[d];
            const fem::FieldState initial =
                fem::noisy_uniform(setup.mesh, setup.initial_values,
                                   setup.noise_amplitude, seed);
            return fem::simulate(model, setup.bc, initial, setup.schedule,
                                 setup.growth.empty() ? nullptr
                                                      : &setup.growth)
                .back();
        };

        const infer::ScreenResult screen =
            infer::grid_screen(objective, bounds, n_screen, screen_options);
        const std::string screen_name = tag + "_screen.csv";
        io::save_screen(out_path(ctx, screen_name), screen);
        manifest.outputs.push_back(screen_name);

        infer::RefineResult result;
        if (refine) {
            result = infer::local_refine(
                objective, screen.samples[screen.best].params, bounds,
                refine_options);
        } else {
            result.params = screen.samples[screen.best].params;
            result.value = screen.samples[screen.best].value;
            result.n_evals = screen.samples.size();
            result.converged = true;
        }

        out << "fit: " << tag << ": objective=" << result.value;
        for (std::size_t d = 0; d < bounds.size(); ++d)
            out << " " << bounds[d].name << "=" << result.params[d];
        out << " (" << result.n_evals << " evaluation(s)"
            << (refine && !result.converged ? ", budget exhausted" : "")
            << ")\n";

        fitted.push_back({tag, result});
        fits.push_back({tag, result.value, static_cast<int>(bounds.size()),
                        setup.mesh->vertex_count(), metric.kind});
    }

    json summary;
    summary["models"] = json::array();
    for (const FittedModel& f : fitted) {
        json params = json::object();
        for (std::size_t d = 0; d < bounds.size(); ++d)
            params[bounds[d].name] = f.result.params[d];
        summary["models"].push_back(json{{"tag", f.tag},
                                         {"objective", f.result.value},
                                         {"params", params},
                                         {"converged", f.result.converged},
                                         {"n_evals", f.result.n_evals}});
    }
    std::string best_tag;
    if (metric.kind == infer::Metric::Kind::sse) {
        const std::vector<infer::ModelScore> ranking =
            infer::compare_models(fits, opt.use_bic);
        summary["ranking"] = json::array();
        for (const infer::ModelScore& s : ranking)
            summary["ranking"].push_back(
                json{{"tag", s.tag},
                     {"score", s.score},
                     {"delta", s.delta},
                     {"rel_likelihood", s.rel_likelihood}});
        best_tag = ranking.front().tag;
    } else {
        best_tag = std::min_element(fitted.begin(), fitted.end(),
                                    [](const auto& a, const auto& b) {
                                        return a.result.value < b.result.value;
                                    })
                       ->tag;
    }
    summary["best"] = best_tag;
    out << "fit: best model: " << best_tag << "\n";

    {
        std::ofstream sum(out_path(ctx, "fit_summary.json"),
                          std::ios::binary);
        sum << summary.dump(2) << "\n";
        if (!sum) throw InputError("failed writing fit_summary.json");
    }
    manifest.outputs.push_back("fit_summary.json");
    manifest.config_hash = io::fnv1a64(json{{"command", "fit"},
                                            {"target", target_path},
                                            {"topology", topo_path},
                                            {"metric", jval<json>(
                                                           fsec, "metric",
                                                           json::object())},
                                            {"bounds", jval<json>(
                                                           fsec, "bounds",
                                                           json::array())},
                                            {"screen", n_screen},
                                            {"refine", refine},
                                            {"models", canon_models},
                                            {"seed", ctx.seed}}
                                           .dump());
    finish_manifest(ctx, manifest, start);
    return 0;
}

// --- plot ---------------------------------------------------------------

int cmd_plot(const PlotOptions& opt, const RunContext& ctx,
             std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    if (opt.input.empty()) throw InputError("--input file is required");
    const std::string name =
        !opt.output.empty()
            ? opt.output
            : fs::path(opt.input).stem().string() + ".svg";

    if (fs::path(opt.input).extension() == ".msh") {
        io::svg_mesh(out_path(ctx, name), mesh::load_msh(opt.input));
    } else {
        const std::string header = read_first_line(opt.input);
        if (header == "x,y") {
            io::svg_curves(out_path(ctx, name), {io::load_curve(opt.input)});
        } else if (header == "x,y,dx,dy") {
            io::svg_displacement(out_path(ctx, name),
                                 io::load_displacement(opt.input));
        } else if (header.rfind("vertex_id,", 0) == 0) {
            if (opt.mesh.empty())
                throw InputError(
                    "frame heatmaps need --mesh for the connectivity");
            const mesh::TriMesh topology = mesh::load_msh(opt.mesh);
            io::svg_heatmap(out_path(ctx, name),
                            io::load_frame(opt.input, topology), opt.species);
        } else {
            throw InputError("unrecognized input format in " + opt.input);
        }
    }
    out << "plot: wrote " << name << "\n";

    io::RunManifest manifest;
    manifest.command = "plot";
    manifest.config_hash = io::fnv1a64(json{{"command", "plot"},
                                            {"input", opt.input},
                                            {"mesh", opt.mesh},
                                            {"species", opt.species},
                                            {"output", name}}
                                           .dump());
    manifest.outputs = {name};
    finish_manifest(ctx, manifest, start);
    return 0;
}

// --- argument parsing and dispatch --------------------------------------

namespace {

std::uint64_t env_seed_override(bool& present) {
    present = false;
    const char* text = std::getenv("MORPHOKIT_SEED");
    if (text == nullptr || *text == '\0') return 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(text, &end, 10);
    if (end == text || *end != '\0')
        throw InputError(std::string("MORPHOKIT_SEED \"") + text +
                         "\" is not an unsigned integer");
    present = true;
    return v;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
    CLI::App app{"morphokit: outline extraction, stage-to-stage displacement "
                 "fields, triangular meshing, reaction-diffusion simulation "
                 "on static or growing tissue domains, and parameter "
                 "inference"};
    app.require_subcommand(1);
    app.set_version_flag("--version", io::version());

    std::string config_path;
    RunContext ctx;
    app.add_option("-c,--config", config_path, "JSON run configuration");
    app.add_option("-o,--output-dir", ctx.output_dir,
                   "directory all outputs are written under");
    app.add_option("--seed", ctx.seed,
                   "random seed (the MORPHOKIT_SEED environment variable "
                   "wins over this)");
    app.add_option("-j,--jobs", ctx.jobs, "worker thread cap");

    SegmentOptions seg;
    CLI::App* s_seg = app.add_subcommand(
        "segment", "extract labeled outlines from a grayscale image");
    s_seg->fallthrough();
    s_seg->add_option("-i,--input", seg.input, "PGM image");
    s_seg->add_option("-t,--threshold", seg.thresholds,
                      "intensity interval LO:HI[:LABEL], repeatable");
    s_seg->add_option("--blur", seg.blur, "Gaussian pre-blur sigma in pixels");
    s_seg->add_option("--points", seg.points,
                      "resample each contour to this many points");

    MapOptions map;
    CLI::App* s_map = app.add_subcommand(
        "map", "displacement field between two stage outlines");
    s_map->fallthrough();
    s_map->add_option("-s,--source", map.source, "earlier-stage curve CSV");
    s_map->add_option("-g,--target", map.target, "later-stage curve CSV");
    s_map->add_option("-m,--method", map.method,
                      "auto | minimal_distance | uniform | normal | "
                      "reverse_normal | diffusion | reverse_diffusion | tps");
    s_map->add_flag("--prescale", map.prescale,
                    "similarity-align the source curve first");
    s_map->add_option("--samples", map.samples, "resampling density");
    s_map->add_option("--t", map.t, "field start time");
    s_map->add_option("--dt", map.dt, "field time span");
    s_map->add_option("--output", map.output, "output name");
    s_map->add_flag("--svg", map.svg, "also plot the field");

    MeshOptions msh;
    CLI::App* s_msh = app.add_subcommand(
        "mesh", "triangulate a boundary curve or check an existing mesh");
    s_msh->fallthrough();
    s_msh->add_option("-b,--boundary", msh.boundary, "outer curve CSV");
    s_msh->add_option("--inner", msh.inner,
                      "hole / interface curve CSV, repeatable");
    s_msh->add_option("--region", msh.regions,
                      "region seed LABEL:X:Y, repeatable");
    s_msh->add_option("--target-h", msh.h, "target maximum edge length");
    s_msh->add_option("--output", msh.output, "output name");
    s_msh->add_flag("--check-only", msh.check_only,
                    "report quality of an existing mesh, no output");
    s_msh->add_option("-i,--input", msh.input, "mesh to check");
    s_msh->add_option("--gradient-length", msh.gradient_length,
                      "finest expected gradient length scale");
    s_msh->add_option("--gradient-factor", msh.gradient_factor,
                      "edges must be this many times shorter");

    SimulateOptions sim;
    std::string sim_mesh, sim_growth;
    double sim_t_end = 0, sim_dt = 0;
    std::size_t sim_stride = 0;
    CLI::App* s_sim = app.add_subcommand(
        "simulate", "run reaction-diffusion on a static or growing mesh");
    s_sim->fallthrough();
    s_sim->add_option("--mesh", sim_mesh, "mesh file (overrides the config)");
    s_sim->add_option("--growth", sim_growth,
                      "growth series JSON (overrides the config)");
    s_sim->add_option("--t-end", sim_t_end, "end time (overrides the config)");
    s_sim->add_option("--dt", sim_dt, "time step (overrides the config)");
    s_sim->add_option("--stride", sim_stride,
                      "record every Nth step (overrides the config)");
    s_sim->add_flag("--svg", sim.svg, "heatmap per recorded frame");
    s_sim->add_option("--svg-species", sim.svg_species,
                      "species the heatmaps show");

    FitOptions fit;
    int fit_screen = 0;
    CLI::App* s_fit = app.add_subcommand(
        "fit", "screen and refine model parameters against a target frame");
    s_fit->fallthrough();
    s_fit->add_option("--screen", fit_screen,
                      "grid nodes per parameter (overrides the config)");
    CLI::Option* o_refine =
        s_fit->add_flag("--refine", "simplex-refine the best screen sample");
    CLI::Option* o_norefine =
        s_fit->add_flag("--no-refine", "stop after the screen");
    s_fit->add_flag("--bic", fit.use_bic,
                    "rank models by BIC instead of AIC");

    PlotOptions plot;
    CLI::App* s_plot = app.add_subcommand(
        "plot", "render a curve, displacement, mesh, or frame as SVG");
    s_plot->fallthrough();
    s_plot->add_option("-i,--input", plot.input, "file to plot");
    s_plot->add_option("--mesh", plot.mesh,
                       "mesh file supplying frame connectivity");
    s_plot->add_option("--species", plot.species, "species to show");
    s_plot->add_option("--output", plot.output, "output name");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string stage = sub->get_name();
    try {
        json cfg = json::object();
        std::string cdir;
        if (!config_path.empty()) {
            cfg = read_config(config_path);
            if (!cfg.is_object())
                throw InputError("config " + config_path +
                                 " must hold a JSON object");
            cdir = dir_of(config_path);
        }

        // Flags win over the config; MORPHOKIT_SEED wins over both.
        if (app.count("--output-dir") == 0)
            ctx.output_dir = jval<std::string>(cfg, "output_dir", "out");
        if (app.count("--seed") == 0)
            ctx.seed = jval<std::uint64_t>(cfg, "seed", 0);
        if (app.count("--jobs") == 0) ctx.jobs = jval<int>(cfg, "jobs", 1);
        bool env_present = false;
        const std::uint64_t env_seed = env_seed_override(env_present);
        if (env_present) ctx.seed = env_seed;

        int code = 0;
        if (sub == s_seg) {
            const json sec = section(cfg, "segment");
            if (!s_seg->count("--input") && sec.contains("input"))
                seg.input = resolve(cdir, jget<std::string>(sec, "input"));
            if (!s_seg->count("--threshold") && sec.contains("thresholds"))
                seg.thresholds =
                    jget<std::vector<std::string>>(sec, "thresholds");
            if (!s_seg->count("--blur"))
                seg.blur = jval<double>(sec, "blur", seg.blur);
            if (!s_seg->count("--points"))
                seg.points = jval<std::size_t>(sec, "points", seg.points);
            code = cmd_segment(seg, ctx, out);
        } else if (sub == s_map) {
            const json sec = section(cfg, "map");
            if (!s_map->count("--source") && sec.contains("source"))
                map.source = resolve(cdir, jget<std::string>(sec, "source"));
            if (!s_map->count("--target") && sec.contains("target"))
                map.target = resolve(cdir, jget<std::string>(sec, "target"));
            if (!s_map->count("--method"))
                map.method = jval<std::string>(sec, "method", map.method);
            if (!s_map->count("--prescale"))
                map.prescale = jval<bool>(sec, "prescale", map.prescale);
            if (!s_map->count("--samples"))
                map.samples = jval<std::size_t>(sec, "samples", map.samples);
            if (!s_map->count("--t")) map.t = jval<double>(sec, "t", map.t);
            if (!s_map->count("--dt")) map.dt = jval<double>(sec, "dt", map.dt);
            if (!s_map->count("--output"))
                map.output = jval<std::string>(sec, "output", map.output);
            if (!s_map->count("--svg"))
                map.svg = jval<bool>(sec, "svg", map.svg);
            code = cmd_map(map, ctx, out);
        } else if (sub == s_msh) {
            const json sec = section(cfg, "mesh");
            if (!s_msh->count("--boundary") && sec.contains("boundary"))
                msh.boundary =
                    resolve(cdir, jget<std::string>(sec, "boundary"));
            if (!s_msh->count("--inner") && sec.contains("inner"))
                for (const std::string& p :
                     jget<std::vector<std::string>>(sec, "inner"))
                    msh.inner.push_back(resolve(cdir, p));
            if (!s_msh->count("--region") && sec.contains("regions"))
                msh.regions = jget<std::vector<std::string>>(sec, "regions");
            if (!s_msh->count("--target-h"))
                msh.h = jval<double>(sec, "h", msh.h);
            if (!s_msh->count("--output"))
                msh.output = jval<std::string>(sec, "output", msh.output);
            if (!s_msh->count("--input") && sec.contains("input"))
                msh.input = resolve(cdir, jget<std::string>(sec, "input"));
            if (!s_msh->count("--gradient-length"))
                msh.gradient_length =
                    jval<double>(sec, "gradient_length", msh.gradient_length);
            if (!s_msh->count("--gradient-factor"))
                msh.gradient_factor =
                    jval<double>(sec, "gradient_factor", msh.gradient_factor);
            code = cmd_mesh(msh, ctx, out);
        } else if (sub == s_sim) {
            sim.config_path = config_path;
            if (s_sim->count("--mesh")) sim.mesh = sim_mesh;
            if (s_sim->count("--growth")) sim.growth = sim_growth;
            if (s_sim->count("--t-end")) sim.t_end = sim_t_end;
            if (s_sim->count("--dt")) sim.dt = sim_dt;
            if (s_sim->count("--stride")) sim.stride = sim_stride;
            code = cmd_simulate(sim, ctx, out);
        } else if (sub == s_fit) {
            fit.config_path = config_path;
            if (s_fit->count("--screen")) fit.screen = fit_screen;
            if (o_refine->count())
                fit.refine = true;
            else if (o_norefine->count())
                fit.refine = false;
            code = cmd_fit(fit, ctx, out);
        } else if (sub == s_plot) {
            const json sec = section(cfg, "plot");
            if (!s_plot->count("--input") && sec.contains("input"))
                plot.input = resolve(cdir, jget<std::string>(sec, "input"));
            if (!s_plot->count("--mesh") && sec.contains("mesh"))
                plot.mesh = resolve(cdir, jget<std::string>(sec, "mesh"));
            if (!s_plot->count("--species"))
                plot.species = jval<int>(sec, "species", plot.species);
            if (!s_plot->count("--output"))
                plot.output = jval<std::string>(sec, "output", plot.output);
            code = cmd_plot(plot, ctx, out);
        }
        return code;
    } catch (const InputError& e) {
        err << stage << ": error: " << e.what() << "\n";
        return 2;
    } catch (const ComputeError& e) {
        err << stage << ": error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << stage << ": error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace cli
} // namespace morpho
