#include "morpho/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "morpho/error.hpp"

namespace morpho {
namespace io {

namespace {

using geometry::Curve;
using geometry::Point2;
using geometry::Vec2;
using nlohmann::json;

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw InputError("cannot open " + path + " for writing");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    return in;
}

json read_json(const std::string& path) {
    std::ifstream in = open_in(path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out = open_out(path);
    out << j.dump(2) << "\n";
    if (!out) throw InputError("failed writing " + path);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

double parse_double(const std::string& text, const std::string& path,
                    std::size_t line_no) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        while (used < text.size() && std::isspace(
                   static_cast<unsigned char>(text[used])))
            ++used;
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw InputError(path + ":" + std::to_string(line_no) +
                         ": not a number: '" + text + "'");
    }
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

/// Rows of a CSV file after validating its exact header.
std::vector<std::vector<double>> read_csv(const std::string& path,
                                          const std::string& header) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != header)
        throw InputError(path + ": expected header '" + header + "'");
    const std::size_t n_cols = split_csv(header).size();
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv(line);
        if (fields.size() != n_cols)
            throw InputError(path + ":" + std::to_string(line_no) + ": got " +
                             std::to_string(fields.size()) + " fields, need " +
                             std::to_string(n_cols));
        std::vector<double> row;
        row.reserve(n_cols);
        for (const std::string& f : fields)
            row.push_back(parse_double(f, path, line_no));
        rows.push_back(std::move(row));
    }
    return rows;
}

// --- SVG helpers --------------------------------------------------------

struct Viewport {
    double x0 = 0, y0 = 0, scale = 1; // world -> svg
    double width = 0, height = 0;
    double sx(double x) const { return (x - x0) * scale; }
    double sy(double y) const { return height - (y - y0) * scale; }
};

struct Bounds {
    double xmin = std::numeric_limits<double>::infinity();
    double xmax = -std::numeric_limits<double>::infinity();
    double ymin = std::numeric_limits<double>::infinity();
    double ymax = -std::numeric_limits<double>::infinity();
    void add(const Point2& p) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    bool valid() const { return xmin <= xmax && ymin <= ymax; }
};

Viewport fit(const Bounds& b, const SvgOptions& o) {
    Viewport v;
    v.width = o.width;
    v.height = o.height;
    const double spanx = std::max(b.xmax - b.xmin, 1e-12);
    const double spany = std::max(b.ymax - b.ymin, 1e-12);
    v.scale = std::min((o.width - 2 * o.margin) / spanx,
                       (o.height - 2 * o.margin) / spany);
    // Center the content.
    v.x0 = b.xmin - (o.width / v.scale - spanx) / 2;
    v.y0 = b.ymin - (o.height / v.scale - spany) / 2;
    return v;
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void svg_open(std::ofstream& out, const SvgOptions& o) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(o.width)
        << "\" height=\"" << num(o.height) << "\" viewBox=\"0 0 "
        << num(o.width) << " " << num(o.height) << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b"};

void svg_polyline(std::ofstream& out, const Curve& c, const Viewport& v,
                  const char* color) {
    out << (c.closed ? "<polygon" : "<polyline") << " points=\"";
    for (std::size_t i = 0; i < c.points.size(); ++i) {
        if (i) out << " ";
        out << num(v.sx(c.points[i].x)) << "," << num(v.sy(c.points[i].y));
    }
    out << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
    if (!c.label.empty()) {
        out << "><title>" << c.label << "</title>"
            << (c.closed ? "</polygon>\n" : "</polyline>\n");
    } else {
        out << "/>\n";
    }
}

/// Perceptually ordered dark-to-bright colormap (nine anchor colors,
/// linearly interpolated).
std::string heat_color(double s) {
    static const int anchors[9][3] = {
        {68, 1, 84},    {71, 44, 122},  {59, 81, 139},
        {44, 113, 142}, {33, 144, 141}, {39, 173, 129},
        {92, 200, 99},  {170, 220, 50}, {253, 231, 37}};
    s = std::clamp(s, 0.0, 1.0) * 8;
    const int i = std::min(static_cast<int>(s), 7);
    const double f = s - i;
    char buf[8];
    std::snprintf(
        buf, sizeof buf, "#%02x%02x%02x",
        static_cast<int>(std::lround(anchors[i][0] +
                                     f * (anchors[i + 1][0] - anchors[i][0]))),
        static_cast<int>(std::lround(anchors[i][1] +
                                     f * (anchors[i + 1][1] - anchors[i][1]))),
        static_cast<int>(std::lround(anchors[i][2] +
                                     f * (anchors[i + 1][2] - anchors[i][2]))));
    return buf;
}

} // namespace

const char* version() { return "0.1.0"; }

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t hash = 14695981039346656037ull;
    for (const char ch : text) {
        hash ^= static_cast<unsigned char>(ch);
        hash *= 1099511628211ull;
    }
    return hash;
}

std::string sidecar_path(const std::string& path) {
    const std::size_t dot = path.find_last_of('.');
    const std::size_t sep = path.find_last_of('/');
    if (dot == std::string::npos ||
        (sep != std::string::npos && dot < sep))
        return path + ".json";
    return path.substr(0, dot) + ".json";
}

void save_curve(const std::string& csv_path, const Curve& curve) {
    curve.validate();
    std::ofstream out = open_out(csv_path);
    out << "x,y\n";
    for (const Point2& p : curve.points)
        out << format_double(p.x) << "," << format_double(p.y) << "\n";
    if (!out) throw InputError("failed writing " + csv_path);
    json j;
    j["closed"] = curve.closed;
    j["label"] = curve.label;
    j["units"] = "um";
    write_json(sidecar_path(csv_path), j);
}

Curve load_curve(const std::string& csv_path) {
    Curve curve;
    for (const std::vector<double>& row : read_csv(csv_path, "x,y"))
        curve.points.push_back({row[0], row[1]});
    const json j = read_json(sidecar_path(csv_path));
    try {
        curve.closed = j.at("closed").get<bool>();
        curve.label = j.value("label", std::string{});
    } catch (const json::exception& e) {
        throw InputError(sidecar_path(csv_path) + ": " + e.what());
    }
    curve.validate();
    return curve;
}

void save_displacement(const std::string& csv_path,
                       const mapping::DisplacementField& field) {
    field.validate();
    std::ofstream out = open_out(csv_path);
    out << "x,y,dx,dy\n";
    for (std::size_t i = 0; i < field.sources.size(); ++i)
        out << format_double(field.sources[i].x) << ","
            << format_double(field.sources[i].y) << ","
            << format_double(field.vectors[i].x) << ","
            << format_double(field.vectors[i].y) << "\n";
    if (!out) throw InputError("failed writing " + csv_path);
    json j;
    j["t"] = field.t;
    j["dt"] = field.dt;
    j["method"] = field.method;
    write_json(sidecar_path(csv_path), j);
}

mapping::DisplacementField load_displacement(const std::string& csv_path) {
    mapping::DisplacementField field;
    for (const std::vector<double>& row : read_csv(csv_path, "x,y,dx,dy")) {
        field.sources.push_back({row[0], row[1]});
        field.vectors.push_back({row[2], row[3]});
    }
    const json j = read_json(sidecar_path(csv_path));
    try {
        field.t = j.at("t").get<double>();
        field.dt = j.at("dt").get<double>();
        field.method = j.value("method", std::string{});
    } catch (const json::exception& e) {
        throw InputError(sidecar_path(csv_path) + ": " + e.what());
    }
    field.validate();
    return field;
}

void save_growth_series(const std::string& json_path,
                        const fem::GrowthSeries& series) {
    series.validate();
    json stages = json::array();
    for (const fem::GrowthSeries::Stage& st : series.stages) {
        json s;
        s["t"] = st.t;
        s["dt"] = st.field.dt;
        s["method"] = st.field.method;
        json sources = json::array(), vectors = json::array();
        for (std::size_t i = 0; i < st.field.sources.size(); ++i) {
            sources.push_back({st.field.sources[i].x, st.field.sources[i].y});
            vectors.push_back({st.field.vectors[i].x, st.field.vectors[i].y});
        }
        s["sources"] = std::move(sources);
        s["vectors"] = std::move(vectors);
        stages.push_back(std::move(s));
    }
    json j;
    j["stages"] = std::move(stages);
    write_json(json_path, j);
}

fem::GrowthSeries load_growth_series(const std::string& json_path) {
    const json j = read_json(json_path);
    fem::GrowthSeries series;
    try {
        for (const json& s : j.at("stages")) {
            fem::GrowthSeries::Stage st;
            st.t = s.at("t").get<double>();
            st.field.t = st.t;
            st.field.dt = s.at("dt").get<double>();
            st.field.method = s.value("method", std::string{});
            for (const json& p : s.at("sources"))
                st.field.sources.push_back(
                    {p.at(0).get<double>(), p.at(1).get<double>()});
            for (const json& p : s.at("vectors"))
                st.field.vectors.push_back(
                    {p.at(0).get<double>(), p.at(1).get<double>()});
            series.stages.push_back(std::move(st));
        }
    } catch (const json::exception& e) {
        throw InputError(json_path + ": " + e.what());
    }
    series.validate();
    return series;
}

void save_frame(const std::string& csv_path, const fem::FieldState& state) {
    state.validate();
    const std::size_t nv = state.mesh->vertex_count();
    std::ofstream out = open_out(csv_path);
    out << "vertex_id,x,y";
    for (int s = 0; s < state.n_species; ++s) out << ",c_" << s;
    out << "\n";
    for (std::size_t v = 0; v < nv; ++v) {
        out << v << "," << format_double(state.mesh->vertices[v].x) << ","
            << format_double(state.mesh->vertices[v].y);
        for (int s = 0; s < state.n_species; ++s)
            out << ","
                << format_double(state.c[static_cast<std::size_t>(s) * nv + v]);
        out << "\n";
    }
    if (!out) throw InputError("failed writing " + csv_path);
}

fem::FieldState load_frame(const std::string& csv_path,
                           const mesh::TriMesh& topology, double t) {
    std::ifstream in = open_in(csv_path);
    std::string line;
    if (!std::getline(in, line))
        throw InputError(csv_path + ": empty file");
    line = strip_cr(line);
    const std::vector<std::string> head = split_csv(line);
    if (head.size() < 4 || head[0] != "vertex_id" || head[1] != "x" ||
        head[2] != "y" || head[3] != "c_0")
        throw InputError(csv_path +
                         ": expected header 'vertex_id,x,y,c_0,...'");
    const int n_species = static_cast<int>(head.size()) - 3;
    for (int s = 0; s < n_species; ++s)
        if (head[static_cast<std::size_t>(s) + 3] !=
            "c_" + std::to_string(s))
            throw InputError(csv_path + ": malformed species column '" +
                             head[static_cast<std::size_t>(s) + 3] + "'");

    const std::size_t nv = topology.vertex_count();
    mesh::TriMesh moved = topology;
    fem::FieldState state;
    state.n_species = n_species;
    state.t = t;
    state.c.assign(static_cast<std::size_t>(n_species) * nv, 0.0);
    std::size_t line_no = 1;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv(line);
        if (fields.size() != head.size())
            throw InputError(csv_path + ":" + std::to_string(line_no) +
                             ": wrong field count");
        const double id = parse_double(fields[0], csv_path, line_no);
        const std::size_t v = static_cast<std::size_t>(id);
        if (static_cast<double>(v) != id || v >= nv)
            throw InputError(csv_path + ":" + std::to_string(line_no) +
                             ": vertex_id " + fields[0] +
                             " does not fit the mesh");
        moved.vertices[v] = {parse_double(fields[1], csv_path, line_no),
                             parse_double(fields[2], csv_path, line_no)};
        for (int s = 0; s < n_species; ++s)
            state.c[static_cast<std::size_t>(s) * nv + v] = parse_double(
                fields[static_cast<std::size_t>(s) + 3], csv_path, line_no);
        ++rows;
    }
    if (rows != nv)
        throw InputError(csv_path + ": has " + std::to_string(rows) +
                         " vertices, the mesh has " + std::to_string(nv));
    moved.validate();
    state.mesh = std::make_shared<const mesh::TriMesh>(std::move(moved));
    state.validate();
    return state;
}

void save_manifest(const std::string& json_path,
                   const RunManifest& manifest) {
    json j;
    j["command"] = manifest.command;
    j["tool_version"] = manifest.tool_version;
    j["config_hash"] = manifest.config_hash;
    j["seed"] = manifest.seed;
    j["wall_time_s"] = manifest.wall_time_s;
    j["times"] = manifest.times;
    j["outputs"] = manifest.outputs;
    write_json(json_path, j);
}

RunManifest load_manifest(const std::string& json_path) {
    const json j = read_json(json_path);
    RunManifest m;
    try {
        m.command = j.at("command").get<std::string>();
        m.tool_version = j.value("tool_version", std::string{});
        m.config_hash = j.at("config_hash").get<std::uint64_t>();
        m.seed = j.value("seed", std::uint64_t{0});
        m.wall_time_s = j.value("wall_time_s", 0.0);
        m.times = j.value("times", std::vector<double>{});
        m.outputs = j.value("outputs", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw InputError(json_path + ": " + e.what());
    }
    return m;
}

void save_screen(const std::string& csv_path,
                 const infer::ScreenResult& screen) {
    std::ofstream out = open_out(csv_path);
    const std::size_t n_params =
        screen.samples.empty() ? screen.bounds.size()
                               : screen.samples.front().params.size();
    for (std::size_t d = 0; d < n_params; ++d) {
        const std::string name =
            d < screen.bounds.size() ? screen.bounds[d].name : std::string();
        out << (name.empty() ? "p" + std::to_string(d) : name) << ",";
    }
    out << "objective\n";
    for (const infer::ScreenResult::Sample& s : screen.samples) {
        for (const double p : s.params) out << format_double(p) << ",";
        out << format_double(s.value) << "\n";
    }
    if (!out) throw InputError("failed writing " + csv_path);
}

void svg_curves(const std::string& path,
                const std::vector<Curve>& curves, const SvgOptions& options) {
    Bounds b;
    for (const Curve& c : curves)
        for (const Point2& p : c.points) b.add(p);
    if (!b.valid()) throw InputError("nothing to plot");
    const Viewport v = fit(b, options);
    std::ofstream out = open_out(path);
    svg_open(out, options);
    for (std::size_t i = 0; i < curves.size(); ++i)
        svg_polyline(out, curves[i], v,
                     kPalette[i % (sizeof kPalette / sizeof *kPalette)]);
    out << "</svg>\n";
    if (!out) throw InputError("failed writing " + path);
}

void svg_displacement(const std::string& path,
                      const mapping::DisplacementField& field,
                      const std::vector<Curve>& context,
                      const SvgOptions& options) {
    field.validate();
    Bounds b;
    for (const Curve& c : context)
        for (const Point2& p : c.points) b.add(p);
    for (std::size_t i = 0; i < field.sources.size(); ++i) {
        b.add(field.sources[i]);
        b.add(field.endpoint(i));
    }
    if (!b.valid()) throw InputError("nothing to plot");
    const Viewport v = fit(b, options);
    std::ofstream out = open_out(path);
    svg_open(out, options);
    for (std::size_t i = 0; i < context.size(); ++i)
        svg_polyline(out, context[i], v,
                     kPalette[i % (sizeof kPalette / sizeof *kPalette)]);
    for (std::size_t i = 0; i < field.sources.size(); ++i) {
        const Point2 a = field.sources[i];
        const Point2 e = field.endpoint(i);
        out << "<line x1=\"" << num(v.sx(a.x)) << "\" y1=\"" << num(v.sy(a.y))
            << "\" x2=\"" << num(v.sx(e.x)) << "\" y2=\"" << num(v.sy(e.y))
            << "\" stroke=\"#444444\" stroke-width=\"0.8\"/>\n";
        out << "<circle cx=\"" << num(v.sx(a.x)) << "\" cy=\""
            << num(v.sy(a.y)) << "\" r=\"1.6\" fill=\"#444444\"/>\n";
    }
    out << "</svg>\n";
    if (!out) throw InputError("failed writing " + path);
}

void svg_heatmap(const std::string& path, const fem::FieldState& state,
                 int species, const SvgOptions& options) {
    state.validate();
    if (species < 0 || species >= state.n_species)
        throw InputError("heatmap species " + std::to_string(species) +
                         " is out of range");
    const mesh::TriMesh& m = *state.mesh;
    const std::size_t nv = m.vertex_count();
    const double* c = state.c.data() + static_cast<std::size_t>(species) * nv;
    double lo = c[0], hi = c[0];
    for (std::size_t v = 0; v < nv; ++v) {
        lo = std::min(lo, c[v]);
        hi = std::max(hi, c[v]);
    }
    const double span = hi > lo ? hi - lo : 1.0;

    Bounds b;
    for (const Point2& p : m.vertices) b.add(p);
    const Viewport vp = fit(b, options);
    std::ofstream out = open_out(path);
    svg_open(out, options);
    for (std::size_t t = 0; t < m.triangle_count(); ++t) {
        const auto& tri = m.triangles[t];
        const double mean =
            (c[tri[0]] + c[tri[1]] + c[tri[2]]) / 3.0;
        const std::string color = heat_color((mean - lo) / span);
        out << "<polygon points=\"";
        for (int e = 0; e < 3; ++e) {
            if (e) out << " ";
            const Point2& p = m.vertices[tri[e]];
            out << num(vp.sx(p.x)) << "," << num(vp.sy(p.y));
        }
        // Stroke in the fill color so adjacent triangles leave no seams.
        out << "\" fill=\"" << color << "\" stroke=\"" << color
            << "\" stroke-width=\"0.4\"/>\n";
    }
    out << "</svg>\n";
    if (!out) throw InputError("failed writing " + path);
}

void svg_mesh(const std::string& path, const mesh::TriMesh& m,
              const SvgOptions& options) {
    if (m.vertices.empty()) throw InputError("nothing to plot");
    Bounds b;
    for (const Point2& p : m.vertices) b.add(p);
    const Viewport vp = fit(b, options);
    std::ofstream out = open_out(path);
    svg_open(out, options);
    auto line = [&](int p, int q, const char* color, const char* width) {
        const Point2& a = m.vertices[std::size_t(p)];
        const Point2& e = m.vertices[std::size_t(q)];
        out << "<line x1=\"" << num(vp.sx(a.x)) << "\" y1=\"" << num(vp.sy(a.y))
            << "\" x2=\"" << num(vp.sx(e.x)) << "\" y2=\"" << num(vp.sy(e.y))
            << "\" stroke=\"" << color << "\" stroke-width=\"" << width
            << "\"/>\n";
    };
    for (const auto& e : m.unique_edges()) line(e[0], e[1], "#b0b0b0", "0.5");
    for (const auto& e : m.boundary_edges) line(e[0], e[1], "#222222", "1.2");
    out << "</svg>\n";
    if (!out) throw InputError("failed writing " + path);
}

} // namespace io
} // namespace morpho
