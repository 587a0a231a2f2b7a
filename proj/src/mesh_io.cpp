#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "morpho/error.hpp"
#include "morpho/mesh.hpp"

namespace morpho {
namespace mesh {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void expect_line(std::istream& in, const std::string& want,
                 const std::string& path) {
    std::string line;
    if (!std::getline(in, line))
        throw InputError("mesh file " + path + ": truncated, expected '" +
                         want + "'");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != want)
        throw InputError("mesh file " + path + ": expected '" + want +
                         "', got '" + line + "'");
}

} // namespace

void save_msh(const std::string& path, const TriMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open " + path + " for writing");

    out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";

    std::size_t n_names = mesh.boundary_names.size() + mesh.region_names.size();
    if (n_names > 0) {
        out << "$PhysicalNames\n" << n_names << "\n";
        for (std::size_t i = 0; i < mesh.boundary_names.size(); ++i)
            out << "1 " << i + 1 << " \"" << mesh.boundary_names[i] << "\"\n";
        for (std::size_t i = 0; i < mesh.region_names.size(); ++i)
            out << "2 " << mesh.boundary_names.size() + i + 1 << " \""
                << mesh.region_names[i] << "\"\n";
        out << "$EndPhysicalNames\n";
    }

    out << "$Nodes\n" << mesh.vertex_count() << "\n";
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i)
        out << i + 1 << " " << fmt_double(mesh.vertices[i].x) << " "
            << fmt_double(mesh.vertices[i].y) << " 0\n";
    out << "$EndNodes\n";

    out << "$Elements\n"
        << mesh.boundary_edges.size() + mesh.triangle_count() << "\n";
    std::size_t id = 1;
    for (std::size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
        int phys = mesh.boundary_edge_tag[e] + 1;
        out << id++ << " 1 2 " << phys << " " << phys << " "
            << mesh.boundary_edges[e][0] + 1 << " "
            << mesh.boundary_edges[e][1] + 1 << "\n";
    }
    std::size_t rbase = mesh.boundary_names.size();
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        int reg = mesh.triangle_region_tag.empty()
                      ? -1
                      : mesh.triangle_region_tag[t];
        std::size_t phys = reg < 0 ? 0 : rbase + reg + 1;
        out << id++ << " 2 2 " << phys << " " << phys << " "
            << mesh.triangles[t][0] + 1 << " " << mesh.triangles[t][1] + 1
            << " " << mesh.triangles[t][2] + 1 << "\n";
    }
    out << "$EndElements\n";
    if (!out) throw InputError("write to " + path + " failed");
}

TriMesh load_msh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open mesh file " + path);

    expect_line(in, "$MeshFormat", path);
    {
        std::string line;
        std::getline(in, line);
        std::istringstream ls(line);
        std::string version;
        int filetype = -1, datasize = -1;
        ls >> version >> filetype >> datasize;
        if (version.rfind("2.2", 0) != 0 || filetype != 0)
            throw InputError("mesh file " + path +
                             ": unsupported format version '" + line + "'");
    }
    expect_line(in, "$EndMeshFormat", path);

    TriMesh mesh;
    // physical tag -> (dimension, name index in boundary_names/region_names)
    std::vector<std::pair<int, int>> phys_map; // indexed by tag

    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == "$PhysicalNames") {
            std::getline(in, line);
            std::size_t count = std::stoul(line);
            for (std::size_t i = 0; i < count; ++i) {
                if (!std::getline(in, line))
                    throw InputError("mesh file " + path +
                                     ": truncated physical names");
                std::istringstream ls(line);
                int dim, tag;
                ls >> dim >> tag;
                std::string rest;
                std::getline(ls, rest);
                auto q0 = rest.find('"');
                auto q1 = rest.rfind('"');
                if (q0 == std::string::npos || q1 <= q0)
                    throw InputError("mesh file " + path +
                                     ": malformed physical name '" + line + "'");
                std::string name = rest.substr(q0 + 1, q1 - q0 - 1);
                if (tag < 0)
                    throw InputError("mesh file " + path +
                                     ": negative physical tag");
                if (phys_map.size() <= static_cast<std::size_t>(tag))
                    phys_map.resize(tag + 1, {-1, -1});
                if (dim == 1) {
                    phys_map[tag] = {1,
                                     static_cast<int>(mesh.boundary_names.size())};
                    mesh.boundary_names.push_back(name);
                } else if (dim == 2) {
                    phys_map[tag] = {2,
                                     static_cast<int>(mesh.region_names.size())};
                    mesh.region_names.push_back(name);
                } else {
                    throw InputError("mesh file " + path +
                                     ": unsupported physical dimension");
                }
            }
            expect_line(in, "$EndPhysicalNames", path);
        } else if (line == "$Nodes") {
            std::getline(in, line);
            std::size_t count = std::stoul(line);
            mesh.vertices.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                if (!std::getline(in, line))
                    throw InputError("mesh file " + path + ": truncated nodes");
                std::istringstream ls(line);
                std::size_t id;
                double x, y, z;
                if (!(ls >> id >> x >> y >> z))
                    throw InputError("mesh file " + path +
                                     ": malformed node line '" + line + "'");
                if (id < 1 || id > count)
                    throw InputError("mesh file " + path +
                                     ": node ids must be 1..n");
                mesh.vertices[id - 1] = {x, y};
            }
            expect_line(in, "$EndNodes", path);
        } else if (line == "$Elements") {
            std::getline(in, line);
            std::size_t count = std::stoul(line);
            for (std::size_t i = 0; i < count; ++i) {
                if (!std::getline(in, line))
                    throw InputError("mesh file " + path +
                                     ": truncated elements");
                std::istringstream ls(line);
                std::size_t id;
                int type, ntags;
                if (!(ls >> id >> type >> ntags))
                    throw InputError("mesh file " + path +
                                     ": malformed element line '" + line + "'");
                std::vector<int> tags(ntags);
                for (int k = 0; k < ntags; ++k) ls >> tags[k];
                int phys = ntags > 0 ? tags[0] : 0;
                auto name_of = [&](int dim) {
                    if (phys <= 0 ||
                        static_cast<std::size_t>(phys) >= phys_map.size())
                        return -1;
                    if (phys_map[phys].first != dim) return -1;
                    return phys_map[phys].second;
                };
                if (type == 1) {
                    int a, b;
                    if (!(ls >> a >> b))
                        throw InputError("mesh file " + path +
                                         ": malformed line element");
                    mesh.boundary_edges.push_back({a - 1, b - 1});
                    mesh.boundary_edge_tag.push_back(name_of(1));
                } else if (type == 2) {
                    int a, b, c;
                    if (!(ls >> a >> b >> c))
                        throw InputError("mesh file " + path +
                                         ": malformed triangle element");
                    mesh.triangles.push_back({a - 1, b - 1, c - 1});
                    mesh.triangle_region_tag.push_back(name_of(2));
                } else {
                    throw InputError("mesh file " + path +
                                     ": unsupported element type " +
                                     std::to_string(type));
                }
            }
            expect_line(in, "$EndElements", path);
        } else if (line.empty()) {
            continue;
        } else if (line[0] == '$') {
            // Skip unknown sections.
            std::string end = "$End" + line.substr(1);
            while (std::getline(in, line)) {
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (line == end) break;
            }
        } else {
            throw InputError("mesh file " + path + ": unexpected line '" +
                             line + "'");
        }
    }

    mesh.vertex_boundary_tag.assign(mesh.vertices.size(), -1);
    for (std::size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
        int tag = mesh.boundary_edge_tag[e];
        for (int v : mesh.boundary_edges[e]) {
            if (v < 0 || v >= static_cast<int>(mesh.vertices.size()))
                throw InputError("mesh file " + path +
                                 ": boundary edge references missing node");
            if (tag >= 0 && (mesh.vertex_boundary_tag[v] < 0 ||
                             tag < mesh.vertex_boundary_tag[v]))
                mesh.vertex_boundary_tag[v] = tag;
        }
    }
    mesh.validate();
    return mesh;
}

} // namespace mesh
} // namespace morpho
