#include "morpho/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "morpho/error.hpp"

namespace morpho {
namespace mesh {

using geometry::dist;
using geometry::orient2d_sign;
using geometry::incircle_sign;
using geometry::point_in_polygon;
using geometry::segments_cross;
using geometry::Vec2;

double TriMesh::triangle_area(std::size_t t) const {
    const auto& tr = triangles[t];
    Vec2 ab = vertices[tr[1]] - vertices[tr[0]];
    Vec2 ac = vertices[tr[2]] - vertices[tr[0]];
    return 0.5 * ab.cross(ac);
}

Point2 TriMesh::triangle_centroid(std::size_t t) const {
    const auto& tr = triangles[t];
    return (vertices[tr[0]] + vertices[tr[1]] + vertices[tr[2]]) / 3.0;
}

std::vector<std::array<int, 2>> TriMesh::unique_edges() const {
    std::vector<std::array<int, 2>> edges;
    edges.reserve(triangles.size() * 3);
    for (const auto& t : triangles)
        for (int e = 0; e < 3; ++e) {
            int a = t[e], b = t[(e + 1) % 3];
            if (a > b) std::swap(a, b);
            edges.push_back({a, b});
        }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

int TriMesh::find_triangle(const Point2& p) const {
    for (std::size_t t = 0; t < triangles.size(); ++t) {
        const auto& tr = triangles[t];
        bool in = true;
        for (int e = 0; e < 3 && in; ++e)
            in = orient2d_sign(vertices[tr[e]], vertices[tr[(e + 1) % 3]], p) >= 0;
        if (in) return static_cast<int>(t);
    }
    return -1;
}

int TriMesh::boundary_tag_index(const std::string& name) const {
    for (std::size_t i = 0; i < boundary_names.size(); ++i)
        if (boundary_names[i] == name) return static_cast<int>(i);
    return -1;
}

int TriMesh::region_index(const std::string& name) const {
    for (std::size_t i = 0; i < region_names.size(); ++i)
        if (region_names[i] == name) return static_cast<int>(i);
    return -1;
}

void TriMesh::validate() const {
    int nv = static_cast<int>(vertices.size());
    for (const auto& t : triangles) {
        for (int v : t)
            if (v < 0 || v >= nv)
                throw InputError("mesh: triangle vertex index out of range");
        if (orient2d_sign(vertices[t[0]], vertices[t[1]], vertices[t[2]]) <= 0)
            throw InputError("mesh: inverted or degenerate triangle");
    }
    // Conformity: every directed edge appears at most once, every undirected
    // edge in at most two triangles.
    std::unordered_set<long long> directed;
    auto dkey = [nv](int a, int b) {
        return static_cast<long long>(a) * nv + b;
    };
    for (const auto& t : triangles)
        for (int e = 0; e < 3; ++e) {
            long long k = dkey(t[e], t[(e + 1) % 3]);
            if (!directed.insert(k).second)
                throw InputError("mesh: non-conforming adjacency (duplicate "
                                 "directed edge)");
        }
    for (std::size_t i = 0; i < boundary_edges.size(); ++i) {
        auto e = boundary_edges[i];
        if (e[0] < 0 || e[0] >= nv || e[1] < 0 || e[1] >= nv)
            throw InputError("mesh: boundary edge index out of range");
        if (!directed.count(dkey(e[0], e[1])) &&
            !directed.count(dkey(e[1], e[0])))
            throw InputError("mesh: boundary edge missing from triangulation");
    }
    if (vertex_boundary_tag.size() != vertices.size())
        throw InputError("mesh: vertex tag table size mismatch");
    if (triangle_region_tag.size() != triangles.size())
        throw InputError("mesh: region tag table size mismatch");
}

namespace {

constexpr double kMergeTol = 1e-9;

struct Tri {
    int v[3];
    int n[3]; // neighbor across edge (v[i], v[i+1]), -1 = none
    int region = -2;
    bool alive = true;
};

long long edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<long long>(a) << 32) | static_cast<unsigned>(b);
}

struct Triangulator {
    std::vector<Point2> pts;
    std::vector<Tri> tris;
    std::unordered_map<long long, int> constraint; // key -> boundary tag
    std::vector<int> vert2tri;
    std::vector<std::string>* warnings = nullptr;
    int hint = 0;

    void warn(const std::string& msg) {
        if (warnings) warnings->push_back(msg);
    }

    int orient(int a, int b, const Point2& p) const {
        return orient2d_sign(pts[a], pts[b], p);
    }
    int in_circle(const Tri& t, const Point2& p) const {
        return incircle_sign(pts[t.v[0]], pts[t.v[1]], pts[t.v[2]], p);
    }

    int any_alive() const {
        for (std::size_t i = 0; i < tris.size(); ++i)
            if (tris[i].alive) return static_cast<int>(i);
        throw ComputeError("triangulation: no triangles left");
    }

    // Walk toward p; returns a triangle containing p (boundary inclusive).
    int locate(const Point2& p) const {
        int t = (hint >= 0 && hint < static_cast<int>(tris.size()) &&
                 tris[hint].alive)
                    ? hint
                    : any_alive();
        int prev = -1;
        for (int steps = 0; steps < 1 << 20; ++steps) {
            bool moved = false;
            for (int e = 0; e < 3; ++e) {
                if (orient(tris[t].v[e], tris[t].v[(e + 1) % 3], p) < 0) {
                    int nb = tris[t].n[e];
                    if (nb >= 0 && nb != prev) {
                        prev = t;
                        t = nb;
                        moved = true;
                        break;
                    }
                }
            }
            if (!moved) {
                // Verify containment; fall back to a full scan otherwise.
                bool in = true;
                for (int e = 0; e < 3; ++e)
                    in = in && orient(tris[t].v[e], tris[t].v[(e + 1) % 3], p) >= 0;
                if (in) return t;
                break;
            }
        }
        for (std::size_t i = 0; i < tris.size(); ++i) {
            if (!tris[i].alive) continue;
            bool in = true;
            for (int e = 0; e < 3; ++e)
                in = in &&
                     orient(tris[i].v[e], tris[i].v[(e + 1) % 3], p) >= 0;
            if (in) return static_cast<int>(i);
        }
        throw ComputeError("triangulation: point location failed");
    }

    bool constrained(int a, int b) const {
        return constraint.count(edge_key(a, b)) > 0;
    }

    int edge_index(const Tri& t, int a, int b) const {
        for (int e = 0; e < 3; ++e)
            if (t.v[e] == a && t.v[(e + 1) % 3] == b) return e;
        return -1;
    }

    // Triangle carrying the directed edge (a, b), or -1.
    int find_directed(int a, int b) const {
        int start = vert2tri[a];
        if (start >= 0 && tris[start].alive) {
            // Rotate around a in both directions.
            for (int dir = 0; dir < 2; ++dir) {
                int t = start;
                for (int steps = 0; steps < 1 << 16; ++steps) {
                    const Tri& tr = tris[t];
                    int ia = -1;
                    for (int e = 0; e < 3; ++e)
                        if (tr.v[e] == a) ia = e;
                    if (ia < 0) break;
                    if (tr.v[(ia + 1) % 3] == b) return t;
                    int nb = dir == 0 ? tr.n[ia] : tr.n[(ia + 2) % 3];
                    if (nb < 0 || nb == start) break;
                    t = nb;
                }
            }
        }
        for (std::size_t i = 0; i < tris.size(); ++i)
            if (tris[i].alive && edge_index(tris[i], a, b) >= 0)
                return static_cast<int>(i);
        return -1;
    }

    void set_neighbor(int t, int old_nb, int new_nb) {
        if (t < 0) return;
        for (int e = 0; e < 3; ++e)
            if (tris[t].n[e] == old_nb) {
                tris[t].n[e] = new_nb;
                return;
            }
    }

    // Directed boundary edge of an insertion cavity, with the outside
    // neighbor and the region of the cavity triangle it belonged to.
    struct Bedge {
        int a, b, outside, region;
    };
    struct Cavity {
        std::unordered_set<int> members;
        std::vector<Bedge> boundary;
    };

    // Cavity formed by BFS from `seeds` over triangles whose circumcircle
    // strictly contains p, never expanding across a constrained edge.
    Cavity collect_cavity(const Point2& p, const std::vector<int>& seeds) const {
        Cavity cav;
        cav.members.insert(seeds.begin(), seeds.end());
        std::deque<int> queue(seeds.begin(), seeds.end());
        while (!queue.empty()) {
            int t = queue.front();
            queue.pop_front();
            for (int e = 0; e < 3; ++e) {
                int nb = tris[t].n[e];
                if (nb < 0 || cav.members.count(nb)) continue;
                if (constrained(tris[t].v[e], tris[t].v[(e + 1) % 3])) continue;
                if (in_circle(tris[nb], p) > 0) {
                    cav.members.insert(nb);
                    queue.push_back(nb);
                }
            }
        }
        for (int t : cav.members) {
            for (int e = 0; e < 3; ++e) {
                int nb = tris[t].n[e];
                if (nb >= 0 && cav.members.count(nb)) continue;
                cav.boundary.push_back({tris[t].v[e], tris[t].v[(e + 1) % 3],
                                        nb, tris[t].region});
            }
        }
        return cav;
    }

    // Replace the cavity by a fan around p. Returns the new vertex index and
    // appends created triangle ids to out_new.
    int build_fan(const Point2& p, const Cavity& cav, std::vector<int>* out_new) {
        const auto& cavity = cav.members;
        const auto& boundary = cav.boundary;
        if (boundary.empty())
            throw ComputeError("triangulation: empty cavity boundary");
        {
            std::unordered_set<int> on_loop;
            for (const auto& be : boundary) {
                on_loop.insert(be.a);
                on_loop.insert(be.b);
            }
            for (int t : cavity)
                for (int v : tris[t].v)
                    if (!on_loop.count(v))
                        throw ComputeError(
                            "triangulation: cavity would orphan a vertex");
        }

        int vp = static_cast<int>(pts.size());
        pts.push_back(p);
        vert2tri.push_back(-1);
        for (int t : cavity) tris[t].alive = false;

        // Orphaned interior vertices would disconnect the mesh; the cavity
        // boundary must be a single loop visiting each vertex once.
        std::unordered_map<int, int> tri_of_start; // boundary edge a -> new tri
        std::vector<int> created;
        created.reserve(boundary.size());
        for (const auto& be : boundary) {
            Tri nt;
            nt.v[0] = vp;
            nt.v[1] = be.a;
            nt.v[2] = be.b;
            nt.n[0] = -1; // (vp, a): wired below
            nt.n[1] = be.outside;
            nt.n[2] = -1; // (b, vp): wired below
            nt.region = be.region;
            int id = static_cast<int>(tris.size());
            tris.push_back(nt);
            created.push_back(id);
            if (!tri_of_start.emplace(be.a, id).second)
                throw ComputeError("triangulation: pinched cavity boundary");
        }
        for (std::size_t i = 0; i < boundary.size(); ++i) {
            int id = created[i];
            const auto& be = boundary[i];
            // Patch the outside neighbor's back pointer across exactly the
            // shared edge (an outside triangle can border the cavity twice).
            if (be.outside >= 0) {
                int e = edge_index(tris[be.outside], be.b, be.a);
                if (e >= 0) tris[be.outside].n[e] = id;
            }
            // (b, vp) neighbors the triangle whose boundary edge starts at b.
            auto it = tri_of_start.find(be.b);
            if (it == tri_of_start.end())
                throw ComputeError("triangulation: cavity boundary not a loop");
            tris[id].n[2] = it->second;
            tris[it->second].n[0] = id;
            vert2tri[be.a] = id;
            vert2tri[be.b] = id;
        }
        vert2tri[vp] = created.front();
        hint = created.front();
        if (out_new)
            out_new->insert(out_new->end(), created.begin(), created.end());
        return vp;
    }

    int insert_point(const Point2& p, const std::vector<int>& seeds,
                     std::vector<int>* out_new) {
        return build_fan(p, collect_cavity(p, seeds), out_new);
    }

    // Flip the edge e of triangle t with its neighbor. Caller guarantees the
    // flip is valid (strictly convex quad).
    void flip(int t, int e, int* t_out = nullptr, int* u_out = nullptr) {
        int u = tris[t].n[e];
        int A = tris[t].v[e], B = tris[t].v[(e + 1) % 3],
            C = tris[t].v[(e + 2) % 3];
        int eu = edge_index(tris[u], B, A);
        int D = tris[u].v[(eu + 2) % 3];
        int P = tris[t].n[(e + 1) % 3]; // across (B, C)
        int Q = tris[t].n[(e + 2) % 3]; // across (C, A)
        int R = tris[u].n[(eu + 1) % 3]; // across (A, D)
        int S = tris[u].n[(eu + 2) % 3]; // across (D, B)

        tris[t].v[0] = A; tris[t].v[1] = D; tris[t].v[2] = C;
        tris[t].n[0] = R; tris[t].n[1] = u; tris[t].n[2] = Q;
        tris[u].v[0] = D; tris[u].v[1] = B; tris[u].v[2] = C;
        tris[u].n[0] = S; tris[u].n[1] = P; tris[u].n[2] = t;
        set_neighbor(R, u, t);
        set_neighbor(P, t, u);
        vert2tri[A] = t;
        vert2tri[B] = u;
        vert2tri[C] = t;
        vert2tri[D] = u;
        if (t_out) *t_out = t;
        if (u_out) *u_out = u;
    }

    // Restore the local Delaunay property by flipping, never touching
    // constrained edges.
    void legalize(std::deque<std::pair<int, int>> queue) {
        int guard = 1 << 20;
        while (!queue.empty() && guard-- > 0) {
            auto [t, e] = queue.front();
            queue.pop_front();
            if (t < 0 || t >= static_cast<int>(tris.size()) || !tris[t].alive)
                continue;
            if (e < 0 || e > 2) continue;
            int u = tris[t].n[e];
            if (u < 0) continue;
            int a = tris[t].v[e], b = tris[t].v[(e + 1) % 3];
            if (constrained(a, b)) continue;
            int eu = edge_index(tris[u], b, a);
            if (eu < 0) continue;
            int d = tris[u].v[(eu + 2) % 3];
            if (in_circle(tris[t], pts[d]) > 0) {
                int c = tris[t].v[(e + 2) % 3];
                // Flip validity: c and d strictly on opposite sides of (a,b)
                // is implied; the new edge (c,d) must cross (a,b).
                if (orient(c, d, pts[a]) == 0 || orient(c, d, pts[b]) == 0)
                    continue;
                if (orient(c, d, pts[a]) == orient(c, d, pts[b])) continue;
                flip(t, e);
                for (int k = 0; k < 3; ++k) {
                    queue.push_back({t, k});
                    queue.push_back({u, k});
                }
            }
        }
    }

    void recover_constraint(int a, int b, int tag) {
        long long key = edge_key(a, b);
        for (int attempt = 0; attempt < 1 << 16; ++attempt) {
            if (find_directed(a, b) >= 0 || find_directed(b, a) >= 0) {
                constraint[key] = tag;
                return;
            }
            // Find a crossing edge and flip it.
            bool flipped = false;
            for (std::size_t t = 0; t < tris.size() && !flipped; ++t) {
                if (!tris[t].alive) continue;
                for (int e = 0; e < 3; ++e) {
                    int x = tris[t].v[e], y = tris[t].v[(e + 1) % 3];
                    if (x == a || x == b || y == a || y == b) continue;
                    if (!segments_cross(pts[x], pts[y], pts[a], pts[b]))
                        continue;
                    if (constrained(x, y))
                        throw InputError(
                            "triangulation: constraint crosses a previously "
                            "inserted constraint");
                    int u = tris[t].n[e];
                    if (u < 0) continue;
                    int eu = edge_index(tris[u], y, x);
                    int c = tris[t].v[(e + 2) % 3];
                    int d = tris[u].v[(eu + 2) % 3];
                    int oa = orient(c, d, pts[x]);
                    int ob = orient(c, d, pts[y]);
                    if (oa == 0 || ob == 0 || oa == ob) continue; // not convex
                    flip(static_cast<int>(t), e);
                    flipped = true;
                    break;
                }
            }
            if (!flipped)
                throw ComputeError(
                    "triangulation: failed to recover a boundary edge");
        }
        throw ComputeError("triangulation: constraint recovery did not "
                           "terminate");
    }
};

double tri_min_angle_deg(const Point2& a, const Point2& b, const Point2& c) {
    auto corner = [](const Point2& p, const Point2& q, const Point2& r) {
        Vec2 u = q - p, v = r - p;
        return std::atan2(std::abs(u.cross(v)), u.dot(v)) * 180.0 / M_PI;
    };
    return std::min({corner(a, b, c), corner(b, c, a), corner(c, a, b)});
}

double tri_longest_edge(const Point2& a, const Point2& b, const Point2& c) {
    return std::max({dist(a, b), dist(b, c), dist(c, a)});
}

Point2 circumcenter(const Point2& a, const Point2& b, const Point2& c) {
    double d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
    double a2 = a.norm2(), b2 = b.norm2(), c2 = c.norm2();
    double ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
    double uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
    return {ux, uy};
}

} // namespace

TriMesh triangulate(const Curve& outer, const std::vector<Curve>& inner,
                    double target_h, const std::vector<RegionSeed>& regions,
                    std::vector<std::string>* warnings) {
    if (!(target_h > 0))
        throw InputError("triangulate: target_h must be positive");
    outer.validate();
    if (!outer.closed)
        throw InputError("triangulate: outer curve must be closed");
    if (geometry::signed_area(outer) <= 0)
        throw InputError("triangulate: outer curve must be counter-clockwise");
    for (const auto& c : inner) c.validate();

    // Curve bookkeeping: name, hole-ness, point list.
    struct InCurve {
        const Curve* c;
        std::string name;
        bool hole;
    };
    std::vector<InCurve> curves;
    curves.push_back({&outer, outer.label.empty() ? "outer" : outer.label,
                      false});
    for (std::size_t i = 0; i < inner.size(); ++i) {
        const Curve& c = inner[i];
        bool hole = c.closed && geometry::signed_area(c) < 0;
        std::string name = c.label.empty()
                               ? "inner" + std::to_string(i + 1)
                               : c.label;
        curves.push_back({&c, name, hole});
    }

    // No two curves may cross.
    for (std::size_t i = 0; i < curves.size(); ++i)
        for (std::size_t j = i + 1; j < curves.size(); ++j) {
            const Curve& ci = *curves[i].c;
            const Curve& cj = *curves[j].c;
            for (std::size_t si = 0; si < ci.segment_count(); ++si)
                for (std::size_t sj = 0; sj < cj.segment_count(); ++sj)
                    if (segments_cross(ci.segment_start(si), ci.segment_end(si),
                                       cj.segment_start(sj), cj.segment_end(sj)))
                        throw InputError("triangulate: curves '" +
                                         curves[i].name + "' and '" +
                                         curves[j].name + "' intersect");
        }
    // Inner curves must sit inside the outer one. Probe mid-curve first:
    // interface endpoints may lie exactly on the outer outline.
    for (std::size_t i = 1; i < curves.size(); ++i) {
        const Curve& c = *curves[i].c;
        bool inside = point_in_polygon(outer, c.point_at_arclength(0.5 * c.length()));
        for (std::size_t k = 0; k < c.points.size() && !inside; ++k)
            inside = point_in_polygon(outer, c.points[k]);
        if (!inside)
            throw InputError("triangulate: curve '" + curves[i].name +
                             "' lies outside the outer boundary");
    }

    // Boundary tag table; curves sharing a label share a tag.
    std::vector<std::string> tag_names;
    std::vector<int> curve_tag(curves.size());
    for (std::size_t i = 0; i < curves.size(); ++i) {
        int tag = -1;
        for (std::size_t k = 0; k < tag_names.size(); ++k)
            if (tag_names[k] == curves[i].name) tag = static_cast<int>(k);
        if (tag < 0) {
            tag = static_cast<int>(tag_names.size());
            tag_names.push_back(curves[i].name);
        }
        curve_tag[i] = tag;
    }

    // Collect deduplicated vertices and constraint segments.
    std::vector<Point2> input_pts;
    auto point_id = [&](const Point2& p) {
        for (std::size_t i = 0; i < input_pts.size(); ++i)
            if (dist(input_pts[i], p) < kMergeTol) return static_cast<int>(i);
        input_pts.push_back(p);
        return static_cast<int>(input_pts.size() - 1);
    };
    struct Seg {
        int a, b, tag;
    };
    std::vector<Seg> segs;
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const Curve& c = *curves[i].c;
        std::vector<int> ids;
        for (const auto& p : c.points) ids.push_back(point_id(p));
        for (std::size_t s = 0; s < c.segment_count(); ++s) {
            int a = ids[s], b = ids[(s + 1) % ids.size()];
            if (a != b) segs.push_back({a, b, curve_tag[i]});
        }
    }
    // Split segments at vertices that lie on them (interface endpoints or
    // shared points between curves).
    std::vector<Seg> split_segs;
    for (const auto& s : segs) {
        Point2 a = input_pts[s.a], b = input_pts[s.b];
        Vec2 d = b - a;
        double len2 = d.norm2();
        std::vector<std::pair<double, int>> on_seg;
        for (std::size_t v = 0; v < input_pts.size(); ++v) {
            int vi = static_cast<int>(v);
            if (vi == s.a || vi == s.b) continue;
            double t = (input_pts[v] - a).dot(d) / len2;
            if (t <= 0 || t >= 1) continue;
            Point2 proj = a + d * t;
            if (dist(proj, input_pts[v]) < kMergeTol) on_seg.push_back({t, vi});
        }
        std::sort(on_seg.begin(), on_seg.end());
        int prev = s.a;
        for (const auto& [t, vi] : on_seg) {
            split_segs.push_back({prev, vi, s.tag});
            prev = vi;
        }
        split_segs.push_back({prev, s.b, s.tag});
    }

    // Super triangle well outside the data.
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& p : input_pts) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
    double m = 10.0 * std::max({xmax - xmin, ymax - ymin, 1.0});

    Triangulator tr;
    tr.warnings = warnings;
    tr.pts = {{cx - 3 * m, cy - 2 * m}, {cx + 3 * m, cy - 2 * m},
              {cx, cy + 3 * m}};
    tr.vert2tri = {0, 0, 0};
    Tri super;
    super.v[0] = 0; super.v[1] = 1; super.v[2] = 2;
    super.n[0] = super.n[1] = super.n[2] = -1;
    tr.tris.push_back(super);

    // All input points, in deterministic order.
    std::vector<int> global_id(input_pts.size());
    for (std::size_t i = 0; i < input_pts.size(); ++i) {
        int t = tr.locate(input_pts[i]);
        global_id[i] = tr.insert_point(input_pts[i], {t}, nullptr);
    }
    for (const auto& s : split_segs)
        tr.recover_constraint(global_id[s.a], global_id[s.b], s.tag);
    {
        // Restore constrained-Delaunay quality after recovery flips.
        std::deque<std::pair<int, int>> q;
        for (std::size_t t = 0; t < tr.tris.size(); ++t)
            if (tr.tris[t].alive)
                for (int e = 0; e < 3; ++e) q.push_back({static_cast<int>(t), e});
        tr.legalize(std::move(q));
    }

    // Connected components across unconstrained edges; components touching
    // the super vertices are outside, components whose representative sits
    // in a hole are excluded.
    std::vector<Curve> holes;
    for (std::size_t i = 1; i < curves.size(); ++i)
        if (curves[i].hole) holes.push_back(*curves[i].c);

    {
        for (auto& t : tr.tris) t.region = -2;
        int next_comp = 0;
        std::vector<int> comp_of_tri(tr.tris.size(), -2);
        std::vector<bool> comp_excluded;
        for (std::size_t t0 = 0; t0 < tr.tris.size(); ++t0) {
            if (!tr.tris[t0].alive || comp_of_tri[t0] != -2) continue;
            int comp = next_comp++;
            bool touches_super = false;
            int best_tri = -1;
            double best_area = -1;
            std::deque<int> q{static_cast<int>(t0)};
            comp_of_tri[t0] = comp;
            std::vector<int> members;
            while (!q.empty()) {
                int t = q.front();
                q.pop_front();
                members.push_back(t);
                const Tri& cur = tr.tris[t];
                for (int v : cur.v)
                    if (v < 3) touches_super = true;
                double area =
                    0.5 * std::abs((tr.pts[cur.v[1]] - tr.pts[cur.v[0]])
                                       .cross(tr.pts[cur.v[2]] - tr.pts[cur.v[0]]));
                if (area > best_area) {
                    best_area = area;
                    best_tri = t;
                }
                for (int e = 0; e < 3; ++e) {
                    int nb = cur.n[e];
                    if (nb < 0 || comp_of_tri[nb] != -2) continue;
                    if (tr.constrained(cur.v[e], cur.v[(e + 1) % 3])) continue;
                    comp_of_tri[nb] = comp;
                    q.push_back(nb);
                }
            }
            bool excluded = touches_super;
            if (!excluded) {
                Point2 rep = (tr.pts[tr.tris[best_tri].v[0]] +
                              tr.pts[tr.tris[best_tri].v[1]] +
                              tr.pts[tr.tris[best_tri].v[2]]) /
                             3.0;
                for (const auto& h : holes)
                    if (point_in_polygon(h, rep)) excluded = true;
            }
            comp_excluded.push_back(excluded);
            for (int t : members)
                tr.tris[t].region = excluded ? -1 : comp;
        }
    }

    // Ruppert refinement: split encroached boundary segments at their
    // midpoint, then insert circumcenters of poor triangles, turning blocked
    // insertions into segment splits.
    const double min_angle = 20.0 - 1e-9;
    const double min_seg = 1e-3 * target_h;
    std::deque<long long> seg_queue;
    std::deque<int> tri_queue;
    for (const auto& kv : tr.constraint) seg_queue.push_back(kv.first);
    for (std::size_t t = 0; t < tr.tris.size(); ++t)
        if (tr.tris[t].alive && tr.tris[t].region >= 0)
            tri_queue.push_back(static_cast<int>(t));

    auto seg_encroached = [&](int a, int b) {
        for (auto [x, y] : {std::pair{a, b}, std::pair{b, a}}) {
            int t = tr.find_directed(x, y);
            if (t < 0) continue;
            int e = tr.edge_index(tr.tris[t], x, y);
            int w = tr.tris[t].v[(e + 2) % 3];
            if ((tr.pts[a] - tr.pts[w]).dot(tr.pts[b] - tr.pts[w]) < 0)
                return true;
        }
        return false;
    };

    auto after_insert = [&](const std::vector<int>& created) {
        for (int t : created) {
            if (!tr.tris[t].alive) continue;
            if (tr.tris[t].region >= 0) tri_queue.push_back(t);
            for (int e = 0; e < 3; ++e) {
                int a = tr.tris[t].v[e], b = tr.tris[t].v[(e + 1) % 3];
                if (tr.constrained(a, b)) seg_queue.push_back(edge_key(a, b));
            }
        }
    };

    auto split_segment = [&](long long key) {
        auto it = tr.constraint.find(key);
        if (it == tr.constraint.end()) return false;
        int a = static_cast<int>(key >> 32);
        int b = static_cast<int>(key & 0xffffffffll);
        if (dist(tr.pts[a], tr.pts[b]) < min_seg) {
            tr.warn("triangulate: refinement hit the minimum segment length");
            return false;
        }
        int tag = it->second;
        int t1 = tr.find_directed(a, b);
        int t2 = tr.find_directed(b, a);
        std::vector<int> seeds;
        if (t1 >= 0) seeds.push_back(t1);
        if (t2 >= 0) seeds.push_back(t2);
        if (seeds.empty())
            throw ComputeError("triangulate: constrained edge lost");
        tr.constraint.erase(it);
        Point2 mid = (tr.pts[a] + tr.pts[b]) * 0.5;
        std::vector<int> created;
        int vm = tr.insert_point(mid, seeds, &created);
        tr.constraint[edge_key(a, vm)] = tag;
        tr.constraint[edge_key(vm, b)] = tag;
        seg_queue.push_back(edge_key(a, vm));
        seg_queue.push_back(edge_key(vm, b));
        after_insert(created);
        return true;
    };

    // Straight walk from a triangle toward q. Returns the containing
    // triangle in `found`, or the first blocking constrained edge in
    // `blocked`.
    struct WalkResult {
        int found = -1;
        long long blocked = -1;
    };
    auto walk_toward = [&](int t0, const Point2& q) {
        WalkResult res;
        Point2 s = (tr.pts[tr.tris[t0].v[0]] + tr.pts[tr.tris[t0].v[1]] +
                    tr.pts[tr.tris[t0].v[2]]) /
                   3.0;
        int t = t0;
        int prev = -1;
        for (int steps = 0; steps < 1 << 16; ++steps) {
            const Tri& cur = tr.tris[t];
            bool inside = true;
            for (int e = 0; e < 3; ++e)
                inside = inside &&
                         orient2d_sign(tr.pts[cur.v[e]],
                                       tr.pts[cur.v[(e + 1) % 3]], q) >= 0;
            if (inside) {
                res.found = t;
                return res;
            }
            bool moved = false;
            for (int e = 0; e < 3; ++e) {
                int a = cur.v[e], b = cur.v[(e + 1) % 3];
                if (orient2d_sign(tr.pts[a], tr.pts[b], q) >= 0) continue;
                // The exit edge must actually be crossed by s -> q: the edge
                // start sits right of the ray, the end sits left.
                int os = orient2d_sign(s, q, tr.pts[a]);
                int oq = orient2d_sign(s, q, tr.pts[b]);
                if (os > 0 || oq < 0) continue;
                if (tr.constrained(a, b)) {
                    res.blocked = edge_key(a, b);
                    return res;
                }
                int nb = cur.n[e];
                if (nb < 0 || nb == prev) continue;
                prev = t;
                t = nb;
                moved = true;
                break;
            }
            if (!moved) return res; // numerical dead end; caller skips
        }
        return res;
    };

    int inserts = 0;
    const int max_inserts = 200000;
    bool capped = false;
    while (!capped) {
        if (!seg_queue.empty()) {
            long long key = seg_queue.front();
            seg_queue.pop_front();
            if (!tr.constraint.count(key)) continue;
            int a = static_cast<int>(key >> 32);
            int b = static_cast<int>(key & 0xffffffffll);
            if (seg_encroached(a, b)) {
                split_segment(key);
                if (++inserts > max_inserts) capped = true;
            }
            continue;
        }
        if (tri_queue.empty()) break;
        int t = tri_queue.front();
        tri_queue.pop_front();
        if (t < 0 || !tr.tris[t].alive || tr.tris[t].region < 0) continue;
        Point2 a = tr.pts[tr.tris[t].v[0]];
        Point2 b = tr.pts[tr.tris[t].v[1]];
        Point2 c = tr.pts[tr.tris[t].v[2]];
        bool too_big = tri_longest_edge(a, b, c) > target_h * (1 + 1e-12);
        bool skinny = tri_min_angle_deg(a, b, c) < min_angle;
        if (!too_big && !skinny) continue;
        Point2 cc = circumcenter(a, b, c);
        if (!cc.finite()) {
            tr.warn("triangulate: degenerate circumcenter skipped");
            continue;
        }
        WalkResult w = walk_toward(t, cc);
        if (w.blocked >= 0) {
            // The circumcenter is hidden behind a constrained segment;
            // splitting it is what shrinks boundary-hugging triangles.
            if (split_segment(w.blocked)) {
                tri_queue.push_back(t);
                if (++inserts > max_inserts) capped = true;
            }
            continue;
        }
        if (w.found < 0) {
            tr.warn("triangulate: circumcenter walk failed; triangle kept");
            continue;
        }
        // Do not create a duplicate of an existing vertex.
        bool dup = false;
        for (int v : tr.tris[w.found].v)
            if (dist(tr.pts[v], cc) < kMergeTol) dup = true;
        if (dup) continue;

        // A circumcenter that encroaches constrained segments must not be
        // inserted; split those segments instead, otherwise boundary spacing
        // collapses below the local feature size.
        Triangulator::Cavity cav = tr.collect_cavity(cc, {w.found});
        std::vector<long long> encroached;
        bool star_ok = true;
        for (const auto& be : cav.boundary) {
            bool is_con = tr.constrained(be.a, be.b);
            if (is_con) {
                const Point2& ea = tr.pts[be.a];
                const Point2& eb = tr.pts[be.b];
                if ((ea - cc).dot(eb - cc) < 0)
                    encroached.push_back(edge_key(be.a, be.b));
                else if (orient2d_sign(ea, eb, cc) <= 0)
                    encroached.push_back(edge_key(be.a, be.b));
            } else if (orient2d_sign(tr.pts[be.a], tr.pts[be.b], cc) <= 0) {
                star_ok = false;
            }
        }
        if (!encroached.empty()) {
            bool any = false;
            for (long long key : encroached) any = split_segment(key) || any;
            if (any) {
                tri_queue.push_back(t);
                if (++inserts > max_inserts) capped = true;
            }
            continue;
        }
        if (!star_ok) {
            tr.warn("triangulate: non-star-shaped cavity; triangle kept");
            continue;
        }
        std::vector<int> created;
        tr.build_fan(cc, cav, &created);
        after_insert(created);
        if (++inserts > max_inserts) capped = true;
    }
    if (capped)
        tr.warn("triangulate: refinement stopped at the insertion cap; "
                "quality targets may be unmet");

    // Compact: keep interior triangles, renumber vertices, carry tags.
    TriMesh out;
    out.boundary_names = tag_names;
    std::vector<int> vmap(tr.pts.size(), -1);
    std::vector<int> comp_region; // component id -> region index (-1 none)
    std::unordered_map<int, int> comp_to_region;

    for (const auto& t : tr.tris) {
        if (!t.alive || t.region < 0) continue;
        for (int v : t.v)
            if (vmap[v] < 0) {
                vmap[v] = static_cast<int>(out.vertices.size());
                out.vertices.push_back(tr.pts[v]);
            }
    }
    // Region seeds: find the component containing each seed point.
    for (const auto& seed : regions) {
        bool placed = false;
        for (const auto& t : tr.tris) {
            if (!t.alive || t.region < 0) continue;
            bool in = true;
            for (int e = 0; e < 3 && in; ++e)
                in = orient2d_sign(tr.pts[t.v[e]], tr.pts[t.v[(e + 1) % 3]],
                                   seed.point) >= 0;
            if (!in) continue;
            int reg;
            auto itr = comp_to_region.find(t.region);
            if (itr != comp_to_region.end()) {
                reg = itr->second;
                if (out.region_names[reg] != seed.label && warnings)
                    warnings->push_back("triangulate: region already labeled '" +
                                        out.region_names[reg] +
                                        "', seed '" + seed.label + "' ignored");
            } else {
                reg = static_cast<int>(out.region_names.size());
                out.region_names.push_back(seed.label);
                comp_to_region[t.region] = reg;
            }
            placed = true;
            break;
        }
        if (!placed && warnings)
            warnings->push_back("triangulate: seed '" + seed.label +
                                "' lies outside the meshed domain");
    }
    for (const auto& t : tr.tris) {
        if (!t.alive || t.region < 0) continue;
        out.triangles.push_back({vmap[t.v[0]], vmap[t.v[1]], vmap[t.v[2]]});
        auto itr = comp_to_region.find(t.region);
        out.triangle_region_tag.push_back(
            itr == comp_to_region.end() ? -1 : itr->second);
    }
    // Boundary edges whose endpoints survive.
    std::vector<std::pair<long long, int>> csorted(tr.constraint.begin(),
                                                   tr.constraint.end());
    std::sort(csorted.begin(), csorted.end());
    out.vertex_boundary_tag.assign(out.vertices.size(), -1);
    for (const auto& [key, tag] : csorted) {
        int a = static_cast<int>(key >> 32);
        int b = static_cast<int>(key & 0xffffffffll);
        if (vmap[a] < 0 || vmap[b] < 0) continue;
        out.boundary_edges.push_back({vmap[a], vmap[b]});
        out.boundary_edge_tag.push_back(tag);
        for (int v : {vmap[a], vmap[b]})
            if (out.vertex_boundary_tag[v] < 0 ||
                tag < out.vertex_boundary_tag[v])
                out.vertex_boundary_tag[v] = tag;
    }
    return out;
}

MeshQualityReport quality_report(const TriMesh& mesh, double gradient_length,
                                 double gradient_factor) {
    MeshQualityReport rep;
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Point2& a = mesh.vertices[tri[0]];
        const Point2& b = mesh.vertices[tri[1]];
        const Point2& c = mesh.vertices[tri[2]];
        double e01 = dist(a, b), e12 = dist(b, c), e20 = dist(c, a);
        double shortest = std::min({e01, e12, e20});
        double longest = std::max({e01, e12, e20});
        rep.min_edge_ratio = std::min(rep.min_edge_ratio,
                                      longest > 0 ? shortest / longest : 0.0);
        rep.max_edge_length = std::max(rep.max_edge_length, longest);
        rep.min_angle = std::min(rep.min_angle, tri_min_angle_deg(a, b, c));
        if (orient2d_sign(a, b, c) <= 0) ++rep.n_inverted;
    }
    rep.pass = rep.min_edge_ratio >= 0.1 && rep.n_inverted == 0 &&
               rep.max_edge_length <= gradient_length / gradient_factor;
    return rep;
}

TriMesh refine(const TriMesh& mesh) {
    TriMesh out;
    out.vertices = mesh.vertices;
    out.boundary_names = mesh.boundary_names;
    out.region_names = mesh.region_names;
    out.vertex_boundary_tag = mesh.vertex_boundary_tag;

    std::unordered_map<long long, int> midpoint;
    auto mid_id = [&](int a, int b) {
        long long key = edge_key(a, b);
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        int id = static_cast<int>(out.vertices.size());
        out.vertices.push_back((mesh.vertices[a] + mesh.vertices[b]) * 0.5);
        out.vertex_boundary_tag.push_back(-1);
        midpoint.emplace(key, id);
        return id;
    };

    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles[t];
        int m01 = mid_id(tri[0], tri[1]);
        int m12 = mid_id(tri[1], tri[2]);
        int m20 = mid_id(tri[2], tri[0]);
        int reg = mesh.triangle_region_tag.empty()
                      ? -1
                      : mesh.triangle_region_tag[t];
        out.triangles.push_back({tri[0], m01, m20});
        out.triangles.push_back({tri[1], m12, m01});
        out.triangles.push_back({tri[2], m20, m12});
        out.triangles.push_back({m01, m12, m20});
        for (int k = 0; k < 4; ++k) out.triangle_region_tag.push_back(reg);
    }
    for (std::size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
        auto [a, b] = mesh.boundary_edges[e];
        int tag = mesh.boundary_edge_tag[e];
        int m = mid_id(a, b);
        out.vertex_boundary_tag[m] = tag;
        out.boundary_edges.push_back({a, m});
        out.boundary_edges.push_back({m, b});
        out.boundary_edge_tag.push_back(tag);
        out.boundary_edge_tag.push_back(tag);
    }
    return out;
}

TriMesh coarsen(const TriMesh& mesh, double factor,
                double max_boundary_deviation) {
    if (!(factor >= 1))
        throw InputError("coarsen: factor must be at least 1");
    std::size_t target =
        static_cast<std::size_t>(std::ceil(mesh.vertex_count() / factor));
    if (target < 4)
        throw InputError("coarsen: target below minimal topology");

    if (max_boundary_deviation <= 0) {
        double total = 0;
        auto edges = mesh.unique_edges();
        for (auto [a, b] : edges) total += dist(mesh.vertices[a], mesh.vertices[b]);
        max_boundary_deviation = edges.empty() ? 0 : 0.1 * total / edges.size();
    }

    // Working copies; collapsed vertices are redirected via `alias`.
    std::vector<Point2> verts = mesh.vertices;
    std::vector<int> vtag = mesh.vertex_boundary_tag;
    std::vector<std::array<int, 3>> tris = mesh.triangles;
    std::vector<int> treg = mesh.triangle_region_tag;
    std::vector<bool> tri_alive(tris.size(), true);
    std::vector<bool> vert_alive(verts.size(), true);

    // Boundary adjacency: for each vertex its boundary neighbors and tags.
    std::unordered_map<long long, int> bedge; // key -> tag
    for (std::size_t e = 0; e < mesh.boundary_edges.size(); ++e)
        bedge[edge_key(mesh.boundary_edges[e][0], mesh.boundary_edges[e][1])] =
            mesh.boundary_edge_tag[e];

    auto vertex_tris = [&]() {
        std::vector<std::vector<int>> v2t(verts.size());
        for (std::size_t t = 0; t < tris.size(); ++t)
            if (tri_alive[t])
                for (int v : tris[t]) v2t[v].push_back(static_cast<int>(t));
        return v2t;
    };

    std::size_t alive_count = verts.size();
    bool progress = true;
    while (alive_count > target && progress) {
        progress = false;
        auto v2t = vertex_tris();

        // Candidate edges sorted by length: collapse short edges first.
        struct Cand {
            double len;
            int u, v; // collapse v into u
        };
        std::vector<Cand> cands;
        std::unordered_set<long long> seen;
        for (std::size_t t = 0; t < tris.size(); ++t) {
            if (!tri_alive[t]) continue;
            for (int e = 0; e < 3; ++e) {
                int a = tris[t][e], b = tris[t][(e + 1) % 3];
                long long key = edge_key(a, b);
                if (!seen.insert(key).second) continue;
                double len = dist(verts[a], verts[b]);
                cands.push_back({len, a, b});
                cands.push_back({len, b, a});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.len != b.len) return a.len < b.len;
            if (a.u != b.u) return a.u < b.u;
            return a.v < b.v;
        });

        std::vector<bool> touched(verts.size(), false);
        for (const auto& cand : cands) {
            if (alive_count <= target) break;
            int u = cand.u, v = cand.v;
            if (!vert_alive[u] || !vert_alive[v] || touched[u] || touched[v])
                continue;
            // The edge may have vanished through earlier collapses this sweep.
            bool edge_exists = false;
            for (int t : v2t[v]) {
                if (!tri_alive[t]) continue;
                for (int w : tris[t]) edge_exists = edge_exists || w == u;
            }
            if (!edge_exists) continue;
            bool v_boundary = vtag[v] >= 0;
            bool edge_boundary = bedge.count(edge_key(u, v)) > 0;
            if (v_boundary && !edge_boundary)
                continue; // boundary vertices only slide along the boundary
            if (v_boundary) {
                // v must have exactly two boundary neighbors (a chain, not a
                // corner where differently-tagged curves meet).
                std::vector<int> bnbrs;
                for (int t : v2t[v]) {
                    if (!tri_alive[t]) continue;
                    for (int e = 0; e < 3; ++e) {
                        int a = tris[t][e], b = tris[t][(e + 1) % 3];
                        if (a != v && b != v) continue;
                        int other = a == v ? b : a;
                        if (bedge.count(edge_key(v, other))) bnbrs.push_back(other);
                    }
                }
                std::sort(bnbrs.begin(), bnbrs.end());
                bnbrs.erase(std::unique(bnbrs.begin(), bnbrs.end()), bnbrs.end());
                if (bnbrs.size() != 2) continue;
                int w = bnbrs[0] == u ? bnbrs[1] : bnbrs[0];
                auto ti = bedge.find(edge_key(u, v));
                auto tj = bedge.find(edge_key(w, v));
                if (tj == bedge.end() || ti->second != tj->second) continue;
                // Deviation of the removed vertex from the new chain edge.
                Vec2 d = verts[w] - verts[u];
                double len2 = d.norm2();
                double t = len2 > 0
                               ? std::clamp((verts[v] - verts[u]).dot(d) / len2,
                                            0.0, 1.0)
                               : 0.0;
                if (dist(verts[u] + d * t, verts[v]) > max_boundary_deviation)
                    continue;
            }

            // Link condition: common neighbors of u and v must be exactly
            // the opposite vertices of the shared triangles.
            std::unordered_set<int> nu;
            for (int t : v2t[u]) {
                if (!tri_alive[t]) continue;
                for (int w : tris[t])
                    if (w != u) nu.insert(w);
            }
            std::vector<int> common;
            std::unordered_set<int> shared_opposite;
            for (int t : v2t[v]) {
                if (!tri_alive[t]) continue;
                bool has_u = false;
                for (int w : tris[t]) has_u = has_u || w == u;
                for (int w : tris[t])
                    if (w != v && w != u && nu.count(w)) {
                        if (has_u)
                            shared_opposite.insert(w);
                        common.push_back(w);
                    }
            }
            std::sort(common.begin(), common.end());
            common.erase(std::unique(common.begin(), common.end()), common.end());
            if (common.size() != shared_opposite.size()) continue;

            // Simulate: all surviving triangles of v keep positive area.
            bool ok = true;
            for (int t : v2t[v]) {
                if (!tri_alive[t]) continue;
                auto tri = tris[t];
                for (int& w : tri)
                    if (w == v) w = u;
                if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
                    continue;
                if (orient2d_sign(verts[tri[0]], verts[tri[1]],
                                  verts[tri[2]]) <= 0) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;

            // Commit.
            for (int t : v2t[v]) {
                if (!tri_alive[t]) continue;
                auto& tri = tris[t];
                for (int& w : tri)
                    if (w == v) w = u;
                if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
                    tri_alive[t] = false;
            }
            if (v_boundary) {
                std::vector<std::pair<long long, int>> moved;
                for (auto it = bedge.begin(); it != bedge.end();) {
                    long long key = it->first;
                    int a = static_cast<int>(key >> 32);
                    int b = static_cast<int>(key & 0xffffffffll);
                    if (a == v || b == v) {
                        int other = a == v ? b : a;
                        if (other != u)
                            moved.push_back({edge_key(u, other), it->second});
                        it = bedge.erase(it);
                    } else {
                        ++it;
                    }
                }
                for (const auto& [key, tag] : moved) bedge[key] = tag;
            }
            vert_alive[v] = false;
            touched[u] = true;
            touched[v] = true;
            --alive_count;
            progress = true;
        }
    }

    TriMesh out;
    out.boundary_names = mesh.boundary_names;
    out.region_names = mesh.region_names;
    std::vector<int> vmap(verts.size(), -1);
    for (std::size_t t = 0; t < tris.size(); ++t) {
        if (!tri_alive[t]) continue;
        for (int v : tris[t])
            if (vmap[v] < 0) {
                vmap[v] = static_cast<int>(out.vertices.size());
                out.vertices.push_back(verts[v]);
                out.vertex_boundary_tag.push_back(vtag[v]);
            }
        out.triangles.push_back({vmap[tris[t][0]], vmap[tris[t][1]],
                                 vmap[tris[t][2]]});
        out.triangle_region_tag.push_back(treg.empty() ? -1 : treg[t]);
    }
    for (const auto& [key, tag] : std::map<long long, int>(bedge.begin(),
                                                           bedge.end())) {
        int a = static_cast<int>(key >> 32);
        int b = static_cast<int>(key & 0xffffffffll);
        if (vmap[a] < 0 || vmap[b] < 0) continue;
        out.boundary_edges.push_back({vmap[a], vmap[b]});
        out.boundary_edge_tag.push_back(tag);
    }
    return out;
}

} // namespace mesh
} // namespace morpho
