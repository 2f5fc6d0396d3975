#include "psbfem/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "psbfem/error.hpp"

namespace psbfem {

std::vector<Point2D> Mesh::cell_vertices(const PolygonCell& cell) const {
    std::vector<Point2D> pts;
    pts.reserve(cell.vertex_ids.size());
    for (Index v : cell.vertex_ids) pts.push_back(nodes.at(v).position);
    return pts;
}

std::vector<EdgeKey> Mesh::edges_with_tag(const std::string& tag) const {
    std::vector<EdgeKey> out;
    for (const auto& [edge, t] : edge_tags)
        if (t == tag) out.push_back(edge);
    return out;
}

double Mesh::total_area() const {
    double a = 0.0;
    for (const auto& c : cells) a += signed_area(cell_vertices(c));
    return a;
}

double signed_area(std::span<const Point2D> polygon) {
    const std::size_t n = polygon.size();
    double a = 0.0;
    for (std::size_t i = 0; i < n; ++i) a += cross(polygon[i], polygon[(i + 1) % n]);
    return 0.5 * a;
}

Point2D polygon_centroid(std::span<const Point2D> polygon) {
    const std::size_t n = polygon.size();
    if (n == 0) return {};
    // Shift to the first vertex to limit cancellation for cells far from the origin.
    const Point2D o = polygon[0];
    double a = 0.0, cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Point2D p = polygon[i] - o;
        const Point2D q = polygon[(i + 1) % n] - o;
        const double c = cross(p, q);
        a += c;
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    if (a == 0.0) {
        Point2D s;
        for (const auto& p : polygon) s = s + p;
        return (1.0 / static_cast<double>(n)) * s;
    }
    return {o.x + cx / (3.0 * a), o.y + cy / (3.0 * a)};
}

Mesh build_structured_quad_mesh(double width, double height, double h) {
    if (!(width > 0.0) || !(height > 0.0) || !(h > 0.0))
        throw ConfigError("structured mesh: width, height and h must be positive");
    auto divisions = [h](double len, const char* axis) {
        const double r = len / h;
        const double n = std::round(r);
        if (n < 1.0 || std::abs(r - n) > 1e-9)
            throw ConfigError(std::string(axis) + " not divisible by h (" + std::to_string(len) +
                              " / " + std::to_string(h) + ")");
        return static_cast<Index>(n);
    };
    const Index nx = divisions(width, "width");
    const Index ny = divisions(height, "height");

    Mesh mesh;
    mesh.nodes.reserve((nx + 1) * (ny + 1));
    for (Index j = 0; j <= ny; ++j)
        for (Index i = 0; i <= nx; ++i)
            mesh.nodes.push_back({mesh.nodes.size(),
                                  {width * static_cast<double>(i) / static_cast<double>(nx),
                                   height * static_cast<double>(j) / static_cast<double>(ny)}});
    auto id = [nx](Index i, Index j) { return j * (nx + 1) + i; };
    mesh.cells.reserve(nx * ny);
    for (Index j = 0; j < ny; ++j)
        for (Index i = 0; i < nx; ++i)
            mesh.cells.push_back(
                {mesh.cells.size(), {id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)}, 0});
    for (Index i = 0; i < nx; ++i) {
        mesh.edge_tags[make_edge_key(id(i, 0), id(i + 1, 0))] = "bottom";
        mesh.edge_tags[make_edge_key(id(i, ny), id(i + 1, ny))] = "top";
    }
    for (Index j = 0; j < ny; ++j) {
        mesh.edge_tags[make_edge_key(id(0, j), id(0, j + 1))] = "left";
        mesh.edge_tags[make_edge_key(id(nx, j), id(nx, j + 1))] = "right";
    }
    return mesh;
}

namespace {

// Relative threshold below which a fan triangle counts as degenerate.
constexpr double kStarTolerance = 1e-12;

bool star_visible(std::span<const Point2D> pts, Point2D c) {
    const double area = std::abs(signed_area(pts));
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double t = 0.5 * cross(pts[i] - c, pts[(i + 1) % n] - c);
        if (!(t > kStarTolerance * area)) return false;
    }
    return true;
}

int orient(Point2D a, Point2D b, Point2D c) {
    const double v = cross(b - a, c - a);
    return (v > 0.0) - (v < 0.0);
}

bool on_segment(Point2D a, Point2D b, Point2D p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

bool segments_intersect(Point2D a, Point2D b, Point2D c, Point2D d) {
    const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(a, b, c)) return true;
    if (o2 == 0 && on_segment(a, b, d)) return true;
    if (o3 == 0 && on_segment(c, d, a)) return true;
    if (o4 == 0 && on_segment(c, d, b)) return true;
    return false;
}

bool is_simple(std::span<const Point2D> pts) {
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent) continue;
            if (segments_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n])) return false;
        }
    }
    return true;
}

}  // namespace

ScalingCenter compute_scaling_center(const PolygonCell& cell, const Mesh& mesh) {
    const auto pts = mesh.cell_vertices(cell);
    if (pts.size() < 3) throw MeshError("cell " + std::to_string(cell.id) + " has fewer than 3 vertices");
    const Point2D c = polygon_centroid(pts);
    if (!star_visible(pts, c))
        throw MeshError("cell not star-convex from centroid (cell " + std::to_string(cell.id) + ")");
    return {cell.id, c};
}

std::map<EdgeKey, int> edge_use_counts(const Mesh& mesh) {
    std::map<EdgeKey, int> uses;
    for (const auto& cell : mesh.cells) {
        const std::size_t n = cell.vertex_ids.size();
        for (std::size_t i = 0; i < n; ++i)
            ++uses[make_edge_key(cell.vertex_ids[i], cell.vertex_ids[(i + 1) % n])];
    }
    return uses;
}

ValidationReport validate_mesh(const Mesh& mesh) {
    ValidationReport report;
    auto add = [&report](ViolationKind k, Index id, std::string msg) {
        report.push_back({k, id, std::move(msg)});
    };

    for (Index i = 0; i < mesh.nodes.size(); ++i) {
        const auto& nd = mesh.nodes[i];
        if (nd.id != i) add(ViolationKind::NonDenseIds, i, "node at position " + std::to_string(i) + " has id " + std::to_string(nd.id));
        if (!std::isfinite(nd.position.x) || !std::isfinite(nd.position.y))
            add(ViolationKind::NonFinite, i, "node " + std::to_string(i) + " has non-finite coordinates");
    }

    for (Index ci = 0; ci < mesh.cells.size(); ++ci) {
        const auto& cell = mesh.cells[ci];
        const std::string name = "cell " + std::to_string(cell.id);
        if (cell.id != ci) add(ViolationKind::NonDenseIds, ci, name + " stored at position " + std::to_string(ci));
        if (cell.vertex_ids.size() < 3) {
            add(ViolationKind::TooFewVertices, cell.id, name + " has fewer than 3 vertices");
            continue;
        }
        bool dangling = false;
        for (Index v : cell.vertex_ids) {
            if (v >= mesh.nodes.size()) {
                add(ViolationKind::DanglingNode, cell.id, name + " references missing node " + std::to_string(v));
                dangling = true;
            }
        }
        if (dangling) continue;
        std::set<Index> unique(cell.vertex_ids.begin(), cell.vertex_ids.end());
        if (unique.size() != cell.vertex_ids.size()) {
            add(ViolationKind::RepeatedVertex, cell.id, name + " repeats a vertex");
            continue;
        }
        const auto pts = mesh.cell_vertices(cell);
        if (!(signed_area(pts) > 0.0)) {
            add(ViolationKind::Orientation, cell.id, name + " is not counter-clockwise");
            continue;
        }
        if (!is_simple(pts)) {
            add(ViolationKind::SelfIntersection, cell.id, name + " is self-intersecting");
            continue;
        }
        if (!star_visible(pts, polygon_centroid(pts)))
            add(ViolationKind::NotStarConvex, cell.id, name + " not star-convex from centroid");
    }

    const auto uses = edge_use_counts(mesh);
    for (const auto& [edge, count] : uses)
        if (count > 2)
            add(ViolationKind::NonManifoldEdge, edge.first,
                "edge (" + std::to_string(edge.first) + "," + std::to_string(edge.second) + ") used by " +
                    std::to_string(count) + " cells");
    for (const auto& [edge, tag] : mesh.edge_tags) {
        auto it = uses.find(edge);
        if (it == uses.end() || it->second != 1)
            add(ViolationKind::BadTag, edge.first,
                "tagged edge (" + std::to_string(edge.first) + "," + std::to_string(edge.second) + ") '" +
                    tag + "' is not a boundary edge of exactly one cell");
    }
    return report;
}

void tag_boundary_edges(Mesh& mesh) {
    mesh.edge_tags.clear();
    if (mesh.nodes.empty()) return;
    double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
    double xmax = -xmin, ymax = -xmin;
    for (const auto& n : mesh.nodes) {
        xmin = std::min(xmin, n.position.x);
        xmax = std::max(xmax, n.position.x);
        ymin = std::min(ymin, n.position.y);
        ymax = std::max(ymax, n.position.y);
    }
    const double tol = 1e-9 * std::max({xmax - xmin, ymax - ymin, 1e-300});
    auto near = [tol](double a, double b) { return std::abs(a - b) <= tol; };
    for (const auto& [edge, count] : edge_use_counts(mesh)) {
        if (count != 1) continue;
        if (edge.first >= mesh.nodes.size() || edge.second >= mesh.nodes.size()) continue;
        const Point2D p = mesh.nodes[edge.first].position;
        const Point2D q = mesh.nodes[edge.second].position;
        std::string tag = "boundary";
        if (near(p.x, xmin) && near(q.x, xmin)) tag = "left";
        else if (near(p.x, xmax) && near(q.x, xmax)) tag = "right";
        else if (near(p.y, ymin) && near(q.y, ymin)) tag = "bottom";
        else if (near(p.y, ymax) && near(q.y, ymax)) tag = "top";
        mesh.edge_tags[edge] = tag;
    }
}

}  // namespace psbfem
