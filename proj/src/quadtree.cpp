#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <tuple>

#include "psbfem/error.hpp"
#include "psbfem/geometry.hpp"

namespace psbfem {

namespace {

struct Leaf {
    int level;
    std::int64_t i;
    std::int64_t j;

    auto operator<=>(const Leaf&) const = default;
};

struct Box {
    double x0, y0, x1, y1;
};

double point_box_distance(Point2D p, const Box& b) {
    const double dx = std::max({b.x0 - p.x, 0.0, p.x - b.x1});
    const double dy = std::max({b.y0 - p.y, 0.0, p.y - b.y1});
    return std::hypot(dx, dy);
}

double point_segment_distance(Point2D p, Point2D a, Point2D b) {
    const Point2D ab = b - a;
    const double len2 = dot(ab, ab);
    double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Point2D q = a + t * ab;
    return std::hypot(p.x - q.x, p.y - q.y);
}

// Liang-Barsky clip of [a, b] against the closed box.
bool segment_hits_box(Point2D a, Point2D b, const Box& box) {
    double t0 = 0.0, t1 = 1.0;
    const double dx = b.x - a.x, dy = b.y - a.y;
    const std::array<double, 4> p{-dx, dx, -dy, dy};
    const std::array<double, 4> q{a.x - box.x0, box.x1 - a.x, a.y - box.y0, box.y1 - a.y};
    for (int k = 0; k < 4; ++k) {
        if (p[k] == 0.0) {
            if (q[k] < 0.0) return false;
            continue;
        }
        const double r = q[k] / p[k];
        if (p[k] < 0.0) t0 = std::max(t0, r);
        else t1 = std::min(t1, r);
        if (t0 > t1) return false;
    }
    return true;
}

bool feature_touches(const RefinementFeature& f, const Box& box) {
    if (segment_hits_box(f.a, f.b, box)) return true;
    if (f.radius <= 0.0) return false;
    double d = std::min(point_box_distance(f.a, box), point_box_distance(f.b, box));
    for (Point2D c : {Point2D{box.x0, box.y0}, Point2D{box.x1, box.y0}, Point2D{box.x1, box.y1},
                      Point2D{box.x0, box.y1}})
        d = std::min(d, point_segment_distance(c, f.a, f.b));
    return d <= f.radius;
}

}  // namespace

Mesh build_quadtree_mesh(const Rectangle& domain, std::span<const RefinementFeature> refine_near,
                         int max_depth, int min_depth) {
    if (!(domain.width() > 0.0) || !(domain.height() > 0.0))
        throw ConfigError("quadtree: empty domain");
    if (min_depth < 0 || max_depth < min_depth || max_depth > 12)
        throw ConfigError("quadtree: require 0 <= min_depth <= max_depth <= 12");

    const double s = std::min(domain.width(), domain.height());
    const std::int64_t nx0 = std::max<std::int64_t>(1, std::llround(domain.width() / s));
    const std::int64_t ny0 = std::max<std::int64_t>(1, std::llround(domain.height() / s));

    auto box_of = [&](const Leaf& l) {
        const double sx = domain.width() / static_cast<double>(nx0 << l.level);
        const double sy = domain.height() / static_cast<double>(ny0 << l.level);
        return Box{domain.x0 + sx * static_cast<double>(l.i), domain.y0 + sy * static_cast<double>(l.j),
                   domain.x0 + sx * static_cast<double>(l.i + 1), domain.y0 + sy * static_cast<double>(l.j + 1)};
    };
    auto wants_split = [&](const Leaf& l) {
        if (l.level < min_depth) return true;
        if (l.level >= max_depth) return false;
        const Box b = box_of(l);
        return std::any_of(refine_near.begin(), refine_near.end(),
                           [&](const RefinementFeature& f) { return feature_touches(f, b); });
    };

    std::set<Leaf> leaves;
    std::vector<Leaf> stack;
    for (std::int64_t j = 0; j < ny0; ++j)
        for (std::int64_t i = 0; i < nx0; ++i) stack.push_back({0, i, j});
    while (!stack.empty()) {
        const Leaf l = stack.back();
        stack.pop_back();
        if (wants_split(l)) {
            for (int c = 0; c < 4; ++c)
                stack.push_back({l.level + 1, 2 * l.i + (c & 1), 2 * l.j + (c >> 1)});
        } else {
            leaves.insert(l);
        }
    }

    // 2:1 balance: split any leaf that has an edge neighbour two or more levels finer.
    for (bool changed = true; changed;) {
        changed = false;
        std::set<Leaf> to_split;
        for (const Leaf& l : leaves) {
            if (l.level < 2) continue;
            const std::int64_t ni_max = nx0 << l.level, nj_max = ny0 << l.level;
            const std::array<std::pair<std::int64_t, std::int64_t>, 4> nbrs{
                {{l.i - 1, l.j}, {l.i + 1, l.j}, {l.i, l.j - 1}, {l.i, l.j + 1}}};
            for (auto [ni, nj] : nbrs) {
                if (ni < 0 || nj < 0 || ni >= ni_max || nj >= nj_max) continue;
                for (int lv = l.level - 2; lv >= 0; --lv) {
                    const int shift = l.level - lv;
                    const Leaf coarse{lv, ni >> shift, nj >> shift};
                    if (leaves.contains(coarse)) {
                        to_split.insert(coarse);
                        break;
                    }
                }
            }
        }
        for (const Leaf& l : to_split) {
            leaves.erase(l);
            for (int c = 0; c < 4; ++c) leaves.insert({l.level + 1, 2 * l.i + (c & 1), 2 * l.j + (c >> 1)});
            changed = true;
        }
    }

    int depth = 0;
    for (const Leaf& l : leaves) depth = std::max(depth, l.level);
    const std::int64_t gx_max = nx0 << depth, gy_max = ny0 << depth;

    using Lattice = std::pair<std::int64_t, std::int64_t>;  // (gy, gx) so map order is row-major
    struct LeafGeom {
        std::int64_t x0, y0, size;
    };
    std::vector<LeafGeom> geoms;
    geoms.reserve(leaves.size());
    std::set<Lattice> corners;
    for (const Leaf& l : leaves) {
        const std::int64_t size = std::int64_t{1} << (depth - l.level);
        const LeafGeom g{l.i * size, l.j * size, size};
        geoms.push_back(g);
        corners.insert({g.y0, g.x0});
        corners.insert({g.y0, g.x0 + size});
        corners.insert({g.y0 + size, g.x0 + size});
        corners.insert({g.y0 + size, g.x0});
    }
    std::sort(geoms.begin(), geoms.end(), [](const LeafGeom& a, const LeafGeom& b) {
        return std::tie(a.y0, a.x0) < std::tie(b.y0, b.x0);
    });

    Mesh mesh;
    std::map<Lattice, Index> node_of;
    auto node_id = [&](std::int64_t gx, std::int64_t gy) {
        auto [it, inserted] = node_of.try_emplace({gy, gx}, mesh.nodes.size());
        if (inserted) {
            const double x = gx == gx_max ? domain.x1
                                          : domain.x0 + domain.width() * static_cast<double>(gx) /
                                                            static_cast<double>(gx_max);
            const double y = gy == gy_max ? domain.y1
                                          : domain.y0 + domain.height() * static_cast<double>(gy) /
                                                            static_cast<double>(gy_max);
            mesh.nodes.push_back({mesh.nodes.size(), {x, y}});
        }
        return it->second;
    };

    for (const LeafGeom& g : geoms) {
        const std::array<Lattice, 4> cs{{{g.x0, g.y0}, {g.x0 + g.size, g.y0},
                                         {g.x0 + g.size, g.y0 + g.size}, {g.x0, g.y0 + g.size}}};
        std::vector<Lattice> ring;  // (gx, gy)
        for (int k = 0; k < 4; ++k) {
            const Lattice a = cs[k], b = cs[(k + 1) % 4];
            ring.push_back(a);
            if (g.size >= 2) {
                const Lattice m{(a.first + b.first) / 2, (a.second + b.second) / 2};
                if (corners.contains({m.second, m.first})) ring.push_back(m);
            }
        }
        PolygonCell cell{mesh.cells.size(), {}, 0};
        for (const auto& [gx, gy] : ring) cell.vertex_ids.push_back(node_id(gx, gy));
        const std::size_t n = ring.size();
        for (std::size_t k = 0; k < n; ++k) {
            const Lattice a = ring[k], b = ring[(k + 1) % n];
            const char* tag = nullptr;
            if (a.second == 0 && b.second == 0) tag = "bottom";
            else if (a.second == gy_max && b.second == gy_max) tag = "top";
            else if (a.first == 0 && b.first == 0) tag = "left";
            else if (a.first == gx_max && b.first == gx_max) tag = "right";
            if (tag) mesh.edge_tags[make_edge_key(cell.vertex_ids[k], cell.vertex_ids[(k + 1) % n])] = tag;
        }
        mesh.cells.push_back(std::move(cell));
    }
    return mesh;
}

}  // namespace psbfem
