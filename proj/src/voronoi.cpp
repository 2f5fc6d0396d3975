#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>

#include "psbfem/error.hpp"
#include "psbfem/geometry.hpp"

namespace psbfem {

namespace {

// Keeps the part of the convex polygon closer to `s` than to `t`.
std::vector<Point2D> clip_bisector(const std::vector<Point2D>& poly, Point2D s, Point2D t) {
    const Point2D n = t - s;
    const Point2D m = 0.5 * (s + t);
    auto side = [&](Point2D p) { return dot(p - m, n); };
    std::vector<Point2D> out;
    out.reserve(poly.size() + 1);
    const std::size_t k = poly.size();
    for (std::size_t i = 0; i < k; ++i) {
        const Point2D p = poly[i], q = poly[(i + 1) % k];
        const double dp = side(p), dq = side(q);
        if (dp <= 0.0) out.push_back(p);
        if ((dp < 0.0 && dq > 0.0) || (dp > 0.0 && dq < 0.0)) {
            const double u = dp / (dp - dq);
            out.push_back(p + u * (q - p));
        }
    }
    return out;
}

class SeedGrid {
public:
    SeedGrid(const Rectangle& d, const std::vector<Point2D>& seeds) : d_(d) {
        const double n = static_cast<double>(std::max<std::size_t>(seeds.size(), 1));
        bs_ = std::sqrt(d.area() / n);
        nx_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(d.width() / bs_)));
        ny_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(d.height() / bs_)));
        buckets_.resize(static_cast<std::size_t>(nx_ * ny_));
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            auto [bx, by] = bucket(seeds[i]);
            buckets_[static_cast<std::size_t>(by * nx_ + bx)].push_back(i);
        }
    }

    std::pair<std::int64_t, std::int64_t> bucket(Point2D p) const {
        auto bx = static_cast<std::int64_t>(std::floor((p.x - d_.x0) / bs_));
        auto by = static_cast<std::int64_t>(std::floor((p.y - d_.y0) / bs_));
        return {std::clamp<std::int64_t>(bx, 0, nx_ - 1), std::clamp<std::int64_t>(by, 0, ny_ - 1)};
    }

    // Visits the seeds of the square ring at Chebyshev distance `r` around bucket (bx, by).
    template <class F>
    bool ring(std::int64_t bx, std::int64_t by, std::int64_t r, F&& f) const {
        bool any = false;
        for (std::int64_t j = by - r; j <= by + r; ++j) {
            if (j < 0 || j >= ny_) continue;
            for (std::int64_t i = bx - r; i <= bx + r; ++i) {
                if (i < 0 || i >= nx_) continue;
                if (std::max(std::abs(i - bx), std::abs(j - by)) != r) continue;
                any = true;
                for (std::size_t s : buckets_[static_cast<std::size_t>(j * nx_ + i)]) f(s);
            }
        }
        return any;
    }

    double bucket_size() const { return bs_; }
    std::int64_t max_ring() const { return std::max(nx_, ny_); }

private:
    Rectangle d_;
    double bs_ = 1.0;
    std::int64_t nx_ = 1, ny_ = 1;
    std::vector<std::vector<std::size_t>> buckets_;
};

void check_distinct(const Rectangle& d, const std::vector<Point2D>& seeds) {
    const double tol = 1e-12 * std::max(d.width(), d.height());
    SeedGrid grid(d, seeds);
    std::vector<std::string> pairs;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        auto [bx, by] = grid.bucket(seeds[i]);
        for (std::int64_t r = 0; r <= 1; ++r)
            grid.ring(bx, by, r, [&](std::size_t j) {
                if (j > i && std::hypot(seeds[i].x - seeds[j].x, seeds[i].y - seeds[j].y) <= tol)
                    pairs.push_back(std::to_string(i) + "/" + std::to_string(j));
            });
    }
    if (!pairs.empty()) {
        std::string msg = "voronoi: coincident seeds";
        for (const auto& p : pairs) msg += " " + p;
        throw MeshError(msg);
    }
}

std::vector<std::vector<Point2D>> voronoi_cells(const Rectangle& d, const std::vector<Point2D>& seeds) {
    check_distinct(d, seeds);
    SeedGrid grid(d, seeds);
    const std::vector<Point2D> box{{d.x0, d.y0}, {d.x1, d.y0}, {d.x1, d.y1}, {d.x0, d.y1}};
    std::vector<std::vector<Point2D>> cells(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const Point2D s = seeds[i];
        std::vector<Point2D> poly = box;
        auto [bx, by] = grid.bucket(s);
        for (std::int64_t r = 0; r <= grid.max_ring(); ++r) {
            // Seeds in ring r are at least (r - 1) bucket widths away; they cannot
            // cut the cell once that exceeds twice its circumradius.
            double rmax = 0.0;
            for (const auto& p : poly) rmax = std::max(rmax, std::hypot(p.x - s.x, p.y - s.y));
            if (static_cast<double>(r - 1) * grid.bucket_size() > 2.0 * rmax) break;
            grid.ring(bx, by, r, [&](std::size_t j) {
                if (j != i) poly = clip_bisector(poly, s, seeds[j]);
            });
        }
        cells[i] = std::move(poly);
    }
    return cells;
}

class VertexMerger {
public:
    VertexMerger(Mesh& mesh, const Rectangle& d)
        : mesh_(mesh), d_(d), tol_(1e-8 * std::max(d.width(), d.height())) {}

    Index add(Point2D p) {
        const int prio = snap(p);
        const auto [kx, ky] = key(p);
        for (std::int64_t dy = -1; dy <= 1; ++dy)
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
                auto it = buckets_.find(pack(kx + dx, ky + dy));
                if (it == buckets_.end()) continue;
                for (Index id : it->second) {
                    Point2D q = mesh_.nodes[id].position;
                    if (std::hypot(p.x - q.x, p.y - q.y) <= tol_) {
                        if (prio > priority_[id]) {
                            mesh_.nodes[id].position = p;
                            priority_[id] = prio;
                        }
                        return id;
                    }
                }
            }
        const Index id = mesh_.nodes.size();
        mesh_.nodes.push_back({id, p});
        priority_.push_back(prio);
        buckets_[pack(kx, ky)].push_back(id);
        return id;
    }

private:
    // Snaps near-boundary coordinates onto the rectangle; returns 2 for corners,
    // 1 for side points, 0 for interior points.
    int snap(Point2D& p) const {
        int on = 0;
        if (std::abs(p.x - d_.x0) <= tol_) p.x = d_.x0, ++on;
        else if (std::abs(p.x - d_.x1) <= tol_) p.x = d_.x1, ++on;
        if (std::abs(p.y - d_.y0) <= tol_) p.y = d_.y0, ++on;
        else if (std::abs(p.y - d_.y1) <= tol_) p.y = d_.y1, ++on;
        return on;
    }
    std::pair<std::int64_t, std::int64_t> key(Point2D p) const {
        return {static_cast<std::int64_t>(std::floor((p.x - d_.x0) / tol_)),
                static_cast<std::int64_t>(std::floor((p.y - d_.y0) / tol_))};
    }
    static std::uint64_t pack(std::int64_t a, std::int64_t b) {
        return (static_cast<std::uint64_t>(a) << 32) ^ static_cast<std::uint64_t>(b & 0xffffffff);
    }

    Mesh& mesh_;
    Rectangle d_;
    double tol_;
    std::unordered_map<std::uint64_t, std::vector<Index>> buckets_;
    std::vector<int> priority_;
};

}  // namespace

Mesh build_voronoi_polygon_mesh(const Rectangle& domain, std::vector<Point2D> seeds,
                                int lloyd_iterations) {
    if (!(domain.width() > 0.0) || !(domain.height() > 0.0)) throw ConfigError("voronoi: empty domain");
    if (seeds.empty()) throw ConfigError("voronoi: need at least one seed");
    if (lloyd_iterations < 0) throw ConfigError("voronoi: lloyd_iterations must be >= 0");
    for (const auto& s : seeds)
        if (!(s.x >= domain.x0 && s.x <= domain.x1 && s.y >= domain.y0 && s.y <= domain.y1))
            throw ConfigError("voronoi: seed outside the domain");

    auto cells = voronoi_cells(domain, seeds);
    for (int it = 0; it < lloyd_iterations; ++it) {
        for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = polygon_centroid(cells[i]);
        cells = voronoi_cells(domain, seeds);
    }

    Mesh mesh;
    VertexMerger merger(mesh, domain);
    merger.add({domain.x0, domain.y0});
    merger.add({domain.x1, domain.y0});
    merger.add({domain.x1, domain.y1});
    merger.add({domain.x0, domain.y1});
    for (std::size_t i = 0; i < cells.size(); ++i) {
        PolygonCell cell{mesh.cells.size(), {}, 0};
        for (const auto& p : cells[i]) {
            const Index id = merger.add(p);
            if (!cell.vertex_ids.empty() && cell.vertex_ids.back() == id) continue;
            cell.vertex_ids.push_back(id);
        }
        while (cell.vertex_ids.size() > 1 && cell.vertex_ids.front() == cell.vertex_ids.back())
            cell.vertex_ids.pop_back();
        if (cell.vertex_ids.size() < 3)
            throw MeshError("voronoi: cell of seed " + std::to_string(i) + " collapsed");
        mesh.cells.push_back(std::move(cell));
    }
    // Corner nodes were pre-registered to take precedence; drop any that no cell uses.
    std::vector<char> used(mesh.nodes.size(), 0);
    for (const auto& c : mesh.cells)
        for (Index v : c.vertex_ids) used[v] = 1;
    if (std::find(used.begin(), used.end(), 0) != used.end()) {
        std::vector<Index> remap(mesh.nodes.size());
        std::vector<Node> kept;
        for (Index i = 0; i < mesh.nodes.size(); ++i)
            if (used[i]) {
                remap[i] = kept.size();
                kept.push_back({kept.size(), mesh.nodes[i].position});
            }
        mesh.nodes = std::move(kept);
        for (auto& c : mesh.cells)
            for (Index& v : c.vertex_ids) v = remap[v];
    }

    for (const auto& cell : mesh.cells) {
        const std::size_t n = cell.vertex_ids.size();
        for (std::size_t k = 0; k < n; ++k) {
            const Index a = cell.vertex_ids[k], b = cell.vertex_ids[(k + 1) % n];
            const Point2D p = mesh.nodes[a].position, q = mesh.nodes[b].position;
            const char* tag = nullptr;
            if (p.y == domain.y0 && q.y == domain.y0) tag = "bottom";
            else if (p.y == domain.y1 && q.y == domain.y1) tag = "top";
            else if (p.x == domain.x0 && q.x == domain.x0) tag = "left";
            else if (p.x == domain.x1 && q.x == domain.x1) tag = "right";
            if (tag) mesh.edge_tags[make_edge_key(a, b)] = tag;
        }
    }
    return mesh;
}

Mesh build_voronoi_polygon_mesh(const Rectangle& domain, std::size_t n_seeds, int lloyd_iterations,
                                std::uint64_t rng_seed) {
    if (n_seeds < 1) throw ConfigError("voronoi: n_seeds must be >= 1");
    std::mt19937_64 rng(rng_seed);
    // Raw 53-bit draws keep the seed sequence identical across standard libraries.
    auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    std::vector<Point2D> seeds(n_seeds);
    for (auto& s : seeds) {
        s.x = domain.x0 + domain.width() * uniform();
        s.y = domain.y0 + domain.height() * uniform();
    }
    return build_voronoi_polygon_mesh(domain, std::move(seeds), lloyd_iterations);
}

}  // namespace psbfem
