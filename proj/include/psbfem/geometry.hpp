#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace psbfem {

using Index = std::size_t;

struct Point2D {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2D&, const Point2D&) = default;
};

inline Point2D operator+(Point2D a, Point2D b) { return {a.x + b.x, a.y + b.y}; }
inline Point2D operator-(Point2D a, Point2D b) { return {a.x - b.x, a.y - b.y}; }
inline Point2D operator*(double s, Point2D a) { return {s * a.x, s * a.y}; }
inline double cross(Point2D a, Point2D b) { return a.x * b.y - a.y * b.x; }
inline double dot(Point2D a, Point2D b) { return a.x * b.x + a.y * b.y; }

struct Node {
    Index id = 0;
    Point2D position;

    friend bool operator==(const Node&, const Node&) = default;
};

/// Polygon with counter-clockwise vertex order. Hanging nodes of quadtree
/// leaves are ordinary vertices.
struct PolygonCell {
    Index id = 0;
    std::vector<Index> vertex_ids;
    Index material_id = 0;

    friend bool operator==(const PolygonCell&, const PolygonCell&) = default;
};

/// Undirected edge, stored with the smaller node id first.
using EdgeKey = std::pair<Index, Index>;

inline EdgeKey make_edge_key(Index a, Index b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

struct Mesh {
    std::vector<Node> nodes;
    std::vector<PolygonCell> cells;
    std::map<EdgeKey, std::string> edge_tags;

    std::vector<Point2D> cell_vertices(const PolygonCell& cell) const;
    std::vector<EdgeKey> edges_with_tag(const std::string& tag) const;
    double total_area() const;

    friend bool operator==(const Mesh&, const Mesh&) = default;
};

struct Rectangle {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 1.0;
    double y1 = 1.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
};

struct ScalingCenter {
    Index cell_id = 0;
    Point2D position;
};

/// Capsule-shaped refinement target: the set of points within `radius` of the
/// segment [a, b]. Covers points (a == b, radius 0), disks and line features.
struct RefinementFeature {
    Point2D a;
    Point2D b;
    double radius = 0.0;

    static RefinementFeature point(Point2D p) { return {p, p, 0.0}; }
    static RefinementFeature circle(Point2D c, double r) { return {c, c, r}; }
    static RefinementFeature segment(Point2D p, Point2D q) { return {p, q, 0.0}; }
};

enum class ViolationKind {
    TooFewVertices,
    RepeatedVertex,
    DanglingNode,
    Orientation,
    SelfIntersection,
    NotStarConvex,
    NonManifoldEdge,
    BadTag,
    NonDenseIds,
    NonFinite,
};

struct MeshViolation {
    ViolationKind kind;
    Index id = 0;  // cell id, node id or first node of the offending edge
    std::string message;
};

using ValidationReport = std::vector<MeshViolation>;

double signed_area(std::span<const Point2D> polygon);
Point2D polygon_centroid(std::span<const Point2D> polygon);

/// Axis-aligned grid of square cells on [0, width] x [0, height]. Boundary
/// edges are tagged "left", "right", "bottom" and "top".
Mesh build_structured_quad_mesh(double width, double height, double h);

/// 2:1 balanced quadtree over `domain`. The domain is first covered by a grid
/// of near-square root cells; leaves touching a feature are refined to
/// `max_depth`, all others to at least `min_depth`.
Mesh build_quadtree_mesh(const Rectangle& domain, std::span<const RefinementFeature> refine_near,
                         int max_depth, int min_depth);

/// Bounded Voronoi mesh of `n_seeds` uniformly drawn seeds after
/// `lloyd_iterations` centroidal relaxation sweeps.
Mesh build_voronoi_polygon_mesh(const Rectangle& domain, std::size_t n_seeds, int lloyd_iterations,
                                std::uint64_t rng_seed);

/// Same as above with caller-chosen seeds.
Mesh build_voronoi_polygon_mesh(const Rectangle& domain, std::vector<Point2D> seeds,
                                int lloyd_iterations);

/// Centroid of the cell, verified to see every boundary edge.
ScalingCenter compute_scaling_center(const PolygonCell& cell, const Mesh& mesh);

ValidationReport validate_mesh(const Mesh& mesh);

/// Tags boundary edges (edges used by exactly one cell) lying on a side of
/// the node bounding box as "left"/"right"/"bottom"/"top", and every other
/// boundary edge as "boundary". Existing tags are replaced.
void tag_boundary_edges(Mesh& mesh);

/// Counts how many cells use each undirected edge.
std::map<EdgeKey, int> edge_use_counts(const Mesh& mesh);

}  // namespace psbfem
