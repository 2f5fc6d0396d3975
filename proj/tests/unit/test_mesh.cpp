#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "psbfem/error.hpp"
#include "psbfem/geometry.hpp"

using namespace psbfem;

namespace {

std::size_t count_tag(const Mesh& m, const std::string& tag) { return m.edges_with_tag(tag).size(); }

bool has_node_at(const Mesh& m, Point2D p) {
    for (const auto& n : m.nodes)
        if (std::abs(n.position.x - p.x) < 1e-12 && std::abs(n.position.y - p.y) < 1e-12) return true;
    return false;
}

}  // namespace

TEST(Polygon, AreaAndCentroid) {
    const std::vector<Point2D> tri{{0, 0}, {3, 0}, {0, 3}};
    EXPECT_DOUBLE_EQ(signed_area(tri), 4.5);
    const Point2D c = polygon_centroid(tri);
    EXPECT_NEAR(c.x, 1.0, 1e-15);
    EXPECT_NEAR(c.y, 1.0, 1e-15);
    const std::vector<Point2D> far{{1e8, 1e8}, {1e8 + 1, 1e8}, {1e8 + 1, 1e8 + 1}, {1e8, 1e8 + 1}};
    const Point2D cf = polygon_centroid(far);
    EXPECT_NEAR(cf.x - 1e8, 0.5, 1e-7);
}

TEST(StructuredMesh, CountsAndTags) {
    const Mesh m = build_structured_quad_mesh(10, 5, 0.5);
    EXPECT_EQ(m.cells.size(), 200u);
    EXPECT_EQ(m.nodes.size(), 231u);
    EXPECT_EQ(count_tag(m, "bottom"), 20u);
    EXPECT_EQ(count_tag(m, "top"), 20u);
    EXPECT_EQ(count_tag(m, "left"), 10u);
    EXPECT_EQ(count_tag(m, "right"), 10u);
    EXPECT_TRUE(validate_mesh(m).empty());
    EXPECT_NEAR(m.total_area(), 50.0, 1e-12);
}

TEST(StructuredMesh, RejectsNonDividingSize) {
    EXPECT_THROW(build_structured_quad_mesh(10, 5, 0.3), ConfigError);
    EXPECT_THROW(build_structured_quad_mesh(10, 5, -1), ConfigError);
    EXPECT_NO_THROW(build_structured_quad_mesh(std::acos(-1.0), std::acos(-1.0), std::acos(-1.0) / 8));
}

TEST(Quadtree, HandExampleWithHangingNodes) {
    const RefinementFeature f = RefinementFeature::point({0.25, 0.25});
    const Mesh m = build_quadtree_mesh(Rectangle{0, 0, 1, 1}, std::span(&f, 1), 2, 1);
    EXPECT_EQ(m.cells.size(), 7u);
    EXPECT_EQ(m.nodes.size(), 14u);
    EXPECT_TRUE(has_node_at(m, {0.5, 0.25}));
    EXPECT_TRUE(has_node_at(m, {0.25, 0.5}));
    EXPECT_TRUE(validate_mesh(m).empty());
    std::size_t five = 0;
    for (const auto& c : m.cells) five += c.vertex_ids.size() == 5;
    EXPECT_EQ(five, 2u);
}

TEST(Quadtree, BalancedAndConforming) {
    const RefinementFeature f = RefinementFeature::segment({0, 5}, {10, 5});
    const Mesh m = build_quadtree_mesh(Rectangle{0, 0, 10, 5}, std::span(&f, 1), 5, 1);
    EXPECT_TRUE(validate_mesh(m).empty());
    EXPECT_NEAR(m.total_area(), 50.0, 1e-9);
    std::size_t maxv = 0;
    for (const auto& c : m.cells) maxv = std::max(maxv, c.vertex_ids.size());
    EXPECT_GT(maxv, 4u);
    EXPECT_LE(maxv, 8u);  // 2:1 balance allows at most one hanging node per side
    for (const auto& [e, uses] : edge_use_counts(m)) EXPECT_LE(uses, 2);
    EXPECT_EQ(count_tag(m, "top"), 2u << 5);  // two root cells, each split to depth 5
}

TEST(Quadtree, RejectsBadDepths) {
    EXPECT_THROW(build_quadtree_mesh(Rectangle{}, {}, 1, 2), ConfigError);
    EXPECT_THROW(build_quadtree_mesh(Rectangle{}, {}, 20, 0), ConfigError);
}

TEST(Voronoi, SymmetricSeedsGiveSquares) {
    const std::vector<Point2D> seeds{{0.5, 0.5}, {1.5, 0.5}, {0.5, 1.5}, {1.5, 1.5}};
    const Mesh m = build_voronoi_polygon_mesh(Rectangle{0, 0, 2, 2}, seeds, 0);
    ASSERT_EQ(m.cells.size(), 4u);
    EXPECT_EQ(m.nodes.size(), 9u);
    for (const auto& c : m.cells) EXPECT_NEAR(signed_area(m.cell_vertices(c)), 1.0, 1e-12);
    EXPECT_TRUE(validate_mesh(m).empty());
}

TEST(Voronoi, AreaValidityAndDeterminism) {
    const Rectangle d{0, 0, 10, 5};
    const Mesh a = build_voronoi_polygon_mesh(d, 300, 5, 42);
    const Mesh b = build_voronoi_polygon_mesh(d, 300, 5, 42);
    EXPECT_TRUE(a == b);
    EXPECT_NEAR(a.total_area(), 50.0, 1e-9);
    const auto report = validate_mesh(a);
    EXPECT_TRUE(report.empty()) << (report.empty() ? "" : report.front().message);
    const Mesh c = build_voronoi_polygon_mesh(d, 300, 5, 43);
    EXPECT_FALSE(a == c);
    double boundary = 0.0;
    for (const char* tag : {"left", "right", "bottom", "top"})
        for (auto [p, q] : a.edges_with_tag(tag)) {
            const Point2D u = a.nodes[q].position - a.nodes[p].position;
            boundary += std::hypot(u.x, u.y);
        }
    EXPECT_NEAR(boundary, 30.0, 1e-9);
}

TEST(Voronoi, CoincidentSeedsAreRejected) {
    const std::vector<Point2D> seeds{{0.5, 0.5}, {0.5, 0.5}, {1.5, 1.5}};
    try {
        build_voronoi_polygon_mesh(Rectangle{0, 0, 2, 2}, seeds, 0);
        FAIL();
    } catch (const MeshError& e) {
        EXPECT_NE(std::string(e.what()).find("0/1"), std::string::npos);
    }
}

TEST(ScalingCenter, CentroidOfConvexCell) {
    const Mesh m = build_structured_quad_mesh(2, 2, 1);
    const ScalingCenter c = compute_scaling_center(m.cells[3], m);
    EXPECT_DOUBLE_EQ(c.position.x, 1.5);
    EXPECT_DOUBLE_EQ(c.position.y, 1.5);
}

TEST(ScalingCenter, RejectsCentroidBlindCell) {
    // Thin L-shaped hexagon: the centroid falls outside the polygon.
    Mesh m;
    const std::vector<Point2D> p{{0, 0}, {10, 0}, {10, 0.1}, {0.1, 0.1}, {0.1, 10}, {0, 10}};
    for (Index i = 0; i < p.size(); ++i) m.nodes.push_back({i, p[i]});
    m.cells.push_back({0, {0, 1, 2, 3, 4, 5}, 0});
    EXPECT_THROW(compute_scaling_center(m.cells[0], m), MeshError);
    const auto r = validate_mesh(m);
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].kind, ViolationKind::NotStarConvex);
}

TEST(Validation, ReportsDefects) {
    Mesh m = build_structured_quad_mesh(2, 1, 1);
    std::reverse(m.cells[0].vertex_ids.begin(), m.cells[0].vertex_ids.end());
    m.cells[1].vertex_ids.push_back(99);
    m.edge_tags[make_edge_key(0, 4)] = "bogus";
    std::set<ViolationKind> kinds;
    for (const auto& v : validate_mesh(m)) kinds.insert(v.kind);
    EXPECT_TRUE(kinds.contains(ViolationKind::Orientation));
    EXPECT_TRUE(kinds.contains(ViolationKind::DanglingNode));
    EXPECT_TRUE(kinds.contains(ViolationKind::BadTag));
}

TEST(Validation, TagBoundaryEdges) {
    Mesh m = build_structured_quad_mesh(3, 2, 1);
    const auto before = m.edge_tags;
    tag_boundary_edges(m);
    EXPECT_EQ(m.edge_tags, before);
}
