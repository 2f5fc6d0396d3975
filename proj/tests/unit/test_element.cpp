#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "psbfem/error.hpp"
#include "support/oracles.hpp"

using namespace psbfem;

namespace {

std::vector<Point2D> unit_square() { return {{0, 0}, {1, 0}, {1, 1}, {0, 1}}; }

std::vector<Point2D> regular_polygon(int n, double r = 1.0) {
    std::vector<Point2D> p;
    for (int k = 0; k < n; ++k) {
        const double a = 2.0 * std::numbers::pi * k / n;
        p.push_back({r * std::cos(a), r * std::sin(a)});
    }
    return p;
}

// Irregular heptagon whose Hamiltonian has a complex-conjugate exponent pair.
std::vector<Point2D> skewed_heptagon() {
    return {{0.21315, 0.0525036}, {-0.0522355, 0.704755}, {-0.248765, 1.17283}, {-0.555835, 0.58741},
            {-1.12099, -0.145086}, {0.805717, -0.707599}, {0.276674, -0.233549}};
}

struct Pipeline {
    CoefficientMatrices cm;
    Eigen::MatrixXd Zp;
    EigenSplit es;
    Eigen::MatrixXd K, M;
};

Pipeline run(const std::vector<Point2D>& poly, Material mat = {}) {
    Pipeline p;
    p.cm = coefficient_matrices(poly, polygon_centroid(poly), mat);
    p.Zp = build_hamiltonian(p.cm);
    p.es = eigen_split(p.Zp);
    p.K = steady_stiffness(p.es);
    p.M = mass_matrix(p.es, p.cm.M0);
    return p;
}

}  // namespace

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
    for (int order = 1; order <= 8; ++order) {
        const GaussRule g = gauss_legendre(order);
        ASSERT_EQ(g.points.size(), static_cast<std::size_t>(order));
        for (int deg = 0; deg <= 2 * order - 1; ++deg) {
            double s = 0.0;
            for (std::size_t i = 0; i < g.points.size(); ++i) s += g.weights[i] * std::pow(g.points[i], deg);
            const double exact = deg % 2 ? 0.0 : 2.0 / (deg + 1);
            EXPECT_NEAR(s, exact, 1e-14) << "order " << order << " degree " << deg;
        }
    }
    EXPECT_THROW(gauss_legendre(0), ConfigError);
}

TEST(ShapeFunctions, ValuesAndDerivatives) {
    const ShapeValues a = shape_functions(-1.0);
    EXPECT_DOUBLE_EQ(a.N[0], 1.0);
    EXPECT_DOUBLE_EQ(a.N[1], 0.0);
    const ShapeValues m = shape_functions(0.0);
    EXPECT_DOUBLE_EQ(m.N[0], 0.5);
    EXPECT_DOUBLE_EQ(m.N[1], 0.5);
    EXPECT_DOUBLE_EQ(m.dN[0], -0.5);
    EXPECT_DOUBLE_EQ(m.dN[1], 0.5);
}

TEST(BoundaryJacobian, StraightEdgeIsConstant) {
    // Edge from (0.5,-0.5) to (0.5,0.5) seen from the origin: |J| = cross(p1, p2) / 2.
    const EdgeGeometry e{{0.5, -0.5}, {0.5, 0.5}};
    EXPECT_NEAR(boundary_jacobian(e, -0.3), 0.25, 1e-15);
    const BVectors b = b_vectors(e, 0.0);
    EXPECT_NEAR(b.b1.x(), 2.0, 1e-14);
    EXPECT_NEAR(b.b1.y(), 0.0, 1e-14);
    EXPECT_THROW(boundary_jacobian({{0.5, 0.5}, {0.5, 0.5}}, 0.0), ElementError);
}

TEST(CoefficientMatrices, SingleEdgeE0Block) {
    // For the right edge of the centred unit square, b1 = (2, 0) and |J| = 1/4,
    // so E0 = 4 * 1/4 * int N^T N = [[2/3, 1/3], [1/3, 2/3]] on that edge.
    const std::vector<Point2D> sq{{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}};
    const CoefficientMatrices cm = coefficient_matrices(sq, {0, 0}, Material{});
    Eigen::MatrixXd E0 = Eigen::MatrixXd::Zero(4, 4);
    for (int e = 0; e < 4; ++e) {
        const int i = e, j = (e + 1) % 4;
        E0(i, i) += 2.0 / 3.0;
        E0(j, j) += 2.0 / 3.0;
        E0(i, j) += 1.0 / 3.0;
        E0(j, i) += 1.0 / 3.0;
    }
    EXPECT_LT((cm.E0 - E0).norm(), 1e-14);
    EXPECT_LT((cm.E0 - cm.E0.transpose()).norm(), 1e-14);
    EXPECT_LT((cm.E2 - cm.E2.transpose()).norm(), 1e-14);
}

TEST(CoefficientMatrices, RejectsInvisibleEdge) {
    EXPECT_THROW(coefficient_matrices(unit_square(), {2.0, 0.5}, Material{}), ElementError);
}

TEST(Hamiltonian, SpectrumSymmetricAboutZero) {
    for (const auto& poly : {unit_square(), regular_polygon(5), regular_polygon(8), skewed_heptagon()}) {
        const Pipeline p = run(poly);
        Eigen::VectorXcd ev = p.Zp.eigenvalues();
        for (Eigen::Index i = 0; i < ev.size(); ++i) {
            double best = 1e300;
            for (Eigen::Index j = 0; j < ev.size(); ++j) best = std::min(best, std::abs(ev[i] + ev[j]));
            EXPECT_LT(best, 1e-7);
        }
    }
}

TEST(EigenSplit, SelectsBoundedModes) {
    const Pipeline p = run(unit_square());
    ASSERT_EQ(p.es.lambda.size(), 4);
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_LE(p.es.lambda[i].real(), 1e-12);
    EXPECT_NEAR(std::abs(p.es.lambda[3]), 0.0, 1e-15);
    const Eigen::MatrixXd Phi = (Eigen::MatrixXd(8, 4) << p.es.psi11, p.es.psi21).finished();
    EXPECT_LT((p.Zp * Phi - Phi * p.es.exponents).norm(), 1e-10);
}

TEST(EigenSplit, RealifiesComplexPairs) {
    const Pipeline p = run(skewed_heptagon());
    const auto it = std::find(p.es.block_sizes.begin(), p.es.block_sizes.end(), 2);
    ASSERT_NE(it, p.es.block_sizes.end());
    const Eigen::Index n = p.es.psi11.rows();
    Eigen::MatrixXd Phi(2 * n, n);
    Phi << p.es.psi11, p.es.psi21;
    EXPECT_LT((p.Zp * Phi - Phi * p.es.exponents).norm(), 1e-9);
}

TEST(ElementOracles, StiffnessMatchesRadialShooting) {
    for (const auto& poly : {unit_square(), regular_polygon(5), skewed_heptagon()}) {
        const Pipeline p = run(poly);
        EXPECT_LT(oracle::rel_frobenius(p.K, oracle::riccati_stiffness(p.Zp)), 1e-7);
    }
}

TEST(ElementOracles, MassMatchesKroneckerLyapunov) {
    for (const auto& poly : {unit_square(), regular_polygon(5), skewed_heptagon()}) {
        const Pipeline p = run(poly);
        EXPECT_LT(oracle::rel_frobenius(p.M, oracle::kronecker_mass(p.K, p.cm)), 1e-7);
    }
}

TEST(ElementMatrices, UnitSquareMatchesBilinearElement) {
    const Pipeline p = run(unit_square());
    Eigen::Matrix4d K, M;
    K << 4, -1, -2, -1, -1, 4, -1, -2, -2, -1, 4, -1, -1, -2, -1, 4;
    M << 4, 2, 1, 2, 2, 4, 2, 1, 1, 2, 4, 2, 2, 1, 2, 4;
    EXPECT_LT((p.K - K / 6.0).norm(), 1e-12);
    EXPECT_LT((p.M - M / 36.0).norm(), 1e-12);
}

TEST(ElementMatrices, KernelDefinitenessAndMassTotal) {
    const Material mat{2.5, 3.0, 0.5};
    for (const auto& poly : {unit_square(), regular_polygon(3), regular_polygon(6), skewed_heptagon()}) {
        const Pipeline p = run(poly, mat);
        const Eigen::Index n = p.K.rows();
        const Eigen::VectorXd one = Eigen::VectorXd::Ones(n);
        EXPECT_LT((p.K * one).norm(), 1e-8 * p.K.norm());
        EXPECT_LT((p.K - p.K.transpose()).norm(), 1e-14);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ek(p.K);
        EXPECT_GT(ek.eigenvalues()[0], -1e-10);
        EXPECT_LT(std::abs(ek.eigenvalues()[0]), 1e-10);
        EXPECT_GT(ek.eigenvalues()[1], 1e-6);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(p.M);
        EXPECT_GT(em.eigenvalues()[0], 0.0);
        const double area = signed_area(poly);
        EXPECT_NEAR(one.dot(p.M * one), mat.capacity() * area, 1e-8 * mat.capacity() * area);
    }
}

TEST(ElementMatrices, RigidMotionAndScaling) {
    const auto base = skewed_heptagon();
    const Pipeline p0 = run(base);
    const double c = std::cos(0.7), s = std::sin(0.7), scale = 3.5;
    std::vector<Point2D> moved;
    for (auto q : base) moved.push_back({scale * (c * q.x - s * q.y) + 10.0, scale * (s * q.x + c * q.y) - 4.0});
    const Pipeline p1 = run(moved);
    EXPECT_LT(oracle::rel_frobenius(p1.K, p0.K), 1e-9);
    EXPECT_LT(oracle::rel_frobenius(p1.M, scale * scale * p0.M), 1e-9);
}

TEST(ElementMatrices, GaussOrderIndependentForStraightEdges) {
    const auto poly = regular_polygon(7);
    const ElementMatrices a = element_matrices(poly, Material{}, 2);
    const ElementMatrices b = element_matrices(poly, Material{}, 8);
    EXPECT_LT(oracle::rel_frobenius(a.K, b.K), 1e-12);
    EXPECT_LT(oracle::rel_frobenius(a.M, b.M), 1e-12);
}

TEST(ElementMatrices, HangingNodeCellIsConsistent) {
    // Square with a mid-side node on the bottom edge: five vertices, two collinear edges.
    const std::vector<Point2D> poly{{0, 0}, {0.5, 0}, {1, 0}, {1, 1}, {0, 1}};
    const Pipeline p = run(poly);
    EXPECT_LT(oracle::rel_frobenius(p.K, oracle::riccati_stiffness(p.Zp)), 1e-7);
    // Affine field T = x reproduces zero net nodal flux imbalance against the boundary integral.
    Eigen::VectorXd T(5);
    for (int i = 0; i < 5; ++i) T[i] = poly[i].x;
    const Eigen::VectorXd q = p.K * T;
    // Exact nodal fluxes of grad T = (1, 0): -1/2 on the left nodes, +1/2 on the right nodes.
    EXPECT_NEAR(q[0], -0.5, 1e-10);
    EXPECT_NEAR(q[1], 0.0, 1e-10);
    EXPECT_NEAR(q[2], 0.5, 1e-10);
    EXPECT_NEAR(q[3], 0.5, 1e-10);
    EXPECT_NEAR(q[4], -0.5, 1e-10);
}

TEST(InteriorField, ReproducesNodalAndAffineValues) {
    const auto poly = regular_polygon(6, 2.0);
    const ElementMatrices e = element_matrices(poly, Material{});
    Eigen::VectorXd T(6);
    for (int i = 0; i < 6; ++i) T[i] = 1.0 + 2.0 * poly[i].x - 0.5 * poly[i].y;
    const InteriorField f(e.modes, T);
    EXPECT_NEAR(f(1.0, -1.0, 2), T[2], 1e-10);
    EXPECT_NEAR(f(0.0, 0.3, 4), 1.0, 1e-10);
    for (double xi : {0.1, 0.5, 0.9})
        for (double eta : {-0.7, 0.0, 0.4}) {
            const Point2D a = poly[3], b = poly[4];
            const ShapeValues s = shape_functions(eta);
            const Point2D x = xi * (s.N[0] * a + s.N[1] * b);
            EXPECT_NEAR(f(xi, eta, 3), 1.0 + 2.0 * x.x - 0.5 * x.y, 1e-9);
        }
    EXPECT_THROW(f(1.5, 0.0, 0), ConfigError);
    EXPECT_THROW(f(0.5, 0.0, 6), ConfigError);
}

TEST(ComputeElementMatrices, ThreadCountDoesNotChangeResults) {
    const Mesh mesh = build_voronoi_polygon_mesh(Rectangle{0, 0, 2, 1}, 40, 2, 7);
    const MaterialTable mats{{0, Material{}}};
    const auto a = compute_element_matrices(mesh, mats, 2, 1);
    const auto b = compute_element_matrices(mesh, mats, 2, 3);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].K, b[i].K);
        EXPECT_EQ(a[i].M, b[i].M);
    }
}

TEST(ComputeElementMatrices, MissingMaterialIsConfigError) {
    const Mesh mesh = build_structured_quad_mesh(1, 1, 0.5);
    EXPECT_THROW(compute_element_matrices(mesh, MaterialTable{{3, Material{}}}), ConfigError);
}

TEST(ElementCache, MemoizesByCell) {
    const Mesh mesh = build_structured_quad_mesh(1, 1, 0.5);
    ElementCache cache;
    const auto& a = cache.get(mesh.cells[1], mesh, Material{});
    const auto& b = cache.get(mesh.cells[1], mesh, Material{});
    EXPECT_EQ(&a, &b);
    EXPECT_EQ(cache.size(), 1u);
}
