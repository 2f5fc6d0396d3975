#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "psbfem/error.hpp"
#include "psbfem/solver.hpp"

using namespace psbfem;

namespace {

constexpr double pi = std::numbers::pi;
const MaterialTable unit_material{{0, Material{}}};

std::vector<BoundaryCondition> all_sides(const ScalarField& f) {
    std::vector<BoundaryCondition> bcs;
    for (const char* tag : {"left", "right", "bottom", "top"}) bcs.push_back(BoundaryCondition::dirichlet(tag, f));
    return bcs;
}

Eigen::MatrixXd dense(const SparseMatrix& A) { return Eigen::MatrixXd(A); }

// Bilinear 4-node square element matrices, independent of the SBFEM pipeline.
Eigen::Matrix4d bilinear_K() {
    Eigen::Matrix4d K;
    K << 4, -1, -2, -1, -1, 4, -1, -2, -2, -1, 4, -1, -1, -2, -1, 4;
    return K / 6.0;
}

std::vector<Mesh> patch_meshes() {
    const RefinementFeature f = RefinementFeature::circle({0.3, 0.7}, 0.05);
    return {build_structured_quad_mesh(1, 1, 0.125), build_voronoi_polygon_mesh(Rectangle{}, 60, 3, 11),
            build_quadtree_mesh(Rectangle{}, std::span(&f, 1), 5, 1)};
}

Mesh transient_mesh(int n) { return build_structured_quad_mesh(pi, pi, pi / n); }

std::vector<BoundaryCondition> zero_dirichlet() {
    return all_sides([](double, double, double) { return 0.0; });
}

TransientConfig plate_config(double dt, double t_end) {
    TransientConfig c;
    c.dt = dt;
    c.t_end = t_end;
    c.initial = [](double x, double y) { return 10.0 * std::sin(x) * std::sin(y); };
    return c;
}

}  // namespace

TEST(Assembly, SingleCellEqualsElement) {
    const Mesh m = build_structured_quad_mesh(1, 1, 1);
    const auto el = compute_element_matrices(m, unit_material);
    const GlobalSystem sys = assemble_global(m, el);
    const auto& ids = el[0].node_ids;
    const Eigen::MatrixXd K = dense(sys.K), M = dense(sys.M);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_EQ(K(ids[i], ids[j]), el[0].K(i, j));
            EXPECT_EQ(M(ids[i], ids[j]), el[0].M(i, j));
        }
    EXPECT_EQ(sys.F.size(), 4);
    EXPECT_EQ(sys.F.norm(), 0.0);
}

TEST(Assembly, DominoHandSum) {
    const Mesh m = build_structured_quad_mesh(2, 1, 1);  // nodes 0 1 2 / 3 4 5
    const GlobalSystem sys = assemble_global(m, compute_element_matrices(m, unit_material));
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(6, 6);
    const int conn[2][4] = {{0, 1, 4, 3}, {1, 2, 5, 4}};
    for (const auto& c : conn)
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) K(c[i], c[j]) += bilinear_K()(i, j);
    EXPECT_LT((dense(sys.K) - K).norm(), 1e-12);
    EXPECT_NEAR(dense(sys.K)(1, 1), 4.0 / 3.0, 1e-12);
    EXPECT_LT((sys.K * Eigen::VectorXd::Ones(6)).norm(), 1e-8 * sys.K.norm());
}

TEST(Assembly, RejectsBadNodeIds) {
    const Mesh m = build_structured_quad_mesh(2, 1, 1);
    auto el = compute_element_matrices(m, unit_material);
    el[1].node_ids[2] = 77;
    try {
        assemble_global(m, el);
        FAIL();
    } catch (const ElementError& e) {
        EXPECT_EQ(e.cell(), 1u);
    }
}

TEST(BoundaryLoads, UniformFluxSplitsEqually) {
    const Mesh m = build_structured_quad_mesh(3, 3, 3);
    const std::vector bcs{BoundaryCondition::flux("bottom", [](double, double, double) { return 2.0; })};
    const Eigen::VectorXd F = boundary_load(m, bcs, 0.0);
    EXPECT_NEAR(F[0], -2.0 * 3.0 / 2.0, 1e-14);
    EXPECT_NEAR(F[1], -2.0 * 3.0 / 2.0, 1e-14);
    EXPECT_NEAR(F.tail(2).norm(), 0.0, 1e-15);
}

TEST(BoundaryLoads, ZeroFluxLeavesSystemUnchanged) {
    const Mesh m = build_structured_quad_mesh(2, 2, 1);
    GlobalSystem sys = assemble_global(m, compute_element_matrices(m, unit_material));
    const Eigen::MatrixXd K0 = dense(sys.K);
    const std::vector bcs{BoundaryCondition::flux("top", [](double, double, double) { return 0.0; })};
    apply_neumann_and_convection(sys, m, bcs, 0.0);
    EXPECT_EQ(sys.F.norm(), 0.0);
    EXPECT_EQ(dense(sys.K), K0);
}

TEST(BoundaryLoads, ConvectionEdgeMatrixAndLoad) {
    const Mesh m = build_structured_quad_mesh(2, 2, 2);  // bottom edge: nodes 0 and 1, length 2
    const double h = 5.0, tinf = 20.0, L = 2.0;
    const std::vector bcs{BoundaryCondition::convection("bottom", h, tinf)};
    const Eigen::MatrixXd H = dense(convection_matrix(m, bcs));
    EXPECT_NEAR(H(0, 0), h * L / 3.0, 1e-13);
    EXPECT_NEAR(H(0, 1), h * L / 6.0, 1e-13);
    EXPECT_NEAR(H(1, 1), h * L / 3.0, 1e-13);
    EXPECT_EQ(H(2, 2), 0.0);
    const Eigen::VectorXd F = boundary_load(m, bcs, 0.0);
    EXPECT_NEAR(F[0], h * tinf * L / 2.0, 1e-12);
    EXPECT_NEAR(F[1], h * tinf * L / 2.0, 1e-12);
}

TEST(BoundaryLoads, ConfigurationErrors) {
    const Mesh m = build_structured_quad_mesh(1, 1, 1);
    auto one = [](double, double, double) { return 1.0; };
    const std::vector overlap{BoundaryCondition::dirichlet("top", one), BoundaryCondition::flux("top", one)};
    EXPECT_THROW(check_boundary_conditions(m, overlap), ConfigError);
    const std::vector unknown{BoundaryCondition::dirichlet("north", one)};
    EXPECT_THROW(check_boundary_conditions(m, unknown), ConfigError);
}

TEST(Dirichlet, AllNodesConstrainedIsNoOp) {
    const Mesh m = build_structured_quad_mesh(1, 1, 1);
    const auto bcs = all_sides([](double x, double y, double) { return 3.0 * x + y; });
    const SteadyResult r = solve_steady(m, unit_material, bcs);
    EXPECT_EQ(r.free_dofs, 0u);
    for (const auto& n : m.nodes) EXPECT_DOUBLE_EQ(r.T[n.id], 3.0 * n.position.x + n.position.y);
}

TEST(Dirichlet, StripGivesLinearProfile) {
    const Mesh m = build_structured_quad_mesh(2, 1, 1);
    const std::vector bcs{BoundaryCondition::dirichlet("left", [](double, double, double) { return 0.0; }),
                          BoundaryCondition::dirichlet("right", [](double, double, double) { return 1.0; })};
    const SteadyResult r = solve_steady(m, unit_material, bcs);
    EXPECT_NEAR(r.T[1], 0.5, 1e-12);
    EXPECT_NEAR(r.T[4], 0.5, 1e-12);
}

TEST(Dirichlet, UnconstrainedSteadyIsSingular) {
    const Mesh m = build_structured_quad_mesh(2, 1, 1);
    const std::vector bcs{BoundaryCondition::flux("left", [](double, double, double) { return 1.0; })};
    EXPECT_THROW(solve_steady(m, unit_material, bcs), SolverError);
}

TEST(Dirichlet, FirstListedConditionWinsAtCorners) {
    const Mesh m = build_structured_quad_mesh(1, 1, 1);
    const std::vector bcs{BoundaryCondition::dirichlet("left", [](double, double, double) { return 1.0; }),
                          BoundaryCondition::dirichlet("bottom", [](double, double, double) { return 2.0; })};
    const auto c = dirichlet_constraints(m, bcs);
    ASSERT_EQ(c.size(), 3u);
    EXPECT_EQ(c[0].node, 0u);
    EXPECT_EQ(c[0].value(0, 0, 0), 1.0);
}

TEST(Steady, ConvectionOnlyProblemIsSolvable) {
    const Mesh m = build_structured_quad_mesh(2, 2, 0.5);
    std::vector<BoundaryCondition> bcs;
    for (const char* tag : {"left", "right", "bottom", "top"}) bcs.push_back(BoundaryCondition::convection(tag, 3.0, 25.0));
    const SteadyResult r = solve_steady(m, unit_material, bcs);
    for (Eigen::Index i = 0; i < r.T.size(); ++i) EXPECT_NEAR(r.T[i], 25.0, 1e-9);
}

TEST(Steady, FluxBalancesConvection) {
    // Insulated strip heated through the left edge and cooled by convection on the right:
    // T(x) = T_inf + q/h + q (L - x) / k.
    const Mesh m = build_structured_quad_mesh(4, 1, 0.5);
    const double q = 10.0, h = 2.0, tinf = 5.0, L = 4.0;
    const std::vector bcs{BoundaryCondition::flux("left", [q](double, double, double) { return -q; }),
                          BoundaryCondition::convection("right", h, tinf)};
    const SteadyResult r = solve_steady(m, unit_material, bcs);
    for (const auto& n : m.nodes)
        EXPECT_NEAR(r.T[n.id], tinf + q / h + q * (L - n.position.x), 1e-9);
}

TEST(Steady, UniformBoundaryValue) {
    const Mesh m = build_voronoi_polygon_mesh(Rectangle{}, 30, 2, 3);
    const SteadyResult r = solve_steady(m, unit_material, all_sides([](double, double, double) { return 7.5; }));
    for (Eigen::Index i = 0; i < r.T.size(); ++i) EXPECT_NEAR(r.T[i], 7.5, 1e-10);
    EXPECT_LE(r.residual, 1e-10);
}

TEST(Steady, AffinePatchTestOnAllMeshFamilies) {
    auto affine = [](double x, double y, double) { return 1.0 + 2.0 * x - 3.0 * y; };
    for (const Mesh& m : patch_meshes()) {
        const SteadyResult r = solve_steady(m, unit_material, all_sides(affine));
        double worst = 0.0;
        for (const auto& n : m.nodes) worst = std::max(worst, std::abs(r.T[n.id] - affine(n.position.x, n.position.y, 0)));
        EXPECT_LT(worst, 1e-9);
        const SolutionField field(m, r.elements, r.T);
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int k = 0; k < 50; ++k) {
            const Point2D p{u(rng), u(rng)};
            const auto v = field.at(p);
            ASSERT_TRUE(v.has_value());
            EXPECT_NEAR(*v, affine(p.x, p.y, 0), 1e-9);
        }
    }
}

TEST(Steady, DiscreteMaximumPrinciple) {
    const double a = 10.0;
    std::vector<BoundaryCondition> bcs{BoundaryCondition::dirichlet("top", [a](double x, double, double) {
        return 100.0 * std::sin(pi * x / a);
    })};
    for (const char* tag : {"left", "right", "bottom"})
        bcs.push_back(BoundaryCondition::dirichlet(tag, [](double, double, double) { return 0.0; }));
    for (double h : {1.0, 0.5, 0.25}) {
        const Mesh m = build_structured_quad_mesh(10, 5, h);
        const SteadyResult r = solve_steady(m, unit_material, bcs);
        EXPECT_GE(r.T.minCoeff(), -1e-9);
        EXPECT_LE(r.T.maxCoeff(), 100.0 + 1e-9);
    }
}

TEST(PointLocator, OutsidePointsAreRejected) {
    const Mesh m = build_structured_quad_mesh(1, 1, 0.25);
    const auto el = compute_element_matrices(m, unit_material);
    const PointLocator loc(m, el);
    EXPECT_FALSE(loc.locate({1.5, 0.5}).has_value());
    EXPECT_FALSE(loc.locate({-0.01, 0.5}).has_value());
    const auto c = loc.locate({1.0, 1.0});
    ASSERT_TRUE(c.has_value());
    EXPECT_NEAR(c->xi, 1.0, 1e-12);
}

TEST(Transient, ScalarBackwardEuler) {
    Mesh m;
    m.nodes.push_back({0, {0, 0}});
    GlobalSystem sys;
    const double k = 3.0, mass = 2.0, dt = 0.1;
    sys.K.resize(1, 1);
    sys.K.insert(0, 0) = k;
    sys.M.resize(1, 1);
    sys.M.insert(0, 0) = mass;
    sys.F = Eigen::VectorXd::Zero(1);
    TransientStepper stepper(m, sys, {});
    const TransientState s1 = stepper.step({0.0, Eigen::VectorXd::Ones(1)}, dt);
    EXPECT_NEAR(s1.T[0], 1.0 / (1.0 + dt * k / mass), 1e-15);
    EXPECT_NEAR(s1.t, dt, 1e-15);
}

TEST(Transient, SteadyStateIsFixedPoint) {
    const Mesh m = build_structured_quad_mesh(2, 1, 0.25);
    const std::vector bcs{BoundaryCondition::dirichlet("left", [](double, double, double) { return 0.0; }),
                          BoundaryCondition::dirichlet("right", [](double, double, double) { return 4.0; })};
    const SteadyResult st = solve_steady(m, unit_material, bcs);
    TransientStepper stepper(m, assemble_global(m, st.elements), bcs);
    TransientState s{0.0, st.T};
    for (int i = 0; i < 5; ++i) s = stepper.step(s, 0.01);
    EXPECT_LT((s.T - st.T).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(stepper.factorizations(), 1u);
    EXPECT_EQ(stepper.steps(), 5u);
}

TEST(Transient, OneStepMatchesAnalyticDecay) {
    // One backward-Euler step deviates from exp(-2 dt) by O(dt^2) in time plus
    // dt times the O(h^2) error of the discrete decay rate in space.
    const double dt = 1e-3;
    const Mesh m = transient_mesh(32);
    const auto r = run_transient(m, unit_material, zero_dirichlet(), plate_config(dt, dt));
    ASSERT_EQ(r.states.size(), 2u);
    Index centre = 0;
    for (const auto& n : m.nodes)
        if (std::abs(n.position.x - pi / 2) < 1e-12 && std::abs(n.position.y - pi / 2) < 1e-12) centre = n.id;
    const double ratio = r.states[1].T[centre] / r.states[0].T[centre];
    EXPECT_NEAR(ratio, std::exp(-2.0 * dt), 2e-5);
}

TEST(Transient, ZeroDataStaysZero) {
    const Mesh m = transient_mesh(4);
    TransientConfig c = plate_config(0.1, 0.5);
    c.initial = [](double, double) { return 0.0; };
    const auto r = run_transient(m, unit_material, zero_dirichlet(), c);
    for (const auto& s : r.states) EXPECT_EQ(s.T.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Transient, OutputCadenceAndFinalState) {
    const Mesh m = transient_mesh(4);
    TransientConfig c = plate_config(0.1, 1.05);
    c.output_every = 4;
    const auto r = run_transient(m, unit_material, zero_dirichlet(), c);
    EXPECT_EQ(r.steps, 11u);
    ASSERT_EQ(r.states.size(), 4u);  // steps 0, 4, 8 and the final step 11
    EXPECT_DOUBLE_EQ(r.states[1].t, 0.4);
    EXPECT_DOUBLE_EQ(r.states.back().t, 1.1);
    c.output_every = 0;
    EXPECT_THROW(run_transient(m, unit_material, zero_dirichlet(), c), ConfigError);
}

TEST(Transient, StableAndDissipativeForLargeSteps) {
    const Mesh m = transient_mesh(8);
    for (double dt : {1e-3, 1e-2, 1e-1}) {
        const auto r = run_transient(m, unit_material, zero_dirichlet(), plate_config(dt, 2.0));
        const GlobalSystem sys = assemble_global(m, r.elements);
        double prev_max = 1e300, prev_energy = 1e300;
        for (const auto& s : r.states) {
            const double mx = s.T.cwiseAbs().maxCoeff();
            const double energy = 0.5 * s.T.dot(sys.K * s.T);
            EXPECT_LE(mx, prev_max * (1.0 + 1e-14));
            EXPECT_LE(energy, prev_energy * (1.0 + 1e-14));
            prev_max = mx;
            prev_energy = energy;
        }
        EXPECT_LE(r.max_residual, 1e-10);
    }
}

TEST(Transient, TimeDependentDirichletUsesEndOfStep) {
    const Mesh m = build_structured_quad_mesh(1, 1, 0.5);
    const std::vector bcs{BoundaryCondition::dirichlet("left", [](double, double, double t) { return t; })};
    TransientConfig c;
    c.dt = 0.25;
    c.t_end = 0.5;
    c.initial = [](double, double) { return 0.0; };
    const auto r = run_transient(m, unit_material, bcs, c);
    EXPECT_DOUBLE_EQ(r.states[1].T[0], 0.25);
    EXPECT_DOUBLE_EQ(r.states[2].T[0], 0.5);
}

TEST(Transient, BitwiseDeterministic) {
    const Mesh m = build_voronoi_polygon_mesh(Rectangle{0, 0, pi, pi}, 50, 2, 9);
    std::vector<BoundaryCondition> bcs = zero_dirichlet();
    const auto a = run_transient(m, unit_material, bcs, plate_config(0.01, 0.2), {2, 1});
    const auto b = run_transient(m, unit_material, bcs, plate_config(0.01, 0.2), {2, 1});
    ASSERT_EQ(a.states.size(), b.states.size());
    for (std::size_t i = 0; i < a.states.size(); ++i) EXPECT_EQ(a.states[i].T, b.states[i].T);
}
