#pragma once

#include <Eigen/Sparse>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psbfem/element.hpp"
#include "psbfem/geometry.hpp"

namespace psbfem {

/// Space-time scalar field f(x, y, t).
using ScalarField = std::function<double(double, double, double)>;
using SparseMatrix = Eigen::SparseMatrix<double>;

enum class BcKind { Dirichlet, Flux, Convection };

/// Boundary condition on every mesh edge carrying `edge_tag`.
///  - Dirichlet: prescribed temperature value(x, y, t).
///  - Flux: prescribed outward normal flux q2(x, y, t) = -k dT/dn.
///  - Convection: -k dT/dn = h (T - T_inf).
struct BoundaryCondition {
    BcKind kind = BcKind::Dirichlet;
    std::string edge_tag;
    ScalarField value;
    double h = 0.0;
    double t_inf = 0.0;

    static BoundaryCondition dirichlet(std::string tag, ScalarField f) {
        return {BcKind::Dirichlet, std::move(tag), std::move(f), 0.0, 0.0};
    }
    static BoundaryCondition flux(std::string tag, ScalarField q) {
        return {BcKind::Flux, std::move(tag), std::move(q), 0.0, 0.0};
    }
    static BoundaryCondition convection(std::string tag, double h, double t_inf) {
        return {BcKind::Convection, std::move(tag), {}, h, t_inf};
    }
};

struct Constraint {
    Index node = 0;
    Point2D position;
    ScalarField value;
};

struct GlobalSystem {
    SparseMatrix K;
    SparseMatrix M;
    Eigen::VectorXd F;
    std::vector<Constraint> constrained;  // unique nodes

    Index dofs() const { return static_cast<Index>(F.size()); }
};

/// Scatter-add of element K and M by node ids; F starts at zero.
GlobalSystem assemble_global(const Mesh& mesh, std::span<const ElementMatrices> elements);

/// Checks that every tag exists and that no tag carries both a Dirichlet and
/// a flux condition.
void check_boundary_conditions(const Mesh& mesh, std::span<const BoundaryCondition> bcs);

/// h * int N^T N ds over convection edges.
SparseMatrix convection_matrix(const Mesh& mesh, std::span<const BoundaryCondition> bcs);

/// Edge loads at time t: -int N q2 ds on flux edges plus h T_inf int N ds on
/// convection edges (2-point Gauss).
Eigen::VectorXd boundary_load(const Mesh& mesh, std::span<const BoundaryCondition> bcs, double t);

/// K += convection_matrix, F += boundary_load(t).
void apply_neumann_and_convection(GlobalSystem& sys, const Mesh& mesh,
                                  std::span<const BoundaryCondition> bcs, double t);

/// Nodes on Dirichlet edges. A node shared by several Dirichlet tags takes the
/// condition listed first.
std::vector<Constraint> dirichlet_constraints(const Mesh& mesh, std::span<const BoundaryCondition> bcs);

/// Partitioned system K_ff x = F_f - K_fc T_c.
struct ReducedSystem {
    std::vector<Index> free_dofs;
    std::vector<Index> fixed_dofs;
    Eigen::VectorXd fixed_values;
    SparseMatrix K_ff;
    Eigen::VectorXd F_f;
    Index n_total = 0;

    Eigen::VectorXd expand(const Eigen::VectorXd& x_free) const;
};

/// Eliminates sys.constrained evaluated at time t. Throws SolverError when no
/// node is constrained and K keeps its constant-mode kernel.
ReducedSystem apply_dirichlet(const GlobalSystem& sys, double t);

/// Symmetric positive definite solver: sparse LDL^T up to `direct_limit`
/// unknowns, diagonally preconditioned CG above. Every solve is checked
/// against a relative residual of 1e-10.
class SpdSolver {
public:
    static constexpr Index direct_limit = 200000;

    void factorize(const SparseMatrix& A);
    Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    double last_residual() const { return last_residual_; }
    Index size() const { return static_cast<Index>(A_.rows()); }

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
    SparseMatrix A_;
    mutable double last_residual_ = 0.0;
};

struct SolveOptions {
    int gauss_order = 2;
    int threads = 1;
};

struct SteadyResult {
    Eigen::VectorXd T;
    std::vector<ElementMatrices> elements;
    double residual = 0.0;
    Index dofs = 0;
    Index free_dofs = 0;
};

SteadyResult solve_steady(const Mesh& mesh, const MaterialTable& materials,
                          std::span<const BoundaryCondition> bcs, const SolveOptions& options = {});

struct TransientConfig {
    double dt = 1e-3;
    double t_end = 1.0;
    std::function<double(double, double)> initial;  // T0(x, y)
    int output_every = 1;
};

struct TransientState {
    double t = 0.0;
    Eigen::VectorXd T;
};

/// Backward-Euler integrator for K T + M dT/dt = Q:
/// (K + M/dt) T^{n+1} = Q^{n+1} + (M/dt) T^n, with Dirichlet values taken at
/// t + dt. The effective matrix is factorized once per time step size.
class TransientStepper {
public:
    TransientStepper(const Mesh& mesh, GlobalSystem sys, std::vector<BoundaryCondition> bcs);

    TransientState step(const TransientState& state, double dt);

    std::size_t factorizations() const { return factorizations_; }
    std::size_t steps() const { return steps_; }
    double max_residual() const { return max_residual_; }
    const GlobalSystem& system() const { return sys_; }

private:
    void prepare(double dt);

    const Mesh* mesh_;
    GlobalSystem sys_;
    std::vector<BoundaryCondition> bcs_;
    std::vector<Index> free_, fixed_;
    std::vector<Eigen::Index> pos_;
    SparseMatrix A_ff_, A_fc_, M_;
    SpdSolver solver_;
    double dt_ = 0.0;
    bool has_flux_ = false;
    Eigen::VectorXd static_load_;
    std::size_t factorizations_ = 0;
    std::size_t steps_ = 0;
    double max_residual_ = 0.0;
};

struct TransientResult {
    std::vector<TransientState> states;
    std::vector<ElementMatrices> elements;
    double max_residual = 0.0;
    Index dofs = 0;
    std::size_t steps = 0;
};

/// Runs ceil(t_end/dt) backward-Euler steps from the nodal interpolant of
/// T0. Emits the initial state, every output_every-th step and the final step.
TransientResult run_transient(const Mesh& mesh, const MaterialTable& materials,
                              std::span<const BoundaryCondition> bcs, const TransientConfig& config,
                              const SolveOptions& options = {});

/// Where a point falls inside a mesh, in scaled-boundary coordinates.
struct CellLocation {
    Index cell = 0;
    std::size_t edge = 0;
    double xi = 0.0;
    double eta = 0.0;
};

/// Spatial lookup of points in a mesh's cells (fan sectors around each
/// scaling center).
class PointLocator {
public:
    PointLocator(const Mesh& mesh, std::span<const ElementMatrices> elements);
    std::optional<CellLocation> locate(Point2D p) const;

private:
    const Mesh* mesh_;
    std::vector<Point2D> centers_;
    double x0_ = 0, y0_ = 0, bs_ = 1;
    Index nx_ = 1, ny_ = 1;
    std::vector<std::vector<Index>> buckets_;
};

/// Numerical temperature field of a solved mesh, evaluated with the
/// semi-analytical interior solution of each element.
class SolutionField {
public:
    SolutionField(const Mesh& mesh, std::span<const ElementMatrices> elements, const Eigen::VectorXd& T);

    std::optional<double> at(Point2D p) const;
    double at(Index cell, std::size_t edge, double xi, double eta) const;
    const InteriorField& element(Index cell) const { return fields_[cell]; }

private:
    PointLocator locator_;
    std::vector<InteriorField> fields_;
};

}  // namespace psbfem
