#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>

#include "partition.hpp"
#include "psbfem/error.hpp"
#include "psbfem/solver.hpp"

namespace psbfem {

namespace {

constexpr double residual_gate = 1e-10;

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

}  // namespace

struct SpdSolver::Impl {
    bool direct = true;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt;
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg;
};

void SpdSolver::factorize(const SparseMatrix& A) {
    if (A.rows() != A.cols()) throw SolverError("factorize: matrix is not square");
    A_ = A;
    impl_ = std::make_shared<Impl>();
    impl_->direct = static_cast<Index>(A.rows()) <= direct_limit;
    if (A.rows() == 0) return;
    if (impl_->direct) {
        impl_->ldlt.compute(A_);
        if (impl_->ldlt.info() != Eigen::Success) throw SolverError("sparse LDL^T factorization failed");
        const Eigen::VectorXd d = impl_->ldlt.vectorD();
        const double dmax = d.cwiseAbs().maxCoeff();
        const double dmin = d.minCoeff();
        if (!(dmin > 1e-14 * dmax))
            throw SolverError("matrix is singular or indefinite (pivot ratio estimate " +
                              sci(dmin > 0.0 ? dmax / dmin : std::numeric_limits<double>::infinity()) + ")");
    } else {
        impl_->cg.setTolerance(1e-12);
        impl_->cg.setMaxIterations(std::max<Eigen::Index>(1000, 10 * A.rows()));
        impl_->cg.compute(A_);
        if (impl_->cg.info() != Eigen::Success) throw SolverError("conjugate gradient setup failed");
    }
}

Eigen::VectorXd SpdSolver::solve(const Eigen::VectorXd& b) const {
    if (!impl_) throw SolverError("solve called before factorize");
    if (b.size() != A_.rows()) throw SolverError("solve: right-hand side has the wrong size");
    if (b.size() == 0) {
        last_residual_ = 0.0;
        return b;
    }
    Eigen::VectorXd x = impl_->direct ? Eigen::VectorXd(impl_->ldlt.solve(b)) : Eigen::VectorXd(impl_->cg.solve(b));
    const double bn = b.norm();
    const double rn = (A_ * x - b).norm();
    last_residual_ = bn > 0.0 ? rn / bn : rn;
    if (!x.allFinite() || !(last_residual_ <= residual_gate))
        throw SolverError("linear solve residual " + sci(last_residual_) + " exceeds " + sci(residual_gate));
    return x;
}

SteadyResult solve_steady(const Mesh& mesh, const MaterialTable& materials, std::span<const BoundaryCondition> bcs,
                          const SolveOptions& options) {
    SteadyResult out;
    out.elements = compute_element_matrices(mesh, materials, options.gauss_order, options.threads);
    GlobalSystem sys = assemble_global(mesh, out.elements);
    apply_neumann_and_convection(sys, mesh, bcs, 0.0);
    sys.constrained = dirichlet_constraints(mesh, bcs);
    const ReducedSystem r = apply_dirichlet(sys, 0.0);
    SpdSolver solver;
    solver.factorize(r.K_ff);
    const Eigen::VectorXd x = solver.solve(r.F_f);
    out.T = r.expand(x);
    out.residual = solver.last_residual();
    out.dofs = sys.dofs();
    out.free_dofs = r.free_dofs.size();
    return out;
}

TransientStepper::TransientStepper(const Mesh& mesh, GlobalSystem sys, std::vector<BoundaryCondition> bcs)
    : mesh_(&mesh), sys_(std::move(sys)), bcs_(std::move(bcs)) {
    check_boundary_conditions(mesh, bcs_);
    sys_.K += convection_matrix(mesh, bcs_);
    sys_.constrained = dirichlet_constraints(mesh, bcs_);
    detail::partition(sys_.dofs(), sys_.constrained, free_, fixed_, pos_);
    has_flux_ = std::any_of(bcs_.begin(), bcs_.end(), [](const auto& b) { return b.kind == BcKind::Flux; });
    static_load_ = boundary_load(mesh, bcs_, 0.0);
}

void TransientStepper::prepare(double dt) {
    if (dt == dt_ && factorizations_ > 0) return;
    const SparseMatrix A = sys_.K + sys_.M / dt;
    const auto mask = detail::fixed_mask(sys_.dofs(), fixed_);
    const auto nf = static_cast<Eigen::Index>(free_.size());
    const auto nc = static_cast<Eigen::Index>(fixed_.size());
    A_ff_ = detail::block(A, mask, false, false, pos_, nf, nf);
    A_fc_ = detail::block(A, mask, false, true, pos_, nf, nc);
    solver_.factorize(A_ff_);
    dt_ = dt;
    ++factorizations_;
}

TransientState TransientStepper::step(const TransientState& state, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("time step must be positive");
    if (state.T.size() != static_cast<Eigen::Index>(sys_.dofs()))
        throw SolverError("transient state has the wrong size");
    prepare(dt);
    const double t1 = state.t + dt;
    const Eigen::VectorXd Q = has_flux_ ? boundary_load(*mesh_, bcs_, t1) : static_load_;
    const Eigen::VectorXd rhs_full = Q + (sys_.M * state.T) / dt;

    Eigen::VectorXd Tc(static_cast<Eigen::Index>(fixed_.size()));
    for (const auto& c : sys_.constrained)
        Tc[pos_[c.node]] = c.value(c.position.x, c.position.y, t1);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t i = 0; i < free_.size(); ++i)
        rhs[static_cast<Eigen::Index>(i)] = rhs_full[static_cast<Eigen::Index>(free_[i])];
    if (Tc.size() > 0) rhs -= A_fc_ * Tc;

    Eigen::VectorXd x;
    try {
        x = solver_.solve(rhs);
    } catch (const SolverError& e) {
        throw SolverError("step " + std::to_string(steps_ + 1) + ": " + e.what());
    }
    max_residual_ = std::max(max_residual_, solver_.last_residual());
    ++steps_;

    TransientState next{t1, Eigen::VectorXd(state.T.size())};
    for (std::size_t i = 0; i < free_.size(); ++i)
        next.T[static_cast<Eigen::Index>(free_[i])] = x[static_cast<Eigen::Index>(i)];
    for (std::size_t i = 0; i < fixed_.size(); ++i)
        next.T[static_cast<Eigen::Index>(fixed_[i])] = Tc[static_cast<Eigen::Index>(i)];
    return next;
}

TransientResult run_transient(const Mesh& mesh, const MaterialTable& materials,
                              std::span<const BoundaryCondition> bcs, const TransientConfig& config,
                              const SolveOptions& options) {
    if (!(config.dt > 0.0) || !std::isfinite(config.dt)) throw ConfigError("transient: dt must be positive");
    if (!(config.t_end >= config.dt) || !std::isfinite(config.t_end))
        throw ConfigError("transient: t_end must be at least dt");
    if (config.output_every < 1) throw ConfigError("transient: output_every must be >= 1");
    if (!config.initial) throw ConfigError("transient: no initial condition");

    TransientResult out;
    out.elements = compute_element_matrices(mesh, materials, options.gauss_order, options.threads);
    TransientStepper stepper(mesh, assemble_global(mesh, out.elements), {bcs.begin(), bcs.end()});

    TransientState state{0.0, Eigen::VectorXd(static_cast<Eigen::Index>(mesh.nodes.size()))};
    for (const auto& n : mesh.nodes) state.T[static_cast<Eigen::Index>(n.id)] = config.initial(n.position.x, n.position.y);
    if (!state.T.allFinite()) throw ConfigError("transient: initial condition is not finite");
    out.states.push_back(state);

    const auto steps = static_cast<std::size_t>(std::ceil(config.t_end / config.dt - 1e-9));
    for (std::size_t k = 1; k <= steps; ++k) {
        state = stepper.step(state, config.dt);
        state.t = static_cast<double>(k) * config.dt;
        if (k % static_cast<std::size_t>(config.output_every) == 0 || k == steps) out.states.push_back(state);
    }
    out.max_residual = stepper.max_residual();
    out.dofs = mesh.nodes.size();
    out.steps = steps;
    return out;
}

PointLocator::PointLocator(const Mesh& mesh, std::span<const ElementMatrices> elements) : mesh_(&mesh) {
    if (elements.size() != mesh.cells.size()) throw SolverError("point locator: element count mismatch");
    centers_.reserve(elements.size());
    for (const auto& e : elements) centers_.push_back(e.center.position);
    if (mesh.nodes.empty()) return;
    double x1 = mesh.nodes[0].position.x, y1 = mesh.nodes[0].position.y;
    x0_ = x1;
    y0_ = y1;
    for (const auto& n : mesh.nodes) {
        x0_ = std::min(x0_, n.position.x);
        y0_ = std::min(y0_, n.position.y);
        x1 = std::max(x1, n.position.x);
        y1 = std::max(y1, n.position.y);
    }
    const double w = std::max(x1 - x0_, 1e-300), h = std::max(y1 - y0_, 1e-300);
    const double cells = static_cast<double>(std::max<std::size_t>(mesh.cells.size(), 1));
    bs_ = std::sqrt(w * h / cells);
    if (!(bs_ > 0.0)) bs_ = std::max(w, h);
    nx_ = std::max<Index>(1, static_cast<Index>(std::ceil(w / bs_)));
    ny_ = std::max<Index>(1, static_cast<Index>(std::ceil(h / bs_)));
    buckets_.resize(nx_ * ny_);
    auto clampi = [](double v, Index n) {
        return static_cast<Index>(std::clamp(v, 0.0, static_cast<double>(n - 1)));
    };
    for (const auto& c : mesh.cells) {
        double bx0 = 1e300, by0 = 1e300, bx1 = -1e300, by1 = -1e300;
        for (Index v : c.vertex_ids) {
            const Point2D p = mesh.nodes[v].position;
            bx0 = std::min(bx0, p.x);
            by0 = std::min(by0, p.y);
            bx1 = std::max(bx1, p.x);
            by1 = std::max(by1, p.y);
        }
        const Index i0 = clampi(std::floor((bx0 - x0_) / bs_), nx_), i1 = clampi(std::floor((bx1 - x0_) / bs_), nx_);
        const Index j0 = clampi(std::floor((by0 - y0_) / bs_), ny_), j1 = clampi(std::floor((by1 - y0_) / bs_), ny_);
        for (Index j = j0; j <= j1; ++j)
            for (Index i = i0; i <= i1; ++i) buckets_[j * nx_ + i].push_back(c.id);
    }
}

std::optional<CellLocation> PointLocator::locate(Point2D p) const {
    if (buckets_.empty()) return std::nullopt;
    const double fi = std::floor((p.x - x0_) / bs_), fj = std::floor((p.y - y0_) / bs_);
    // Points on the outer boundary may land one bucket past the grid.
    if (fi < -1.0 || fj < -1.0 || fi > static_cast<double>(nx_) || fj > static_cast<double>(ny_)) return std::nullopt;
    const auto i = static_cast<Index>(std::clamp(fi, 0.0, static_cast<double>(nx_ - 1)));
    const auto j = static_cast<Index>(std::clamp(fj, 0.0, static_cast<double>(ny_ - 1)));
    constexpr double eps = 1e-10;
    for (Index cid : buckets_[j * nx_ + i]) {
        const auto& cell = mesh_->cells[cid];
        const Point2D o = centers_[cid];
        const Point2D d = p - o;
        const std::size_t n = cell.vertex_ids.size();
        for (std::size_t e = 0; e < n; ++e) {
            const Point2D p1 = mesh_->nodes[cell.vertex_ids[e]].position - o;
            const Point2D p2 = mesh_->nodes[cell.vertex_ids[(e + 1) % n]].position - o;
            const double det = cross(p1, p2);
            if (!(det > 0.0)) continue;
            const double a = cross(d, p2) / det, b = cross(p1, d) / det;
            if (a < -eps || b < -eps || a + b > 1.0 + eps) continue;
            const double xi = std::clamp(a + b, 0.0, 1.0);
            const double eta = xi > 1e-14 ? std::clamp(2.0 * std::max(b, 0.0) / (a + b) - 1.0, -1.0, 1.0) : 0.0;
            return CellLocation{cid, e, xi, eta};
        }
    }
    return std::nullopt;
}

SolutionField::SolutionField(const Mesh& mesh, std::span<const ElementMatrices> elements, const Eigen::VectorXd& T)
    : locator_(mesh, elements) {
    if (T.size() != static_cast<Eigen::Index>(mesh.nodes.size()))
        throw SolverError("solution field: nodal vector has the wrong size");
    fields_.reserve(elements.size());
    for (const auto& e : elements) {
        Eigen::VectorXd local(static_cast<Eigen::Index>(e.node_ids.size()));
        for (std::size_t k = 0; k < e.node_ids.size(); ++k)
            local[static_cast<Eigen::Index>(k)] = T[static_cast<Eigen::Index>(e.node_ids[k])];
        fields_.emplace_back(e.modes, local);
    }
}

std::optional<double> SolutionField::at(Point2D p) const {
    const auto loc = locator_.locate(p);
    if (!loc) return std::nullopt;
    return at(loc->cell, loc->edge, loc->xi, loc->eta);
}

double SolutionField::at(Index cell, std::size_t edge, double xi, double eta) const {
    return fields_.at(cell)(xi, eta, edge);
}

}  // namespace psbfem
