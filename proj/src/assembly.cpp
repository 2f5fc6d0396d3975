#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "partition.hpp"
#include "psbfem/error.hpp"
#include "psbfem/solver.hpp"

namespace psbfem {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

const char* kind_name(BcKind k) {
    switch (k) {
        case BcKind::Dirichlet: return "dirichlet";
        case BcKind::Flux: return "flux";
        case BcKind::Convection: return "convection";
    }
    return "?";
}

template <class F>
void for_each_tagged_edge(const Mesh& mesh, const std::string& tag, F&& f) {
    for (const auto& [key, t] : mesh.edge_tags)
        if (t == tag) f(key.first, key.second);
}

}  // namespace

GlobalSystem assemble_global(const Mesh& mesh, std::span<const ElementMatrices> elements) {
    const Index n = mesh.nodes.size();
    if (elements.size() != mesh.cells.size())
        throw SolverError("assembly: " + std::to_string(elements.size()) + " element matrices for " +
                          std::to_string(mesh.cells.size()) + " cells");
    Triplets tk, tm;
    std::size_t nnz = 0;
    for (const auto& e : elements) nnz += e.node_ids.size() * e.node_ids.size();
    tk.reserve(nnz);
    tm.reserve(nnz);
    for (std::size_t c = 0; c < elements.size(); ++c) {
        const auto& e = elements[c];
        const auto m = static_cast<Eigen::Index>(e.node_ids.size());
        if (e.K.rows() != m || e.M.rows() != m)
            throw ElementError("assembly: matrix size does not match node count", c);
        for (Index id : e.node_ids)
            if (id >= n) throw ElementError("assembly: node id " + std::to_string(id) + " out of range", c);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j) {
                const auto gi = static_cast<Eigen::Index>(e.node_ids[i]);
                const auto gj = static_cast<Eigen::Index>(e.node_ids[j]);
                tk.emplace_back(gi, gj, e.K(i, j));
                tm.emplace_back(gi, gj, e.M(i, j));
            }
    }
    GlobalSystem sys;
    const auto ni = static_cast<Eigen::Index>(n);
    sys.K.resize(ni, ni);
    sys.M.resize(ni, ni);
    sys.K.setFromTriplets(tk.begin(), tk.end());
    sys.M.setFromTriplets(tm.begin(), tm.end());
    sys.F = Eigen::VectorXd::Zero(ni);
    return sys;
}

void check_boundary_conditions(const Mesh& mesh, std::span<const BoundaryCondition> bcs) {
    std::set<std::string> tags;
    for (const auto& [key, t] : mesh.edge_tags) tags.insert(t);
    std::map<std::string, std::set<BcKind>> kinds;
    for (const auto& bc : bcs) {
        if (!tags.contains(bc.edge_tag))
            throw ConfigError("boundary condition on unknown edge tag '" + bc.edge_tag + "'");
        if (bc.kind != BcKind::Convection && !bc.value)
            throw ConfigError(std::string(kind_name(bc.kind)) + " condition on '" + bc.edge_tag +
                              "' has no value");
        if (bc.kind == BcKind::Convection && (!std::isfinite(bc.h) || bc.h < 0.0 || !std::isfinite(bc.t_inf)))
            throw ConfigError("convection on '" + bc.edge_tag + "' needs finite h >= 0 and T_inf");
        kinds[bc.edge_tag].insert(bc.kind);
    }
    for (const auto& [tag, k] : kinds)
        if (k.contains(BcKind::Dirichlet) && k.contains(BcKind::Flux))
            throw ConfigError("edge tag '" + tag + "' carries both dirichlet and flux conditions");
}

SparseMatrix convection_matrix(const Mesh& mesh, std::span<const BoundaryCondition> bcs) {
    const auto n = static_cast<Eigen::Index>(mesh.nodes.size());
    Triplets t;
    for (const auto& bc : bcs) {
        if (bc.kind != BcKind::Convection) continue;
        for_each_tagged_edge(mesh, bc.edge_tag, [&](Index a, Index b) {
            const Point2D d = mesh.nodes[b].position - mesh.nodes[a].position;
            const double c = bc.h * std::hypot(d.x, d.y) / 6.0;
            const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
            t.emplace_back(ia, ia, 2.0 * c);
            t.emplace_back(ib, ib, 2.0 * c);
            t.emplace_back(ia, ib, c);
            t.emplace_back(ib, ia, c);
        });
    }
    SparseMatrix H(n, n);
    H.setFromTriplets(t.begin(), t.end());
    return H;
}

Eigen::VectorXd boundary_load(const Mesh& mesh, std::span<const BoundaryCondition> bcs, double t) {
    Eigen::VectorXd F = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.nodes.size()));
    const GaussRule g = gauss_legendre(2);
    for (const auto& bc : bcs) {
        if (bc.kind == BcKind::Dirichlet) continue;
        for_each_tagged_edge(mesh, bc.edge_tag, [&](Index a, Index b) {
            const Point2D pa = mesh.nodes[a].position, pb = mesh.nodes[b].position;
            const Point2D d = pb - pa;
            const double jac = 0.5 * std::hypot(d.x, d.y);
            double fa = 0.0, fb = 0.0;
            for (std::size_t q = 0; q < g.points.size(); ++q) {
                const ShapeValues s = shape_functions(g.points[q]);
                double value;
                if (bc.kind == BcKind::Flux) {
                    const Point2D p = s.N[0] * pa + s.N[1] * pb;
                    value = -bc.value(p.x, p.y, t);
                } else {
                    value = bc.h * bc.t_inf;
                }
                fa += g.weights[q] * s.N[0] * value * jac;
                fb += g.weights[q] * s.N[1] * value * jac;
            }
            F[static_cast<Eigen::Index>(a)] += fa;
            F[static_cast<Eigen::Index>(b)] += fb;
        });
    }
    return F;
}

void apply_neumann_and_convection(GlobalSystem& sys, const Mesh& mesh, std::span<const BoundaryCondition> bcs,
                                  double t) {
    check_boundary_conditions(mesh, bcs);
    sys.K += convection_matrix(mesh, bcs);
    sys.F += boundary_load(mesh, bcs, t);
}

std::vector<Constraint> dirichlet_constraints(const Mesh& mesh, std::span<const BoundaryCondition> bcs) {
    std::map<Index, ScalarField> owner;
    for (const auto& bc : bcs) {
        if (bc.kind != BcKind::Dirichlet) continue;
        for_each_tagged_edge(mesh, bc.edge_tag, [&](Index a, Index b) {
            owner.try_emplace(a, bc.value);
            owner.try_emplace(b, bc.value);
        });
    }
    std::vector<Constraint> out;
    out.reserve(owner.size());
    for (auto& [node, f] : owner) out.push_back({node, mesh.nodes[node].position, std::move(f)});
    return out;
}

Eigen::VectorXd ReducedSystem::expand(const Eigen::VectorXd& x_free) const {
    Eigen::VectorXd T(static_cast<Eigen::Index>(n_total));
    for (std::size_t i = 0; i < free_dofs.size(); ++i)
        T[static_cast<Eigen::Index>(free_dofs[i])] = x_free[static_cast<Eigen::Index>(i)];
    for (std::size_t i = 0; i < fixed_dofs.size(); ++i)
        T[static_cast<Eigen::Index>(fixed_dofs[i])] = fixed_values[static_cast<Eigen::Index>(i)];
    return T;
}

namespace detail {

void partition(Index n, const std::vector<Constraint>& constrained, std::vector<Index>& free,
               std::vector<Index>& fixed, std::vector<Eigen::Index>& pos) {
    std::vector<char> is_fixed(n, 0);
    for (const auto& c : constrained) {
        if (c.node >= n) throw SolverError("constraint on node " + std::to_string(c.node) + " out of range");
        is_fixed[c.node] = 1;
    }
    free.clear();
    fixed.clear();
    pos.assign(n, 0);
    for (Index i = 0; i < n; ++i) {
        auto& group = is_fixed[i] ? fixed : free;
        pos[i] = static_cast<Eigen::Index>(group.size());
        group.push_back(i);
    }
}

SparseMatrix block(const SparseMatrix& A, const std::vector<char>& row_fixed, bool rows_fixed, bool cols_fixed,
                   const std::vector<Eigen::Index>& pos, Eigen::Index nr, Eigen::Index nc) {
    Triplets t;
    for (Eigen::Index k = 0; k < A.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(A, k); it; ++it) {
            const auto r = static_cast<Index>(it.row()), c = static_cast<Index>(it.col());
            if ((row_fixed[r] != 0) != rows_fixed || (row_fixed[c] != 0) != cols_fixed) continue;
            t.emplace_back(pos[r], pos[c], it.value());
        }
    SparseMatrix B(nr, nc);
    B.setFromTriplets(t.begin(), t.end());
    return B;
}

std::vector<char> fixed_mask(Index n, const std::vector<Index>& fixed) {
    std::vector<char> m(n, 0);
    for (Index i : fixed) m[i] = 1;
    return m;
}

}  // namespace detail

ReducedSystem apply_dirichlet(const GlobalSystem& sys, double t) {
    const Index n = sys.dofs();
    if (sys.constrained.empty()) {
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
        const double knorm = sys.K.norm();
        if ((sys.K * ones).norm() <= 1e-8 * std::max(knorm, 1e-300))
            throw SolverError("singular system: no Dirichlet constraint and K has a constant-mode kernel");
    }
    ReducedSystem r;
    r.n_total = n;
    std::vector<Eigen::Index> pos;
    detail::partition(n, sys.constrained, r.free_dofs, r.fixed_dofs, pos);
    const auto nf = static_cast<Eigen::Index>(r.free_dofs.size());
    const auto nc = static_cast<Eigen::Index>(r.fixed_dofs.size());
    const auto mask = detail::fixed_mask(n, r.fixed_dofs);

    r.fixed_values.resize(nc);
    for (const auto& c : sys.constrained)
        r.fixed_values[pos[c.node]] = c.value ? c.value(c.position.x, c.position.y, t) : 0.0;
    r.K_ff = detail::block(sys.K, mask, false, false, pos, nf, nf);
    const SparseMatrix K_fc = detail::block(sys.K, mask, false, true, pos, nf, nc);
    r.F_f.resize(nf);
    for (Eigen::Index i = 0; i < nf; ++i) r.F_f[i] = sys.F[static_cast<Eigen::Index>(r.free_dofs[i])];
    if (nc > 0) r.F_f -= K_fc * r.fixed_values;
    return r;
}

}  // namespace psbfem
