#include "psbfem/element.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <exception>
#include <limits>
#include <numbers>
#include <thread>

#include "psbfem/error.hpp"

namespace psbfem {

GaussRule gauss_legendre(int order) {
    if (order < 1) throw ConfigError("gauss_legendre: order must be >= 1");
    GaussRule rule;
    rule.points.resize(order);
    rule.weights.resize(order);
    const int n = order;
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;  // P_{k-1}, P_k
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.points[i] = -x;
        rule.points[n - 1 - i] = x;
        rule.weights[i] = rule.weights[n - 1 - i] = w;
    }
    return rule;
}

ShapeValues shape_functions(double eta) {
    return {{0.5 * (1.0 - eta), 0.5 * (1.0 + eta)}, {-0.5, 0.5}};
}

namespace {

struct EdgeState {
    double xb, yb, xe, ye;
};

EdgeState edge_state(const EdgeGeometry& e, double eta) {
    const ShapeValues s = shape_functions(eta);
    return {s.N[0] * e.p1.x + s.N[1] * e.p2.x, s.N[0] * e.p1.y + s.N[1] * e.p2.y,
            s.dN[0] * e.p1.x + s.dN[1] * e.p2.x, s.dN[0] * e.p1.y + s.dN[1] * e.p2.y};
}

}  // namespace

double boundary_jacobian(const EdgeGeometry& edge, double eta) {
    if (std::hypot(edge.p2.x - edge.p1.x, edge.p2.y - edge.p1.y) <= 1e-14)
        throw ElementError("degenerate edge (zero length)");
    const EdgeState s = edge_state(edge, eta);
    const double j = s.xb * s.ye - s.yb * s.xe;
    if (j <= 1e-14) throw ElementError("degenerate edge (|J_b| = " + std::to_string(j) + ")");
    return j;
}

BVectors b_vectors(const EdgeGeometry& edge, double eta) {
    const double j = boundary_jacobian(edge, eta);
    const EdgeState s = edge_state(edge, eta);
    return {Eigen::Vector2d(s.ye, -s.xe) / j, Eigen::Vector2d(-s.yb, s.xb) / j};
}

CoefficientMatrices coefficient_matrices(std::span<const Point2D> polygon, Point2D center,
                                         const Material& material, int gauss_order) {
    if (gauss_order < 2) throw ConfigError("gauss_order must be >= 2");
    if (!(material.conductivity > 0.0)) throw ConfigError("conductivity must be positive");
    const Eigen::Index n = static_cast<Eigen::Index>(polygon.size());
    if (n < 3) throw ElementError("polygon has fewer than 3 vertices");

    CoefficientMatrices cm{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n),
                           Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
    const GaussRule rule = gauss_legendre(gauss_order);
    const double k = material.conductivity;
    const double rc = material.capacity();

    for (Eigen::Index e = 0; e < n; ++e) {
        const Eigen::Index a = e, b = (e + 1) % n;
        const EdgeGeometry edge{polygon[a] - center, polygon[b] - center};
        if (!(cross(edge.p1, edge.p2) > 0.0))
            throw ElementError("edge " + std::to_string(e) + " not visible from the scaling center");
        Eigen::Matrix2d e0 = Eigen::Matrix2d::Zero(), e1 = e0, e2 = e0, m0 = e0;
        for (std::size_t g = 0; g < rule.points.size(); ++g) {
            const double eta = rule.points[g];
            const double w = rule.weights[g];
            const ShapeValues sv = shape_functions(eta);
            const double j = boundary_jacobian(edge, eta);
            const BVectors bv = b_vectors(edge, eta);
            const Eigen::RowVector2d N(sv.N[0], sv.N[1]);
            const Eigen::RowVector2d dN(sv.dN[0], sv.dN[1]);
            const Eigen::Matrix2d B1 = bv.b1 * N;
            const Eigen::Matrix2d B2 = bv.b2 * dN;
            e0 += (B1.transpose() * B1) * (k * j * w);
            e1 += (B2.transpose() * B1) * (k * j * w);
            e2 += (B2.transpose() * B2) * (k * j * w);
            m0 += (N.transpose() * N) * (rc * j * w);
        }
        const std::array<Eigen::Index, 2> idx{a, b};
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                cm.E0(idx[r], idx[c]) += e0(r, c);
                cm.E1(idx[r], idx[c]) += e1(r, c);
                cm.E2(idx[r], idx[c]) += e2(r, c);
                cm.M0(idx[r], idx[c]) += m0(r, c);
            }
    }
    if (Eigen::LLT<Eigen::MatrixXd>(cm.E0).info() != Eigen::Success)
        throw ElementError("E0 is not positive definite (inverted geometry?)");
    return cm;
}

CoefficientMatrices coefficient_matrices(const PolygonCell& cell, const ScalingCenter& center,
                                         const Mesh& mesh, const Material& material, int gauss_order) {
    const auto pts = mesh.cell_vertices(cell);
    return coefficient_matrices(pts, center.position, material, gauss_order);
}

Eigen::MatrixXd build_hamiltonian(const CoefficientMatrices& cm) {
    const Eigen::Index n = cm.E0.rows();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> se(cm.E0, Eigen::EigenvaluesOnly);
    const double lo = se.eigenvalues().minCoeff(), hi = se.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e12)
        throw ElementError("ill-conditioned element: cond(E0) = " + std::to_string(hi / lo));

    const Eigen::LLT<Eigen::MatrixXd> llt(cm.E0);
    const Eigen::MatrixXd E0inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd A = -E0inv * cm.E1.transpose();

    Eigen::MatrixXd Zp(2 * n, 2 * n);
    Zp.topLeftCorner(n, n) = A;
    Zp.topRightCorner(n, n) = E0inv;
    Zp.bottomLeftCorner(n, n) = cm.E2 + cm.E1 * A;
    Zp.bottomRightCorner(n, n) = cm.E1 * E0inv;

    // Hamiltonian structure: J Zp symmetric with J = [[0, I], [-I, 0]].
    Eigen::MatrixXd JZ(2 * n, 2 * n);
    JZ.topRows(n) = Zp.bottomRows(n);
    JZ.bottomRows(n) = -Zp.topRows(n);
    if ((JZ - JZ.transpose()).norm() > 1e-8 * JZ.norm())
        throw ElementError("Hamiltonian structure violated");
    return Zp;
}

EigenSplit eigen_split(const Eigen::MatrixXd& Zp) {
    const Eigen::Index n2 = Zp.rows();
    const Eigen::Index n = n2 / 2;
    Eigen::EigenSolver<Eigen::MatrixXd> solver(Zp);
    if (solver.info() != Eigen::Success) throw ElementError("eigen-decomposition of Zp failed");
    const Eigen::VectorXcd w = solver.eigenvalues();
    const Eigen::MatrixXcd V = solver.eigenvectors();

    const double max_abs = w.cwiseAbs().maxCoeff();
    const double tol_zero = 1e-6 * max_abs;
    const double tol_cluster = 1e-7 * max_abs;

    std::vector<Eigen::Index> zero_cluster, real_modes, complex_modes;
    for (Eigen::Index i = 0; i < n2; ++i) {
        if (std::abs(w[i]) <= tol_zero) zero_cluster.push_back(i);
        else if (w[i].real() <= 0.0) continue;
        else if (std::abs(w[i].imag()) <= tol_cluster) real_modes.push_back(i);
        else if (w[i].imag() > 0.0) complex_modes.push_back(i);
    }
    if (zero_cluster.size() != 2)
        throw ElementError("zero eigenvalue cluster has " + std::to_string(zero_cluster.size()) +
                           " members (expected the constant-mode pair)");

    // A group is either one complex pair (columns Re v, Im v) or a cluster of
    // numerically equal real eigenvalues, spanned by an orthonormal real basis.
    struct Group {
        double re, im;
        Eigen::MatrixXd cols;
    };
    std::vector<Group> groups;
    for (Eigen::Index i : complex_modes) {
        Eigen::MatrixXd pair(n2, 2);
        pair.col(0) = V.col(i).real();
        pair.col(1) = V.col(i).imag();
        pair /= pair.norm();
        groups.push_back({w[i].real(), w[i].imag(), std::move(pair)});
    }
    std::sort(real_modes.begin(), real_modes.end(),
              [&](Eigen::Index a, Eigen::Index b) { return w[a].real() < w[b].real(); });
    for (std::size_t a = 0; a < real_modes.size();) {
        std::size_t b = a + 1;
        while (b < real_modes.size() && w[real_modes[b]].real() - w[real_modes[b - 1]].real() <= tol_cluster) ++b;
        const auto m = static_cast<Eigen::Index>(b - a);
        double mean = 0.0;
        for (Eigen::Index k = 0; k < m; ++k) mean += w[real_modes[a + static_cast<std::size_t>(k)]].real() / static_cast<double>(m);
        Eigen::MatrixXd basis;
        if (m == 1) {
            const Eigen::VectorXd v = V.col(real_modes[a]).real();
            basis = v / v.norm();
        } else {
            // Eigenvectors of a repeated eigenvalue come out of the Schur
            // back-substitution nearly parallel; take the null space of Zp - mean I.
            const Eigen::MatrixXd shifted = Zp - mean * Eigen::MatrixXd::Identity(n2, n2);
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(shifted, Eigen::ComputeFullV);
            const Eigen::VectorXd& sv = svd.singularValues();
            if (!(sv[n2 - m] <= 1e-6 * std::max(sv[0], max_abs)))
                throw ElementError("defective repeated eigenvalue " + std::to_string(mean));
            basis = svd.matrixV().rightCols(m);
        }
        groups.push_back({mean, 0.0, std::move(basis)});
        a = b;
    }
    std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
        if (a.re != b.re) return a.re < b.re;
        return a.im < b.im;
    });
    Eigen::Index count = 0;
    for (const auto& g : groups) count += g.cols.cols();
    if (count != n - 1)
        throw ElementError("found " + std::to_string(count) + " bounded modes, expected " +
                           std::to_string(n - 1));

    // The constant temperature field is an exact eigenvector of the zero
    // eigenvalue; the computed cluster vectors must agree with it.
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
    double best = 0.0;
    for (Eigen::Index i : zero_cluster) {
        const Eigen::VectorXd u = V.col(i).head(n).real();
        const Eigen::VectorXd u_im = V.col(i).head(n).imag();
        const Eigen::VectorXd cand = u.norm() >= u_im.norm() ? u : u_im;
        if (cand.norm() > 0.0) best = std::max(best, std::abs(ones.dot(cand)) / cand.norm());
    }
    if (best < 0.999) throw ElementError("zero mode is not the constant field");

    Eigen::MatrixXd Phi(n2, n);
    EigenSplit es;
    es.exponents = Eigen::MatrixXd::Zero(n, n);
    es.lambda.resize(n);
    Eigen::Index col = 0;
    for (const auto& g : groups) {
        if (g.im != 0.0) {
            Phi.middleCols(col, 2) = g.cols;
            es.exponents.block(col, col, 2, 2) << g.re, g.im, -g.im, g.re;
            es.lambda[col] = -std::complex<double>(g.re, g.im);
            es.lambda[col + 1] = -std::complex<double>(g.re, -g.im);
            es.block_sizes.push_back(2);
            col += 2;
        } else {
            for (Eigen::Index k = 0; k < g.cols.cols(); ++k) {
                Phi.col(col) = g.cols.col(k);
                es.exponents(col, col) = g.re;
                es.lambda[col] = -g.re;
                es.block_sizes.push_back(1);
                ++col;
            }
        }
    }
    Phi.col(col).setZero();
    Phi.col(col).head(n) = ones;
    es.lambda[col] = 0.0;
    es.block_sizes.push_back(1);

    es.psi11 = Phi.topRows(n);
    es.psi21 = Phi.bottomRows(n);
    es.tol_zero = tol_zero;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(es.psi11);
    const auto& sv = svd.singularValues();
    es.cond_psi11 = sv[n - 1] > 0.0 ? sv[0] / sv[n - 1] : std::numeric_limits<double>::infinity();
    if (!(es.cond_psi11 <= 1e10))
        throw ElementError("mode selection failed: cond(psi11) = " + std::to_string(es.cond_psi11));
    return es;
}

namespace {

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& A, const char* what) {
    if ((A - A.transpose()).norm() > 1e-6 * A.norm())
        throw ElementError(std::string(what) + " is not symmetric (numerical failure)");
    return 0.5 * (A + A.transpose());
}

}  // namespace

Eigen::MatrixXd steady_stiffness(const EigenSplit& es) {
    const Eigen::MatrixXd K =
        es.psi11.transpose().partialPivLu().solve(es.psi21.transpose()).transpose();
    return symmetrized(K, "stiffness");
}

Eigen::MatrixXd mass_matrix(const EigenSplit& es, const Eigen::MatrixXd& M0) {
    const Eigen::Index n = es.psi11.rows();
    const Eigen::MatrixXd R = es.psi11.transpose() * M0 * es.psi11;
    Eigen::MatrixXd m(n, n);

    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (int s : es.block_sizes) {
        offsets.push_back(off);
        off += s;
    }
    for (std::size_t I = 0; I < es.block_sizes.size(); ++I) {
        const int p = es.block_sizes[I];
        const Eigen::MatrixXd A =
            Eigen::MatrixXd::Identity(p, p) + es.exponents.block(offsets[I], offsets[I], p, p).transpose();
        for (std::size_t J = 0; J < es.block_sizes.size(); ++J) {
            const int q = es.block_sizes[J];
            const Eigen::MatrixXd B =
                Eigen::MatrixXd::Identity(q, q) + es.exponents.block(offsets[J], offsets[J], q, q);
            const Eigen::MatrixXd rhs = R.block(offsets[I], offsets[J], p, q);
            if (p == 1 && q == 1) {
                const double d = A(0, 0) + B(0, 0);
                if (std::abs(d) < 1e-12) throw ElementError("resonant Lyapunov denominator");
                m(offsets[I], offsets[J]) = rhs(0, 0) / d;
                continue;
            }
            // vec(A X + X B) = (I_q (x) A + B^T (x) I_p) vec(X)
            Eigen::MatrixXd L = Eigen::MatrixXd::Zero(p * q, p * q);
            for (int c = 0; c < q; ++c)
                for (int r = 0; r < q; ++r) {
                    if (r == c) L.block(c * p, c * p, p, p) += A;
                    L.block(c * p, r * p, p, p) += B(r, c) * Eigen::MatrixXd::Identity(p, p);
                }
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(L);
            if (svd.singularValues().minCoeff() < 1e-12) throw ElementError("resonant Lyapunov denominator");
            const Eigen::VectorXd x =
                L.fullPivLu().solve(Eigen::Map<const Eigen::VectorXd>(rhs.data(), p * q));
            m.block(offsets[I], offsets[J], p, q) = Eigen::Map<const Eigen::MatrixXd>(x.data(), p, q);
        }
    }
    const Eigen::MatrixXd Pinv = es.psi11.partialPivLu().inverse();
    const Eigen::MatrixXd M = symmetrized(Pinv.transpose() * m * Pinv, "mass matrix");
    if (Eigen::LLT<Eigen::MatrixXd>(M).info() != Eigen::Success)
        throw ElementError("mass matrix is not positive definite");
    return M;
}

namespace {

ElementMatrices run_pipeline(std::span<const Point2D> polygon, Point2D center, const Material& material,
                             int gauss_order) {
    ElementMatrices em;
    const CoefficientMatrices cm = coefficient_matrices(polygon, center, material, gauss_order);
    em.modes = eigen_split(build_hamiltonian(cm));
    em.K = steady_stiffness(em.modes);
    em.M = mass_matrix(em.modes, cm.M0);
    return em;
}

}  // namespace

ElementMatrices element_matrices(const PolygonCell& cell, const Mesh& mesh, const Material& material,
                                 int gauss_order) {
    ScalingCenter center;
    try {
        center = compute_scaling_center(cell, mesh);
    } catch (const MeshError& e) {
        throw ElementError(e.what(), cell.id);
    }
    const auto pts = mesh.cell_vertices(cell);
    try {
        ElementMatrices em = run_pipeline(pts, center.position, material, gauss_order);
        em.node_ids = cell.vertex_ids;
        em.center = center;
        return em;
    } catch (const ElementError& e) {
        throw ElementError(e.detail(), cell.id);
    }
}

ElementMatrices element_matrices(std::span<const Point2D> polygon, const Material& material,
                                 int gauss_order) {
    Mesh mesh;
    PolygonCell cell{0, {}, 0};
    for (const auto& p : polygon) {
        cell.vertex_ids.push_back(mesh.nodes.size());
        mesh.nodes.push_back({mesh.nodes.size(), p});
    }
    mesh.cells.push_back(cell);
    return element_matrices(mesh.cells[0], mesh, material, gauss_order);
}

const ElementMatrices& ElementCache::get(const PolygonCell& cell, const Mesh& mesh,
                                         const Material& material, int gauss_order) {
    auto it = cache_.find(cell.id);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(cell.id, element_matrices(cell, mesh, material, gauss_order)).first->second;
}

std::vector<ElementMatrices> compute_element_matrices(const Mesh& mesh, const MaterialTable& materials,
                                                      int gauss_order, int threads) {
    const std::size_t nc = mesh.cells.size();
    std::vector<ElementMatrices> out(nc);
    std::vector<std::exception_ptr> errors(nc);
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t c = begin; c < end; ++c) {
            try {
                const auto& cell = mesh.cells[c];
                auto mat = materials.find(cell.material_id);
                if (mat == materials.end())
                    throw ConfigError("cell " + std::to_string(cell.id) + ": no material " +
                                      std::to_string(cell.material_id));
                out[c] = element_matrices(cell, mesh, mat->second, gauss_order);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        }
    };
    const std::size_t nt = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1,
                                                    std::max<std::size_t>(nc, 1));
    if (nt == 1) {
        work(0, nc);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (nc + nt - 1) / nt;
        for (std::size_t t = 0; t < nt; ++t)
            pool.emplace_back(work, std::min(nc, t * chunk), std::min(nc, (t + 1) * chunk));
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

InteriorField::InteriorField(const EigenSplit& modes, const Eigen::VectorXd& nodal_temperature)
    : psi11_(modes.psi11), exponents_(modes.exponents), block_sizes_(modes.block_sizes) {
    if (nodal_temperature.size() != psi11_.rows())
        throw ConfigError("interior field: nodal vector has wrong length");
    coeffs_ = psi11_.partialPivLu().solve(nodal_temperature);
}

Eigen::VectorXd InteriorField::radial(double xi) const {
    if (!(xi >= 0.0 && xi <= 1.0)) throw ConfigError("interior field: xi outside [0, 1]");
    Eigen::VectorXd scaled(coeffs_.size());
    Eigen::Index off = 0;
    const double log_xi = xi > 0.0 ? std::log(xi) : 0.0;
    for (int s : block_sizes_) {
        const double a = exponents_(off, off);
        if (s == 1) {
            const double f = xi > 0.0 ? std::exp(a * log_xi) : (a == 0.0 ? 1.0 : 0.0);
            scaled[off] = f * coeffs_[off];
        } else {
            const double b = exponents_(off, off + 1);
            if (xi > 0.0) {
                const double r = std::exp(a * log_xi), c = std::cos(b * log_xi), sn = std::sin(b * log_xi);
                // xi^[[a, b], [-b, a]] = xi^a [[cos, sin], [-sin, cos]] (b ln xi)
                scaled[off] = r * (c * coeffs_[off] + sn * coeffs_[off + 1]);
                scaled[off + 1] = r * (-sn * coeffs_[off] + c * coeffs_[off + 1]);
            } else {
                scaled[off] = scaled[off + 1] = 0.0;
            }
        }
        off += s;
    }
    return psi11_ * scaled;
}

double InteriorField::operator()(double xi, double eta, std::size_t edge) const {
    if (!(eta >= -1.0 && eta <= 1.0)) throw ConfigError("interior field: eta outside [-1, 1]");
    const auto n = static_cast<std::size_t>(psi11_.rows());
    if (edge >= n) throw ConfigError("interior field: edge index out of range");
    const Eigen::VectorXd u = radial(xi);
    const ShapeValues s = shape_functions(eta);
    return s.N[0] * u[static_cast<Eigen::Index>(edge)] +
           s.N[1] * u[static_cast<Eigen::Index>((edge + 1) % n)];
}

double interior_temperature(const EigenSplit& modes, const Eigen::VectorXd& nodal_temperature,
                            double xi, double eta, std::size_t edge) {
    return InteriorField(modes, nodal_temperature)(xi, eta, edge);
}

}  // namespace psbfem
