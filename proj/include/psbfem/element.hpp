#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include "psbfem/geometry.hpp"

namespace psbfem {

/// Isotropic heat-conduction material.
struct Material {
    double conductivity = 1.0;   // W/(m C)
    double density = 1.0;        // kg/m^3
    double specific_heat = 1.0;  // J/(kg C)

    double capacity() const { return density * specific_heat; }

    friend bool operator==(const Material&, const Material&) = default;
};

using MaterialTable = std::map<Index, Material>;

struct GaussRule {
    std::vector<double> points;
    std::vector<double> weights;
};

/// Gauss-Legendre rule with `order` points on [-1, 1].
GaussRule gauss_legendre(int order);

/// Linear line-element shape functions on eta in [-1, 1].
struct ShapeValues {
    std::array<double, 2> N;
    std::array<double, 2> dN;
};

ShapeValues shape_functions(double eta);

/// A boundary edge in coordinates relative to the scaling center.
struct EdgeGeometry {
    Point2D p1;
    Point2D p2;
};

/// |J_b| = x_b y_b,eta - y_b x_b,eta. Throws ElementError for degenerate edges.
double boundary_jacobian(const EdgeGeometry& edge, double eta);

/// Gradient maps with grad = b1 d/dxi + (1/xi) b2 d/deta.
struct BVectors {
    Eigen::Vector2d b1;
    Eigen::Vector2d b2;
};

BVectors b_vectors(const EdgeGeometry& edge, double eta);

/// Boundary integrals E0, E1, E2 (conductivity weighted) and M0 (capacity
/// weighted), assembled over the closed polygon boundary.
struct CoefficientMatrices {
    Eigen::MatrixXd E0;
    Eigen::MatrixXd E1;
    Eigen::MatrixXd E2;
    Eigen::MatrixXd M0;
};

CoefficientMatrices coefficient_matrices(std::span<const Point2D> polygon, Point2D center,
                                         const Material& material, int gauss_order = 2);

CoefficientMatrices coefficient_matrices(const PolygonCell& cell, const ScalingCenter& center,
                                         const Mesh& mesh, const Material& material,
                                         int gauss_order = 2);

/// Zp = [[-E0^-1 E1^T, E0^-1], [E2 - E1 E0^-1 E1^T, E1 E0^-1]], so that
/// xi dX/dxi = Zp X for X = [temperature; internal flux].
Eigen::MatrixXd build_hamiltonian(const CoefficientMatrices& cm);

/// Bounded-domain modes of Zp.
///
/// Columns of psi11/psi21 are the temperature and flux blocks of the n-1
/// eigenvectors whose eigenvalues have positive real part, followed by the
/// constant mode [1; 0]. Complex-conjugate pairs are stored as the real and
/// imaginary parts of one eigenvector, so `exponents` is block diagonal with
/// 1x1 blocks (real modes) and 2x2 blocks [[a, b], [-b, a]] (a +/- ib), and
/// Zp [psi11; psi21] = [psi11; psi21] exponents holds exactly.
///
/// `lambda` lists the selected exponents with the sign convention
/// T(xi) = psi11 xi^(-lambda) c, i.e. Re(lambda) <= 0.
struct EigenSplit {
    Eigen::MatrixXd psi11;
    Eigen::MatrixXd psi21;
    Eigen::VectorXcd lambda;
    Eigen::MatrixXd exponents;
    std::vector<int> block_sizes;
    double cond_psi11 = 0.0;
    double tol_zero = 0.0;
};

EigenSplit eigen_split(const Eigen::MatrixXd& Zp);

/// K = psi21 psi11^-1, symmetrized after an asymmetry gate.
Eigen::MatrixXd steady_stiffness(const EigenSplit& es);

/// Mass matrix from the modal Lyapunov equation
/// (I + Lb^T) m + m (I + Lb) = psi11^T M0 psi11, M = psi11^-T m psi11^-1.
Eigen::MatrixXd mass_matrix(const EigenSplit& es, const Eigen::MatrixXd& M0);

struct ElementMatrices {
    Eigen::MatrixXd K;
    Eigen::MatrixXd M;
    std::vector<Index> node_ids;
    ScalingCenter center;
    EigenSplit modes;
};

/// Full element pipeline; errors carry the cell id.
ElementMatrices element_matrices(const PolygonCell& cell, const Mesh& mesh, const Material& material,
                                 int gauss_order = 2);

/// Same pipeline for a bare polygon (scaling center at its centroid).
ElementMatrices element_matrices(std::span<const Point2D> polygon, const Material& material,
                                 int gauss_order = 2);

/// Per-cell memo of element_matrices. Not synchronized; use one per worker.
class ElementCache {
public:
    const ElementMatrices& get(const PolygonCell& cell, const Mesh& mesh, const Material& material,
                               int gauss_order = 2);
    std::size_t size() const { return cache_.size(); }
    void clear() { cache_.clear(); }

private:
    std::unordered_map<Index, ElementMatrices> cache_;
};

/// Element matrices for every cell, computed on up to `threads` workers.
/// The result is indexed by cell id and independent of the thread count.
std::vector<ElementMatrices> compute_element_matrices(const Mesh& mesh, const MaterialTable& materials,
                                                      int gauss_order = 2, int threads = 1);

/// Semi-analytical temperature inside one element:
/// T(xi, eta) = N(eta) . (psi11 xi^Lb psi11^-1 T_nodal), on boundary edge `edge`
/// (local nodes edge and edge+1).
class InteriorField {
public:
    InteriorField(const EigenSplit& modes, const Eigen::VectorXd& nodal_temperature);

    double operator()(double xi, double eta, std::size_t edge) const;
    Eigen::VectorXd radial(double xi) const;

private:
    Eigen::MatrixXd psi11_;
    Eigen::MatrixXd exponents_;
    std::vector<int> block_sizes_;
    Eigen::VectorXd coeffs_;
};

double interior_temperature(const EigenSplit& modes, const Eigen::VectorXd& nodal_temperature,
                            double xi, double eta, std::size_t edge);

}  // namespace psbfem
