#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psbfem/element.hpp"
#include "psbfem/geometry.hpp"
#include "psbfem/solver.hpp"

namespace psbfem {

/// Closed-form reference temperature T(x, y, t).
struct AnalyticField {
    ScalarField evaluate;
    std::string description;

    double operator()(double x, double y, double t = 0.0) const { return evaluate(x, y, t); }
};

/// Steady plate [0, a] x [0, b]: T = 100 sin(pi x / a) on the top edge, zero on
/// the other sides. T = 100 / sinh(pi b / a) sin(pi x / a) sinh(pi y / a).
AnalyticField analytic_steady_plate(double a, double b);

/// Transient pi x pi plate with T0 = 10 sin x sin y, zero Dirichlet data and
/// unit diffusivity: T = 10 exp(-2t) sin x sin y.
AnalyticField analytic_transient_plate();

/// Relative L2 error sqrt(int (T - Th)^2) / sqrt(int T^2), integrated over the
/// scaling-center fan triangles of every cell with a 3-point rule and the
/// element interior solution for Th.
double relative_error(const Mesh& mesh, std::span<const ElementMatrices> elements, const Eigen::VectorXd& nodal,
                      const AnalyticField& exact, double t = 0.0);

struct ConvergenceRecord {
    double h = 0.0;
    Index dofs = 0;
    double error = 0.0;
    std::optional<double> rate_local;  // log(e_prev / e) / log(h_prev / h)
    double wall_seconds = 0.0;
};

/// Least-squares fit log e = slope log h + intercept.
struct RateFit {
    bool fitted = false;  // false when any error is below the floor
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    bool flagged = false;  // r_squared < 0.98
};

inline constexpr double error_floor = 1e-12;

RateFit fit_rate(std::span<const double> h, std::span<const double> error);

enum class MeshFamily { Quad, Voronoi, Quadtree };

const char* family_name(MeshFamily family);

/// Mesh of `domain` with characteristic size h. Quad: square cells of edge h.
/// Voronoi: round(area / h^2) seeds with Lloyd relaxation. Quadtree: uniform
/// leaves of edge close to h.
Mesh mesh_at(MeshFamily family, const Rectangle& domain, double h, std::uint64_t seed = 0, int lloyd_iterations = 20);

/// sqrt(domain area / cell count).
double mean_cell_size(const Mesh& mesh);

struct CaseTemplate {
    std::string name;
    Rectangle domain;
    MeshFamily family = MeshFamily::Quad;
    Material material;
    std::vector<BoundaryCondition> bcs;
    AnalyticField exact;
    std::optional<TransientConfig> transient;  // steady when empty
    std::vector<double> eval_times;            // transient: times at which errors are measured
    std::uint64_t seed = 0;
    int lloyd_iterations = 20;
    SolveOptions options;
};

struct ConvergenceStudy {
    std::string label;
    double time = 0.0;
    std::vector<ConvergenceRecord> records;
    RateFit fit;
    bool monotone = false;
};

/// Solves the case for every h and returns one study per evaluation time
/// (a single study for steady cases). Needs at least 3 sizes; solve errors
/// are rethrown with the offending h.
std::vector<ConvergenceStudy> run_convergence_study(const CaseTemplate& c, std::span<const double> hs);

/// CSV with columns h, dof, error, rate_local, wall_seconds.
std::string convergence_csv(const ConvergenceStudy& study);

CaseTemplate steady_plate_case(MeshFamily family = MeshFamily::Quad);
CaseTemplate transient_plate_case(MeshFamily family = MeshFamily::Quad, double dt = 1e-3, double t_end = 2.0);

/// Default refinement sequences: {1, 0.5, 0.25, 0.125} for the steady plate and
/// pi / {4, 8, 16} for the transient plate, whose finer meshes reach the
/// backward-Euler error floor of dt = 1e-3.
std::vector<double> steady_plate_sizes();
std::vector<double> transient_plate_sizes();

}  // namespace psbfem
