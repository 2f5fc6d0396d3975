#include "psbfem/verification.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "psbfem/error.hpp"

namespace psbfem {

namespace {

constexpr double pi = std::numbers::pi;

}  // namespace

AnalyticField analytic_steady_plate(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("steady plate: a and b must be positive");
    const double scale = 100.0 / std::sinh(pi * b / a);
    char buf[128];
    std::snprintf(buf, sizeof buf, "100/sinh(pi*%g/%g)*sin(pi*x/%g)*sinh(pi*y/%g)", b, a, a, a);
    return {[=](double x, double y, double) { return scale * std::sin(pi * x / a) * std::sinh(pi * y / a); }, buf};
}

AnalyticField analytic_transient_plate() {
    return {[](double x, double y, double t) { return 10.0 * std::exp(-2.0 * t) * std::sin(x) * std::sin(y); },
            "10*exp(-2*t)*sin(x)*sin(y)"};
}

double relative_error(const Mesh& mesh, std::span<const ElementMatrices> elements, const Eigen::VectorXd& nodal,
                      const AnalyticField& exact, double t) {
    if (elements.size() != mesh.cells.size()) throw ConfigError("relative error: element count mismatch");
    if (nodal.size() != static_cast<Eigen::Index>(mesh.nodes.size()))
        throw ConfigError("relative error: nodal vector has the wrong size");
    if (!nodal.allFinite()) throw ConfigError("relative error: numerical field is not finite");
    // Barycentric weights (center, v_e, v_e+1) of the 3-point rule.
    static constexpr double rule[3][3] = {{2.0 / 3, 1.0 / 6, 1.0 / 6}, {1.0 / 6, 2.0 / 3, 1.0 / 6}, {1.0 / 6, 1.0 / 6, 2.0 / 3}};
    double num = 0.0, den = 0.0;
    for (const auto& cell : mesh.cells) {
        const ElementMatrices& e = elements[cell.id];
        Eigen::VectorXd local(static_cast<Eigen::Index>(e.node_ids.size()));
        for (std::size_t k = 0; k < e.node_ids.size(); ++k)
            local[static_cast<Eigen::Index>(k)] = nodal[static_cast<Eigen::Index>(e.node_ids[k])];
        const InteriorField field(e.modes, local);
        const Point2D o = e.center.position;
        const std::size_t n = e.node_ids.size();
        for (std::size_t k = 0; k < n; ++k) {
            const Point2D p1 = mesh.nodes[e.node_ids[k]].position;
            const Point2D p2 = mesh.nodes[e.node_ids[(k + 1) % n]].position;
            const double area = 0.5 * cross(p1 - o, p2 - o);
            for (const auto& w : rule) {
                const Point2D p = w[0] * o + w[1] * p1 + w[2] * p2;
                const double xi = w[1] + w[2];
                const double eta = 2.0 * w[2] / xi - 1.0;
                const double ref = exact(p.x, p.y, t);
                const double diff = ref - field(xi, eta, k);
                num += area / 3.0 * diff * diff;
                den += area / 3.0 * ref * ref;
            }
        }
    }
    if (!std::isfinite(den) || !(den > 0.0)) throw ConfigError("relative error: reference field has zero norm");
    return std::sqrt(num / den);
}

RateFit fit_rate(std::span<const double> h, std::span<const double> error) {
    if (h.size() != error.size()) throw ConfigError("rate fit: size mismatch");
    if (h.size() < 2) throw ConfigError("rate fit: need at least 2 points");
    RateFit fit;
    for (double e : error)
        if (!(e >= error_floor)) return fit;
    const double n = static_cast<double>(h.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        sx += std::log(h[i]);
        sy += std::log(error[i]);
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double dx = std::log(h[i]) - mx, dy = std::log(error[i]) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw ConfigError("rate fit: mesh sizes must differ");
    fit.fitted = true;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double r = std::log(error[i]) - (fit.intercept + fit.slope * std::log(h[i]));
        ss_res += r * r;
    }
    fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    fit.flagged = fit.r_squared < 0.98;
    return fit;
}

const char* family_name(MeshFamily family) {
    switch (family) {
        case MeshFamily::Quad: return "quad";
        case MeshFamily::Voronoi: return "voronoi";
        case MeshFamily::Quadtree: return "quadtree";
    }
    return "unknown";
}

Mesh mesh_at(MeshFamily family, const Rectangle& domain, double h, std::uint64_t seed, int lloyd_iterations) {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("mesh size h must be positive");
    switch (family) {
        case MeshFamily::Quad: {
            Mesh m = build_structured_quad_mesh(domain.width(), domain.height(), h);
            for (auto& n : m.nodes) n.position = n.position + Point2D{domain.x0, domain.y0};
            return m;
        }
        case MeshFamily::Voronoi: {
            const auto n = static_cast<std::size_t>(std::max(4.0, std::round(domain.area() / (h * h))));
            return build_voronoi_polygon_mesh(domain, n, lloyd_iterations, seed);
        }
        case MeshFamily::Quadtree: {
            const double root = std::min(domain.width(), domain.height());
            const int depth = static_cast<int>(std::clamp(std::round(std::log2(root / h)), 0.0, 12.0));
            return build_quadtree_mesh(domain, {}, depth, depth);
        }
    }
    throw ConfigError("unknown mesh family");
}

double mean_cell_size(const Mesh& mesh) {
    if (mesh.cells.empty()) throw ConfigError("mean cell size: empty mesh");
    return std::sqrt(mesh.total_area() / static_cast<double>(mesh.cells.size()));
}

std::vector<ConvergenceStudy> run_convergence_study(const CaseTemplate& c, std::span<const double> hs) {
    if (hs.size() < 3) throw ConfigError("convergence study: need >= 3 sizes, got " + std::to_string(hs.size()));
    std::vector<double> times = c.transient ? c.eval_times : std::vector<double>{0.0};
    if (c.transient) {
        if (times.empty()) times.push_back(c.transient->t_end);
        for (double t : times)
            if (!(t > 0.0) || t > c.transient->t_end + 1e-12)
                throw ConfigError("convergence study: evaluation times must lie in (0, t_end]");
        std::sort(times.begin(), times.end());
    }
    std::vector<ConvergenceStudy> studies(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        studies[k].label = c.name + "/" + family_name(c.family);
        studies[k].time = times[k];
    }
    const MaterialTable materials{{0, c.material}};
    for (double h : hs) {
        char tag[64];
        std::snprintf(tag, sizeof tag, "h=%g: ", h);
        try {
            const auto t0 = std::chrono::steady_clock::now();
            const Mesh mesh = mesh_at(c.family, c.domain, h, c.seed, c.lloyd_iterations);
            std::vector<double> errors;
            if (!c.transient) {
                const SteadyResult r = solve_steady(mesh, materials, c.bcs, c.options);
                errors.push_back(relative_error(mesh, r.elements, r.T, c.exact, 0.0));
            } else {
                const TransientConfig& tc = *c.transient;
                if (!(tc.dt > 0.0)) throw ConfigError("dt must be positive");
                if (!tc.initial) throw ConfigError("no initial condition");
                const auto elements = compute_element_matrices(mesh, materials, c.options.gauss_order, c.options.threads);
                TransientStepper stepper(mesh, assemble_global(mesh, elements), c.bcs);
                TransientState state{0.0, Eigen::VectorXd(static_cast<Eigen::Index>(mesh.nodes.size()))};
                for (const auto& n : mesh.nodes) state.T[n.id] = tc.initial(n.position.x, n.position.y);
                std::size_t step = 0;
                for (double te : times) {
                    const auto target = static_cast<std::size_t>(std::llround(te / tc.dt));
                    for (; step < target; ++step) {
                        state = stepper.step(state, tc.dt);
                        state.t = static_cast<double>(step + 1) * tc.dt;
                    }
                    errors.push_back(relative_error(mesh, elements, state.T, c.exact, state.t));
                }
            }
            const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            for (std::size_t k = 0; k < studies.size(); ++k) {
                ConvergenceRecord rec;
                rec.h = c.family == MeshFamily::Quad ? h : mean_cell_size(mesh);
                rec.dofs = static_cast<Index>(mesh.nodes.size());
                rec.error = errors[k];
                rec.wall_seconds = wall;
                if (!studies[k].records.empty()) {
                    const auto& prev = studies[k].records.back();
                    if (prev.error >= error_floor && rec.error >= error_floor && prev.h != rec.h)
                        rec.rate_local = std::log(prev.error / rec.error) / std::log(prev.h / rec.h);
                }
                studies[k].records.push_back(rec);
            }
        } catch (const ConfigError& e) {
            throw ConfigError(tag + std::string(e.what()));
        } catch (const MeshError& e) {
            throw MeshError(tag + std::string(e.what()));
        } catch (const SolverError& e) {
            throw SolverError(tag + std::string(e.what()));
        }
    }
    for (auto& s : studies) {
        std::vector<double> h, e;
        for (const auto& r : s.records) {
            h.push_back(r.h);
            e.push_back(r.error);
        }
        s.fit = fit_rate(h, e);
        std::vector<std::size_t> order(h.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return h[a] > h[b]; });
        s.monotone = true;
        for (std::size_t i = 1; i < order.size(); ++i)
            if (!(e[order[i]] < e[order[i - 1]])) s.monotone = false;
    }
    return studies;
}

std::string convergence_csv(const ConvergenceStudy& study) {
    std::string out = "h,dof,error,rate_local,wall_seconds\r\n";
    char buf[160];
    for (const auto& r : study.records) {
        char rate[32] = "";
        if (r.rate_local) std::snprintf(rate, sizeof rate, "%.17g", *r.rate_local);
        std::snprintf(buf, sizeof buf, "%.17g,%lld,%.17g,%s,%.6f\r\n", r.h, static_cast<long long>(r.dofs), r.error,
                      rate, r.wall_seconds);
        out += buf;
    }
    return out;
}

CaseTemplate steady_plate_case(MeshFamily family) {
    CaseTemplate c;
    c.name = "steady-plate";
    c.domain = Rectangle{0, 0, 10, 5};
    c.family = family;
    const double a = 10.0;
    const ScalarField zero = [](double, double, double) { return 0.0; };
    c.bcs = {BoundaryCondition::dirichlet("top", [a](double x, double, double) { return 100.0 * std::sin(pi * x / a); }),
             BoundaryCondition::dirichlet("bottom", zero), BoundaryCondition::dirichlet("left", zero),
             BoundaryCondition::dirichlet("right", zero)};
    c.exact = analytic_steady_plate(10.0, 5.0);
    return c;
}

CaseTemplate transient_plate_case(MeshFamily family, double dt, double t_end) {
    CaseTemplate c;
    c.name = "transient-plate";
    c.domain = Rectangle{0, 0, pi, pi};
    c.family = family;
    const ScalarField zero = [](double, double, double) { return 0.0; };
    for (const char* tag : {"left", "right", "bottom", "top"}) c.bcs.push_back(BoundaryCondition::dirichlet(tag, zero));
    c.exact = analytic_transient_plate();
    TransientConfig tc;
    tc.dt = dt;
    tc.t_end = t_end;
    tc.initial = [](double x, double y) { return 10.0 * std::sin(x) * std::sin(y); };
    c.transient = tc;
    c.eval_times = {0.5, 1.0, 1.5, 2.0};
    c.eval_times.erase(std::remove_if(c.eval_times.begin(), c.eval_times.end(),
                                      [&](double t) { return t > t_end + 1e-12; }),
                       c.eval_times.end());
    if (c.eval_times.empty()) c.eval_times.push_back(t_end);
    return c;
}

std::vector<double> steady_plate_sizes() { return {1.0, 0.5, 0.25, 0.125}; }

std::vector<double> transient_plate_sizes() { return {pi / 4, pi / 8, pi / 16}; }

}  // namespace psbfem
