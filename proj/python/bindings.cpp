// Python bindings for the psbfem library (module psbfem._core).

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "psbfem/error.hpp"
#include "psbfem/inp_io.hpp"
#include "psbfem/verification.hpp"

namespace py = pybind11;
using namespace psbfem;

namespace {

Rectangle rectangle(const std::array<double, 4>& r) { return {r[0], r[1], r[2], r[3]}; }

// A boundary value is a number, an expression string or a callable f(x, y, t).
ScalarField scalar_field(const py::object& value) {
    if (py::isinstance<py::str>(value)) return Expression::parse(value.cast<std::string>()).field();
    if (py::isinstance<py::float_>(value) || py::isinstance<py::int_>(value)) {
        const double v = value.cast<double>();
        return [v](double, double, double) { return v; };
    }
    if (PyCallable_Check(value.ptr())) {
        auto f = value.cast<std::function<double(double, double, double)>>();
        return [f](double x, double y, double t) {
            py::gil_scoped_acquire gil;
            return f(x, y, t);
        };
    }
    throw ConfigError("boundary value must be a number, an expression string or a callable");
}

std::vector<BoundaryCondition> dirichlet_bcs(const py::dict& bcs) {
    std::vector<BoundaryCondition> out;
    for (const auto& [tag, value] : bcs)
        out.push_back(BoundaryCondition::dirichlet(tag.cast<std::string>(), scalar_field(py::reinterpret_borrow<py::object>(value))));
    return out;
}

Eigen::MatrixXd node_array(const Mesh& m) {
    Eigen::MatrixXd p(static_cast<Eigen::Index>(m.nodes.size()), 2);
    for (const auto& n : m.nodes) {
        p(static_cast<Eigen::Index>(n.id), 0) = n.position.x;
        p(static_cast<Eigen::Index>(n.id), 1) = n.position.y;
    }
    return p;
}

std::vector<std::vector<Index>> cell_lists(const Mesh& m) {
    std::vector<std::vector<Index>> out;
    out.reserve(m.cells.size());
    for (const auto& c : m.cells) out.push_back(c.vertex_ids);
    return out;
}

MeshFamily family(const std::string& name) {
    if (name == "quad") return MeshFamily::Quad;
    if (name == "voronoi") return MeshFamily::Voronoi;
    if (name == "quadtree") return MeshFamily::Quadtree;
    throw ConfigError("unknown mesh family '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Polygonal scaled boundary finite element heat conduction";

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
    py::register_exception<MeshError>(m, "MeshError", error.ptr());
    py::register_exception<ElementError>(m, "ElementError", error.ptr());
    py::register_exception<SolverError>(m, "SolverError", error.ptr());
    py::register_exception<IoError>(m, "IoError", error.ptr());
    py::register_exception<ParseError>(m, "ParseError", error.ptr());

    py::class_<Material>(m, "Material")
        .def(py::init<double, double, double>(), py::arg("conductivity") = 1.0, py::arg("density") = 1.0,
             py::arg("specific_heat") = 1.0)
        .def_readwrite("conductivity", &Material::conductivity)
        .def_readwrite("density", &Material::density)
        .def_readwrite("specific_heat", &Material::specific_heat)
        .def("__repr__", [](const Material& mat) {
            return "Material(" + std::to_string(mat.conductivity) + ", " + std::to_string(mat.density) + ", " +
                   std::to_string(mat.specific_heat) + ")";
        });

    py::class_<Mesh>(m, "Mesh")
        .def_property_readonly("nodes", &node_array, "Node coordinates, shape (n, 2)")
        .def_property_readonly("cells", &cell_lists, "Counter-clockwise node ids of each cell")
        .def_property_readonly("edge_tags",
                               [](const Mesh& mesh) {
                                   std::map<std::string, std::vector<EdgeKey>> out;
                                   for (const auto& [edge, tag] : mesh.edge_tags) out[tag].push_back(edge);
                                   return out;
                               })
        .def_property_readonly("num_nodes", [](const Mesh& mesh) { return mesh.nodes.size(); })
        .def_property_readonly("num_cells", [](const Mesh& mesh) { return mesh.cells.size(); })
        .def("total_area", &Mesh::total_area)
        .def("validate",
             [](const Mesh& mesh) {
                 std::vector<std::string> out;
                 for (const auto& v : validate_mesh(mesh)) out.push_back(v.message);
                 return out;
             })
        .def("__eq__", [](const Mesh& a, const Mesh& b) { return a == b; })
        .def("__repr__", [](const Mesh& mesh) {
            return "<Mesh " + std::to_string(mesh.cells.size()) + " cells, " + std::to_string(mesh.nodes.size()) +
                   " nodes>";
        });

    m.def("structured_quad_mesh", &build_structured_quad_mesh, py::arg("width"), py::arg("height"), py::arg("h"));
    m.def(
        "quadtree_mesh",
        [](const std::array<double, 4>& domain, const std::vector<std::vector<double>>& features, int max_depth,
           int min_depth) {
            std::vector<RefinementFeature> f;
            for (const auto& v : features) {
                if (v.size() == 2) f.push_back(RefinementFeature::point({v[0], v[1]}));
                else if (v.size() == 3) f.push_back(RefinementFeature::circle({v[0], v[1]}, v[2]));
                else if (v.size() == 4) f.push_back(RefinementFeature::segment({v[0], v[1]}, {v[2], v[3]}));
                else throw ConfigError("refinement feature needs 2, 3 or 4 values");
            }
            return build_quadtree_mesh(rectangle(domain), f, max_depth, min_depth);
        },
        py::arg("domain"), py::arg("features") = std::vector<std::vector<double>>{}, py::arg("max_depth") = 4,
        py::arg("min_depth") = 1);
    m.def(
        "voronoi_mesh",
        [](const std::array<double, 4>& domain, std::size_t n_seeds, int lloyd, std::uint64_t seed) {
            return build_voronoi_polygon_mesh(rectangle(domain), n_seeds, lloyd, seed);
        },
        py::arg("domain"), py::arg("n_seeds"), py::arg("lloyd_iterations") = 20, py::arg("seed") = 0);

    m.def(
        "element_matrices",
        [](const Eigen::MatrixXd& polygon, const Material& material, int gauss_order) {
            if (polygon.cols() != 2) throw ConfigError("polygon must have shape (n, 2)");
            std::vector<Point2D> pts;
            for (Eigen::Index i = 0; i < polygon.rows(); ++i) pts.push_back({polygon(i, 0), polygon(i, 1)});
            ElementMatrices em = element_matrices(pts, material, gauss_order);
            return py::make_tuple(em.K, em.M);
        },
        py::arg("polygon"), py::arg("material") = Material{}, py::arg("gauss_order") = 2,
        "Stiffness and mass matrices of one polygon (counter-clockwise vertices)");

    m.def(
        "solve_steady",
        [](const Mesh& mesh, const py::dict& dirichlet, const Material& material, int gauss_order, int threads) {
            const auto bcs = dirichlet_bcs(dirichlet);
            SteadyResult r;
            {
                py::gil_scoped_release release;
                r = solve_steady(mesh, {{0, material}}, bcs, SolveOptions{gauss_order, threads});
            }
            return r.T;
        },
        py::arg("mesh"), py::arg("dirichlet"), py::arg("material") = Material{}, py::arg("gauss_order") = 2,
        py::arg("threads") = 1, "Nodal temperatures; `dirichlet` maps edge tags to values");

    m.def(
        "solve_transient",
        [](const Mesh& mesh, const py::dict& dirichlet, const py::object& initial, double dt, double t_end,
           const Material& material, int output_every, int gauss_order, int threads) {
            const auto bcs = dirichlet_bcs(dirichlet);
            const ScalarField t0 = scalar_field(initial);
            TransientConfig cfg;
            cfg.dt = dt;
            cfg.t_end = t_end;
            cfg.output_every = output_every;
            cfg.initial = [t0](double x, double y) { return t0(x, y, 0.0); };
            TransientResult r;
            {
                py::gil_scoped_release release;
                r = run_transient(mesh, {{0, material}}, bcs, cfg, SolveOptions{gauss_order, threads});
            }
            std::vector<double> times;
            Eigen::MatrixXd T(static_cast<Eigen::Index>(r.states.size()), static_cast<Eigen::Index>(mesh.nodes.size()));
            for (std::size_t i = 0; i < r.states.size(); ++i) {
                times.push_back(r.states[i].t);
                T.row(static_cast<Eigen::Index>(i)) = r.states[i].T.transpose();
            }
            return py::make_tuple(times, T);
        },
        py::arg("mesh"), py::arg("dirichlet"), py::arg("initial"), py::arg("dt"), py::arg("t_end"),
        py::arg("material") = Material{}, py::arg("output_every") = 1, py::arg("gauss_order") = 2,
        py::arg("threads") = 1, "Backward-Euler run; returns (times, temperatures of shape (states, nodes))");

    m.def(
        "temperature_at",
        [](const Mesh& mesh, const Eigen::VectorXd& T, const Eigen::MatrixXd& points, const Material& material) {
            if (points.cols() != 2) throw ConfigError("points must have shape (n, 2)");
            const auto el = compute_element_matrices(mesh, {{0, material}});
            std::vector<Point2D> pts;
            for (Eigen::Index i = 0; i < points.rows(); ++i) pts.push_back({points(i, 0), points(i, 1)});
            return ProbeSampler(mesh, el, pts).sample(T);
        },
        py::arg("mesh"), py::arg("T"), py::arg("points"), py::arg("material") = Material{},
        "Semi-analytical temperature at arbitrary points inside the mesh");

    m.def("write_vtu", [](const Mesh& mesh, const Eigen::VectorXd& T, const std::filesystem::path& path) {
        write_vtu(mesh, T, path);
    }, py::arg("mesh"), py::arg("T"), py::arg("path"));
    m.def("vtu_string", [](const Mesh& mesh, const Eigen::VectorXd& T) { return vtu_string(mesh, T); },
          py::arg("mesh"), py::arg("T"));

    m.def(
        "load_deck",
        [](const std::filesystem::path& path) {
            SolveCase sc = deck_to_case(read_inp(path));
            py::dict step;
            step["transient"] = sc.step.transient;
            step["dt"] = sc.step.dt;
            step["t_end"] = sc.step.t_end;
            return py::make_tuple(sc.mesh, step);
        },
        py::arg("path"), "Reads an input deck; returns (mesh, step settings)");
    m.def(
        "mesh_to_inp",
        [](const Mesh& mesh, const Material& material, const std::string& type_prefix) {
            return write_inp(mesh_to_deck(mesh, {{0, material}}, type_prefix));
        },
        py::arg("mesh"), py::arg("material") = Material{}, py::arg("type_prefix") = "U");
    m.def(
        "evaluate",
        [](const std::string& expression, double x, double y, double t) {
            return Expression::parse(expression)(x, y, t);
        },
        py::arg("expression"), py::arg("x") = 0.0, py::arg("y") = 0.0, py::arg("t") = 0.0);

    m.def(
        "analytic_steady_plate",
        [](double x, double y, double a, double b) { return analytic_steady_plate(a, b)(x, y); }, py::arg("x"),
        py::arg("y"), py::arg("a") = 10.0, py::arg("b") = 5.0);
    m.def(
        "analytic_transient_plate", [](double x, double y, double t) { return analytic_transient_plate()(x, y, t); },
        py::arg("x"), py::arg("y"), py::arg("t"));
    m.def(
        "fit_rate",
        [](const std::vector<double>& h, const std::vector<double>& e) {
            const RateFit f = fit_rate(h, e);
            py::dict d;
            d["fitted"] = f.fitted;
            d["slope"] = f.slope;
            d["intercept"] = f.intercept;
            d["r_squared"] = f.r_squared;
            d["flagged"] = f.flagged;
            return d;
        },
        py::arg("h"), py::arg("error"));
    m.def(
        "convergence_study",
        [](const std::string& benchmark, const std::string& family_name, const std::vector<double>& hs,
           std::uint64_t seed, double dt, double t_end) {
            CaseTemplate c;
            if (benchmark == "steady-plate") c = steady_plate_case(family(family_name));
            else if (benchmark == "transient-plate") c = transient_plate_case(family(family_name), dt, t_end);
            else throw ConfigError("unknown benchmark '" + benchmark + "'");
            c.seed = seed;
            std::vector<ConvergenceStudy> studies;
            {
                py::gil_scoped_release release;
                studies = run_convergence_study(c, hs);
            }
            py::list out;
            for (const auto& s : studies) {
                py::dict d;
                d["time"] = s.time;
                d["h"] = py::list();
                d["dofs"] = py::list();
                d["error"] = py::list();
                for (const auto& r : s.records) {
                    d["h"].cast<py::list>().append(r.h);
                    d["dofs"].cast<py::list>().append(r.dofs);
                    d["error"].cast<py::list>().append(r.error);
                }
                d["slope"] = s.fit.slope;
                d["r_squared"] = s.fit.r_squared;
                d["monotone"] = s.monotone;
                out.append(d);
            }
            return out;
        },
        py::arg("benchmark"), py::arg("family") = "quad", py::arg("h"), py::arg("seed") = 0, py::arg("dt") = 1e-3,
        py::arg("t_end") = 2.0);

    m.attr("__version__") = PSBFEM_VERSION;
}
