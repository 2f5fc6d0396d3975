import math

import numpy as np
import pytest

import psbfem


def test_unit_square_matrices_are_symmetric_and_conserve_heat():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    K, M = psbfem.element_matrices(square, psbfem.Material(2.0, 3.0, 0.5))
    assert K.shape == (4, 4)
    assert np.allclose(K, K.T, atol=1e-12)
    assert np.allclose(K @ np.ones(4), 0.0, atol=1e-12)
    # Total heat capacity of the cell: rho * c * area.
    assert np.ones(4) @ M @ np.ones(4) == pytest.approx(1.5, rel=1e-12)


def test_steady_plate_matches_analytic_solution():
    mesh = psbfem.structured_quad_mesh(10.0, 5.0, 0.25)
    bcs = {"top": "100*sin(pi*x/10)", "left": 0.0, "right": 0, "bottom": lambda x, y, t: 0.0}
    T = psbfem.solve_steady(mesh, bcs)
    assert T.shape == (mesh.num_nodes,)
    exact = np.array([psbfem.analytic_steady_plate(x, y) for x, y in mesh.nodes])
    assert np.max(np.abs(T - exact)) < 0.05
    probe = psbfem.temperature_at(mesh, T, np.array([[2.5, 2.5]]))
    assert probe[0] == pytest.approx(psbfem.analytic_steady_plate(2.5, 2.5), rel=2e-3)


def test_meshes_validate_and_voronoi_is_deterministic():
    domain = (0.0, 0.0, 2.0, 1.0)
    a = psbfem.voronoi_mesh(domain, 40, seed=5)
    b = psbfem.voronoi_mesh(domain, 40, seed=5)
    assert a == b
    assert a.num_cells == 40
    assert a.validate() == []
    assert a.total_area() == pytest.approx(2.0, rel=1e-12)
    q = psbfem.quadtree_mesh(domain, [(0.5, 0.5, 0.2)], max_depth=4, min_depth=1)
    assert q.validate() == []
    assert set(q.edge_tags) == {"left", "right", "bottom", "top"}
    assert any(len(c) > 4 for c in q.cells)


def test_transient_decay_and_vtu_round_trip(tmp_path):
    mesh = psbfem.structured_quad_mesh(math.pi, math.pi, math.pi / 16)
    zero = {tag: 0.0 for tag in ("left", "right", "bottom", "top")}
    times, T = psbfem.solve_transient(mesh, zero, "10*sin(x)*sin(y)", dt=0.01, t_end=0.5, output_every=10)
    assert times[0] == 0.0 and times[-1] == pytest.approx(0.5)
    assert T.shape == (len(times), mesh.num_nodes)
    centre = np.argmin(np.sum((mesh.nodes - math.pi / 2) ** 2, axis=1))
    assert T[-1, centre] == pytest.approx(psbfem.analytic_transient_plate(math.pi / 2, math.pi / 2, 0.5), rel=2e-2)

    path = tmp_path / "final.vtu"
    psbfem.write_vtu(mesh, T[-1], path)
    text = path.read_text()
    assert "Temperature" in text and 'NumberOfCells="256"' in text
    meshio = pytest.importorskip("meshio")
    data = meshio.read(path)
    assert np.allclose(data.point_data["Temperature"], T[-1])
    assert np.allclose(data.points[:, :2], mesh.nodes)


def test_deck_round_trip(tmp_path):
    mesh = psbfem.quadtree_mesh((0.0, 0.0, 1.0, 1.0), [(0.2, 0.8)], max_depth=3)
    deck = tmp_path / "q.inp"
    deck.write_text(psbfem.mesh_to_inp(mesh, type_prefix="UQT"))
    loaded, step = psbfem.load_deck(deck)
    assert loaded.num_cells == mesh.num_cells
    assert np.allclose(loaded.nodes, mesh.nodes)
    assert step["transient"] is False


def test_errors_map_to_python_exceptions():
    with pytest.raises(psbfem.ParseError):
        psbfem.evaluate("sin(")
    assert psbfem.evaluate("2*pi") == pytest.approx(2 * math.pi)
    with pytest.raises(psbfem.ConfigError):
        psbfem.structured_quad_mesh(1.0, 1.0, -0.1)
    with pytest.raises(psbfem.IoError):
        psbfem.load_deck("/nonexistent/deck.inp")
    assert issubclass(psbfem.ConfigError, psbfem.Error)


def test_convergence_rate_on_quads():
    studies = psbfem.convergence_study("steady-plate", "quad", [1.0, 0.5, 0.25])
    assert len(studies) == 1
    assert 1.8 <= studies[0]["slope"] <= 2.2
    fit = psbfem.fit_rate([1.0, 0.5, 0.25], [3.0, 0.75, 0.1875])
    assert fit["slope"] == pytest.approx(2.0)
