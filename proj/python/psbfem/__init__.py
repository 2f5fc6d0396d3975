"""Polygonal scaled boundary finite element heat conduction."""

from ._core import (
    ConfigError,
    ElementError,
    Error,
    IoError,
    Material,
    Mesh,
    MeshError,
    ParseError,
    SolverError,
    __version__,
    analytic_steady_plate,
    analytic_transient_plate,
    convergence_study,
    element_matrices,
    evaluate,
    fit_rate,
    load_deck,
    mesh_to_inp,
    quadtree_mesh,
    solve_steady,
    solve_transient,
    structured_quad_mesh,
    temperature_at,
    voronoi_mesh,
    vtu_string,
    write_vtu,
)

__all__ = [name for name in dir() if not name.startswith("_")]
