"""Interval and Cartesian meshes with per-cell Gauss-Lobatto node coordinates.

Endpoint nodes of the reference rule land exactly on the cell interfaces,
so interface traces are plain nodal values and never require extrapolation.
Boundary handling (periodic wrap, zero-flux) lives in the scheme modules;
meshes only carry the tag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadrature import QuadratureRule

BC_TAGS = ("periodic", "zero_flux")


def _check_bc(bc: str):
    if bc not in BC_TAGS:
        raise ValueError(f"unknown boundary condition {bc!r}; expected one of {BC_TAGS}")


@dataclass(frozen=True)
class Mesh1D:
    """Partition of [a, b] into N cells with physical Gauss-Lobatto nodes.

    ``nodes[i, r]`` is the r-th node of cell i; nodes[i, 0] and nodes[i, -1]
    coincide with the cell edges.  ``c_mesh`` = min h_i / max h_i is recorded
    as regularity metadata and never used by the algorithms.
    """

    a: float
    b: float
    n_cells: int
    edges: np.ndarray
    h: np.ndarray
    nodes: np.ndarray
    bc: str

    @property
    def dim(self) -> int:
        return 1

    @property
    def c_mesh(self) -> float:
        return float(self.h.min() / self.h.max())

    def node_arrays(self):
        return (self.nodes,)


@dataclass(frozen=True)
class Mesh2D:
    """Cartesian mesh on [ax, bx] x [ay, by].

    Tensor nodes of cell (i, j) are ordered r fastest then s, i.e. nodal
    arrays carry axes (..., i, j, s, r) with r the x-node and s the y-node
    index; flattening the last two axes walks the x-nodes first.
    """

    rect: tuple
    nx: int
    ny: int
    xedges: np.ndarray
    yedges: np.ndarray
    hx: np.ndarray
    hy: np.ndarray
    xnodes: np.ndarray  # (nx, k+1)
    ynodes: np.ndarray  # (ny, k+1)
    bc: str
    # full (nx, ny, k+1, k+1) coordinate arrays, precomputed once
    x_full: np.ndarray = None
    y_full: np.ndarray = None

    def __post_init__(self):
        if self.x_full is None:
            p = self.xnodes.shape[1]
            shape = (self.nx, self.ny, p, p)
            object.__setattr__(self, "x_full", np.ascontiguousarray(
                np.broadcast_to(self.xnodes[:, None, None, :], shape)))
            object.__setattr__(self, "y_full", np.ascontiguousarray(
                np.broadcast_to(self.ynodes[None, :, :, None], shape)))

    @property
    def dim(self) -> int:
        return 2

    def node_arrays(self):
        """Full position arrays X, Y of shape (nx, ny, k+1, k+1)."""
        return self.x_full, self.y_full


@dataclass
class Field:
    """Nodal values of an m-component density vector.

    values has shape (m, N, k+1) on a 1D mesh and (m, nx, ny, k+1, k+1) on
    a 2D mesh (axes s then r, matching Mesh2D ordering).
    """

    values: np.ndarray

    @property
    def n_components(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "Field":
        return Field(self.values.copy())


def _cell_nodes(edges: np.ndarray, ref_nodes: np.ndarray) -> np.ndarray:
    left = edges[:-1]
    h = np.diff(edges)
    return left[:, None] + 0.5 * h[:, None] * (1.0 + ref_nodes[None, :])


def mesh_from_edges(edges, rule: QuadratureRule, bc: str) -> Mesh1D:
    """1D mesh from an explicit (possibly nonuniform) edge array."""
    _check_bc(bc)
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 3:
        raise ValueError("need at least 2 cells (3 edge coordinates)")
    h = np.diff(edges)
    if np.any(h <= 0):
        raise ValueError("edges must be strictly increasing")
    nodes = _cell_nodes(edges, rule.nodes)
    return Mesh1D(
        a=float(edges[0]), b=float(edges[-1]), n_cells=edges.size - 1,
        edges=edges, h=h, nodes=nodes, bc=bc,
    )


def build_mesh_1d(a: float, b: float, n_cells: int, rule: QuadratureRule, bc: str) -> Mesh1D:
    """Uniform partition of [a, b] into n_cells >= 2 cells."""
    if a >= b:
        raise ValueError(f"invalid interval: a={a} >= b={b}")
    if n_cells < 2:
        raise ValueError(f"need at least 2 cells, got {n_cells}")
    edges = np.linspace(a, b, n_cells + 1)
    return mesh_from_edges(edges, rule, bc)


def build_mesh_2d(rect, nx: int, ny: int, rule: QuadratureRule, bc: str) -> Mesh2D:
    """Uniform Cartesian mesh on rect = (ax, bx, ay, by)."""
    _check_bc(bc)
    ax, bx, ay, by = (float(v) for v in rect)
    if ax >= bx or ay >= by:
        raise ValueError(f"invalid rectangle {rect}")
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive, got {nx}x{ny}")
    xedges = np.linspace(ax, bx, nx + 1)
    yedges = np.linspace(ay, by, ny + 1)
    return Mesh2D(
        rect=(ax, bx, ay, by), nx=nx, ny=ny,
        xedges=xedges, yedges=yedges,
        hx=np.diff(xedges), hy=np.diff(yedges),
        xnodes=_cell_nodes(xedges, rule.nodes),
        ynodes=_cell_nodes(yedges, rule.nodes),
        bc=bc,
    )


def project_initial(mesh, rule: QuadratureRule, rho0) -> Field:
    """Interpolatory projection: evaluate rho0 at every node.

    rho0 takes the mesh coordinate arrays (x[, y]) and returns stacked
    per-component values of shape (m, ...).  Nodal interpolation (rather
    than an L2 projection) keeps the initial data nonnegative wherever
    rho0 is.
    """
    vals = np.asarray(rho0(*mesh.node_arrays()), dtype=float)
    expected = mesh.node_arrays()[0].shape
    if vals.ndim != len(expected) + 1 or vals.shape[1:] != expected:
        raise ValueError(
            f"initial data returned shape {vals.shape}, expected (m,) + {expected}"
        )
    if not np.isfinite(vals).all():
        bad = np.argwhere(~np.isfinite(vals))[0]
        raise ValueError(f"initial data is not finite at component/node index {tuple(bad)}")
    return Field(vals)
