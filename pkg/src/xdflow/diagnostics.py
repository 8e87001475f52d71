"""Discrete entropy, mass, error norms, observed orders, and the entropy
identity residual used by the property tests.

All integrals are the Gauss-Lobatto quadrature sums of the scheme itself,
accumulated in fixed (array) order for run-to-run determinism.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Field, Mesh1D, Mesh2D
from .models import Model, apply_G
from .quadrature import QuadratureRule, lagrange_basis_matrix
from .scheme1d import (FluxChoice, interface_alpha, semi_discrete_rhs,
                       trace_pair, _auxiliary_values)
from .scheme2d import (_directional_u, _to_x, _to_y, _velocity,
                       semi_discrete_rhs_2d)


@dataclass(frozen=True)
class ErrorTriple:
    """Discrete L1/L2/Linf error in the Gauss-Lobatto norms."""

    l1: float
    l2: float
    linf: float


def quadrature_weights(mesh, rule: QuadratureRule) -> np.ndarray:
    """Nodal quadrature weights shaped like the mesh node arrays."""
    w = rule.weights
    if mesh.dim == 1:
        return 0.5 * mesh.h[:, None] * w[None, :]
    area = 0.25 * mesh.hx[:, None] * mesh.hy[None, :]
    return area[:, :, None, None] * np.outer(w, w)[None, None, :, :]


def discrete_entropy(field: Field, t: float, mesh, rule: QuadratureRule,
                     model: Model) -> float:
    """E_h = quadrature of e(rho_h, position) over the domain."""
    e = model.e(field.values, mesh.node_arrays())
    return float(np.sum(quadrature_weights(mesh, rule) * e))


def component_mass(field: Field, mesh, rule: QuadratureRule) -> np.ndarray:
    """Per-component quadrature integral, shape (m,)."""
    qw = quadrature_weights(mesh, rule)
    axes = tuple(range(1, field.values.ndim))
    return np.sum(qw[None] * field.values, axis=axes)


def nodal_error_norms(delta: np.ndarray, mesh, rule: QuadratureRule):
    """ErrorTriple per component for stacked nodal differences."""
    qw = quadrature_weights(mesh, rule)
    axes = tuple(range(1, delta.ndim))
    l1 = np.sum(qw[None] * np.abs(delta), axis=axes)
    l2 = np.sqrt(np.sum(qw[None] * delta**2, axis=axes))
    linf = np.abs(delta).max(axis=axes)
    return [ErrorTriple(float(a), float(b), float(c)) for a, b, c in zip(l1, l2, linf)]


def error_norms(field: Field, exact, t: float, mesh, rule: QuadratureRule):
    """Errors against an exact solution exact(pos, t) -> (m, ...)."""
    delta = field.values - np.asarray(exact(mesh.node_arrays(), t))
    return nodal_error_norms(delta, mesh, rule)


def aggregate_norms(triples) -> ErrorTriple:
    """Collapse per-component errors into one row the way the reference
    tables do: the error vector's L1 sums component integrals, L2 is the
    root of summed squares, Linf the overall maximum."""
    return ErrorTriple(
        l1=float(sum(t.l1 for t in triples)),
        l2=float(np.sqrt(sum(t.l2**2 for t in triples))),
        linf=float(max(t.linf for t in triples)),
    )


def observed_order(errors, mesh_sizes) -> np.ndarray:
    """Orders log(e_{j-1}/e_j) / log(h_{j-1}/h_j) between consecutive levels.

    Zero or negative errors yield nan (undefined order), never a crash.
    """
    e = np.asarray(errors, dtype=float)
    h = np.asarray(mesh_sizes, dtype=float)
    if e.size < 2 or e.size != h.size:
        raise ValueError("need matching error/size lists with at least two entries")
    if np.any(np.diff(h) >= 0):
        raise ValueError("mesh sizes must be strictly decreasing")
    orders = np.full(e.size - 1, np.nan)
    for j in range(1, e.size):
        if e[j - 1] > 0 and e[j] > 0:
            orders[j - 1] = np.log(e[j - 1] / e[j]) / np.log(h[j - 1] / h[j])
    return orders


# ---------------------------------------------------------------------------
# entropy identity (semi-discrete, no time stepping involved)
# ---------------------------------------------------------------------------

def _interface_sum(values):
    """Sum over interface slots 1..N: counts each physical interface once
    under periodic wrap; boundary slots vanish identically under zero-flux
    (mirrored traces have zero jump)."""
    return float(values[..., 1:].sum())


def entropy_identity_residual(field: Field, t: float, mesh, rule: QuadratureRule,
                              model: Model, flux: FluxChoice) -> float:
    """Relative residual of the semi-discrete entropy balance.

    | sum RHS.xi + sum u.Fu + penalty | / max(1, |sum u.Fu|), where the
    penalty is (1/2) sum alpha_eff [xi].[rho] per interface (Lax-Friedrichs
    family) and zero for alternating fluxes.  Source terms are excluded:
    the identity concerns the transport part of the operator.
    """
    rho = field.values
    pos = mesh.node_arrays()
    xi = model.xi(rho, pos)
    qw = quadrature_weights(mesh, rule)

    transport = Field(rho)
    if model.source is None:
        rhs = (semi_discrete_rhs(transport, t, mesh, rule, model, flux) if mesh.dim == 1
               else semi_discrete_rhs_2d(transport, t, mesh, rule, model, flux)).values
    else:
        stripped = Model(name=model.name, m=model.m, e=model.e, xi=model.xi,
                         G=model.G, has_bounded_G=model.has_bounded_G)
        rhs = (semi_discrete_rhs(transport, t, mesh, rule, stripped, flux) if mesh.dim == 1
               else semi_discrete_rhs_2d(transport, t, mesh, rule, stripped, flux)).values

    s_rhs_xi = float(np.sum(qw[None] * rhs * xi))

    if mesh.dim == 1:
        u = _auxiliary_values(xi, mesh, rule, flux)
        v = u if model.G_is_identity else apply_G(model, rho, u)
        s_ufu = float(np.sum(qw[None] * u * rho * v))
        penalty = 0.0
        if flux.kind == "lax_friedrichs":
            rho_m, rho_p = trace_pair(rho, mesh.bc)
            xi_m, xi_p = trace_pair(xi, mesh.bc)
            v_m, v_p = trace_pair(v, mesh.bc)
            alpha_eff = flux.lf_multiplier * interface_alpha(v_m, v_p)
            penalty = 0.5 * _interface_sum(
                alpha_eff * ((xi_p - xi_m) * (rho_p - rho_m)).sum(axis=0))
    else:
        ux, uy = _directional_u(xi, mesh, rule, flux)
        g = None if model.G_is_identity else model.G(rho)
        vx = _velocity(model, rho, ux, g)
        vy = _velocity(model, rho, uy, g)
        s_ufu = float(np.sum(qw[None] * (ux * rho * vx + uy * rho * vy)))
        penalty = 0.0
        if flux.kind == "lax_friedrichs":
            for v_dir, mover, h_trans in ((vx, _to_x, mesh.hy), (vy, _to_y, mesh.hx)):
                rho_m, rho_p = trace_pair(mover(rho), mesh.bc)
                xi_m, xi_p = trace_pair(mover(xi), mesh.bc)
                v_m, v_p = trace_pair(mover(v_dir), mesh.bc)
                alpha_eff = flux.lf_multiplier * interface_alpha(v_m, v_p)
                jump = alpha_eff * ((xi_p - xi_m) * (rho_p - rho_m)).sum(axis=0)
                # transverse quadrature: jump carries axes (cells_t, nodes_t, ifaces)
                wts = 0.5 * h_trans[:, None, None] * rule.weights[None, :, None]
                penalty += 0.5 * _interface_sum(wts * jump)

    return abs(s_rhs_xi + s_ufu + penalty) / max(1.0, abs(s_ufu))


# ---------------------------------------------------------------------------
# pointwise evaluation (self-convergence references)
# ---------------------------------------------------------------------------

def evaluate_field_1d(field: Field, mesh: Mesh1D, rule: QuadratureRule,
                      points) -> np.ndarray:
    """Evaluate the piecewise nodal polynomial at arbitrary points, (m, npts).

    Points on a cell interface take the right cell's value (the left cell at
    the domain's right end)."""
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    cells = np.clip(np.searchsorted(mesh.edges, pts, side="right") - 1, 0,
                    mesh.n_cells - 1)
    left = mesh.edges[cells]
    ref = 2.0 * (pts - left) / mesh.h[cells] - 1.0
    basis = lagrange_basis_matrix(rule, ref)           # (npts, p)
    gathered = field.values[:, cells, :]               # (m, npts, p)
    return np.einsum("mqr,qr->mq", gathered, basis)


def self_convergence_errors(coarse: Field, coarse_mesh: Mesh1D,
                            fine: Field, fine_mesh: Mesh1D,
                            rule: QuadratureRule):
    """Error of the coarse run against the finer run evaluated at coarse nodes."""
    pts = coarse_mesh.nodes.ravel()
    ref = evaluate_field_1d(fine, fine_mesh, rule, pts)
    delta = coarse.values - ref.reshape(coarse.values.shape)
    return nodal_error_norms(delta, coarse_mesh, rule)
