"""Tensor-product semi-discrete operator on Cartesian meshes.

Directional auxiliary variables u^x, u^y and the nodal rate are produced by
the 1D sweep kernel applied to strided views: the x-sweep runs along rows
(fixed transverse node y_j^s), the y-sweep along columns.  Edge fluxes are
evaluated pointwise at the transverse Gauss-Lobatto nodes, including the
Lax-Friedrichs coefficient alpha (a per-edge maximum is available behind
``FluxChoice.alpha_per_edge`` but is not the default).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Field, Mesh2D
from .models import Model, apply_G
from .quadrature import QuadratureRule
from .scheme1d import (FluxChoice, check_finite, dg_sweep, hat_fu, hat_xi,
                       interface_alpha, trace_pair)


@dataclass
class EdgeState:
    """Traces at one edge point (fixed transverse node), m-vectors."""

    rho_minus: np.ndarray
    rho_plus: np.ndarray
    xi_minus: np.ndarray
    xi_plus: np.ndarray
    fu_minus: np.ndarray
    fu_plus: np.ndarray
    v_minus: np.ndarray
    v_plus: np.ndarray


# field layout is (m, nx, ny, s, r); the sweeps want (..., cells, nodes)
def _to_x(a):
    return np.moveaxis(a, 1, 3)        # (m, ny, s, nx, r)


def _from_x(a):
    return np.moveaxis(a, 3, 1)


def _to_y(a):
    return np.moveaxis(a, (2, 3), (3, 4))   # (m, nx, r, ny, s)


def _from_y(a):
    return np.moveaxis(a, (3, 4), (2, 3))


def _directional_u(xi, mesh: Mesh2D, rule: QuadratureRule, flux: FluxChoice):
    xv = np.ascontiguousarray(_to_x(xi))
    m, p = trace_pair(xv, mesh.bc)
    ux = _from_x(dg_sweep(xv, hat_xi(m, p, flux), mesh.hx, rule))

    yv = np.ascontiguousarray(_to_y(xi))
    m, p = trace_pair(yv, mesh.bc)
    uy = _from_y(dg_sweep(yv, hat_xi(m, p, flux), mesh.hy, rule))
    return ux, uy


def auxiliary_u_2d(field: Field, t: float, mesh: Mesh2D, rule: QuadratureRule,
                   model: Model, flux: FluxChoice):
    """Directional discrete gradients (u^x, u^y) of the entropy variables."""
    xi = model.xi(field.values, mesh.node_arrays())
    ux, uy = _directional_u(xi, mesh, rule, flux)
    return Field(ux), Field(uy)


def _velocity(model: Model, rho, u, g):
    if g is None:
        return u
    return apply_G(model, rho, u, g)


def _directional_rate(rho, fu, v, h, bc, rule, flux, to_dir, from_dir):
    fuv = np.ascontiguousarray(to_dir(fu))
    fu_m, fu_p = trace_pair(fuv, bc)
    if flux.kind == "lax_friedrichs":
        rho_m, rho_p = trace_pair(to_dir(rho), bc)
        v_m, v_p = trace_pair(to_dir(v), bc)
        alpha_eff = flux.lf_multiplier * interface_alpha(v_m, v_p)
        if flux.alpha_per_edge:
            # reduce over the transverse node axis of each edge
            alpha_eff = alpha_eff.max(axis=1, keepdims=True)
    else:
        rho_m = rho_p = alpha_eff = None
    hat = hat_fu(rho_m, rho_p, fu_m, fu_p, alpha_eff, flux,
                 zero_flux_ends=bc == "zero_flux")
    return from_dir(dg_sweep(fuv, hat, h, rule))


def semi_discrete_rhs_2d(field: Field, t: float, mesh: Mesh2D, rule: QuadratureRule,
                         model: Model, flux: FluxChoice) -> Field:
    """Nodal d(rho)/dt: x-sweep plus y-sweep plus source."""
    rho = field.values
    pos = mesh.node_arrays()
    xi = model.xi(rho, pos)
    ux, uy = _directional_u(xi, mesh, rule, flux)

    g = None if model.G_is_identity else model.G(rho)
    vx = _velocity(model, rho, ux, g)
    vy = _velocity(model, rho, uy, g)
    fux = rho * vx
    fuy = rho * vy

    rhs = _directional_rate(rho, fux, vx, mesh.hx, mesh.bc, rule, flux, _to_x, _from_x)
    rhs += _directional_rate(rho, fuy, vy, mesh.hy, mesh.bc, rule, flux, _to_y, _from_y)
    if model.source is not None:
        rhs += model.source(pos, t)
    check_finite(rhs, "semi-discrete rate")
    return Field(rhs)


def edge_states_x(field: Field, mesh: Mesh2D, rule: QuadratureRule, model: Model,
                  flux: FluxChoice) -> list:
    """EdgeState per (x-interface, cell row j, transverse node s), for inspection."""
    rho = field.values
    xi = model.xi(rho, mesh.node_arrays())
    ux, _ = _directional_u(xi, mesh, rule, flux)
    g = None if model.G_is_identity else model.G(rho)
    vx = _velocity(model, rho, ux, g)
    fux = rho * vx

    pairs = {name: trace_pair(np.ascontiguousarray(_to_x(arr)), mesh.bc)
             for name, arr in (("rho", rho), ("xi", xi), ("fu", fux), ("v", vx))}
    states = []
    for i in range(mesh.nx + 1):
        for j in range(mesh.ny):
            for s in range(rule.n_nodes):
                states.append(EdgeState(
                    rho_minus=pairs["rho"][0][:, j, s, i], rho_plus=pairs["rho"][1][:, j, s, i],
                    xi_minus=pairs["xi"][0][:, j, s, i], xi_plus=pairs["xi"][1][:, j, s, i],
                    fu_minus=pairs["fu"][0][:, j, s, i], fu_plus=pairs["fu"][1][:, j, s, i],
                    v_minus=pairs["v"][0][:, j, s, i], v_plus=pairs["v"][1][:, j, s, i],
                ))
    return states
