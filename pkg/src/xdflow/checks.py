"""Randomized property suites behind the ``xdflow check`` subcommand.

These are quick, self-contained instances of the structural guarantees:
quadrature exactness, the semi-discrete entropy identity, conservation of
the quadrature mass, weak positivity under the CFL-type bound, and the
scaling-limiter invariants.
"""

from __future__ import annotations

import numpy as np

from . import models, stepping
from .diagnostics import component_mass, entropy_identity_residual
from .mesh import Field, build_mesh_1d, build_mesh_2d
from .quadrature import gauss_lobatto_rule, quad_integrate
from .scheme1d import FluxChoice, semi_discrete_rhs
from .scheme2d import semi_discrete_rhs_2d

_RESIDUAL_MODELS = ("heat", "skt", "surfactant")


def _random_field(rng, model_name, shape):
    if model_name == "tumor":
        return np.maximum(rng.uniform(-0.02, 0.45, size=shape), 0.0)
    return rng.uniform(0.2, 2.0, size=shape)


def _meshes(k, bc):
    rule = gauss_lobatto_rule(k)
    return rule, build_mesh_1d(-1.0, 1.0, 8, rule, bc), build_mesh_2d(
        (0.0, 1.0, 0.0, 1.0), 4, 4, rule, bc)


def check_quadrature(seed=0):
    worst = 0.0
    for k in range(1, 9):
        rule = gauss_lobatto_rule(k)
        for deg in range(2 * k):
            exact = (1.0 - (-1.0) ** (deg + 1)) / (deg + 1)
            got = quad_integrate(rule, rule.nodes**deg, 2.0)
            worst = max(worst, abs(got - exact))
    return worst < 1e-12, f"max monomial defect {worst:.2e}"


def check_entropy_identity(seed=0, n_states=10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in _RESIDUAL_MODELS:
        model = models.get_model(name)
        for kind in ("lax_friedrichs", "alternating"):
            flux = FluxChoice(kind=kind)
            rule, mesh1, mesh2 = _meshes(2, "periodic")
            for _ in range(n_states):
                f1 = Field(_random_field(rng, name, (model.m, 8, 3)))
                worst = max(worst, entropy_identity_residual(f1, 0.0, mesh1, rule, model, flux))
                f2 = Field(_random_field(rng, name, (model.m, 4, 4, 3, 3)))
                worst = max(worst, entropy_identity_residual(f2, 0.0, mesh2, rule, model, flux))
    return worst < 1e-10, f"max relative residual {worst:.2e}"


def check_conservation(seed=0, n_states=10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in _RESIDUAL_MODELS:
        model = models.get_model(name)
        for bc in ("periodic", "zero_flux"):
            for kind in ("lax_friedrichs", "alternating"):
                flux = FluxChoice(kind=kind)
                rule, mesh1, mesh2 = _meshes(3, bc)
                for _ in range(n_states):
                    f1 = Field(_random_field(rng, name, (model.m, 8, 4)))
                    rhs = semi_discrete_rhs(f1, 0.0, mesh1, rule, model, flux)
                    worst = max(worst, np.abs(component_mass(rhs, mesh1, rule)).max())
                    f2 = Field(_random_field(rng, name, (model.m, 4, 4, 4, 4)))
                    rhs2 = semi_discrete_rhs_2d(f2, 0.0, mesh2, rule, model, flux)
                    worst = max(worst, np.abs(component_mass(rhs2, mesh2, rule)).max())
    return worst < 1e-12, f"max RHS mass defect {worst:.2e}"


def check_weak_positivity(seed=0, n_states=100):
    rng = np.random.default_rng(seed)
    rule = gauss_lobatto_rule(2)
    mesh = build_mesh_1d(0.0, 1.0, 8, rule, "periodic")
    flux = FluxChoice(kind="lax_friedrichs")
    config = stepping.StepConfig(mu_diff=1e-3, limiter_on=False)
    worst = np.inf
    for name in ("heat", "skt", "surfactant", "tumor"):
        model = models.get_model(name)
        for _ in range(n_states):
            vals = np.maximum(rng.uniform(-0.3, 1.5, size=(model.m, 8, 3)), 0.0)
            if name == "tumor":
                vals *= 0.3
            field = Field(vals)
            tau = 0.5 * stepping.cfl_bound(field, mesh, rule, model, flux)
            if not np.isfinite(tau):
                continue
            out = stepping.euler_step(field, 0.0, tau, mesh, rule, model, flux, config)
            avg = stepping.cell_averages(out.field.values, rule, 1)
            worst = min(worst, float(avg.min()))
    return worst >= -1e-14, f"min post-step cell average {worst:.2e}"


def check_limiter(seed=0, n_states=200):
    rng = np.random.default_rng(seed)
    rule = gauss_lobatto_rule(3)
    mesh = build_mesh_1d(0.0, 1.0, 6, rule, "periodic")
    config = stepping.StepConfig(mu_diff=1e-3)
    worst_avg = 0.0
    worst_floor = np.inf
    for _ in range(n_states):
        vals = rng.uniform(-0.5, 1.0, size=(2, 6, 4))
        field = Field(vals)
        limited = stepping.scaling_limiter(field, mesh, rule, config)
        avg0 = stepping.cell_averages(vals, rule, 1)
        avg1 = stepping.cell_averages(limited.values, rule, 1)
        worst_avg = max(worst_avg, float(np.abs(avg1 - avg0).max()))
        nonneg = avg0 >= 0.0
        if nonneg.any():
            floor = np.minimum(config.epsilon_floor, avg0)
            defect = (limited.values.min(axis=-1) - floor)[nonneg].min()
            worst_floor = min(worst_floor, float(defect))
    ok = worst_avg < 1e-14 and worst_floor >= -1e-15
    return ok, (f"max average drift {worst_avg:.2e}, worst floor defect "
                f"{worst_floor:.2e}")


def run_all(seed: int = 0):
    suites = (
        ("quadrature exactness", check_quadrature),
        ("entropy identity residual", check_entropy_identity),
        ("conservation of quadrature mass", check_conservation),
        ("weak positivity under CFL bound", check_weak_positivity),
        ("scaling limiter invariants", check_limiter),
    )
    return [(name, *fn(seed)) for name, fn in suites]
