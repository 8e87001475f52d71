"""Explicit time stepping: Euler forward and SSP-RK2/RK3, the positivity
scaling limiter applied after every stage, and halve-and-redo control of the
diffusion-number time step when negative cell averages appear.

The nominal step is tau = mu_diff * h^2 with h the smallest cell size.  A
rejected step is redone in full from the saved state with tau halved; the
next step returns to the nominal tau.  With Lax-Friedrichs fluxes the weak
positivity bound guarantees the halving loop terminates; with alternating
fluxes no such guarantee exists, so a negative average aborts the run with
a diagnostic instead of looping.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .mesh import Field, Mesh2D
from .models import Model, apply_G
from .quadrature import QuadratureRule, lagrange_basis_matrix
from .scheme1d import (FluxChoice, interface_alpha, semi_discrete_rhs,
                       trace_pair, _auxiliary_values)
from .scheme2d import (_directional_u, _to_x, _to_y, _velocity,
                       semi_discrete_rhs_2d)


class SolverBreakdown(RuntimeError):
    """Raised when a run cannot continue (positivity loss or non-finite state).

    ``last_good_t`` carries the time of the last valid state when known.
    """

    def __init__(self, message, last_good_t=None):
        super().__init__(message)
        self.last_good_t = last_good_t


@dataclass(frozen=True)
class StepConfig:
    """Time-stepping controls.

    rk_order "auto" follows the degree rule: Euler for k = 1, SSP-RK2 for
    k in {2, 3}, SSP-RK3 for k >= 4 (tau ~ h^2 makes these sufficient).
    theta_safety < 1 strengthens the limiter clip where it engages (the
    strong-pressure tumor protocol uses 0.95); it never touches cells the
    limiter leaves alone.
    """

    mu_diff: float = 1e-3
    rk_order: object = "auto"
    limiter_on: bool = True
    theta_safety: float = 1.0
    epsilon_floor: float = 1e-13
    max_halvings: int = 40
    pointwise_limiter: bool = False
    sample_dt: float = 0.0   # 0 records entropy/mass every accepted step
    debug_checks: bool = False

    def __post_init__(self):
        if self.mu_diff <= 0:
            raise ValueError(f"diffusion number must be positive, got {self.mu_diff}")
        if not 0.0 < self.theta_safety <= 1.0:
            raise ValueError(f"theta_safety must lie in (0, 1], got {self.theta_safety}")
        if self.rk_order not in ("auto", 1, 2, 3):
            raise ValueError(f"rk_order must be 'auto', 1, 2 or 3, got {self.rk_order!r}")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be nonnegative")


@dataclass
class StepOutcome:
    accepted: bool
    halvings: int
    dt: float
    field: Field
    min_values: np.ndarray        # per-component min nodal value after the step
    limiter_activations: int


@dataclass
class RunReport:
    """Time series and event log of one integrate() run."""

    times: list = dc_field(default_factory=list)
    entropy: list = dc_field(default_factory=list)
    mass: list = dc_field(default_factory=list)
    halving_events: list = dc_field(default_factory=list)   # (t_before_step, halvings)
    accepted_steps: int = 0
    total_halvings: int = 0
    limiter_activations: int = 0
    error_rows: list = dc_field(default_factory=list)

    def mass_array(self) -> np.ndarray:
        return np.asarray(self.mass)

    def entropy_array(self) -> np.ndarray:
        return np.asarray(self.entropy)


def auto_rk_order(k: int) -> int:
    if k <= 1:
        return 1
    if k <= 3:
        return 2
    return 3


# Shu-Osher stages: y_i = a*y^n + b*(y_{i-1} + tau L(y_{i-1}, t + c tau))
_STAGES = {
    1: ((0.0, 1.0, 0.0),),
    2: ((0.0, 1.0, 0.0), (0.5, 0.5, 1.0)),
    3: ((0.0, 1.0, 0.0), (0.75, 0.25, 1.0), (1.0 / 3.0, 2.0 / 3.0, 0.5)),
}


def cell_averages(values: np.ndarray, rule: QuadratureRule, dim: int) -> np.ndarray:
    """Quadrature cell averages of nodal data, shape (m, cells...)."""
    w = rule.weights
    if dim == 1:
        return values @ (0.5 * w)
    return np.tensordot(values, 0.25 * np.outer(w, w), axes=([-2, -1], [0, 1]))


def _node_min(values: np.ndarray, dim: int) -> np.ndarray:
    axes = (-1,) if dim == 1 else (-2, -1)
    return values.min(axis=axes)


def _sampled_min(values: np.ndarray, rule: QuadratureRule, dim: int) -> np.ndarray:
    """Approximate whole-cell minimum: 4(k+1) equispaced samples plus the nodes."""
    pts = np.linspace(-1.0, 1.0, 4 * rule.n_nodes)
    basis = lagrange_basis_matrix(rule, pts)
    sampled = values @ basis.T
    if dim == 2:
        sampled = np.moveaxis(sampled, -2, -1) @ basis.T
    return np.minimum(_node_min(values, dim), _node_min(sampled, dim))


def _limit(values: np.ndarray, rule: QuadratureRule, dim: int, config: StepConfig):
    """Scaling limiter toward cell averages.

    Per cell and component, with eps = min(epsilon_floor, avg):
    theta = min(theta_safety * (avg - eps)/(avg - min), 1); cells whose
    average is already negative are passed through untouched (that is a
    step-rejection signal, not a limiter case).
    Returns (new_values, averages, activations, negative_cells).
    """
    avg = cell_averages(values, rule, dim)
    minval = (_sampled_min(values, rule, dim) if config.pointwise_limiter
              else _node_min(values, dim))
    negative = avg < 0.0
    eps = np.minimum(config.epsilon_floor, avg)
    denom = avg - minval
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0.0, (avg - eps) / np.where(denom > 0.0, denom, 1.0), np.inf)
    theta = np.minimum(config.theta_safety * ratio, 1.0)
    expand = (...,) + (None,) * dim
    new = avg[expand] + theta[expand] * (values - avg[expand])
    new = np.where(negative[expand], values, new)
    activations = int(((minval < eps) & ~negative).sum())
    return new, avg, activations, int(negative.sum())


def scaling_limiter(field: Field, mesh, rule: QuadratureRule,
                    config: StepConfig) -> Field:
    """Public limiter entry point; see _limit for the formula."""
    new, _, _, _ = _limit(field.values, rule, mesh.dim, config)
    return Field(new)


# ---------------------------------------------------------------------------
# CFL-type bound of the weak-positivity theorems
# ---------------------------------------------------------------------------

def _face_taus(v_m, v_p, alpha_eff, h, w):
    """Candidate bounds from the two face families along one direction."""
    taus = []
    for num_w, den in ((w[0], alpha_eff[..., :-1] + v_p[..., :-1]),
                       (w[-1], alpha_eff[..., 1:] - v_m[..., 1:])):
        num = np.broadcast_to(num_w * h, den.shape)
        mask = den > 0.0
        if mask.any():
            taus.append(float((num[mask] / np.maximum(den[mask], 1e-30)).min()))
    return taus


def cfl_bound(field: Field, mesh, rule: QuadratureRule, model: Model,
              flux: FluxChoice) -> float:
    """Euler-forward time step below which cell averages stay nonnegative
    (Lax-Friedrichs family).  Unconstraining faces (nonpositive denominator)
    are skipped; with no constraining face the bound is +inf."""
    rho = field.values
    xi = model.xi(rho, mesh.node_arrays())
    w = rule.weights
    if mesh.dim == 1:
        u = _auxiliary_values(xi, mesh, rule, flux)
        v = u if model.G_is_identity else apply_G(model, rho, u)
        v_m, v_p = trace_pair(v, mesh.bc)
        alpha_eff = flux.lf_multiplier * interface_alpha(v_m, v_p)
        taus = _face_taus(v_m, v_p, alpha_eff, mesh.h, w)
        return min(taus) if taus else np.inf

    ux, uy = _directional_u(xi, mesh, rule, flux)
    g = None if model.G_is_identity else model.G(rho)
    taus = []
    for u_dir, h_dir, mover in ((ux, mesh.hx, _to_x), (uy, mesh.hy, _to_y)):
        v = _velocity(model, rho, u_dir, g)
        v_m, v_p = trace_pair(np.ascontiguousarray(mover(v)), mesh.bc)
        alpha_eff = flux.lf_multiplier * interface_alpha(v_m, v_p)
        taus.extend(_face_taus(v_m, v_p, alpha_eff, h_dir, w))
    return 0.5 * min(taus) if taus else np.inf


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

class _NegativeAverage(Exception):
    def __init__(self, stage, component, cell):
        self.stage, self.component, self.cell = stage, component, cell


def _rhs(field_values, t, mesh, rule, model, flux) -> np.ndarray:
    f = Field(field_values)
    if mesh.dim == 1:
        return semi_discrete_rhs(f, t, mesh, rule, model, flux).values
    return semi_discrete_rhs_2d(f, t, mesh, rule, model, flux).values


def _try_step_fn(base, t, tau, order, rhs_fn, rule, dim, config,
                 check_averages=False):
    """One SSP step attempt on a generic rate function;
    raises _NegativeAverage on rejection.

    Negative cell averages are a rejection signal for the Lax-Friedrichs
    family whether or not the scaling limiter is enabled (the halving
    protocol belongs to the flux family, the limiter only restores nodal
    values).  Alternating-flux runs reject only when positivity was asked
    for, since no bound guarantees the halving loop terminates there.
    """
    y = base
    activations = 0
    for stage, (a, b, c) in enumerate(_STAGES[order]):
        y = b * (y + tau * rhs_fn(y, t + c * tau))
        if a != 0.0:
            y += a * base
        if config.limiter_on:
            y, avg, hits, negcells = _limit(y, rule, dim, config)
            if negcells:
                bad = np.argwhere(avg < 0.0)[0]
                raise _NegativeAverage(stage, int(bad[0]), tuple(bad[1:]))
            activations += hits
            if config.debug_checks:
                assert (y >= 0.0).all(), "stage input not nodal-nonnegative"
        elif check_averages:
            avg = cell_averages(y, rule, dim)
            if (avg < 0.0).any():
                bad = np.argwhere(avg < 0.0)[0]
                raise _NegativeAverage(stage, int(bad[0]), tuple(bad[1:]))
    return y, activations


def _advance(field: Field, t: float, tau: float, order: int, mesh, rule,
             model, flux, config: StepConfig) -> StepOutcome:
    base = field.values
    halvings = 0

    def rhs_fn(vals, tt):
        return _rhs(vals, tt, mesh, rule, model, flux)

    check_averages = flux.kind == "lax_friedrichs"
    while True:
        try:
            y, activations = _try_step_fn(
                base, t, tau, order, rhs_fn, rule, mesh.dim, config,
                check_averages=check_averages)
            return StepOutcome(
                accepted=True, halvings=halvings, dt=tau, field=Field(y),
                min_values=_node_min(y, mesh.dim).min(axis=tuple(range(1, mesh.dim + 1))),
                limiter_activations=activations,
            )
        except _NegativeAverage as exc:
            if flux.kind != "lax_friedrichs":
                raise SolverBreakdown(
                    f"negative cell average at t={t:.6g} (stage {exc.stage}, component "
                    f"{exc.component}, cell {exc.cell}); alternating fluxes carry no "
                    f"positivity guarantee, not retrying", last_good_t=t
                ) from None
            halvings += 1
            if halvings > config.max_halvings:
                raise SolverBreakdown(
                    f"time step halved {config.max_halvings} times at t={t:.6g} "
                    f"without recovery (component {exc.component}, cell {exc.cell})",
                    last_good_t=t
                ) from None
            tau *= 0.5


def euler_step(field: Field, t: float, tau: float, mesh, rule, model, flux,
               config: StepConfig) -> StepOutcome:
    """Single Euler forward step with per-step limiting and halving."""
    return _advance(field, t, tau, 1, mesh, rule, model, flux, config)


def ssp_rk_step(field: Field, t: float, tau: float, order: int, mesh, rule,
                model, flux, config: StepConfig) -> StepOutcome:
    """Single SSP-RK step (order 2 or 3), limiter after every stage."""
    if order not in (2, 3):
        raise ValueError(f"ssp_rk_step supports orders 2 and 3, got {order}")
    return _advance(field, t, tau, order, mesh, rule, model, flux, config)


def min_cell_size(mesh) -> float:
    if mesh.dim == 1:
        return float(mesh.h.min())
    return float(min(mesh.hx.min(), mesh.hy.min()))


def integrate(field0: Field, t_end: float, config: StepConfig, mesh,
              rule: QuadratureRule, model: Model, flux: FluxChoice,
              t0: float = 0.0):
    """March from t0 to t_end with tau = mu_diff * h^2.

    The final step is shortened to land exactly on t_end.  Entropy and mass
    are sampled every config.sample_dt time units (0 = every accepted step);
    halvings are recorded per event.  Non-finite states abort with the last
    good time in the diagnostic.
    """
    from .diagnostics import component_mass, discrete_entropy

    if t_end < t0:
        raise ValueError(f"t_end={t_end} precedes start time {t0}")
    order = auto_rk_order(rule.degree) if config.rk_order == "auto" else config.rk_order
    tau_nominal = config.mu_diff * min_cell_size(mesh) ** 2

    report = RunReport()
    state = field0
    t = t0

    def sample(now):
        report.times.append(now)
        report.entropy.append(discrete_entropy(state, now, mesh, rule, model))
        report.mass.append(component_mass(state, mesh, rule))

    sample(t)
    tiny = 1e-12 * max(tau_nominal, 1.0)
    while t < t_end - tiny:
        tau = min(tau_nominal, t_end - t)
        try:
            outcome = _advance(state, t, tau, order, mesh, rule, model, flux, config)
        except FloatingPointError as exc:
            raise SolverBreakdown(
                f"non-finite state while stepping from t={t:.8g} (last good time); {exc}",
                last_good_t=t
            ) from exc
        if outcome.halvings:
            report.halving_events.append((t, outcome.halvings))
            report.total_halvings += outcome.halvings
        state = outcome.field
        t += outcome.dt
        report.accepted_steps += 1
        report.limiter_activations += outcome.limiter_activations
        if config.sample_dt <= 0.0 or t - report.times[-1] >= config.sample_dt or t >= t_end - tiny:
            sample(t)
    return state, report
