"""Gradient-flow system descriptors: entropy density, entropy variables,
and the scaled mobility G with F = diag(rho) * G.

Exposing G instead of the raw mobility F removes the 0/0 in the velocity
v = diag(rho)^-1 F u analytically; every built-in system admits the
factorization.  All evaluation callables are pure, vectorized over stacked
arrays (component axis first), and reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

# floor inside logarithms only; the scaling limiter keeps converged values
# above ~1e-13, so the guard suppresses -inf transients without altering them
LOG_FLOOR = 1e-14
# a density this far below zero is not limiter round-off but a genuine loss
# of positivity; its logarithm is surfaced as NaN so runs abort rather than
# silently flooring a blow-up
NEG_TOLERANCE = -1e-10


def _safe_log(x):
    out = np.log(np.maximum(x, LOG_FLOOR))
    neg = np.asarray(x) < NEG_TOLERANCE
    if neg.any():
        out = np.where(neg, np.nan, out)
    return out


def _floor_log(x):
    """Plain floored log for derived quantities (no negativity trap)."""
    return np.log(np.maximum(x, LOG_FLOOR))

def _vec2(a, b):
    out = np.empty((2,) + np.shape(a))
    out[0] = a
    out[1] = b
    return out


def _mat2(m00, m01, m10, m11):
    out = np.empty((2, 2) + np.shape(m00))
    out[0, 0] = m00
    out[0, 1] = m01
    out[1, 0] = m10
    out[1, 1] = m11
    return out



def _xlogx_minus_x(x):
    """x (log x - 1), continuous at 0."""
    return x * (_safe_log(x) - 1.0)


@dataclass(frozen=True)
class Model:
    """An m-component cross-diffusion system with gradient-flow structure.

    e(rho, pos) is the convex entropy density, xi = de/drho the entropy
    variables, and G the scaled mobility (F = diag(rho) G positive
    semidefinite on the admissible set).  ``pos`` is a tuple of coordinate
    arrays; only position-dependent entropies (seawater bedrock) use it.
    """

    name: str
    m: int
    e: Callable
    xi: Callable
    G: Optional[Callable]          # None means G = identity
    has_bounded_G: bool = True
    source: Optional[Callable] = None       # source(pos, t) -> (m, ...)
    exact: Optional[Callable] = None        # exact(pos, t) -> (m, ...)
    exact_dim: Optional[int] = None
    initial: dict = field(default_factory=dict)   # dim -> callable(x[, y])
    params: dict = field(default_factory=dict)
    entropy_structure_ok: bool = True
    snapshot_extra: Optional[Callable] = None     # (rho, pos) -> (names, columns)

    @property
    def G_is_identity(self) -> bool:
        return self.G is None


def apply_G(model: Model, rho, u, g=None):
    """G(rho) applied to a stacked vector field u, shape (m, ...)."""
    if model.G is None:
        return u
    if g is None:
        g = model.G(rho)
    if model.m == 2:
        return _vec2(g[0, 0] * u[0] + g[0, 1] * u[1],
                     g[1, 0] * u[0] + g[1, 1] * u[1])
    return np.einsum("lk...,k...->l...", g, u)


def mobility_velocity(model: Model, rho, u):
    """v = diag(rho)^-1 F(rho) u, realized singularity-free as G(rho) u."""
    if model.G is None:
        return np.array(u, copy=True)
    return apply_G(model, rho, u)


# ---------------------------------------------------------------------------
# built-in systems
# ---------------------------------------------------------------------------

def model_heat() -> Model:
    """Two decoupled heat equations: e = sum rho_l (log rho_l - 1), G = I."""

    def e(rho, pos=None):
        return _xlogx_minus_x(rho[0]) + _xlogx_minus_x(rho[1])

    def xi(rho, pos=None):
        return _safe_log(rho)

    def exact(pos, t):
        (x,) = pos
        decay = np.exp(-np.pi**2 * t)
        return np.stack([decay * np.sin(np.pi * x) + 2.0,
                         decay * np.cos(np.pi * x) + 2.0])

    def initial_1d(x):
        return exact((x,), 0.0)

    return Model(name="heat", m=2, e=e, xi=xi, G=None,
                 exact=exact, exact_dim=1, initial={1: initial_1d})


def _skt_G(rho):
    r1, r2 = rho[0], rho[1]
    return _mat2(2.0 * r1 + r2, r2, r1, 2.0 * r2 + r1)


def _skt_e(rho, pos=None):
    return _xlogx_minus_x(rho[0]) + _xlogx_minus_x(rho[1])


def _skt_xi(rho, pos=None):
    return _safe_log(rho)


def model_skt() -> Model:
    """Shigesada-Kawashima-Teramoto population model, unit coefficients."""

    def initial_1d(x):
        return np.stack([np.exp(0.5 * np.sin(x)), np.exp(0.5 * np.cos(2.0 * x))])

    return Model(name="skt", m=2, e=_skt_e, xi=_skt_xi, G=_skt_G,
                 initial={1: initial_1d})


def model_tumor(beta: float = 0.0075, gamma: float = 10.0) -> Model:
    """Tumor encapsulation model with volume-filling entropy.

    G comes from G = diag(rho)^-1 A (Dxi)^-1 with A the divergence-form
    coefficients and (Dxi)^-1 = [[r1(1-r1), -r1 r2], [-r1 r2, r2(1-r2)]].
    For gamma >= 4/sqrt(beta) the entropy structure is lost; the model is
    still usable and only flagged.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")

    def e(rho, pos=None):
        sigma = 1.0 - rho[0] - rho[1]
        return (_xlogx_minus_x(rho[0]) + _xlogx_minus_x(rho[1])
                + sigma * (_floor_log(sigma) - 1.0))

    def xi(rho, pos=None):
        # sigma is derived, not positivity-guarded; only a plain floor here
        sigma = 1.0 - rho[0] - rho[1]
        log_sigma = _floor_log(sigma)
        return _vec2(_safe_log(rho[0]) - log_sigma,
                     _safe_log(rho[1]) - log_sigma)

    def G(rho):
        r1, r2 = rho[0], rho[1]
        # B = diag(rho)^-1 A, divided analytically
        b00 = 2.0 * (1.0 - r1) - beta * gamma * r2**2
        b01 = -2.0 * beta * r2 * (1.0 + gamma * r1)
        b10 = -2.0 * r1 + beta * gamma * r2 * (1.0 - r2)
        b11 = 2.0 * beta * (1.0 - r2) * (1.0 + gamma * r1)
        i00 = r1 * (1.0 - r1)
        i01 = -r1 * r2
        i11 = r2 * (1.0 - r2)
        return _mat2(b00 * i00 + b01 * i01, b00 * i01 + b01 * i11,
                     b10 * i00 + b11 * i01, b10 * i01 + b11 * i11)

    def initial_1d(x):
        step = np.tanh((0.1 - x) / 0.05)
        return np.stack([0.125 * (1.0 + step), 0.125 * (1.0 - step)])

    return Model(name="tumor", m=2, e=e, xi=xi, G=G,
                 initial={1: initial_1d},
                 params={"beta": beta, "gamma": gamma},
                 entropy_structure_ok=bool(gamma < 4.0 / np.sqrt(beta)))


def model_surfactant(g: float = 0.02) -> Model:
    """Surfactant spreading on a thin film; rho1 film height, rho2 surfactant."""
    if g < 0:
        raise ValueError(f"gravitational coefficient g must be >= 0, got {g}")

    def e(rho, pos=None):
        return 0.5 * g * rho[0] ** 2 + _xlogx_minus_x(rho[1])

    def xi(rho, pos=None):
        return _vec2(g * rho[0], _safe_log(rho[1]))

    def G(rho):
        r1, r2 = rho[0], rho[1]
        return _mat2(r1**2 / 3.0, 0.5 * r1 * r2, 0.5 * r1**2, r1 * r2)

    def initial_1d(x):
        return np.stack([np.full_like(x, 0.5),
                         0.5 * (1.0 - np.tanh((x - 0.5) / 0.1))])

    def initial_2d(x, y):
        r = np.hypot(x - 1.0, y - 1.0)
        return np.stack([np.full_like(x, 0.5),
                         0.5 * (1.0 - np.tanh((r - 0.5) / 0.1))])

    return Model(name="surfactant", m=2, e=e, xi=xi, G=G,
                 initial={1: initial_1d, 2: initial_2d}, params={"g": g})


def default_bedrock(x, y):
    """Seabed profile of the seawater intrusion test."""
    return np.maximum(0.0, 0.5 * (1.0 - 16.0 * (x - 0.5) ** 2) * (np.cos(np.pi * y) + 2.0))


def model_seawater(mu_ratio: float = 0.9, bedrock=default_bedrock) -> Model:
    """Seawater intrusion in an unconfined aquifer (quadratic entropy, G = I)."""
    if not 0.0 < mu_ratio < 1.0:
        raise ValueError(f"density ratio must lie in (0, 1), got {mu_ratio}")
    mu = mu_ratio

    def _b(pos):
        x, y = pos
        return bedrock(x, y)

    def e(rho, pos):
        b = _b(pos)
        return 0.5 * mu * (rho[0] + rho[1] + b) ** 2 + 0.5 * (1.0 - mu) * (rho[1] + b) ** 2

    def xi(rho, pos):
        b = _b(pos)
        return _vec2(mu * (rho[0] + rho[1] + b),
                     mu * rho[0] + rho[1] + b)

    def initial_2d(x, y):
        b = bedrock(x, y)
        r1 = np.where(x <= 0.25, 0.5, 0.0)
        r2 = np.where(x <= 0.5, bedrock(0.5, 0.0) - b - (x - 0.5), 0.0)
        return np.stack([r1, np.maximum(r2, 0.0)])

    def snapshot_extra(rho, pos):
        b = _b(pos)
        return (["b", "b_plus_rho2", "b_plus_rho12"],
                [b, b + rho[1], b + rho[0] + rho[1]])

    return Model(name="seawater", m=2, e=e, xi=xi, G=None,
                 initial={2: initial_2d}, params={"mu_ratio": mu_ratio},
                 snapshot_extra=snapshot_extra)


def model_skt_2d_manufactured() -> Model:
    """SKT system with a source manufactured from a smooth traveling solution."""

    def exact(pos, t):
        x, y = pos
        return np.stack([
            0.5 * np.sin(np.pi * (x + y + t)) + 1.0,
            0.5 * np.cos(np.pi * (x - y - 0.5 * t)) + 1.0,
        ])

    # The source is sampled at fixed mesh nodes every stage, so the spatial
    # trig is cached per position array; time enters through scalar angle
    # addition.  The cache holds a reference to the keyed array, which keeps
    # id() stable for its lifetime.
    trig_cache = {}

    def _phases(x, y):
        key = id(x)
        hit = trig_cache.get(key)
        if hit is not None and hit[0] is x:
            return hit[1]
        a = np.pi * (x + y)
        b = np.pi * (x - y)
        val = (np.sin(a), np.cos(a), np.sin(b), np.cos(b))
        trig_cache[key] = (x, val)
        return val

    def source(pos, t):
        x, y = pos
        pi = np.pi
        sin_a, cos_a, sin_b, cos_b = _phases(x, y)
        st, ct = np.sin(pi * t), np.cos(pi * t)
        sh, ch = np.sin(0.5 * pi * t), np.cos(0.5 * pi * t)
        s1 = sin_a * ct + cos_a * st          # sin(pi (x + y + t))
        c1 = cos_a * ct - sin_a * st
        s2 = sin_b * ch - cos_b * sh          # sin(pi (x - y - t/2))
        c2 = cos_b * ch + sin_b * sh

        r1 = 1.0 + 0.5 * s1
        r2 = 1.0 + 0.5 * c2
        r1t = 0.5 * pi * c1
        r1x = r1y = 0.5 * pi * c1
        r1xx = r1yy = -0.5 * pi**2 * s1
        r2t = 0.25 * pi * s2
        r2x = -0.5 * pi * s2
        r2y = 0.5 * pi * s2
        r2xx = r2yy = -0.5 * pi**2 * c2

        # div(A grad rho) by the product rule; A = [[2r1+r2, r1], [r2, r1+2r2]]
        a11, a12, a21, a22 = 2.0 * r1 + r2, r1, r2, r1 + 2.0 * r2
        div1 = ((2.0 * r1x + r2x) * r1x + a11 * r1xx + r1x * r2x + a12 * r2xx
                + (2.0 * r1y + r2y) * r1y + a11 * r1yy + r1y * r2y + a12 * r2yy)
        div2 = (r2x * r1x + a21 * r1xx + (r1x + 2.0 * r2x) * r2x + a22 * r2xx
                + r2y * r1y + a21 * r1yy + (r1y + 2.0 * r2y) * r2y + a22 * r2yy)
        return _vec2(r1t - div1, r2t - div2)

    def initial_2d(x, y):
        return exact((x, y), 0.0)

    return Model(name="skt2d_manufactured", m=2, e=_skt_e, xi=_skt_xi, G=_skt_G,
                 source=source, exact=exact, exact_dim=2, initial={2: initial_2d})


MODEL_FACTORIES = {
    "heat": model_heat,
    "skt": model_skt,
    "tumor": model_tumor,
    "surfactant": model_surfactant,
    "seawater": model_seawater,
    "skt2d_manufactured": model_skt_2d_manufactured,
}


def get_model(name: str, **params) -> Model:
    """Instantiate a built-in model by name with optional parameter overrides."""
    try:
        factory = MODEL_FACTORIES[name]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; available: {', '.join(sorted(MODEL_FACTORIES))}"
        ) from None
    return factory(**params)


def list_models():
    return sorted(MODEL_FACTORIES)
