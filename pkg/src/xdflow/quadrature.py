"""Gauss-Lobatto quadrature rules and nodal (Lagrange) differentiation.

The collocation scheme stores every piecewise polynomial by its values at
the k+1 Gauss-Lobatto nodes of each cell.  With that representation the
quadrature mass matrix is diagonal, the endpoint nodes coincide with the
cell interfaces, and the rule is exact for polynomials of degree 2k-1,
which is exactly the exactness the discrete entropy identity relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_DEGREE = 8


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Lobatto rule of degree ``k`` on the reference interval [-1, 1].

    Attributes
    ----------
    degree : polynomial degree k (k+1 nodes).
    nodes : reference coordinates, ascending, nodes[0] = -1, nodes[-1] = +1.
    weights : positive weights summing to 2.
    diff_matrix : entry (q, r) is the derivative of the r-th Lagrange basis
        polynomial at node q, so ``diff_matrix @ p_nodal`` returns exact
        nodal derivatives for any polynomial p of degree <= k.
    """

    degree: int
    nodes: np.ndarray
    weights: np.ndarray
    diff_matrix: np.ndarray
    # weights[:, None] * diff_matrix, the combination every DG sweep uses
    weighted_diff: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.weighted_diff is None:
            object.__setattr__(
                self, "weighted_diff", self.weights[:, None] * self.diff_matrix
            )

    @property
    def n_nodes(self) -> int:
        return self.degree + 1


def _legendre_and_derivative(k: int, x: np.ndarray):
    """P_k(x) and P'_k(x) by the three-term recurrence."""
    p_prev = np.ones_like(x)
    if k == 0:
        return p_prev, np.zeros_like(x)
    p = np.asarray(x, dtype=float).copy()
    dp_prev = np.zeros_like(x)
    dp = np.ones_like(x)
    for n in range(2, k + 1):
        p_next = ((2 * n - 1) * x * p - (n - 1) * p_prev) / n
        dp_next = ((2 * n - 1) * (p + x * dp) - (n - 1) * dp_prev) / n
        p_prev, p = p, p_next
        dp_prev, dp = dp, dp_next
    return p, dp


def gauss_lobatto_rule(k: int) -> QuadratureRule:
    """Build the (k+1)-point Gauss-Lobatto rule, 1 <= k <= 8.

    Nodes are the roots of (1-x^2) P'_k(x), found by Newton iteration from
    Chebyshev-Lobatto initial guesses; weights use the closed form
    2 / (k (k+1) P_k(x_r)^2).
    """
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
        raise TypeError(f"polynomial degree must be an integer, got {k!r}")
    if k < 1 or k > MAX_DEGREE:
        raise ValueError(f"degree k={k} outside supported range 1..{MAX_DEGREE}")

    nodes = -np.cos(np.pi * np.arange(k + 1) / k)
    # Newton on f = (1-x^2) P'_k; the Legendre ODE gives f' = -k(k+1) P_k.
    for r in range(1, k):
        x = nodes[r]
        for _ in range(100):
            p, dp = _legendre_and_derivative(k, np.asarray(x))
            dx = (1.0 - x * x) * dp / (k * (k + 1) * p)
            x = x + dx
            if abs(dx) < 1e-15:
                break
        nodes[r] = x
    nodes[0], nodes[k] = -1.0, 1.0
    # enforce exact pairwise symmetry about 0
    nodes = 0.5 * (nodes - nodes[::-1])

    p_at_nodes, _ = _legendre_and_derivative(k, nodes)
    weights = 2.0 / (k * (k + 1) * p_at_nodes**2)
    weights = 0.5 * (weights + weights[::-1])

    diff = _nodal_diff_matrix(nodes)
    return QuadratureRule(degree=k, nodes=nodes, weights=weights, diff_matrix=diff)


def _barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    diffs = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diffs, 1.0)
    return 1.0 / np.prod(diffs, axis=1)


def _nodal_diff_matrix(nodes: np.ndarray) -> np.ndarray:
    b = _barycentric_weights(nodes)
    n = nodes.size
    d = np.zeros((n, n))
    for q in range(n):
        for r in range(n):
            if q != r:
                d[q, r] = (b[r] / b[q]) / (nodes[q] - nodes[r])
        d[q, q] = -np.sum(d[q])  # rows sum to zero: derivative of constants
    return d


def differentiation_matrix(rule: QuadratureRule) -> np.ndarray:
    """Reference differentiation matrix recomputed from the rule's nodes."""
    return _nodal_diff_matrix(rule.nodes)


def quad_integrate(rule: QuadratureRule, nodal_values, cell_length: float) -> float:
    """Quadrature of nodal values over one cell: (L/2) sum_r w_r v_r."""
    if cell_length <= 0:
        raise ValueError(f"cell_length must be positive, got {cell_length}")
    return 0.5 * cell_length * float(np.dot(rule.weights, np.asarray(nodal_values)))


def lagrange_basis_matrix(rule: QuadratureRule, points) -> np.ndarray:
    """Values of the nodal Lagrange basis at arbitrary reference points.

    Returns a matrix B with B[q, r] = l_r(points[q]); ``values @ B.T``
    evaluates a nodal polynomial at the points.  Uses the second
    barycentric form, with exact hits on nodes handled separately.
    """
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    b = _barycentric_weights(rule.nodes)
    out = np.zeros((pts.size, rule.n_nodes))
    diff = pts[:, None] - rule.nodes[None, :]
    exact = diff == 0.0
    on_node = exact.any(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = b[None, :] / diff
        out[~on_node] = terms[~on_node] / terms[~on_node].sum(axis=1, keepdims=True)
    out[on_node] = exact[on_node].astype(float)
    return out
