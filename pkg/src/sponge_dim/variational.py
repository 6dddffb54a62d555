"""Exact pressure limits by convex duality.

Split the words by their ordering ``sigma``.  On words ordered by ``sigma`` the
weight of a word is a product of its per-axis scales raised to fixed
exponents ``theta_sigma``, and the ordering itself is the set of words whose
consecutive log-scale gaps (read in the order ``sigma``) are nonnegative.
Bounding the indicator of that set by ``exp(<lambda, gaps>)`` with
``lambda >= 0`` gives

    growth rate of sum over sigma-ordered words <= min over lambda >= 0 of R(theta_sigma + shift(lambda))

where ``R(theta)`` is the growth rate of the unconstrained sum of
``prod_u scale_u ** theta_u``.  The bound is sharp (a minimax argument over
empirical frequencies, whose entropy is concave), so the pressure is the
maximum of these minima over all orderings.

* For diagonal maps the words only matter through how often each map occurs,
  and ``R`` is a log-sum-exp over the maps.
* For generalised permutation maps the axis that source axis ``u`` is sent to
  evolves along the word, so ``R`` is the log spectral radius of a transfer
  matrix indexed by (accumulated permutation, graph node).

Multipliers whose per-step gaps are all nonnegative are fixed at 0 (the
objective increases in them).  One free multiplier is handled by a bounded
Brent search; two or more by L-BFGS-B with the analytic gradient.  The
coordinate-wise Brent search (:func:`nested_min`) is kept as an independent
route for cross-checks.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import logsumexp, softmax

NEG_INF = -math.inf
LAMBDA_XTOL = 1e-13
# route used by the pressure functions: "smooth" (Brent / L-BFGS-B) or "nested" (Brent per coordinate)
DEFAULT_ROUTE = "smooth"


def _cap(step_gaps: np.ndarray) -> float:
    """Search bound for one multiplier: 0 when no step can make the gap negative."""
    negative = step_gaps[step_gaps < 0]
    if negative.size == 0:
        return 0.0
    return min(1e12, 60.0 / float(np.abs(negative).min()))


def nested_min(objective: Callable[[np.ndarray], float], caps: Sequence[float], prefix: tuple = ()) -> float:
    """min over lambda in prod [0, caps[k]] of a convex objective, coordinate by coordinate."""
    k = len(prefix)
    if k == len(caps):
        return float(objective(np.array(prefix, dtype=np.float64)))

    def inner(lam: float) -> float:
        return nested_min(objective, caps, prefix + (lam,))

    at_zero = inner(0.0)
    if caps[k] == 0:
        return at_zero
    res = minimize_scalar(inner, bounds=(0.0, caps[k]), method="bounded", options={"xatol": LAMBDA_XTOL})
    return min(at_zero, float(res.fun), inner(caps[k]))


def smooth_min(objective: Callable[[np.ndarray], float], gradient: Callable[[np.ndarray], np.ndarray],
               caps: Sequence[float]) -> float:
    """min over lambda in prod [0, caps[k]] of a smooth convex objective."""
    free = [k for k, c in enumerate(caps) if c > 0]
    zero = np.zeros(len(caps))
    if not free:
        return float(objective(zero))
    if len(free) == 1:
        return nested_min(objective, caps)

    def embed(x):
        lam = zero.copy()
        lam[free] = x
        return lam

    res = minimize(
        lambda x: objective(embed(x)),
        np.zeros(len(free)),
        jac=lambda x: gradient(embed(x))[free],
        method="L-BFGS-B",
        bounds=[(0.0, caps[k]) for k in free],
        options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 1000},
    )
    return min(float(res.fun), float(objective(zero)))


def orthant_min(objective, gradient, caps, route: str | None = None) -> float:
    route = DEFAULT_ROUTE if route is None else route
    if route == "nested":
        return nested_min(objective, caps)
    if route == "smooth":
        return smooth_min(objective, gradient, caps)
    raise ValueError(f"unknown minimisation route {route!r}")


def _orthant_min(c_log: np.ndarray, gaps: np.ndarray, route: str | None = None) -> float:
    """min over lambda >= 0 of logsumexp(c_log + gaps @ lambda)."""
    caps = [_cap(gaps[:, k]) for k in range(gaps.shape[1])]
    return orthant_min(
        lambda lam: float(logsumexp(c_log + gaps @ lam)),
        lambda lam: gaps.T @ softmax(c_log + gaps @ lam),
        caps,
        route,
    )


def diagonal_log_pressure(
    log_scales: np.ndarray,
    weights: Sequence[float],
    exponents: Callable[[tuple[int, ...]], Sequence[float]],
    route: str | None = None,
) -> float:
    """Log of the limiting growth rate of a diagonal modified singular value sum.

    Parameters
    ----------
    log_scales:
        (m, d) natural logs of each map's diagonal scales.
    weights:
        multiplicity of each map.
    exponents:
        for an ordering ``sigma`` (axes by decreasing scale), the exponents
        ``(e_0, ..., e_{d-1})`` so that a word ordered by ``sigma`` has weight
        ``prod_k scale[sigma[k]] ** e_k``.
    """
    log_scales = np.asarray(log_scales, dtype=np.float64)
    log_w = np.log(np.asarray(weights, dtype=np.float64))
    m, d = log_scales.shape
    best = NEG_INF
    for sigma in itertools.permutations(range(d)):
        ordered = log_scales[:, list(sigma)]
        e = np.asarray(exponents(sigma), dtype=np.float64)
        c_log = log_w + ordered @ e
        gaps = ordered[:, :-1] - ordered[:, 1:]
        best = max(best, _orthant_min(c_log, gaps, route))
    return best


class TransferSystem:
    """Graph-directed family of generalised permutation maps, for transfer-matrix pressures.

    Words are read from the right.  A state is (pi, node): ``pi[u]`` is the
    axis that source axis ``u`` of the word has reached, ``node`` is where the
    next letter to the left must start.  Appending letter ``e`` (with
    ``source(e) == node``) multiplies the weight by ``prod_u scale_e(pi[u]) ** theta[u]``.
    """

    def __init__(self, perms, log_scales, weights, sources, targets):
        self.perms = [tuple(int(x) for x in p) for p in perms]
        self.log_scales = np.asarray(log_scales, dtype=np.float64)
        self.log_w = np.log(np.asarray(weights, dtype=np.float64))
        self.sources = [int(x) for x in sources]
        self.targets = [int(x) for x in targets]
        self._graphs: dict = {}

    def _graph(self, start_node: int):
        """Reachable states from (identity, start_node) and the per-edge data."""
        if start_node in self._graphs:
            return self._graphs[start_node]
        start = ((0, 1, 2), start_node)
        index = {start: 0}
        order = [start]
        rows, cols, logw, logfac = [], [], [], []
        pos = 0
        while pos < len(order):
            pi, node = order[pos]
            for e, p in enumerate(self.perms):
                if self.sources[e] != node:
                    continue
                new = (tuple(p[pi[u]] for u in range(3)), self.targets[e])
                if new not in index:
                    index[new] = len(order)
                    order.append(new)
                rows.append(index[new])
                cols.append(pos)
                logw.append(self.log_w[e])
                logfac.append([self.log_scales[e, pi[u]] for u in range(3)])
            pos += 1
        graph = (len(order), np.array(rows), np.array(cols), np.array(logw), np.array(logfac).reshape(-1, 3))
        self._graphs[start_node] = graph
        return graph

    def _matrix(self, theta: np.ndarray, start_node: int):
        n, rows, cols, logw, logfac = self._graph(start_node)
        entries = np.exp(logw + logfac @ theta)
        matrix = np.zeros((n, n))
        np.add.at(matrix, (rows, cols), entries)
        return matrix, entries

    def log_growth(self, theta: np.ndarray, start_node: int) -> float:
        """Log spectral radius of the transfer matrix with exponents theta (one per source axis)."""
        matrix, _ = self._matrix(theta, start_node)
        rho = float(np.max(np.abs(np.linalg.eigvals(matrix))))
        return math.log(rho) if rho > 0 else NEG_INF

    def log_growth_gradient(self, theta: np.ndarray, start_node: int) -> np.ndarray:
        """Gradient of :meth:`log_growth` in theta, from the Perron eigenvectors."""
        _, rows, cols, _, logfac = self._graph(start_node)
        matrix, entries = self._matrix(theta, start_node)
        vals, right = np.linalg.eig(matrix)
        vals_t, left = np.linalg.eig(matrix.T)
        i, j = int(np.argmax(vals.real)), int(np.argmax(vals_t.real))
        r, l = np.abs(right[:, i].real), np.abs(left[:, j].real)
        scale = float(vals[i].real) * float(l @ r)
        if scale <= 0:
            return np.zeros(3)
        return (l[rows] * r[cols] * entries) @ logfac / scale

    def step_gaps(self, a: int, b: int, start_node: int) -> np.ndarray:
        """Per-step changes of log scale(a) - log scale(b) over all reachable transitions."""
        _, _, _, _, logfac = self._graph(start_node)
        return logfac[:, a] - logfac[:, b]


def transfer_log_pressure(
    system: TransferSystem,
    axes_for_node: Callable[[int], Sequence[int]],
    start_nodes: Sequence[int],
    exponents: Callable[[int, tuple[int, ...]], Sequence[float]],
    route: str | None = None,
) -> float:
    """Log pressure of a (graph-directed) generalised permutation family.

    ``axes_for_node(v)`` lists the axes that count for words whose rightmost
    letter starts at ``v`` (all three for sponges, the two non-dropped axes for
    planar projections).  ``exponents(v, sigma)`` gives the exponent of each
    axis of ``sigma`` (in that order) for words ordered by ``sigma``.
    """
    best = NEG_INF
    for v in start_nodes:
        axes = list(axes_for_node(v))
        for sigma in itertools.permutations(axes):
            base = np.zeros(3)
            for ax, e in zip(sigma, exponents(v, sigma)):
                base[ax] = e
            shifts = []
            for k in range(len(sigma) - 1):
                d = np.zeros(3)
                d[sigma[k]], d[sigma[k + 1]] = 1.0, -1.0
                shifts.append(d)
            caps = [_cap(system.step_gaps(sigma[k], sigma[k + 1], v)) for k in range(len(sigma) - 1)]

            shift_matrix = np.array(shifts).reshape(-1, 3)

            def objective(lam, base=base, shift_matrix=shift_matrix, v=v):
                return system.log_growth(base + lam @ shift_matrix, v)

            def gradient(lam, base=base, shift_matrix=shift_matrix, v=v):
                return shift_matrix @ system.log_growth_gradient(base + lam @ shift_matrix, v)

            best = max(best, orthant_min(objective, gradient, caps, route))
    return best
