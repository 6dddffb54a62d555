"""Merged enumeration of products of generalised permutation matrices.

Sums such as ``sum over |i| = k of f(A_i)`` only depend on the linear part
``A_i`` of each word.  Words whose products coincide are therefore merged into
one *state* that carries their multiplicity, which keeps families with many
maps sharing a linear part (for instance N translated copies of one matrix)
as cheap as families with a single map.

Scales are stored exactly as integer exponent vectors over the primes that
occur in the maps' scales.  Equal products have identical exponent vectors,
so merging is exact and ties between axes are detected exactly: two scales
get bit-identical logarithms precisely when they are equal.

Families may be graph directed: each linear part carries a source node and a
target node, and ``A_i @ A_j`` is formed only when ``target(j) == source(i)``.
Plain IFSs use the single node 0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from sympy import factorint

from .errors import BudgetExceeded
from .gpm_core import ScaledPermutation

DEFAULT_STATE_BUDGET = 20_000_000

PERMS3: tuple[tuple[int, ...], ...] = tuple(itertools.permutations(range(3)))
PERM_INDEX = {p: i for i, p in enumerate(PERMS3)}
# COMPOSE[i, j] is the index of perm_i o perm_j (perm_i applied after perm_j)
COMPOSE = np.array(
    [[PERM_INDEX[tuple(p[q[u]] for u in range(3))] for q in PERMS3] for p in PERMS3],
    dtype=np.int64,
)
PERM_ARRAY = np.array(PERMS3, dtype=np.int64)


def _prime_exponents(x: Fraction) -> dict[int, int]:
    out: dict[int, int] = {}
    for p, e in factorint(x.numerator).items():
        out[p] = out.get(p, 0) + e
    for p, e in factorint(x.denominator).items():
        out[p] = out.get(p, 0) - e
    return out


@dataclass
class States:
    """A merged collection of products.

    ``expo[n, u, a]`` is the exponent of prime ``a`` in the scale of source
    axis ``u``; ``node`` is the source node of the rightmost factor.
    """

    perm_idx: np.ndarray
    expo: np.ndarray
    weight: np.ndarray
    node: np.ndarray

    def __len__(self) -> int:
        return int(self.perm_idx.shape[0])

    def take(self, mask: np.ndarray) -> "States":
        return States(self.perm_idx[mask], self.expo[mask], self.weight[mask], self.node[mask])

    @staticmethod
    def concat(parts: Sequence["States"]) -> "States":
        return States(
            np.concatenate([p.perm_idx for p in parts]),
            np.concatenate([p.expo for p in parts]),
            np.concatenate([p.weight for p in parts]),
            np.concatenate([p.node for p in parts]),
        )


def _pack_keys(columns: np.ndarray) -> np.ndarray | None:
    """Mixed-radix pack of integer rows into one int64 per row, if it fits."""
    lo = columns.min(axis=0)
    span = columns.max(axis=0) - lo + 1
    if math.prod(int(s) for s in span) >= 2**62:
        return None
    key = np.zeros(columns.shape[0], dtype=np.int64)
    for c in range(columns.shape[1]):
        key = key * int(span[c]) + (columns[:, c] - lo[c])
    return key


def merge_states(states: States) -> States:
    """Merge rows with identical (node, permutation, exponents); sum weights.

    Output rows are in sorted key order, independent of input order.
    """
    n = len(states)
    if n == 0:
        return states
    columns = np.concatenate(
        [states.node[:, None], states.perm_idx[:, None], states.expo.reshape(n, -1)], axis=1
    ).astype(np.int64)
    key = _pack_keys(columns)
    if key is not None:
        _, first, inverse = np.unique(key, return_index=True, return_inverse=True)
    else:
        _, first, inverse = np.unique(columns, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    weight = np.bincount(inverse, weights=states.weight, minlength=first.shape[0])
    return States(states.perm_idx[first], states.expo[first], weight, states.node[first])


class LinearFamily:
    """Distinct linear parts with multiplicities, in prime-exponent form.

    Parameters
    ----------
    linears:
        3x3 scaled permutations.  Planar families embed their 2x2 parts in 3x3
        matrices with scale 1 on the dropped axis.
    weights:
        Multiplicity of each linear part (default 1).  Equal entries are merged.
    sources, targets:
        Graph nodes for graph-directed families (default all 0).
    """

    def __init__(
        self,
        linears: Sequence[ScaledPermutation],
        weights: Sequence[float] | None = None,
        sources: Sequence[int] | None = None,
        targets: Sequence[int] | None = None,
    ):
        n = len(linears)
        weights = [1.0] * n if weights is None else [float(w) for w in weights]
        sources = [0] * n if sources is None else list(sources)
        targets = [0] * n if targets is None else list(targets)
        merged: dict[tuple, float] = {}
        for lin, w, s, t in zip(linears, weights, sources, targets):
            if lin.dim != 3:
                raise ValueError("LinearFamily works with 3x3 parts")
            key = (lin.perm, lin.scales, s, t)
            merged[key] = merged.get(key, 0.0) + w
        keys = sorted(merged, key=lambda k: (k[2], k[3], k[0], k[1]))
        factored = {x: _prime_exponents(x) for k in keys for x in k[1]}
        self.primes = tuple(sorted({p for f in factored.values() for p in f}))
        self.log_primes = np.array([math.log(p) for p in self.primes], dtype=np.float64)
        prime_pos = {p: a for a, p in enumerate(self.primes)}
        m, width = len(keys), len(self.primes)
        self.expo = np.zeros((m, 3, width), dtype=np.int64)
        for c, key in enumerate(keys):
            for u, x in enumerate(key[1]):
                for p, e in factored[x].items():
                    self.expo[c, u, prime_pos[p]] = e
        self.perm_idx = np.array([PERM_INDEX[k[0]] for k in keys], dtype=np.int64)
        self.perms = PERM_ARRAY[self.perm_idx] if m else np.zeros((0, 3), dtype=np.int64)
        self.weights = np.array([merged[k] for k in keys], dtype=np.float64)
        self.sources = np.array([k[2] for k in keys], dtype=np.int64)
        self.targets = np.array([k[3] for k in keys], dtype=np.int64)
        self.scales = tuple(k[1] for k in keys)

    def __len__(self) -> int:
        return int(self.perm_idx.shape[0])

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def initial_states(self) -> States:
        return merge_states(
            States(self.perm_idx.copy(), self.expo.copy(), self.weights.copy(), self.sources.copy())
        )

    def log_scales(self, states: States) -> np.ndarray:
        """Natural logs of the per-axis scales, shape (n, 3).

        Computed elementwise (no BLAS) so equal exponent rows give
        bit-identical results.
        """
        out = np.zeros(states.expo.shape[:2], dtype=np.float64)
        for a in range(len(self.primes)):
            out += states.expo[:, :, a] * self.log_primes[a]
        return out

    def exact_scales(self, states: States, row: int) -> tuple[Fraction, ...]:
        out = []
        for u in range(3):
            value = Fraction(1)
            for a, p in enumerate(self.primes):
                e = int(states.expo[row, u, a])
                value *= Fraction(p) ** e
            out.append(value)
        return tuple(out)

    def extend(self, states: States, budget: int = DEFAULT_STATE_BUDGET) -> States:
        """All products ``A_state @ A_c``, merged."""
        parts = []
        rows = 0
        for c in range(len(self)):
            mask = states.node == self.targets[c]
            if not mask.any():
                continue
            sub = states.take(mask) if not mask.all() else states
            rows += len(sub)
            if rows > budget:
                raise BudgetExceeded(f"enumeration needs more than {budget} states")
            perm = COMPOSE[sub.perm_idx, self.perm_idx[c]]
            expo = sub.expo[:, self.perms[c], :] + self.expo[c][None, :, :]
            parts.append(
                States(perm, expo, sub.weight * self.weights[c], np.full(len(sub), self.sources[c]))
            )
        if not parts:
            return States(
                np.zeros(0, np.int64), np.zeros((0, 3, len(self.primes)), np.int64),
                np.zeros(0), np.zeros(0, np.int64),
            )
        return merge_states(States.concat(parts))


class LevelCache:
    """Lazily built merged states for word lengths 1, 2, ..."""

    def __init__(self, family: LinearFamily, budget: int = DEFAULT_STATE_BUDGET):
        self.family = family
        self.budget = budget
        self._levels: list[States] = []

    def level(self, k: int) -> States:
        if k < 1:
            raise ValueError("word length must be at least 1")
        if not self._levels:
            self._levels.append(self.family.initial_states())
        while len(self._levels) < k:
            self._levels.append(self.family.extend(self._levels[-1], self.budget))
        return self._levels[k - 1]

    def max_level_within(self, k_max: int) -> int:
        """Largest k <= k_max whose states fit in the budget (at least 1)."""
        k = 0
        try:
            while k < k_max:
                self.level(k + 1)
                k += 1
        except BudgetExceeded:
            if k == 0:
                raise
        return k


def _exact_alpha3_leq(family: LinearFamily, states: States, rows: np.ndarray, delta: Fraction) -> np.ndarray:
    out = np.zeros(rows.shape[0], dtype=bool)
    for n, r in enumerate(rows):
        out[n] = min(family.exact_scales(states, int(r))) <= delta
    return out


def cut_set_states(
    family: LinearFamily, delta: Fraction, budget: int = DEFAULT_STATE_BUDGET, max_depth: int = 10_000
) -> States:
    """Merged linear parts of the cut set: words where the smallest scale first drops to delta or below.

    Comparisons against ``delta`` are exact (floats decide clear cases, exact
    rationals decide near ties).
    """
    log_delta = math.log(delta)
    active = family.initial_states()
    done: list[States] = []
    total = 0
    for _ in range(max_depth):
        if len(active) == 0:
            break
        log_a3 = family.log_scales(active).min(axis=1)
        stop = log_a3 <= log_delta
        near = np.nonzero(np.abs(log_a3 - log_delta) <= 1e-9)[0]
        if near.size:
            stop[near] = _exact_alpha3_leq(family, active, near, delta)
        if stop.any():
            done.append(active.take(stop))
            total += int(stop.sum())
            if total > budget:
                raise BudgetExceeded(f"cut set exceeds {budget} states")
        active = active.take(~stop)
        if len(active):
            active = family.extend(active, budget)
    else:
        raise BudgetExceeded("cut set depth limit reached")
    if not done:
        return States(np.zeros(0, np.int64), np.zeros((0, 3, len(family.primes)), np.int64),
                      np.zeros(0), np.zeros(0, np.int64))
    return merge_states(States.concat(done))
