"""Modified singular value functions, their pressures and the roots s0.

For a word ``i`` with singular values ``a1 >= a2 >= a3`` the modified singular
value function is

    psi^s(i) = a1**p1 * a2**(p2 - p1) * a3**(s - p2)

where ``p1`` is the dimension of the projection onto the axis carrying ``a1``
and ``p2`` that of the plane spanned by the axes carrying ``a1`` and ``a2``.
The axis is read from the word's canonical ordering (lexicographically
smallest, see :func:`sponge_dim.gpm_core.canonical_ordering`), by source axis.
Because the projection dimensions are constant on orbits of the permutation
group, reading them by target axis would give the same numbers; when scales
tie the choice cancels out of ``psi`` altogether.

Pressures are estimated from merged word sums (see :mod:`sponge_dim.enumeration`)
and certified from below by a multiplicative subsystem of diagonal words with
a common ordering.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import bisect, brentq
from scipy.special import logsumexp

from .enumeration import (
    COMPOSE,
    DEFAULT_STATE_BUDGET,
    PERM_INDEX,
    PERMS3,
    LevelCache,
    LinearFamily,
    States,
    _prime_exponents,
    cut_set_states,
    merge_states,
)
from .errors import SearchFailed, ValidationError
from .gpm_core import (
    ScaledPermutation,
    SpongeClass,
    SpongeSystem,
    as_fraction,
    canonical_ordering,
    check_cosc,
    compose,
    orderings,
    word_linear,
)
from .projections import ProjectionDims, projection_dims
from .variational import TransferSystem, diagonal_log_pressure, transfer_log_pressure

DEFAULT_K_MAX = 12
CAUCHY_TOL = 1e-4
ROOT_TOL = 1e-10
MAX_SUFFIX = 6
VARIANTS = ("upper", "lower")


def _check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise ValidationError(f"variant must be 'upper' or 'lower', got {variant!r}")
    return variant


# -- exact form of psi ----------------------------------------------------------


@dataclass(frozen=True)
class PsiMonomial:
    """``psi^s`` of one linear part as a product of primes raised to linear forms.

    ``terms`` maps ``(symbol, prime)`` to an integer coefficient, where a symbol
    is ``"s"`` or a projection-dimension value.  The value is
    ``prod prime ** sum(coefficient * symbol)``.  Two monomials are equal
    exactly when they describe the same function of ``s``.
    """

    terms: tuple[tuple[tuple[object, int], int], ...]

    @classmethod
    def from_counter(cls, counter: Counter) -> "PsiMonomial":
        items = [(k, v) for k, v in counter.items() if v != 0]
        return cls(tuple(sorted(items, key=lambda kv: (str(kv[0][0]), kv[0][1]))))

    def __mul__(self, other: "PsiMonomial") -> "PsiMonomial":
        total = Counter(dict(self.terms))
        total.update(dict(other.terms))
        return PsiMonomial.from_counter(total)

    def log_value(self, s: float) -> float:
        return sum(c * (s if sym == "s" else float(sym)) * math.log(p) for (sym, p), c in self.terms)

    def value(self, s: float) -> float:
        return math.exp(self.log_value(s))


# -- context --------------------------------------------------------------------


class ModSvfContext:
    """Everything needed to evaluate ``psi^s``: the linear parts, the projection
    dimensions and the variant (upper or lower)."""

    def __init__(self, family: LinearFamily, dims: ProjectionDims, variant: str = "upper",
                 system: SpongeSystem | None = None, budget: int = DEFAULT_STATE_BUDGET):
        self.family = family
        self.dims = dims
        self.variant = _check_variant(variant)
        self.system = system
        self.budget = budget
        self.p1 = np.array(dims.p1(variant), dtype=np.float64)
        self.p2 = np.array(dims.p2(variant), dtype=np.float64)
        self.cache = LevelCache(family, budget)

    @classmethod
    def from_system(cls, sys: SpongeSystem, dims: ProjectionDims | None = None, variant: str = "upper",
                    overrides=None, budget: int = DEFAULT_STATE_BUDGET) -> "ModSvfContext":
        if dims is None:
            dims = projection_dims(sys, overrides)
        return cls(LinearFamily(sys.linear_parts), dims, variant, sys, budget)

    @classmethod
    def from_classes(cls, linears: Sequence[ScaledPermutation], weights: Sequence[float],
                     dims: ProjectionDims, variant: str = "upper",
                     budget: int = DEFAULT_STATE_BUDGET) -> "ModSvfContext":
        """Context for a family given as distinct linear parts with multiplicities."""
        return cls(LinearFamily(linears, weights), dims, variant, None, budget)

    def with_variant(self, variant: str) -> "ModSvfContext":
        return ModSvfContext(self.family, self.dims, variant, self.system, self.budget)

    # per-state evaluation

    def ordered_logs(self, states: States):
        """Sorted log singular values and the p-values chosen by each state's ordering."""
        logs = self.family.log_scales(states)
        # stable sort on decreasing scale: ties go to the smaller axis (canonical ordering)
        order = np.argsort(-logs, axis=1, kind="stable")
        ordered = np.take_along_axis(logs, order, axis=1)
        return ordered[:, 0], ordered[:, 1], ordered[:, 2], self.p1[order[:, 0]], self.p2[order[:, 2]]

    def log_psi(self, states: States, s: float) -> np.ndarray:
        l1, l2, l3, p1, p2 = self.ordered_logs(states)
        return p1 * l1 + (p2 - p1) * l2 + (s - p2) * l3

    def log_sum(self, states: States, s: float) -> float:
        if len(states) == 0:
            return -math.inf
        return float(logsumexp(self.log_psi(states, s), b=states.weight))

    # per-linear-part evaluation

    def lookup(self, m: ScaledPermutation) -> tuple[float, float]:
        sigma = canonical_ordering(m)
        return float(self.p1[sigma[0]]), float(self.p2[sigma[2]])

    def monomial(self, m: ScaledPermutation) -> PsiMonomial:
        sigma = canonical_ordering(m)
        p1, p2 = float(self.p1[sigma[0]]), float(self.p2[sigma[2]])
        e1, e2, e3 = (_prime_exponents(m.scales[a]) for a in sigma)
        counter: Counter = Counter()
        # psi = a1**p1 * a2**(p2 - p1) * a3**(s - p2) = (a1/a2)**p1 * (a2/a3)**p2 * a3**s
        for expo, sym, sign in ((e1, p1, 1), (e2, p1, -1), (e2, p2, 1), (e3, p2, -1), (e3, "s", 1)):
            for prime, e in expo.items():
                counter[(sym, prime)] += sign * e
        return PsiMonomial.from_counter(counter)

    def psi_linear(self, m: ScaledPermutation, s: float) -> float:
        a1, a2, a3 = sorted((float(x) for x in m.scales), reverse=True)
        p1, p2 = self.lookup(m)
        return a1**p1 * a2 ** (p2 - p1) * a3 ** (s - p2)


def mod_svf(ctx: ModSvfContext, word: Sequence[int], s: float) -> float:
    """``psi^s`` of the cylinder ``word`` of the context's system."""
    if s < 0:
        raise ValidationError("s must be nonnegative")
    if ctx.system is None:
        raise ValidationError("word evaluation needs a context built from a system")
    return ctx.psi_linear(word_linear(ctx.system, word), s)


def mod_svf_monomial(ctx: ModSvfContext, word: Sequence[int]) -> PsiMonomial:
    if ctx.system is None:
        raise ValidationError("word evaluation needs a context built from a system")
    return ctx.monomial(word_linear(ctx.system, word))


def big_psi(ctx: ModSvfContext, k: int, s: float) -> float:
    """``Psi_k^s``: sum of psi^s over all words of length k."""
    return math.exp(log_big_psi(ctx, k, s))


def log_big_psi(ctx: ModSvfContext, k: int, s: float) -> float:
    if k < 1:
        raise ValidationError("k must be at least 1")
    return ctx.log_sum(ctx.cache.level(k), s)


# -- multiplicative subsystem ---------------------------------------------------


@dataclass
class MultiplicativeSubsystem:
    """Diagonal words of length N + m sharing one ordering; psi^s is multiplicative on them.

    Members are stored merged by linear part (``states``).  ``suffix`` is the
    common diagonalising suffix as indices into the family's distinct linear
    parts; ``suffix_words`` gives it as map indices when a system is known.
    """

    N: int
    m: int
    s: float
    permutation: tuple[int, ...]
    ordering: tuple[int, ...]
    suffix: tuple[int, ...]
    states: States
    log_sum: float
    log_total_N: float
    verified: bool
    checked_pairs: int
    suffix_words: tuple[int, ...] | None = None

    @property
    def size(self) -> float:
        return float(self.states.weight.sum())

    @property
    def rigorous_lower(self) -> float:
        return math.exp(self.log_sum / (self.N + self.m))


def _perm_inverse(p: tuple[int, ...]) -> tuple[int, ...]:
    inv = [0] * len(p)
    for j, q in enumerate(p):
        inv[q] = j
    return tuple(inv)


def _find_suffixes(family: LinearFamily, target_perm: tuple[int, ...], m: int) -> list[tuple[int, ...]]:
    """Sequences of m distinct linear parts (by index) whose product has permutation target_perm."""
    n = len(family)
    found = []
    perms = [tuple(int(x) for x in family.perms[c]) for c in range(n)]
    # only the permutation matters, so search over one representative per permutation
    reps: dict[tuple[int, ...], int] = {}
    for c in range(n):
        reps.setdefault(perms[c], c)
    for seq in itertools.product(sorted(reps.values()), repeat=m):
        p = tuple(range(3))
        for c in seq:
            p = tuple(p[perms[c][j]] for j in range(3))
        if p == target_perm:
            found.append(seq)
    if m == 0 and target_perm == (0, 1, 2):
        found = [()]
    return found


def _state_linear(family: LinearFamily, states: States, row: int) -> ScaledPermutation:
    perm = PERMS3[int(states.perm_idx[row])]
    return ScaledPermutation(perm, (1, 1, 1), family.exact_scales(states, row))


def _suffix_linear(family: LinearFamily, suffix: Sequence[int]) -> ScaledPermutation:
    out = ScaledPermutation.identity(3)
    for c in suffix:
        out = compose(out, ScaledPermutation(tuple(int(x) for x in family.perms[c]), (1, 1, 1), family.scales[c]))
    return out


def _append(family: LinearFamily, states: States, suffix_lin: ScaledPermutation) -> States:
    """Right-multiply every state by a fixed linear part (exact, in exponent form).

    The suffix is a product of the family's parts, so its primes are among the family's.
    """
    pos = {p: a for a, p in enumerate(family.primes)}
    sexpo = np.zeros((3, len(family.primes)), dtype=np.int64)
    for u, x in enumerate(suffix_lin.scales):
        for prime, e in _prime_exponents(x).items():
            sexpo[u, pos[prime]] = e
    p = list(suffix_lin.perm)
    perm_idx = COMPOSE[states.perm_idx, PERM_INDEX[suffix_lin.perm]]
    return States(perm_idx, states.expo[:, p, :] + sexpo[None, :, :], states.weight.copy(), states.node.copy())


def build_subsystem(ctx: ModSvfContext, N: int, s: float, max_pairs: int = 20_000) -> MultiplicativeSubsystem:
    """Multiplicative subsystem carrying a fixed share of ``Psi_N^s``.

    1. keep the words of length N whose permutation carries the largest sum;
    2. append one common suffix of the smallest length m <= 6 that makes every
       product diagonal (the suffix with the largest resulting sum is used);
    3. keep the products with the ordering carrying the largest sum.

    Multiplicativity is then verified exactly on pairs of members (all pairs of
    distinct linear parts, up to ``max_pairs``).
    """
    if N < 1:
        raise ValidationError("N must be at least 1")
    fam = ctx.family
    level = ctx.cache.level(N)
    log_total = ctx.log_sum(level, s)
    log_psi = ctx.log_psi(level, s)

    # step 1: permutation class with the largest sum
    best_perm, best_val = None, -math.inf
    for idx in np.unique(level.perm_idx):
        mask = level.perm_idx == idx
        val = float(logsumexp(log_psi[mask], b=level.weight[mask]))
        if val > best_val:
            best_perm, best_val = int(idx), val
    gamma1 = level.take(level.perm_idx == best_perm)
    perm = PERMS3[best_perm]

    # step 2: uniform diagonalising suffix
    target = _perm_inverse(perm)
    chosen = None
    for m in range(MAX_SUFFIX + 1):
        candidates = _find_suffixes(fam, target, m)
        if not candidates:
            continue
        best = None
        for suffix in candidates:
            states = _append(fam, gamma1, _suffix_linear(fam, suffix))
            val = ctx.log_sum(states, s)
            if best is None or val > best[0]:
                best = (val, suffix, states)
        chosen = (m,) + best[1:]
        break
    if chosen is None:
        raise SearchFailed(f"no diagonalising suffix of length <= {MAX_SUFFIX} for permutation {perm}")
    m, suffix, gamma2 = chosen

    # step 3: ordering class with the largest sum
    logs = ctx.family.log_scales(gamma2)
    order = np.argsort(-logs, axis=1, kind="stable")
    keys = order @ np.array([9, 3, 1])
    lp = ctx.log_psi(gamma2, s)
    best_key, best_val = None, -math.inf
    for key in np.unique(keys):
        mask = keys == key
        val = float(logsumexp(lp[mask], b=gamma2.weight[mask]))
        if val > best_val:
            best_key, best_val = int(key), val
    members = merge_states(gamma2.take(keys == best_key))
    ordering = tuple(int(x) for x in order[np.nonzero(keys == best_key)[0][0]])

    verified, pairs = _verify_multiplicative(ctx, members, max_pairs)
    words = None
    if ctx.system is not None:
        words = tuple(_class_to_map(ctx, c) for c in suffix)
    return MultiplicativeSubsystem(N, m, s, perm, ordering, tuple(suffix), members, best_val,
                                   log_total, verified, pairs, words)


def _class_to_map(ctx: ModSvfContext, c: int) -> int:
    fam = ctx.family
    target = (tuple(int(x) for x in fam.perms[c]), fam.scales[c])
    for i, f in enumerate(ctx.system.maps):
        if (f.linear.perm, f.linear.scales) == target:
            return i
    raise ValidationError("linear part not found among the system's maps")


def _verify_multiplicative(ctx: ModSvfContext, members: States, max_pairs: int) -> tuple[bool, int]:
    """Exact check psi(ij) = psi(i) psi(j) on member pairs via prime-exponent monomials."""
    n = len(members)
    if n == 0:
        return False, 0
    if np.any(members.perm_idx != PERM_INDEX[(0, 1, 2)]):
        return False, 0
    lins = [_state_linear(ctx.family, members, r) for r in range(n)]
    monos = [ctx.monomial(l) for l in lins]
    pairs = 0
    for a in range(n):
        for b in range(n):
            if pairs >= max_pairs:
                return True, pairs
            if ctx.monomial(compose(lins[a], lins[b])) != monos[a] * monos[b]:
                return False, pairs + 1
            pairs += 1
    return True, pairs


# -- pressure -------------------------------------------------------------------


@dataclass
class PressureEstimate:
    s: float
    variant: str
    sequence: list[float]
    point_estimate: float
    rigorous_lower: float
    converged: bool
    k_used: int
    subsystem_N: int = 0
    subsystem_m: int = 0

    @property
    def last_relative_step(self) -> float:
        if len(self.sequence) < 2:
            return math.inf
        return abs(self.sequence[-1] - self.sequence[-2]) / self.sequence[-1]

    def as_dict(self) -> dict:
        return {
            "s": self.s,
            "variant": self.variant,
            "sequence": list(self.sequence),
            "point_estimate": self.point_estimate,
            "rigorous_lower": self.rigorous_lower,
            "converged": self.converged,
        }


def default_k_max(ctx: ModSvfContext, k_max: int | None = None) -> int:
    """Largest k <= k_max (default 12) whose merged states fit in the budget."""
    return ctx.cache.max_level_within(DEFAULT_K_MAX if k_max is None else k_max)


def subsystem_lower_bound(ctx: ModSvfContext, total_length: int, s: float) -> MultiplicativeSubsystem | None:
    """Subsystem of total word length at most ``total_length`` (largest N that fits)."""
    for N in range(max(1, total_length - 3), 0, -1):
        try:
            sub = build_subsystem(ctx, N, s)
        except SearchFailed:
            continue
        if N + sub.m <= total_length and sub.verified:
            return sub
    return None


def pressure(ctx: ModSvfContext, s: float, k_max: int | None = None) -> PressureEstimate:
    """Sequence (Psi_k^s)^(1/k), k = 1..K, with a certified lower bound for the limit.

    The subsystem has total length at most K, so its bound never exceeds the
    point estimate.
    """
    if s < 0:
        raise ValidationError("s must be nonnegative")
    if k_max is not None and k_max < 2:
        raise ValidationError("k_max must be at least 2")
    K = default_k_max(ctx, k_max)
    seq = [math.exp(log_big_psi(ctx, k, s) / k) for k in range(1, K + 1)]
    sub = subsystem_lower_bound(ctx, K, s)
    lower = sub.rigorous_lower if sub is not None else 0.0
    converged = len(seq) >= 2 and abs(seq[-1] - seq[-2]) / seq[-1] < CAUCHY_TOL
    return PressureEstimate(float(s), ctx.variant, seq, seq[-1], lower, converged, K,
                            sub.N if sub else 0, sub.m if sub else 0)


def log_pressure_point(ctx: ModSvfContext, s: float, k: int) -> float:
    return log_big_psi(ctx, k, s) / k


def _root_decreasing(f, lo: float = 0.0, hi: float = 6.0, limit: float = 12.0, tol: float = ROOT_TOL,
                     solver=bisect) -> float:
    if f(lo) <= 0:
        raise ValidationError("pressure is at most 1 at s = 0: malformed system")
    while f(hi) >= 0:
        if hi >= limit:
            raise ValidationError(f"pressure still at least 1 at s = {hi}: malformed system")
        hi = min(limit, hi * 2)
    return float(solver(f, lo, hi, xtol=tol))


def root_s0(ctx: ModSvfContext, k_max: int | None = None) -> float:
    """s with (Psi_K^s)^(1/K) = 1 at the largest affordable K <= k_max."""
    K = default_k_max(ctx, k_max)
    states = ctx.cache.level(K)
    return _root_decreasing(lambda s: ctx.log_sum(states, s))


def exact_diagonal_log_pressure(ctx: ModSvfContext, s: float) -> float:
    """Limit log P(s) for families of diagonal maps, by the variational formula."""
    fam = ctx.family
    if np.any(fam.perm_idx != PERM_INDEX[(0, 1, 2)]):
        raise ValidationError("the variational formula needs diagonal maps")
    logs = fam.log_scales(fam.initial_states())
    weights = fam.initial_states().weight
    p1, p2 = ctx.p1, ctx.p2

    def exponents(sigma):
        return (p1[sigma[0]], p2[sigma[2]] - p1[sigma[0]], s - p2[sigma[2]])

    return diagonal_log_pressure(logs, weights, exponents)


def exact_diagonal_root(ctx: ModSvfContext) -> float:
    # the limit pressure is smooth in s, so Brent's method replaces plain bisection here
    return _root_decreasing(lambda s: exact_diagonal_log_pressure(ctx, s), solver=brentq)


def transfer_log_pressure_3d(ctx: ModSvfContext, s: float) -> float:
    """Limit log P(s) for any family, through transfer matrices over accumulated permutations.

    Slower than the diagonal formula (a two-dimensional multiplier search per
    ordering) but exact for permutation families; used as an independent check
    on the enumerated point estimates.
    """
    fam = ctx.family
    states = fam.initial_states()
    system = TransferSystem(
        [PERMS3[i] for i in states.perm_idx],
        fam.log_scales(states),
        states.weight,
        [0] * len(states),
        [0] * len(states),
    )
    p1, p2 = ctx.p1, ctx.p2
    return transfer_log_pressure(
        system,
        lambda v: (0, 1, 2),
        [0],
        lambda v, sigma: (p1[sigma[0]], p2[sigma[2]] - p1[sigma[0]], s - p2[sigma[2]]),
    )


def transfer_root(ctx: ModSvfContext) -> float:
    """Root of the exact limit pressure for any family (slow; a cross-check on :func:`root_s0`)."""
    return _root_decreasing(lambda s: transfer_log_pressure_3d(ctx, s), solver=brentq)


# -- affinity dimension ---------------------------------------------------------


def _log_phi(family: LinearFamily, states: States, s: float) -> np.ndarray:
    logs = -np.sort(-family.log_scales(states), axis=1)
    l1, l2, l3 = logs[:, 0], logs[:, 1], logs[:, 2]
    if s <= 1:
        return s * l1
    if s <= 2:
        return l1 + (s - 1) * l2
    if s <= 3:
        return l1 + l2 + (s - 2) * l3
    return (s / 3) * (l1 + l2 + l3)


def affinity_dimension(sys: SpongeSystem | LinearFamily, k_max: int | None = None,
                       budget: int = DEFAULT_STATE_BUDGET) -> float:
    """Root of the singular value pressure at the largest affordable k, clamped at 3."""
    family = sys if isinstance(sys, LinearFamily) else LinearFamily(sys.linear_parts)
    cache = LevelCache(family, budget)
    K = cache.max_level_within(DEFAULT_K_MAX if k_max is None else k_max)
    states = cache.level(K)

    def f(s):
        return float(logsumexp(_log_phi(family, states, s), b=states.weight))

    if f(3.0) >= 0:
        return 3.0
    return float(bisect(f, 0.0, 3.0, xtol=ROOT_TOL))


# -- bounds ---------------------------------------------------------------------


@dataclass
class DimensionBounds:
    s0_lower: float
    s0_upper: float
    affinity_dim: float
    k_used: int
    dims: ProjectionDims
    empirical_slope: float | None = None
    empirical_stderr: float | None = None
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "s0_lower": self.s0_lower,
            "s0_upper": self.s0_upper,
            "affinity_dim": self.affinity_dim,
            "k_used": self.k_used,
            "projection_dims": self.dims.as_dict(),
            "empirical_slope": self.empirical_slope,
            "empirical_stderr": self.empirical_stderr,
            "notes": list(self.notes),
        }


def dimension_bounds(sys: SpongeSystem, dims: ProjectionDims | None = None, k_max: int | None = None,
                     overrides=None, budget: int = DEFAULT_STATE_BUDGET) -> DimensionBounds:

    upper = ModSvfContext.from_system(sys, dims, "upper", overrides, budget)
    lower = upper.with_variant("lower")
    lower.cache = upper.cache  # same linear parts, share the enumeration
    K = default_k_max(upper, k_max)
    s_up, s_low = root_s0(upper, K), root_s0(lower, K)
    notes = []
    if sys.sponge_class is SpongeClass.ORDERED_SEPARATED and check_cosc(sys) and s_up == s_low:
        notes.append("box dimension exists and equals s0")
    return DimensionBounds(s_low, s_up, affinity_dimension(sys, K, budget), K, upper.dims, notes=notes)


def cut_set_psi_sum(ctx: ModSvfContext, delta, s: float) -> float:
    """Sum of psi^s over the cut set at delta (merged by linear part)."""

    states = cut_set_states(ctx.family, as_fraction(delta), ctx.budget)
    return math.exp(ctx.log_sum(states, s))


def ordered_closed_form_root(sys: SpongeSystem, dims: ProjectionDims, variant: str = "upper") -> float:
    """Root of sum over maps of a1**p1 a2**(p2-p1) a3**(s-p2) = 1, with the single relevant axis and plane.

    Only meaningful for ordered systems, where psi is multiplicative.
    """
    common = None

    for f in sys.maps:
        o = orderings(f.linear)
        common = o if common is None else common & o
    if not common:
        raise ValidationError("the closed form needs a common ordering of all maps")
    sigma = min(common)
    p1 = dims.p1(variant)[sigma[0]]
    p2 = dims.p2(variant)[sigma[2]]
    rows = [[float(f.linear.scales[a]) for a in sigma] for f in sys.maps]

    def g(s):
        return math.log(sum(r[0] ** p1 * r[1] ** (p2 - p1) * r[2] ** (s - p2) for r in rows))

    return _root_decreasing(g)
