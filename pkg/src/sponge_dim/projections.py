"""Dimensions of the principal projections of a sponge.

The projection of the attractor onto a coordinate axis is a graph-directed
self-similar set: map ``i`` sends the projection onto source axis ``v`` into the
projection onto ``perm_i(v)``, contracting by ``scale_i(v)``.  Its box dimension
(under separation) is the ``t`` where the spectral radius of
``M(t)[u][v] = sum of ratio**t over edges u -> v`` equals one.

Projections onto coordinate planes are graph-directed self-affine carpets whose
maps are diagonal or anti-diagonal.  When the unit squares satisfy the
rectangular open set condition their box dimension is the root of the planar
modified singular value pressure; otherwise an empirical box-counting interval
is returned.  Users can override any value.

Identical projected maps describe the same piece of a projection, so edges are
deduplicated before any dimension is computed (e.g. the eight corner cubes of
the unit cube project onto only two distinct intervals per axis).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import bisect, brentq
from scipy.special import logsumexp

from .enumeration import LevelCache, LinearFamily
from .errors import BudgetExceeded, ValidationError
from .gpm_core import (
    AffineContraction,
    ScaledPermutation,
    SpongeSystem,
    as_fraction,
    boxes_pairwise_disjoint,
    unit_box,
)
from .variational import TransferSystem, diagonal_log_pressure, transfer_log_pressure

T_TOL = 1e-12
PLANAR_S_TOL = 1e-12
PLANAR_STATE_BUDGET = 400_000
FLOOR_SNAP = 1e-9
PLANAR_K_MAX = 60


class Provenance(str, Enum):
    FORMULA = "formula"
    EMPIRICAL = "empirical"
    USER = "user-override"


# -- one-dimensional projections ----------------------------------------------


@dataclass(frozen=True)
class LineEdge:
    """Map ``x -> sign * ratio * x + offset`` from the source axis set into the target axis set."""

    source: int
    target: int
    ratio: Fraction
    sign: int
    offset: Fraction


@dataclass(frozen=True)
class AxisGraphSystem:
    nodes: tuple[int, ...]
    edges: tuple[LineEdge, ...]

    def distinct_edges(self) -> tuple[LineEdge, ...]:
        return tuple(sorted(set(self.edges), key=lambda e: (e.source, e.target, e.ratio, e.sign, e.offset)))

    def successors(self, node: int) -> set[int]:
        return {e.target for e in self.edges if e.source == node}

    def components(self) -> list[frozenset[int]]:
        """Strongly connected components, in order of their smallest node."""
        reach = {v: self._reachable(v) for v in self.nodes}
        comps: list[frozenset[int]] = []
        seen: set[int] = set()
        for v in sorted(self.nodes):
            if v in seen:
                continue
            comp = frozenset(u for u in reach[v] if v in reach[u])
            comps.append(comp)
            seen |= comp
        return comps

    def _reachable(self, start: int) -> set[int]:
        out, frontier = {start}, [start]
        while frontier:
            v = frontier.pop()
            for u in self.successors(v):
                if u not in out:
                    out.add(u)
                    frontier.append(u)
        return out

    def matrix(self, t: float, component: Sequence[int]) -> np.ndarray:
        nodes = sorted(component)
        pos = {v: k for k, v in enumerate(nodes)}
        out = np.zeros((len(nodes), len(nodes)))
        for e in self.distinct_edges():
            if e.source in pos and e.target in pos:
                out[pos[e.source], pos[e.target]] += float(e.ratio) ** t
        return out


def axis_graph(sys: SpongeSystem) -> AxisGraphSystem:
    """One edge per (map, source axis): axis v -> perm_i(v) with ratio scale_i(v)."""
    edges = []
    for f in sys.maps:
        lin = f.linear
        for v in range(3):
            edges.append(LineEdge(v, lin.perm[v], lin.scales[v], lin.signs[v], f.translation[lin.perm[v]]))
    return AxisGraphSystem((0, 1, 2), tuple(edges))


def _spectral_radius(m: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def graph_similarity_dimension(g: AxisGraphSystem, component) -> float:
    """Root t in [0, 1] of spectral_radius(M(t)) = 1, clamped at 1."""
    comp = frozenset(component)
    if not comp or not comp <= set(g.nodes):
        raise ValidationError("component must be a nonempty set of graph nodes")
    for v in comp:
        if not comp <= g._reachable(v):
            raise ValidationError(f"component {sorted(comp)} is not strongly connected")
    if _spectral_radius(g.matrix(0.0, comp)) < 1:
        raise ValidationError("spectral radius below one at t = 0: malformed graph")
    if _spectral_radius(g.matrix(1.0, comp)) >= 1:
        return 1.0
    return float(bisect(lambda t: _spectral_radius(g.matrix(t, comp)) - 1.0, 0.0, 1.0, xtol=T_TOL))


def similarity_dimension(ratios: Sequence[float], counts: Sequence[float] | None = None) -> float:
    """Root of sum counts_i * ratios_i**t = 1 on [0, 1], clamped at 1 (single-node graph)."""
    r = np.asarray([float(x) for x in ratios])
    c = np.ones_like(r) if counts is None else np.asarray(counts, dtype=float)
    f = lambda t: float(np.sum(c * r**t)) - 1.0  # noqa: E731
    if f(1.0) >= 0:
        return 1.0
    return float(bisect(f, 0.0, 1.0, xtol=T_TOL))


def axis_dimensions(g: AxisGraphSystem) -> dict[int, float]:
    """Projection dimension for every node, computed per strongly connected component."""
    out: dict[int, float] = {}
    for comp in g.components():
        value = graph_similarity_dimension(g, comp)
        for v in comp:
            out[v] = value
    return out


# -- two-dimensional projections ----------------------------------------------


@dataclass(frozen=True)
class PlanarEdge:
    """A planar map between coordinate planes, embedded in 3x3 form.

    Planes are named by the axis they drop.  ``linear`` sends the dropped
    source axis to the dropped target axis with scale 1; the translation is 0
    in the dropped target coordinate.
    """

    source: int
    target: int
    linear: ScaledPermutation
    translation: tuple[Fraction, Fraction, Fraction]

    def image(self) -> tuple[tuple[Fraction, Fraction], ...]:
        """Image of the open unit square, in the target plane's two coordinates."""
        box = AffineContraction(self.linear, self.translation).image_box(unit_box(3))
        return tuple(iv for a, iv in enumerate(box) if a != self.target)


def _planar_edge(f: AffineContraction, dropped: int) -> PlanarEdge:
    lin = f.linear
    target = lin.perm[dropped]
    signs = tuple(1 if j == dropped else lin.signs[j] for j in range(3))
    scales = tuple(Fraction(1) if j == dropped else lin.scales[j] for j in range(3))
    translation = tuple(Fraction(0) if a == target else f.translation[a] for a in range(3))
    return PlanarEdge(dropped, target, ScaledPermutation(lin.perm, signs, scales), translation)


@dataclass(frozen=True)
class PlanarCarpetSystem:
    """Graph-directed planar carpet; a plain planar IFS is the single node 2."""

    edges: tuple[PlanarEdge, ...]

    def __post_init__(self):
        distinct = tuple(sorted(set(self.edges), key=_edge_key))
        if not distinct:
            raise ValidationError("planar system needs at least one map")
        for e in distinct:
            if any(s >= 1 for j, s in enumerate(e.linear.scales) if j != e.source):
                raise ValidationError("planar maps must contract")
            for lo, hi in e.image():
                if lo < 0 or hi > 1:
                    raise ValidationError("planar map does not send the unit square into itself")
        object.__setattr__(self, "edges", distinct)

    @classmethod
    def from_maps2d(cls, maps: Sequence[AffineContraction]) -> "PlanarCarpetSystem":
        """Plain planar IFS from 2x2 maps (diagonal or anti-diagonal)."""
        edges = []
        for f in maps:
            lin = f.linear
            if lin.dim != 2:
                raise ValidationError("from_maps2d expects 2x2 maps")
            lin3 = ScaledPermutation(lin.perm + (2,), lin.signs + (1,), lin.scales + (Fraction(1),))
            edges.append(PlanarEdge(2, 2, lin3, f.translation + (Fraction(0),)))
        return cls(tuple(edges))

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(sorted({e.source for e in self.edges} | {e.target for e in self.edges}))

    def plane_axes(self, node: int) -> tuple[int, int]:
        a, b = (x for x in range(3) if x != node)
        return a, b

    def is_diagonal(self) -> bool:
        return all(e.source == e.target and e.linear.is_diagonal() for e in self.edges)

    def satisfies_rosc(self) -> bool:
        """Rectangular open set condition for the unit squares of every node."""
        for node in self.nodes:
            images = [e.image() for e in self.edges if e.target == node]
            if any(lo < 0 or hi > 1 for img in images for lo, hi in img):
                return False
            if not boxes_pairwise_disjoint(images):
                return False
        return True

    def axis_graph(self) -> AxisGraphSystem:
        """Line projections of the carpet, on the global axis labels."""
        edges = []
        for e in self.edges:
            lin = e.linear
            for v in range(3):
                if v == e.source:
                    continue
                w = lin.perm[v]
                edges.append(LineEdge(v, w, lin.scales[v], lin.signs[v], e.translation[w]))
        nodes = tuple(sorted({x.source for x in edges} | {x.target for x in edges}))
        return AxisGraphSystem(nodes, tuple(edges))

    def family(self) -> LinearFamily:
        return LinearFamily(
            [e.linear for e in self.edges],
            sources=[e.source for e in self.edges],
            targets=[e.target for e in self.edges],
        )


def _edge_key(e: PlanarEdge):
    return (e.source, e.target, e.linear.perm, e.linear.signs, e.linear.scales, e.translation)


def planar_projection(sys: SpongeSystem, dropped_axis: int) -> PlanarCarpetSystem:
    """Carpet formed by projecting onto the plane without ``dropped_axis`` (and its orbit)."""
    orbit = {g[dropped_axis] for g in sys.group}
    edges = [_planar_edge(f, u) for f in sys.maps for u in sorted(orbit)]
    return PlanarCarpetSystem(tuple(edges))


@dataclass(frozen=True)
class PlanarDimension:
    low: float
    high: float
    provenance: Provenance
    detail: dict = field(default_factory=dict, compare=False)


def _planar_log_psi(family: LinearFamily, states, s: float, p1: np.ndarray) -> np.ndarray:
    logs = family.log_scales(states)
    rows = np.arange(len(states))
    node = states.node
    # the two axes of each state's source plane, in increasing order
    first = np.where(node == 0, 1, 0)
    second = np.where(node == 2, 1, 2)
    l1, l2 = logs[rows, first], logs[rows, second]
    long_is_first = l1 >= l2
    long_axis = np.where(long_is_first, first, second)
    l_long = np.where(long_is_first, l1, l2)
    l_short = np.where(long_is_first, l2, l1)
    p = p1[long_axis]
    return p * l_long + (s - p) * l_short


class PlanarPressure:
    """Planar modified singular value pressure of a (graph-directed) carpet.

    ``method`` picks the route:

    * ``"variational"``: exact formula for diagonal single-node carpets.
    * ``"transfer"``: exact formula through transfer matrices over
      (accumulated permutation, node), for any carpet.
    * ``"enumeration"``: merged word sums ``Psi_k`` at the largest affordable
      k, with the pressure estimated by ``(Psi_k / Psi_{k-L}) ** (1/L)``.  L is
      the order of the permutation group acting on the planes' axes (at least
      2), so periodic swap patterns cancel.  This route converges slowly and is
      kept as an independent check.

    The default is ``"variational"`` when it applies and ``"transfer"`` otherwise.
    """

    def __init__(self, carpet: PlanarCarpetSystem, p1: Mapping[int, float],
                 budget: int = PLANAR_STATE_BUDGET, k_max: int = PLANAR_K_MAX,
                 method: str | None = None):
        self.carpet = carpet
        self.p1 = np.array([float(p1.get(a, 0.0)) for a in range(3)])
        self.family = carpet.family()
        if method is None:
            method = "variational" if carpet.is_diagonal() else "transfer"
        if method not in ("variational", "transfer", "enumeration"):
            raise ValidationError(f"unknown planar pressure method {method!r}")
        if method == "variational" and not carpet.is_diagonal():
            raise ValidationError("the variational route needs a diagonal carpet")
        self.method = method
        self.exact = method != "enumeration"
        self._affine: dict[int, tuple] = {}
        if method == "transfer":
            self.transfer = TransferSystem(
                [e.linear.perm for e in carpet.edges],
                [[math.log(x) for x in e.linear.scales] for e in carpet.edges],
                [1.0] * len(carpet.edges),
                [e.source for e in carpet.edges],
                [e.target for e in carpet.edges],
            )
        if method == "enumeration":
            self.cache = LevelCache(self.family, budget)
            self.k = self.cache.max_level_within(k_max)
            perms = {e.linear.perm for e in carpet.edges}
            self.lag = max(2, len(_closure(perms)))
            if self.k <= self.lag:
                raise BudgetExceeded("planar enumeration budget too small for a pressure estimate")

    def log_sum(self, k: int, s: float) -> float:
        # log psi is affine in s: evaluate the two coefficient arrays once per level
        if k not in self._affine:
            states = self.cache.level(k)
            at_zero = _planar_log_psi(self.family, states, 0.0, self.p1)
            slope = _planar_log_psi(self.family, states, 1.0, self.p1) - at_zero
            self._affine[k] = (at_zero, slope, states.weight)
        at_zero, slope, weight = self._affine[k]
        return float(logsumexp(at_zero + s * slope, b=weight))

    def log_pressure(self, s: float) -> float:
        if self.method == "variational":
            node = self.carpet.nodes[0]
            a, b = self.carpet.plane_axes(node)
            logs = self.family.log_scales(self.family.initial_states())[:, [a, b]]
            weights = self.family.initial_states().weight
            p1 = {0: self.p1[a], 1: self.p1[b]}
            return diagonal_log_pressure(logs, weights, lambda sigma: (p1[sigma[0]], s - p1[sigma[0]]))
        if self.method == "transfer":
            starts = sorted({e.source for e in self.carpet.edges})
            return transfer_log_pressure(
                self.transfer,
                self.carpet.plane_axes,
                starts,
                lambda v, sigma: (self.p1[sigma[0]], s - self.p1[sigma[0]]),
            )
        return (self.log_sum(self.k, s) - self.log_sum(self.k - self.lag, s)) / self.lag

    def root(self) -> float:
        f = self.log_pressure
        if f(2.0) >= 0:
            return 2.0
        if f(0.0) <= 0:
            return 0.0
        return float(brentq(f, 0.0, 2.0, xtol=PLANAR_S_TOL))


def _closure(perms) -> set:
    group = {(0, 1, 2)} | set(perms)
    while True:
        new = {tuple(p[q[j]] for j in range(3)) for p in group for q in group} - group
        if not new:
            return group
        group |= new


def planar_carpet_dimension(
    c: PlanarCarpetSystem,
    p1: Mapping[int, float] | None = None,
    empirical_deltas: Sequence[Fraction] | None = None,
) -> PlanarDimension:
    """Box dimension of a carpet: pressure root under the ROSC, empirical otherwise."""
    if p1 is None:
        p1 = axis_dimensions(c.axis_graph())
    if c.satisfies_rosc():
        pressure = PlanarPressure(c, p1)
        method = pressure.method
        root = pressure.root()
        return PlanarDimension(root, root, Provenance.FORMULA, {"method": method})
    return empirical_planar_dimension(c, empirical_deltas)


def empirical_planar_dimension(c: PlanarCarpetSystem, deltas: Sequence[Fraction] | None = None) -> PlanarDimension:
    """Box-counting interval [slope - 2 stderr, min(2, slope + 2 stderr)]."""
    from .boxcount import dim_slope, grid_count, planar_cloud

    deltas = [Fraction(1, 2**k) for k in range(3, 9)] if deltas is None else [as_fraction(d) for d in deltas]
    cloud = planar_cloud(c, min(deltas))
    fit = dim_slope([grid_count(cloud, d) for d in deltas])
    low = max(0.0, fit.slope - 2 * fit.stderr)
    high = min(2.0, fit.slope + 2 * fit.stderr)
    return PlanarDimension(min(low, high), high, Provenance.EMPIRICAL,
                           {"slope": fit.slope, "stderr": fit.stderr})


# -- the dimension table ------------------------------------------------------


@dataclass(frozen=True)
class ProjectionDims:
    """Projection dimensions per axis (p1) and per plane (p2, indexed by the dropped axis)."""

    p1_lower: tuple[float, float, float]
    p1_upper: tuple[float, float, float]
    p2_lower: tuple[float, float, float]
    p2_upper: tuple[float, float, float]
    p1_provenance: tuple[Provenance, Provenance, Provenance] = (Provenance.FORMULA,) * 3
    p2_provenance: tuple[Provenance, Provenance, Provenance] = (Provenance.FORMULA,) * 3

    def __post_init__(self):
        for name in ("p1_lower", "p1_upper", "p2_lower", "p2_upper"):
            values = tuple(float(x) for x in getattr(self, name))
            if len(values) != 3:
                raise ValidationError(f"{name} needs three values")
            object.__setattr__(self, name, values)
        tol = 1e-12
        for a in range(3):
            if not -tol <= self.p1_lower[a] <= self.p1_upper[a] + tol <= 1 + 2 * tol:
                raise ValidationError(f"need 0 <= p1_lower <= p1_upper <= 1 on axis {a}")
            if not -tol <= self.p2_lower[a] <= self.p2_upper[a] + tol <= 2 + 2 * tol:
                raise ValidationError(f"need 0 <= p2_lower <= p2_upper <= 2 for plane {a}")

    @classmethod
    def constant(cls, p1: float, p2: float) -> "ProjectionDims":
        return cls((p1,) * 3, (p1,) * 3, (p2,) * 3, (p2,) * 3)

    def p1(self, variant: str) -> tuple[float, float, float]:
        return self.p1_upper if variant == "upper" else self.p1_lower

    def p2(self, variant: str) -> tuple[float, float, float]:
        return self.p2_upper if variant == "upper" else self.p2_lower

    def as_dict(self) -> dict:
        return {
            "p1_lower": list(self.p1_lower),
            "p1_upper": list(self.p1_upper),
            "p2_lower": list(self.p2_lower),
            "p2_upper": list(self.p2_upper),
            "p1_provenance": [p.value for p in self.p1_provenance],
            "p2_provenance": [p.value for p in self.p2_provenance],
        }


def _three(value, name: str) -> tuple[float, float, float]:
    if isinstance(value, (int, float, str, Fraction)):
        return (float(as_fraction(value)),) * 3
    values = tuple(float(as_fraction(v)) for v in value)
    if len(values) != 3:
        raise ValidationError(f"projection override {name!r} needs one value or three")
    return values


def apply_overrides(dims: ProjectionDims, overrides: Mapping | None) -> ProjectionDims:
    """Replace entries by user values; keys p1, p1_lower, p1_upper, p2, p2_lower, p2_upper."""
    if not overrides:
        return dims
    unknown = set(overrides) - {"p1", "p1_lower", "p1_upper", "p2", "p2_lower", "p2_upper"}
    if unknown:
        raise ValidationError(f"unknown projection override keys: {sorted(unknown)}")
    fields = {
        "p1_lower": list(dims.p1_lower), "p1_upper": list(dims.p1_upper),
        "p2_lower": list(dims.p2_lower), "p2_upper": list(dims.p2_upper),
    }
    prov1, prov2 = list(dims.p1_provenance), list(dims.p2_provenance)
    for key, value in overrides.items():
        targets = [f"{key}_lower", f"{key}_upper"] if key in ("p1", "p2") else [key]
        values = _three(value, key)
        for name in targets:
            fields[name] = list(values)
        prov = prov1 if key.startswith("p1") else prov2
        for a in range(3):
            prov[a] = Provenance.USER
    return ProjectionDims(
        tuple(fields["p1_lower"]), tuple(fields["p1_upper"]),
        tuple(fields["p2_lower"]), tuple(fields["p2_upper"]),
        tuple(prov1), tuple(prov2),
    )


def _snap(value: float, floor: float) -> float:
    # roots that sit on the floor come back within root-finding noise of it
    return floor if value < floor + FLOOR_SNAP else value


def projection_dims(sys: SpongeSystem, overrides: Mapping | None = None) -> ProjectionDims:
    """Formula (or empirical fallback) projection dimensions, then user overrides."""
    p1 = axis_dimensions(axis_graph(sys))
    p1_tuple = tuple(p1[a] for a in range(3))
    p2_low, p2_high, prov2 = [0.0] * 3, [0.0] * 3, [Provenance.FORMULA] * 3
    done: dict[frozenset, PlanarDimension] = {}
    for w in range(3):
        orbit = frozenset(g[w] for g in sys.group)
        if orbit not in done:
            done[orbit] = planar_carpet_dimension(planar_projection(sys, w), p1)
        result = done[orbit]
        # a planar projection is at least as large as its line projections
        floor = max(p1[a] for a in range(3) if a != w) if result.provenance is Provenance.FORMULA else 0.0
        p2_low[w] = _snap(result.low, floor)
        p2_high[w] = _snap(result.high, floor)
        prov2[w] = result.provenance
    dims = ProjectionDims(p1_tuple, p1_tuple, tuple(p2_low), tuple(p2_high),
                          (Provenance.FORMULA,) * 3, tuple(prov2))
    return apply_overrides(dims, overrides)
