"""Point clouds of attractors, grid box counts and slope fits.

A cloud holds one point per cylinder of a stopping family: the image of an
anchor point under the cylinder's map.  By default a word stops once its
*longest* side is at most ``delta_gen``, so every cylinder is no larger than
the grid cells it is counted in.  ``stop="shortest"`` gives the cut set
``I(delta_gen)`` instead (stop once the shortest side is at most
``delta_gen``); those cylinders can be long and thin, so a single point then
under-represents them.

Grids are anchored at the origin with side ``1/m`` for a positive integer
``m``, so dyadic grids nest exactly.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.stats import linregress

from .enumeration import (
    DEFAULT_STATE_BUDGET,
    _prime_exponents,
    cut_set_states,
)
from .errors import BudgetExceeded, ValidationError
from .gpm_core import AffineContraction, SpongeSystem, as_fraction

DEFAULT_POINT_BUDGET = 8_000_000
CHUNK = 1 << 20
# points within this distance below a grid line are counted in the cell above it,
# so points that sit exactly on a line are not split by rounding
EDGE_NUDGE = 1e-9


def thread_count() -> int:
    """Worker cap from SPONGE_DIM_THREADS (default: CPU count)."""
    raw = os.environ.get("SPONGE_DIM_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ValidationError(f"SPONGE_DIM_THREADS must be an integer, got {raw!r}") from exc


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    delta_gen: Fraction
    anchor: tuple
    stop: str = "longest"

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass(frozen=True)
class GridCount:
    delta: Fraction
    count: int


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float


class _MapArrays:
    """Float and exponent arrays for a (graph-directed) family of affine maps."""

    def __init__(self, maps: Sequence[AffineContraction], sources, targets):
        lin = [f.linear for f in maps]
        factored = [[_prime_exponents(s) for s in m.scales] for m in lin]
        self.primes = tuple(sorted({p for row in factored for f in row for p in f}))
        pos = {p: a for a, p in enumerate(self.primes)}
        m = len(maps)
        self.perm = np.array([l.perm for l in lin], dtype=np.int64)
        self.coef = np.array([[float(s * x) for s, x in zip(l.signs, l.scales)] for l in lin])
        self.trans = np.array([[float(t) for t in f.translation] for f in maps])
        self.expo = np.zeros((m, 3, max(1, len(self.primes))), dtype=np.int32)
        for c, row in enumerate(factored):
            for u, f in enumerate(row):
                for p, e in f.items():
                    self.expo[c, u, pos[p]] = e
        self.log_primes = np.array([math.log(p) for p in self.primes] or [0.0])
        self.sources = np.asarray(sources, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.perm.shape[0])


def _exact_leq(expo_rows: np.ndarray, primes: Sequence[int], delta: Fraction) -> np.ndarray:
    """Exact test prod p**e <= delta for each exponent row (evaluated once per distinct row)."""
    uniq, inverse = np.unique(expo_rows, axis=0, return_inverse=True)
    verdict = np.array(
        [math.prod(Fraction(p) ** int(e) for p, e in zip(primes, row)) <= delta for row in uniq],
        dtype=bool,
    )
    return verdict[inverse.reshape(-1)]


def _generate(arrays: _MapArrays, root: int, planar: bool, delta: Fraction,
              anchor: np.ndarray, stop: str, budget: int) -> np.ndarray:
    if stop not in ("longest", "shortest"):
        raise ValidationError("stop must be 'longest' or 'shortest'")
    log_delta = math.log(delta)
    n_axes = 3
    perm = np.arange(3, dtype=np.int64)[None, :]
    coef = np.ones((1, 3))
    trans = np.zeros((1, 3))
    expo = np.zeros((1, 3, arrays.expo.shape[2]), dtype=np.int32)
    node = np.array([root], dtype=np.int64)
    out: list[np.ndarray] = []
    total = 0
    while perm.shape[0]:
        parts = []
        rows_needed = 0
        for c in range(len(arrays)):
            rows = np.nonzero(node == arrays.targets[c])[0]
            if rows.size == 0:
                continue
            rows_needed += rows.size
            if rows_needed + total > budget:
                raise BudgetExceeded(f"point cloud would exceed {budget} cylinders")
            pc = arrays.perm[c]
            w_perm, w_coef, w_trans = perm[rows], coef[rows], trans[rows]
            new_trans = w_trans.copy()
            contrib = w_coef * arrays.trans[c][None, :]
            idx = np.arange(rows.size)
            for j in range(n_axes):
                new_trans[idx, w_perm[:, j]] += contrib[:, j]
            parts.append((
                w_perm[:, pc],
                w_coef[:, pc] * arrays.coef[c][None, :],
                new_trans,
                expo[rows][:, pc, :] + arrays.expo[c][None, :, :],
                np.full(rows.size, arrays.sources[c], dtype=np.int64),
            ))
        if not parts:
            break
        perm, coef, trans, expo, node = (np.concatenate(x) for x in zip(*parts))
        logs = np.zeros(expo.shape[:2])
        for a in range(expo.shape[2]):
            logs += expo[:, :, a] * arrays.log_primes[a]
        if planar:
            # the dropped source axis carries scale 1 and is not a side of the cylinder
            dropped = node[:, None] == np.arange(3)[None, :]
            logs = np.where(dropped, -np.inf if stop == "longest" else np.inf, logs)
        pick = np.argmax(logs, axis=1) if stop == "longest" else np.argmin(logs, axis=1)
        value = logs[np.arange(len(logs)), pick]
        done = value <= log_delta
        near = np.nonzero(np.abs(value - log_delta) <= 1e-9)[0]
        if near.size:
            done[near] = _exact_leq(expo[near, pick[near], :], arrays.primes, delta)
        if done.any():
            pts = trans[done].copy()
            d_perm, d_coef = perm[done], coef[done]
            idx = np.arange(pts.shape[0])
            for j in range(n_axes):
                pts[idx, d_perm[:, j]] += d_coef[:, j] * anchor[j]
            out.append(pts)
            total += pts.shape[0]
        keep = ~done
        perm, coef, trans, expo, node = perm[keep], coef[keep], trans[keep], expo[keep], node[keep]
    return np.concatenate(out) if out else np.zeros((0, 3))


def generate_cloud(sys: SpongeSystem, delta_gen, anchor=None, stop: str = "longest",
                   budget: int = DEFAULT_POINT_BUDGET) -> PointCloud:
    """Points ``S_i(anchor)`` over the stopping family at ``delta_gen``.

    ``anchor`` defaults to the fixed point of the first map, which lies in the
    attractor.
    """
    delta = as_fraction(delta_gen)
    if not 0 < delta < 1:
        raise ValidationError("delta_gen must lie in (0, 1)")
    if anchor is None:
        anchor = sys.maps[0].fixed_point()
    anchor = tuple(as_fraction(x) for x in anchor)
    if len(anchor) != 3 or any(not 0 <= x <= 1 for x in anchor):
        raise ValidationError("anchor must be a point of [0,1]^3")
    n = len(sys.maps)
    arrays = _MapArrays(sys.maps, [0] * n, [0] * n)
    pts = _generate(arrays, 0, False, delta, np.array([float(x) for x in anchor]), stop, budget)
    return PointCloud(np.clip(pts, 0.0, 1.0), delta, anchor, stop)


def planar_cloud(carpet, delta_gen, stop: str = "longest", budget: int = DEFAULT_POINT_BUDGET) -> PointCloud:
    """2D cloud of a planar carpet, in the coordinates of its first plane.

    Graph-directed carpets are followed along their edges; the anchor is the
    centre of the square, so points are within one cylinder of the carpet.
    """
    delta = as_fraction(delta_gen)
    root = carpet.nodes[0]
    maps = [AffineContraction(e.linear, e.translation) for e in carpet.edges]
    arrays = _MapArrays(maps, [e.source for e in carpet.edges], [e.target for e in carpet.edges])
    anchor = np.full(3, 0.5)
    pts = _generate(arrays, root, True, delta, anchor, stop, budget)
    axes = [a for a in range(3) if a != root]
    return PointCloud(np.clip(pts[:, axes], 0.0, 1.0), delta, (Fraction(1, 2),) * 2, stop)


def _grid_side(delta) -> int:
    delta = as_fraction(delta)
    if delta <= 0 or delta > 1 or delta.numerator != 1:
        raise ValidationError(f"grid side must be 1/m for a positive integer m, got {delta}")
    return delta.denominator


def _cell_keys(points: np.ndarray, m: int) -> np.ndarray:
    # shift before scaling, so a cell of side 1/m always lies inside one cell of side 2/m
    cells = np.floor((points + EDGE_NUDGE) * m).astype(np.int64)
    np.clip(cells, 0, m - 1, out=cells)
    key = np.zeros(points.shape[0], dtype=np.int64)
    for a in range(points.shape[1]):
        key = key * m + cells[:, a]
    return np.unique(key)


def grid_count(cloud: PointCloud, delta) -> GridCount:
    """Number of cells of the origin-anchored grid of side ``delta`` that hold a point."""
    delta = as_fraction(delta)
    m = _grid_side(delta)
    if delta < cloud.delta_gen:
        raise ValidationError(f"grid side {delta} is finer than the cloud resolution {cloud.delta_gen}")
    if m ** cloud.points.shape[1] >= 2**62:
        raise ValidationError("grid too fine for 64-bit cell keys")
    pts = cloud.points
    if len(pts) == 0:
        raise ValidationError("empty point cloud")
    chunks = [pts[i:i + CHUNK] for i in range(0, len(pts), CHUNK)]
    workers = min(thread_count(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            keys = list(pool.map(lambda c: _cell_keys(c, m), chunks))
    else:
        keys = [_cell_keys(c, m) for c in chunks]
    return GridCount(delta, int(np.unique(np.concatenate(keys)).shape[0]))


def dim_slope(counts: Sequence[GridCount]) -> SlopeFit:
    """Least-squares slope of log count against -log delta."""
    deltas = {c.delta for c in counts}
    if len(deltas) < 4:
        raise ValidationError("a slope fit needs at least four distinct scales")
    x = np.array([-math.log(c.delta) for c in counts])
    y = np.array([math.log(c.count) for c in counts])
    fit = linregress(x, y)
    return SlopeFit(float(fit.slope), float(fit.stderr), float(fit.intercept))


def theoretical_cover_bound(sys: SpongeSystem, dims, delta, eps: float,
                            budget: int = DEFAULT_STATE_BUDGET) -> float:
    """Sum over the cut set of (a1/a2)**p1 * (a2/a3)**p2 * a3**(-eps), upper-variant dims."""
    from .pressure3d import ModSvfContext

    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)")
    ctx = ModSvfContext.from_system(sys, dims, "upper")
    states = cut_set_states(ctx.family, as_fraction(delta), budget)
    a1, a2, a3, p1, p2 = ctx.ordered_logs(states)
    log_terms = p1 * (a1 - a2) + p2 * (a2 - a3) - eps * a3
    return float(np.sum(states.weight * np.exp(log_terms)))


def boxcount_rows(sys: SpongeSystem, deltas: Sequence, dims=None, eps: float = 0.05,
                  stop: str = "longest") -> list[dict]:
    """CSV rows (delta, count, log_count, theoretical_bound) over the given grid sides."""
    deltas = sorted((as_fraction(d) for d in deltas), reverse=True)
    cloud = generate_cloud(sys, deltas[-1], stop=stop)
    rows = []
    for d in deltas:
        gc = grid_count(cloud, d)
        bound = theoretical_cover_bound(sys, dims, d, eps) if dims is not None else float("nan")
        rows.append({"delta": str(d), "count": gc.count, "log_count": math.log(gc.count),
                     "theoretical_bound": bound})
    return rows
