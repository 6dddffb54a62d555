"""Exact model of iterated function systems built from generalised permutation matrices.

A generalised permutation matrix has one nonzero entry per row and column, so
it is stored as an axis permutation together with a sign and a positive scale
for every source axis.  All arithmetic in this module is exact
(``fractions.Fraction``); floating point only appears downstream in pressure
root finding and box counting.

Conventions
-----------
* ``perm[j]`` is the row holding the nonzero entry of column ``j``: source axis
  ``j`` is sent to target axis ``perm[j]``.  ``signs`` and ``scales`` are indexed
  by source axis.
* Words are tuples of 0-based map indices, composed left to right:
  ``S_(i1, i2) = S_i1 o S_i2``.  The empty word is the identity.
* Orderings are tuples of axes sorted by nonincreasing scale.  When scales tie
  a map has several orderings; the canonical one is the lexicographically
  smallest (see :func:`canonical_ordering`).
"""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import cached_property, reduce
from typing import Iterable, Mapping, Sequence

from .errors import BudgetExceeded, ValidationError

Word = tuple[int, ...]
Interval = tuple[Fraction, Fraction]
Box = tuple[Interval, ...]

DEFAULT_CUT_SET_BUDGET = 2_000_000


def as_fraction(value) -> Fraction:
    """Convert ints, decimal strings, "p/q" strings and floats to a Fraction.

    Floats go through ``repr`` so that ``0.4`` becomes ``2/5`` rather than the
    binary expansion of the nearest double.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValidationError(f"not a rational number: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"not a rational number: {value!r}") from exc
    raise ValidationError(f"not a rational number: {value!r}")


def unit_box(dim: int = 3) -> Box:
    return tuple((Fraction(0), Fraction(1)) for _ in range(dim))


@dataclass(frozen=True)
class ScaledPermutation:
    """Signed, scaled permutation matrix.

    The matrix has entry ``signs[j] * scales[j]`` at row ``perm[j]``, column ``j``.
    """

    perm: tuple[int, ...]
    signs: tuple[int, ...]
    scales: tuple[Fraction, ...]

    def __post_init__(self):
        perm = tuple(int(p) for p in self.perm)
        signs = tuple(int(s) for s in self.signs)
        scales = tuple(as_fraction(s) for s in self.scales)
        dim = len(perm)
        if sorted(perm) != list(range(dim)):
            raise ValidationError(f"perm {perm} is not a permutation of 0..{dim - 1}")
        if len(signs) != dim or len(scales) != dim:
            raise ValidationError("perm, signs and scales must have equal length")
        if any(s not in (1, -1) for s in signs):
            raise ValidationError(f"signs must be +1 or -1, got {signs}")
        if any(s <= 0 for s in scales):
            raise ValidationError(f"scales must be positive, got {scales}")
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "scales", scales)

    @classmethod
    def identity(cls, dim: int = 3) -> "ScaledPermutation":
        return cls(tuple(range(dim)), (1,) * dim, (Fraction(1),) * dim)

    @classmethod
    def diagonal(cls, *entries) -> "ScaledPermutation":
        """Diagonal matrix with the given (signed) entries."""
        values = [as_fraction(e) for e in entries]
        return cls(
            tuple(range(len(values))),
            tuple(1 if v > 0 else -1 for v in values),
            tuple(abs(v) for v in values),
        )

    @classmethod
    def from_matrix(cls, rows: Sequence[Sequence]) -> "ScaledPermutation":
        """Build from a dense square matrix with one nonzero entry per row and column."""
        matrix = [[as_fraction(x) for x in row] for row in rows]
        dim = len(matrix)
        if any(len(row) != dim for row in matrix):
            raise ValidationError("matrix must be square")
        perm, signs, scales = [], [], []
        for j in range(dim):
            nonzero = [r for r in range(dim) if matrix[r][j] != 0]
            if len(nonzero) != 1:
                raise ValidationError(f"column {j} must have exactly one nonzero entry")
            value = matrix[nonzero[0]][j]
            perm.append(nonzero[0])
            signs.append(1 if value > 0 else -1)
            scales.append(abs(value))
        return cls(tuple(perm), tuple(signs), tuple(scales))

    @property
    def dim(self) -> int:
        return len(self.perm)

    def matrix(self) -> list[list[Fraction]]:
        out = [[Fraction(0)] * self.dim for _ in range(self.dim)]
        for j, row in enumerate(self.perm):
            out[row][j] = self.signs[j] * self.scales[j]
        return out

    def is_diagonal(self) -> bool:
        return all(p == j for j, p in enumerate(self.perm))

    def __matmul__(self, other: "ScaledPermutation") -> "ScaledPermutation":
        return compose(self, other)


def compose(a: ScaledPermutation, b: ScaledPermutation) -> ScaledPermutation:
    """Matrix product ``a @ b`` of two generalised permutation matrices."""
    if a.dim != b.dim:
        raise ValidationError("dimension mismatch in compose")
    perm = tuple(a.perm[b.perm[j]] for j in range(b.dim))
    signs = tuple(b.signs[j] * a.signs[b.perm[j]] for j in range(b.dim))
    scales = tuple(b.scales[j] * a.scales[b.perm[j]] for j in range(b.dim))
    return ScaledPermutation(perm, signs, scales)


@dataclass(frozen=True)
class AffineContraction:
    """The map ``x -> linear @ x + translation``."""

    linear: ScaledPermutation
    translation: tuple[Fraction, ...]

    def __post_init__(self):
        translation = tuple(as_fraction(t) for t in self.translation)
        if len(translation) != self.linear.dim:
            raise ValidationError("translation length does not match the linear part")
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls, dim: int = 3) -> "AffineContraction":
        return cls(ScaledPermutation.identity(dim), (Fraction(0),) * dim)

    @property
    def dim(self) -> int:
        return self.linear.dim

    def apply(self, point: Sequence) -> tuple[Fraction, ...]:
        out = list(self.translation)
        lin = self.linear
        for j, x in enumerate(point):
            out[lin.perm[j]] += lin.signs[j] * lin.scales[j] * as_fraction(x)
        return tuple(out)

    def then(self, other: "AffineContraction") -> "AffineContraction":
        """Return ``self o other`` (apply ``other`` first)."""
        return AffineContraction(compose(self.linear, other.linear), self.apply(other.translation))

    def image_box(self, box: Box) -> Box:
        """Image of an axis-aligned box, again an axis-aligned box."""
        lin = self.linear
        out: list[Interval | None] = [None] * self.dim
        for j, (lo, hi) in enumerate(box):
            a = lin.signs[j] * lin.scales[j]
            t = self.translation[lin.perm[j]]
            ends = (a * lo + t, a * hi + t)
            out[lin.perm[j]] = (min(ends), max(ends))
        return tuple(out)  # type: ignore[return-value]

    def fixed_point(self) -> tuple[Fraction, ...]:
        """Exact fixed point, solved cycle by cycle of the axis permutation."""
        lin = self.linear
        x: list[Fraction | None] = [None] * self.dim
        for start in range(self.dim):
            if x[start] is not None:
                continue
            cycle = [start]
            while lin.perm[cycle[-1]] != start:
                cycle.append(lin.perm[cycle[-1]])
            # going round the cycle, x[start] = gain * x[start] + offset
            gain, offset = Fraction(1), Fraction(0)
            for j in cycle:
                c = lin.signs[j] * lin.scales[j]
                gain, offset = c * gain, c * offset + self.translation[lin.perm[j]]
            if gain == 1:
                raise ValidationError("map has no unique fixed point")
            x[start] = offset / (1 - gain)
            for j in cycle[:-1]:
                x[lin.perm[j]] = lin.signs[j] * lin.scales[j] * x[j] + self.translation[lin.perm[j]]
        return tuple(x)  # type: ignore[return-value]


@dataclass(frozen=True)
class SingularValues:
    alpha1: Fraction
    alpha2: Fraction
    alpha3: Fraction

    def as_tuple(self) -> tuple[Fraction, Fraction, Fraction]:
        return (self.alpha1, self.alpha2, self.alpha3)


def singular_values(m: ScaledPermutation) -> SingularValues:
    """Singular values of a 3x3 generalised permutation matrix: its scales, sorted."""
    if m.dim != 3:
        raise ValidationError("singular_values expects a 3x3 matrix")
    a1, a2, a3 = sorted(m.scales, reverse=True)
    return SingularValues(a1, a2, a3)


def orderings(m: ScaledPermutation) -> frozenset[tuple[int, ...]]:
    """All axis orders under which the per-axis scales are nonincreasing."""
    s = m.scales
    return frozenset(
        sigma
        for sigma in itertools.permutations(range(m.dim))
        if all(s[sigma[k]] >= s[sigma[k + 1]] for k in range(m.dim - 1))
    )


def canonical_ordering(m: ScaledPermutation) -> tuple[int, ...]:
    """Lexicographically smallest ordering (a stable sort by decreasing scale)."""
    return tuple(sorted(range(m.dim), key=lambda j: -m.scales[j]))


class SpongeClass(str, Enum):
    S3 = "S3"
    S2_PARTIALLY_ORDERED = "S2PartiallyOrdered"
    ORDERED = "Ordered"
    ORDERED_SEPARATED = "OrderedSeparated"
    GENERAL_DIAGONAL = "GeneralDiagonal"
    GENERAL = "General"


def _check_unit_containment(f: AffineContraction, index: int) -> None:
    for lo, hi in f.image_box(unit_box(f.dim)):
        if lo < 0 or hi > 1:
            raise ValidationError(f"map {index} does not send [0,1]^{f.dim} into itself")


@dataclass(frozen=True)
class SpongeSystem:
    """An IFS on [0,1]^3 whose linear parts are generalised permutation matrices."""

    maps: tuple[AffineContraction, ...]

    def __post_init__(self):
        maps = tuple(self.maps)
        if len(maps) < 2:
            raise ValidationError("a sponge system needs at least two maps")
        for i, f in enumerate(maps):
            if f.dim != 3:
                raise ValidationError(f"map {i} is not three dimensional")
            if any(s >= 1 for s in f.linear.scales):
                raise ValidationError(f"map {i} is not a contraction (all scales must be < 1)")
            _check_unit_containment(f, i)
        object.__setattr__(self, "maps", maps)

    def __len__(self) -> int:
        return len(self.maps)

    @property
    def dim(self) -> int:
        return 3

    @property
    def linear_parts(self) -> tuple[ScaledPermutation, ...]:
        return tuple(f.linear for f in self.maps)

    @cached_property
    def group(self) -> frozenset[tuple[int, ...]]:
        return permutation_group(self)

    @cached_property
    def sponge_class(self) -> SpongeClass:
        return classify(self)

    @cached_property
    def alpha_min(self) -> Fraction:
        return min(min(f.linear.scales) for f in self.maps)

    @cached_property
    def alpha_max(self) -> Fraction:
        return max(max(f.linear.scales) for f in self.maps)


def _perm_product(p: tuple[int, ...], q: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(p[q[j]] for j in range(len(q)))


def permutation_group(sys: SpongeSystem | Iterable[ScaledPermutation]) -> frozenset[tuple[int, ...]]:
    """Closure of the maps' axis permutations under composition."""
    linears = sys.linear_parts if isinstance(sys, SpongeSystem) else tuple(sys)
    gens = {m.perm for m in linears}
    dim = len(next(iter(gens)))
    group = {tuple(range(dim))}
    frontier = set(group)
    while frontier:
        new = {_perm_product(g, h) for g in frontier for h in gens} - group
        group |= new
        frontier = new
    return frozenset(group)


def group_name(group: frozenset[tuple[int, ...]]) -> str:
    return {1: "trivial", 2: "C2", 3: "C3", 6: "S3"}[len(group)]


def _unit_interval_image(f: AffineContraction, axis: int) -> Interval:
    """Image of (0,1) in coordinate ``axis`` for a map that fixes that axis."""
    lin = f.linear
    a = lin.signs[axis] * lin.scales[axis]
    t = f.translation[axis]
    return (min(t, a + t), max(t, a + t))


def _disjoint_or_equal(boxes: Sequence[Box]) -> bool:
    return boxes_pairwise_disjoint(sorted(set(boxes)))


def _is_separated(sys: SpongeSystem, sigma: tuple[int, ...]) -> bool:
    planar = [tuple(_unit_interval_image(f, a) for a in sigma[:2]) for f in sys.maps]
    line = [(_unit_interval_image(f, sigma[0]),) for f in sys.maps]
    return _disjoint_or_equal(planar) and _disjoint_or_equal(line)


def _is_s2_partially_ordered(linears: Sequence[ScaledPermutation]) -> bool:
    for fixed in range(3):
        u, v = (a for a in range(3) if a != fixed)
        swap = tuple(v if j == u else u if j == v else j for j in range(3))
        kinds = set()
        for m in linears:
            if m.is_diagonal():
                kinds.add("diag")
            elif m.perm == swap:
                kinds.add("swap")
            else:
                break
            if min(m.scales[u], m.scales[v]) < m.scales[fixed]:
                break
        else:
            if kinds == {"diag", "swap"}:
                return True
    return False


def classify(sys: SpongeSystem) -> SpongeClass:
    """Assign the most specific sponge class.

    Precedence: OrderedSeparated > Ordered > S2PartiallyOrdered > S3 >
    GeneralDiagonal > General.  The S2 partially ordered shape is accepted for
    whichever axis is left fixed by the swap maps.
    """
    linears = sys.linear_parts
    if all(m.is_diagonal() for m in linears):
        common = frozenset.intersection(*(orderings(m) for m in linears))
        if not common:
            return SpongeClass.GENERAL_DIAGONAL
        if any(_is_separated(sys, sigma) for sigma in sorted(common)):
            return SpongeClass.ORDERED_SEPARATED
        return SpongeClass.ORDERED
    if _is_s2_partially_ordered(linears):
        return SpongeClass.S2_PARTIALLY_ORDERED
    if len(permutation_group(linears)) == 6:
        return SpongeClass.S3
    return SpongeClass.GENERAL


def _overlapping_pairs(boxes: Sequence[Box], axis: int) -> int:
    los = sorted(b[axis][0] for b in boxes)
    his = sorted(b[axis][1] for b in boxes)
    total = 0
    for b in boxes:
        total += bisect.bisect_left(los, b[axis][1]) - bisect.bisect_right(his, b[axis][0]) - 1
    return total // 2


def boxes_pairwise_disjoint(boxes: Sequence[Box]) -> bool:
    """True iff the open boxes are pairwise disjoint.

    Sweeps along the axis with the fewest overlapping interval pairs, so the
    typical slab-like configurations cost O(n log n) instead of O(n^2).
    """
    n = len(boxes)
    if n < 2:
        return True
    dim = len(boxes[0])
    axis = min(range(dim), key=lambda a: _overlapping_pairs(boxes, a))
    order = sorted(range(n), key=lambda i: boxes[i][axis][0])
    others = [a for a in range(dim) if a != axis]
    for pos in range(n):
        bi = boxes[order[pos]]
        for nxt in range(pos + 1, n):
            bj = boxes[order[nxt]]
            if bj[axis][0] >= bi[axis][1]:
                break
            if all(bi[a][0] < bj[a][1] and bj[a][0] < bi[a][1] for a in others):
                return False
    return True


def images_satisfy_osc(maps: Sequence[AffineContraction], box: Box) -> bool:
    """Open set condition for an axis-aligned box: images disjoint and inside it."""
    for lo, hi in box:
        if not lo < hi:
            raise ValidationError("the open cuboid must have positive side lengths")
    images = [f.image_box(box) for f in maps]
    for image in images:
        if any(ilo < lo or ihi > hi for (ilo, ihi), (lo, hi) in zip(image, box)):
            return False
    return boxes_pairwise_disjoint(images)


def check_cosc(sys: SpongeSystem, cuboid: Sequence[Sequence] | None = None) -> bool:
    """Cuboidal open set condition for the open cuboid ``cuboid`` (default (0,1)^3)."""
    box = unit_box(3) if cuboid is None else tuple((as_fraction(lo), as_fraction(hi)) for lo, hi in cuboid)
    if len(box) != 3:
        raise ValidationError("cuboid must have three intervals")
    return images_satisfy_osc(sys.maps, box)


def compose_word(sys: SpongeSystem, word: Sequence[int]) -> AffineContraction:
    """``S_word``, composed left to right; the empty word is the identity."""
    for i in word:
        if not 0 <= i < len(sys.maps):
            raise ValidationError(f"map index {i} out of range")
    return reduce(lambda acc, i: acc.then(sys.maps[i]), word, AffineContraction.identity(3))


def word_linear(sys: SpongeSystem, word: Sequence[int]) -> ScaledPermutation:
    """Linear part of ``S_word``."""
    for i in word:
        if not 0 <= i < len(sys.maps):
            raise ValidationError(f"map index {i} out of range")
    return reduce(lambda acc, i: compose(acc, sys.maps[i].linear), word, ScaledPermutation.identity(3))


@dataclass(frozen=True)
class CutSet:
    delta: Fraction
    words: tuple[Word, ...]

    def __len__(self) -> int:
        return len(self.words)


def cut_set(sys: SpongeSystem, delta, max_words: int = DEFAULT_CUT_SET_BUDGET) -> CutSet:
    """Words where the smallest singular value first drops to ``delta`` or below.

    Depth-first from the empty word (whose smallest singular value counts as 1);
    words come out in lexicographic order.
    """
    delta = as_fraction(delta)
    if not 0 < delta < 1:
        raise ValidationError("cut set threshold must satisfy 0 < delta < 1")
    linears = sys.linear_parts
    n = len(linears)
    words: list[Word] = []
    stack: list[tuple[Word, ScaledPermutation]] = [((), ScaledPermutation.identity(3))]
    while stack:
        word, lin = stack.pop()
        if word and min(lin.scales) <= delta:
            words.append(word)
            if len(words) > max_words:
                raise BudgetExceeded(f"cut set at delta={delta} exceeds {max_words} words")
            continue
        for j in reversed(range(n)):
            stack.append((word + (j,), compose(lin, linears[j])))
    return CutSet(delta, tuple(words))


# -- JSON-friendly conversion -------------------------------------------------


def _fraction_text(x: Fraction) -> str:
    return str(x)


def map_to_dict(f: AffineContraction) -> dict:
    lin = f.linear
    return {
        "perm": list(lin.perm),
        "signs": list(lin.signs),
        "scales": [_fraction_text(s) for s in lin.scales],
        "translation": [_fraction_text(t) for t in f.translation],
    }


def map_from_dict(data: Mapping) -> AffineContraction:
    try:
        lin = ScaledPermutation(tuple(data["perm"]), tuple(data["signs"]), tuple(data["scales"]))
        return AffineContraction(lin, tuple(data["translation"]))
    except KeyError as exc:
        raise ValidationError(f"map is missing field {exc.args[0]!r}") from exc
    except TypeError as exc:
        raise ValidationError(f"malformed map: {exc}") from exc


def system_to_dict(sys: SpongeSystem) -> dict:
    return {"maps": [map_to_dict(f) for f in sys.maps]}


def system_from_dict(data: Mapping) -> SpongeSystem:
    if "maps" not in data:
        raise ValidationError("system config needs a 'maps' list")
    maps = []
    for i, entry in enumerate(data["maps"]):
        try:
            maps.append(map_from_dict(entry))
        except ValidationError as exc:
            raise ValidationError(f"maps[{i}]: {exc}") from exc
    return SpongeSystem(tuple(maps))
