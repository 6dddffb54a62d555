"""Small sponge systems and random generators shared by the tests."""

from __future__ import annotations

import itertools
from fractions import Fraction as F

from hypothesis import strategies as st

from sponge_dim.gpm_core import AffineContraction, ScaledPermutation, SpongeSystem


def two_map_s3() -> SpongeSystem:
    """Two maps whose permutations generate S3 (the non-multiplicativity example)."""
    A1 = AffineContraction(ScaledPermutation((0, 2, 1), (1, 1, -1), (F(1, 2), F(1, 4), F(1, 5))), (0, F(1, 5), 0))
    A2 = AffineContraction(ScaledPermutation((2, 1, 0), (1, 1, -1), (F(1, 5), F(1, 7), F(1, 3))),
                           (1, F(6, 7), F(4, 5)))
    return SpongeSystem((A1, A2))


def corner_cube() -> SpongeSystem:
    maps = []
    for x, y, z in itertools.product((0, F(2, 3)), repeat=3):
        maps.append(AffineContraction(ScaledPermutation.diagonal(F(1, 3), F(1, 3), F(1, 3)), (x, y, z)))
    return SpongeSystem(tuple(maps))


def separated_diagonal() -> SpongeSystem:
    """Four diag(1/2, 1/3, 1/4) maps in distinct rows, columns and layers."""
    cells = [(0, 0, 0), (1, 1, 1), (0, 2, 2), (1, 0, 3)]
    lin = ScaledPermutation.diagonal(F(1, 2), F(1, 3), F(1, 4))
    return SpongeSystem(tuple(AffineContraction(lin, (F(a, 2), F(b, 3), F(c, 4))) for a, b, c in cells))


def mixed_diagonal() -> SpongeSystem:
    """Diagonal maps with different orderings (a general diagonal system)."""
    rows = [
        ((F(1, 2), F(1, 3), F(1, 4)), (0, 0, 0)),
        ((F(1, 4), F(1, 2), F(1, 3)), (F(1, 2), F(1, 2), 0)),
        ((F(1, 3), F(1, 4), F(1, 2)), (0, F(2, 3), F(1, 2))),
    ]
    return SpongeSystem(tuple(AffineContraction(ScaledPermutation.diagonal(*sc), t) for sc, t in rows))


def _place(lin: ScaledPermutation) -> AffineContraction:
    """Translate so the image of the unit cube sits at the origin corner."""
    t = [F(0)] * 3
    for j in range(3):
        if lin.signs[j] < 0:
            t[lin.perm[j]] = lin.scales[j]
    return AffineContraction(lin, tuple(t))


perms = st.permutations([0, 1, 2]).map(tuple)
signs = st.tuples(*[st.sampled_from([1, -1])] * 3)


def scales(max_den: int = 9):
    return st.tuples(*[st.integers(2, max_den).map(lambda q: F(1, q))] * 3)


def scaled_permutations(max_den: int = 9):
    return st.builds(ScaledPermutation, perms, signs, scales(max_den))


def any_scaled_permutations():
    """Scales p/q in (0, 1), not only unit fractions."""
    ratio = st.tuples(st.integers(1, 30), st.integers(1, 30)).map(lambda pq: F(min(pq), max(pq) + 1))
    return st.builds(ScaledPermutation, perms, signs, st.tuples(ratio, ratio, ratio))


def sponge_systems(min_maps: int = 2, max_maps: int = 3, max_den: int = 5):
    return st.lists(scaled_permutations(max_den), min_size=min_maps, max_size=max_maps).map(
        lambda lins: SpongeSystem(tuple(_place(m) for m in lins)))
