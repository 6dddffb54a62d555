from __future__ import annotations

from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from systems import (
    any_scaled_permutations,
    corner_cube,
    mixed_diagonal,
    separated_diagonal,
    two_map_s3,
)

from sponge_dim.errors import BudgetExceeded, ValidationError
from sponge_dim.gpm_core import (
    AffineContraction,
    ScaledPermutation,
    SpongeClass,
    SpongeSystem,
    as_fraction,
    boxes_pairwise_disjoint,
    canonical_ordering,
    check_cosc,
    classify,
    compose,
    compose_word,
    cut_set,
    group_name,
    orderings,
    permutation_group,
    singular_values,
    system_from_dict,
    system_to_dict,
    word_linear,
)
from sponge_dim.scenarios import ordered_separated_example, s3_example


def matmul(a, b):
    n = len(a)
    return [[sum(a[i][k] * b[k][j] for k in range(n)) for j in range(n)] for i in range(n)]


def test_as_fraction_accepts_common_spellings():
    assert as_fraction("3/10") == F(3, 10)
    assert as_fraction(0.4) == F(2, 5)
    assert as_fraction(2) == F(2)
    with pytest.raises(ValidationError):
        as_fraction("three")
    with pytest.raises(ValidationError):
        as_fraction(True)


def test_scaled_permutation_validation():
    with pytest.raises(ValidationError):
        ScaledPermutation((0, 0, 1), (1, 1, 1), (F(1, 2),) * 3)
    with pytest.raises(ValidationError):
        ScaledPermutation((0, 1, 2), (1, 2, 1), (F(1, 2),) * 3)
    with pytest.raises(ValidationError):
        ScaledPermutation((0, 1, 2), (1, 1, 1), (F(1, 2), 0, F(1, 2)))


def test_matrix_round_trip_and_column_convention():
    m = ScaledPermutation((2, 0, 1), (1, -1, 1), (F(1, 2), F(1, 3), F(1, 5)))
    dense = m.matrix()
    # column j holds its entry in row perm[j]
    assert dense[2][0] == F(1, 2) and dense[0][1] == F(-1, 3) and dense[1][2] == F(1, 5)
    assert ScaledPermutation.from_matrix(dense) == m
    with pytest.raises(ValidationError):
        ScaledPermutation.from_matrix([[1, 1, 0], [0, 0, 1], [0, 0, 0]])


@settings(max_examples=200)
@given(any_scaled_permutations(), any_scaled_permutations())
def test_compose_matches_dense_product(a, b):
    assert compose(a, b).matrix() == matmul(a.matrix(), b.matrix())
    assert (a @ b) == compose(a, b)


@settings(max_examples=200)
@given(any_scaled_permutations())
def test_orderings_sort_scales(m):
    found = orderings(m)
    assert canonical_ordering(m) in found
    for sigma in found:
        assert [m.scales[a] for a in sigma] == sorted(m.scales, reverse=True)
    assert singular_values(m).as_tuple() == tuple(sorted(m.scales, reverse=True))


def test_orderings_with_ties():
    m = ScaledPermutation.diagonal(F(1, 3), F(1, 2), F(1, 3))
    assert orderings(m) == {(1, 0, 2), (1, 2, 0)}
    assert canonical_ordering(m) == (1, 0, 2)


def test_affine_apply_then_and_fixed_point():
    sys = two_map_s3()
    f, g = sys.maps
    x = (F(1, 3), F(2, 7), F(5, 11))
    assert f.then(g).apply(x) == f.apply(g.apply(x))
    assert compose_word(sys, (0, 1)).apply(x) == f.apply(g.apply(x))
    assert compose_word(sys, ()).apply(x) == x
    for h in sys.maps:
        p = h.fixed_point()
        assert h.apply(p) == p


def test_image_box_is_image_of_corners():
    f = two_map_s3().maps[1]
    box = f.image_box(((0, 1), (0, 1), (0, 1)))
    corners = [f.apply((x, y, z)) for x in (0, 1) for y in (0, 1) for z in (0, 1)]
    for axis in range(3):
        assert box[axis] == (min(c[axis] for c in corners), max(c[axis] for c in corners))


def test_sponge_system_validation():
    lin = ScaledPermutation.diagonal(F(1, 2), F(1, 2), F(1, 2))
    inside = AffineContraction(lin, (0, 0, 0))
    with pytest.raises(ValidationError):
        SpongeSystem((inside,))
    with pytest.raises(ValidationError):
        SpongeSystem((inside, AffineContraction(lin, (F(3, 4), 0, 0))))
    with pytest.raises(ValidationError):
        SpongeSystem((inside, AffineContraction(ScaledPermutation.diagonal(1, F(1, 2), F(1, 2)), (0, 0, 0))))


def test_alpha_min_max():
    sys = two_map_s3()
    assert sys.alpha_min == F(1, 7)
    assert sys.alpha_max == F(1, 2)


@pytest.mark.parametrize(
    "build, expected",
    [
        (two_map_s3, SpongeClass.S3),
        (s3_example, SpongeClass.S3),
        (corner_cube, SpongeClass.ORDERED_SEPARATED),
        (separated_diagonal, SpongeClass.ORDERED_SEPARATED),
        (ordered_separated_example, SpongeClass.ORDERED_SEPARATED),
        (mixed_diagonal, SpongeClass.GENERAL_DIAGONAL),
    ],
)
def test_classify(build, expected):
    assert classify(build()) is expected


def test_classify_ordered_but_not_separated():
    lin = ScaledPermutation.diagonal(F(1, 2), F(1, 3), F(1, 4))
    # two maps sharing the same x-interval but different y-intervals that overlap in projection
    maps = (AffineContraction(lin, (0, 0, 0)), AffineContraction(lin, (F(1, 4), F(1, 2), F(1, 2))))
    assert classify(SpongeSystem(maps)) is SpongeClass.ORDERED


def test_classify_s2_partially_ordered_and_general():
    diag = AffineContraction(ScaledPermutation.diagonal(F(1, 2), F(1, 2), F(1, 4)), (0, 0, 0))
    swap = AffineContraction(ScaledPermutation((1, 0, 2), (1, 1, 1), (F(1, 3), F(1, 3), F(1, 4))), (F(1, 2), F(1, 2), 0))
    assert classify(SpongeSystem((diag, swap))) is SpongeClass.S2_PARTIALLY_ORDERED
    cyc = AffineContraction(ScaledPermutation((1, 2, 0), (1, 1, 1), (F(1, 3),) * 3), (F(1, 2), F(1, 2), F(1, 2)))
    assert classify(SpongeSystem((diag, cyc))) is SpongeClass.GENERAL


def test_permutation_group():
    assert group_name(permutation_group(two_map_s3())) == "S3"
    assert group_name(permutation_group(corner_cube())) == "trivial"
    cyc = AffineContraction(ScaledPermutation((1, 2, 0), (1, 1, 1), (F(1, 3),) * 3), (0, 0, 0))
    diag = AffineContraction(ScaledPermutation.diagonal(F(1, 3), F(1, 3), F(1, 3)), (F(2, 3),) * 3)
    assert group_name(permutation_group(SpongeSystem((cyc, diag)))) == "C3"


def test_cosc():
    assert check_cosc(corner_cube())
    assert check_cosc(two_map_s3())
    lin = ScaledPermutation.diagonal(F(1, 2), F(1, 2), F(1, 2))
    overlapping = SpongeSystem((AffineContraction(lin, (0, 0, 0)), AffineContraction(lin, (F(1, 4), F(1, 4), F(1, 4)))))
    assert not check_cosc(overlapping)
    # a cuboid the images leave
    assert not check_cosc(corner_cube(), [(0, F(1, 2)), (0, 1), (0, 1)])


@settings(max_examples=300)
@given(st.lists(st.tuples(*[st.tuples(st.integers(0, 8), st.integers(1, 4))] * 2), min_size=1, max_size=12))
def test_boxes_pairwise_disjoint_matches_brute_force(raw):
    boxes = [tuple((F(lo), F(lo + w)) for lo, w in b) for b in raw]

    def overlap(p, q):
        return all(p[a][0] < q[a][1] and q[a][0] < p[a][1] for a in range(2))

    brute = not any(overlap(boxes[i], boxes[j]) for i in range(len(boxes)) for j in range(i + 1, len(boxes)))
    assert boxes_pairwise_disjoint(boxes) == brute


def test_word_linear_and_range():
    sys = two_map_s3()
    assert word_linear(sys, (0, 1)) == compose(sys.maps[0].linear, sys.maps[1].linear)
    with pytest.raises(ValidationError):
        word_linear(sys, (2,))


def test_cut_set_small_case():
    sys = corner_cube()
    cs = cut_set(sys, F(1, 9))
    assert len(cs) == 64
    assert all(len(w) == 2 for w in cs.words)
    assert list(cs.words) == sorted(cs.words)
    with pytest.raises(ValidationError):
        cut_set(sys, 1)
    with pytest.raises(BudgetExceeded):
        cut_set(sys, F(1, 3**6), max_words=100)


def test_system_dict_round_trip():
    sys = two_map_s3()
    data = system_to_dict(sys)
    assert data["maps"][0]["scales"] == ["1/2", "1/4", "1/5"]
    assert system_from_dict(data) == sys
    with pytest.raises(ValidationError):
        system_from_dict({"maps": [{"perm": [0, 1, 2]}] * 2})
