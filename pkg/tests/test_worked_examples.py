"""Small worked examples for each operation, with hand-derivable answers."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction as F

import numpy as np
import pytest
from systems import corner_cube, separated_diagonal, two_map_s3

from sponge_dim import scenarios
from sponge_dim.boxcount import (
    GridCount,
    dim_slope,
    generate_cloud,
    grid_count,
    theoretical_cover_bound,
)
from sponge_dim.errors import SearchFailed, ValidationError
from sponge_dim.gpm_core import (
    AffineContraction,
    ScaledPermutation,
    SpongeClass,
    SpongeSystem,
    check_cosc,
    classify,
    compose,
    compose_word,
    cut_set,
    orderings,
    permutation_group,
    singular_values,
)
from sponge_dim.pressure3d import (
    ModSvfContext,
    affinity_dimension,
    big_psi,
    build_subsystem,
    mod_svf,
    pressure,
    root_s0,
)
from sponge_dim.projections import (
    PlanarCarpetSystem,
    ProjectionDims,
    axis_graph,
    graph_similarity_dimension,
    planar_carpet_dimension,
    projection_dims,
)
from sponge_dim.scenarios import (
    DimensionDropParams,
    baranski_maps,
    closed_form_s0,
    drop_system,
    estimate_beta_property,
    run_planar_discontinuity,
    search_drop_params,
)


def diag_system(scale_rows_and_shifts):
    return SpongeSystem(tuple(AffineContraction(ScaledPermutation.diagonal(*sc), t) for sc, t in scale_rows_and_shifts))


def full_tiling(k=2):
    """All k^3 cubes of side 1/k."""
    r = F(1, k)
    return diag_system([((r, r, r), (F(i, k), F(j, k), F(l, k))) for i, j, l in itertools.product(range(k), repeat=3)])


def full_shadow_system():
    """Eight diag(1/2, 1/2, 1/4) maps whose three planar shadows tile their squares."""
    rows = []
    for l in range(4):
        pairs = [(0, 0), (1, 1)] if l < 2 else [(0, 1), (1, 0)]
        for i, j in pairs:
            rows.append(((F(1, 2), F(1, 2), F(1, 4)), (F(i, 2), F(j, 2), F(l, 4))))
    return diag_system(rows)


def s2_partially_ordered():
    diag = AffineContraction(ScaledPermutation.diagonal(F(1, 2), F(1, 3), F(1, 4)), (0, 0, 0))
    swap = AffineContraction(ScaledPermutation((1, 0, 2), (1, 1, 1), (F(1, 3), F(1, 2), F(1, 4))), (F(1, 2), F(1, 2), F(1, 2)))
    return SpongeSystem((diag, swap))


# -- composition and singular values -----------------------------------------------------


def test_identity_composition():
    a1 = two_map_s3().maps[0].linear
    assert compose(ScaledPermutation.identity(), a1) == a1
    assert compose(a1, ScaledPermutation.identity()) == a1


def test_products_match_the_displayed_matrices():
    a1, a2 = (f.linear for f in two_map_s3().maps)
    assert compose(a1, a2).matrix() == [[0, 0, F(-1, 6)], [F(-1, 25), 0, 0], [0, F(1, 28), 0]]
    assert compose(a2, a1).matrix() == [[0, F(-1, 12), 0], [0, 0, F(-1, 35)], [F(1, 10), 0, 0]]


def test_compose_word_cases():
    sys = two_map_s3()
    assert compose_word(sys, ()) == AffineContraction.identity()
    assert compose_word(sys, (0,)) == sys.maps[0]
    assert compose_word(sys, (0, 1)).linear == compose(sys.maps[0].linear, sys.maps[1].linear)


def test_singular_value_examples():
    assert singular_values(ScaledPermutation.diagonal(F(1, 2), F(1, 3), F(1, 4))).as_tuple() == (F(1, 2), F(1, 3), F(1, 4))
    sys = two_map_s3()
    assert singular_values(compose(sys.maps[0].linear, sys.maps[1].linear)).as_tuple() == (F(1, 6), F(1, 25), F(1, 28))
    assert singular_values(compose(sys.maps[1].linear, sys.maps[0].linear)).as_tuple() == (F(1, 10), F(1, 12), F(1, 35))


def test_ordering_examples():
    assert orderings(ScaledPermutation.diagonal(F(1, 2), F(1, 3), F(1, 4))) == {(0, 1, 2)}
    assert len(orderings(ScaledPermutation.diagonal(F(1, 2), F(1, 2), F(1, 4)))) == 2
    assert orderings(two_map_s3().maps[0].linear) == {(0, 1, 2)}


# -- groups, classes, COSC, cut sets -------------------------------------------------------


def test_group_and_class_examples():
    assert len(permutation_group(separated_diagonal())) == 1
    assert len(permutation_group(s2_partially_ordered())) == 2
    assert len(permutation_group(two_map_s3())) == 6
    assert classify(s2_partially_ordered()) is SpongeClass.S2_PARTIALLY_ORDERED
    assert classify(drop_system(DimensionDropParams.figure())) is SpongeClass.GENERAL_DIAGONAL
    ordered = diag_system([((F(1, 2), F(1, 3), F(1, 4)), (0, 0, 0)), ((F(1, 3), F(1, 4), F(1, 5)), (F(1, 4), F(1, 2), F(1, 2)))])
    assert classify(ordered) is SpongeClass.ORDERED


def test_cosc_examples():
    lin = ScaledPermutation.diagonal(F(1, 2), F(1, 2), F(1, 2))
    same = AffineContraction(lin, (0, 0, 0))
    assert not check_cosc(SpongeSystem((same, same)))
    assert check_cosc(drop_system(DimensionDropParams.figure()))
    face = SpongeSystem((same, AffineContraction(lin, (F(1, 2), 0, 0))))
    assert check_cosc(face)


def test_cut_set_examples():
    half = ScaledPermutation.diagonal(F(1, 2), F(1, 2), F(1, 2))
    two = SpongeSystem((AffineContraction(half, (0, 0, 0)), AffineContraction(half, (F(1, 2), F(1, 2), F(1, 2)))))
    assert set(cut_set(two, F(1, 4)).words) == {(0, 0), (0, 1), (1, 0), (1, 1)}

    a = AffineContraction(ScaledPermutation.diagonal(F(1, 2), F(1, 2), F(1, 2)), (0, 0, 0))
    b = AffineContraction(ScaledPermutation.diagonal(F(1, 8), F(1, 8), F(1, 8)), (F(7, 8), F(7, 8), F(7, 8)))
    words = set(cut_set(SpongeSystem((a, b)), F(1, 8)).words)
    assert words == {(1,), (0, 1), (0, 0, 1), (0, 0, 0)}

    sys = two_map_s3()
    largest_a3 = max(min(f.linear.scales) for f in sys.maps)
    assert cut_set(sys, largest_a3).words == ((0,), (1,))


# -- projections ------------------------------------------------------------------------------


def test_axis_graph_components():
    assert [set(c) for c in axis_graph(separated_diagonal()).components()] == [{0}, {1}, {2}]
    assert [set(c) for c in axis_graph(two_map_s3()).components()] == [{0, 1, 2}]
    assert [set(c) for c in axis_graph(s2_partially_ordered()).components()] == [{0, 1}, {2}]


def test_graph_similarity_examples():
    single = axis_graph(diag_system([((F(3, 5), F(1, 2), F(1, 2)), (0, 0, 0)),
                                     ((F(1, 5), F(1, 2), F(1, 2)), (F(4, 5), F(1, 2), F(1, 2)))]))
    t = graph_similarity_dimension(single, frozenset({0}))
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if 0.6**mid + 0.2**mid > 1 else (lo, mid)
    assert t == pytest.approx(lo, abs=1e-10)
    assert t == pytest.approx(DimensionDropParams.figure().t, abs=1e-10)

    thirds = axis_graph(diag_system([((F(1, 3),) * 3, (F(i, 3),) * 3) for i in range(3)]))
    assert graph_similarity_dimension(thirds, frozenset({0})) == pytest.approx(1.0, abs=1e-12)

    # symmetric 3-node graph: two maps, each a 3-cycle with ratio 1/4 on every edge
    r = F(1, 4)
    cyc = ScaledPermutation((1, 2, 0), (1, 1, 1), (r, r, r))
    sym = SpongeSystem((AffineContraction(cyc, (0, 0, 0)), AffineContraction(cyc, (F(3, 4),) * 3)))
    g = axis_graph(sym)
    assert graph_similarity_dimension(g, frozenset({0, 1, 2})) == pytest.approx(min(1.0, math.log(2) / math.log(4)), abs=1e-12)


def test_planar_dimension_examples():
    drop_carpet = PlanarCarpetSystem.from_maps2d([
        AffineContraction(ScaledPermutation.diagonal(sx, sy), (tx, ty)) for sx, sy, tx, ty in baranski_maps(DimensionDropParams.figure())
    ])
    assert planar_carpet_dimension(drop_carpet).high == pytest.approx(1.0, abs=1e-9)

    half = ScaledPermutation.diagonal(F(1, 2), F(1, 2))
    corners = PlanarCarpetSystem.from_maps2d([AffineContraction(half, (F(i, 2), F(j, 2))) for i in (0, 1) for j in (0, 1)])
    assert planar_carpet_dimension(corners).high == pytest.approx(2.0, abs=1e-9)

    thin = ScaledPermutation.diagonal(F(1, 2), F(1, 3))
    opposite = PlanarCarpetSystem.from_maps2d([AffineContraction(thin, (0, 0)), AffineContraction(thin, (F(1, 2), F(2, 3)))])
    assert planar_carpet_dimension(opposite).high == pytest.approx(1.0, abs=1e-9)


def test_projection_dims_examples():
    drop = projection_dims(drop_system(DimensionDropParams.figure()))
    t = DimensionDropParams.figure().t
    assert drop.p1("upper") == pytest.approx((t, 1.0, 1.0), abs=1e-9)
    # every cylinder's shortest side is along z, so the relevant plane is xy
    assert drop.p2("upper")[2] == pytest.approx(1.0, abs=1e-9)
    full = projection_dims(full_shadow_system())
    assert full.p1("upper") == pytest.approx((1.0,) * 3, abs=1e-9)
    assert full.p2("upper") == pytest.approx((2.0,) * 3, abs=1e-9)


# -- pressure ---------------------------------------------------------------------------------


def test_mod_svf_examples():
    sys = two_map_s3()
    full = ModSvfContext.from_system(sys, ProjectionDims.constant(1.0, 2.0))
    for w in [(0,), (0, 1), (1, 0, 0)]:
        scales = sorted((float(x) for x in compose_word(sys, w).linear.scales), reverse=True)
        s = 2.4
        assert mod_svf(full, w, s) == pytest.approx(scales[0] * scales[1] * scales[2] ** (s - 2), rel=1e-13)
    cube = ModSvfContext.from_system(corner_cube(), ProjectionDims.constant(0.3, 1.7))
    assert mod_svf(cube, (3, 5), 1.1) == pytest.approx((1 / 9) ** 1.1, rel=1e-13)


def test_big_psi_examples():
    ctx = ModSvfContext.from_system(two_map_s3())
    assert big_psi(ctx, 1, 0.9) == pytest.approx(mod_svf(ctx, (0,), 0.9) + mod_svf(ctx, (1,), 0.9), rel=1e-13)
    ordered = ModSvfContext.from_system(separated_diagonal())
    for k in (2, 5):
        assert big_psi(ordered, k, 1.3) == pytest.approx(big_psi(ordered, 1, 1.3) ** k, rel=1e-12)
    # the drop sponge with the figure values, k = 2, s = 2, against an explicit word sum
    sys = drop_system(DimensionDropParams.figure())
    drop_ctx = ModSvfContext.from_system(sys)
    brute = sum(mod_svf(drop_ctx, w, 2.0) for w in itertools.product(range(len(sys.maps)), repeat=2))
    assert big_psi(drop_ctx, 2, 2.0) == pytest.approx(brute, rel=1e-12)


def test_subsystem_examples():
    ordered = ModSvfContext.from_system(separated_diagonal())
    sub = build_subsystem(ordered, 3, 1.2)
    assert sub.m == 0 and sub.size == 4**3

    s3 = ModSvfContext.from_system(two_map_s3())
    sub = build_subsystem(s3, 1, 0.8)
    assert sub.m >= 1 and sub.verified
    assert set(sub.states.perm_idx.tolist()) == {0}

    s2 = ModSvfContext.from_system(s2_partially_ordered())
    sub = build_subsystem(s2, 1, 1.0)
    assert sub.m in (0, 1) and sub.verified


def test_pressure_examples():
    ordered = ModSvfContext.from_system(separated_diagonal())
    est = pressure(ordered, 1.3, k_max=6)
    assert est.sequence == pytest.approx([big_psi(ordered, 1, 1.3)] * 6, rel=1e-12)
    cube = ModSvfContext.from_system(corner_cube())
    est = pressure(cube, 1.5, k_max=5)
    assert est.point_estimate == pytest.approx(8 * (1 / 3) ** 1.5, rel=1e-12)


def test_root_examples():
    assert root_s0(ModSvfContext.from_system(corner_cube())) == pytest.approx(math.log(8) / math.log(3), abs=1e-9)
    report = run_planar_discontinuity(F(2, 5))
    expected = math.log(2) / math.log(2.5) + math.log(2) / math.log(3)
    assert report.derived_quantities["root_eps0_closed_form"] == pytest.approx(expected, abs=1e-12)
    assert report.derived_quantities["root_eps0_bisection"] == pytest.approx(expected, abs=1e-9)


def test_affinity_dimension_examples():
    assert affinity_dimension(corner_cube()) == pytest.approx(math.log(8) / math.log(3), abs=1e-9)
    assert affinity_dimension(full_tiling(2)) == pytest.approx(3.0, abs=1e-12)
    shadows = full_shadow_system()
    assert affinity_dimension(shadows) == pytest.approx(2.5, abs=1e-9)
    assert root_s0(ModSvfContext.from_system(shadows)) == pytest.approx(2.5, abs=1e-9)
    sys = two_map_s3()
    value = affinity_dimension(sys, k_max=12)
    assert 0 < value < 3
    assert abs(value - affinity_dimension(sys, k_max=11)) < 1e-2


# -- box counting -------------------------------------------------------------------------------


def test_cloud_examples():
    half = ScaledPermutation.diagonal(F(1, 2), F(1, 2), F(1, 2))
    two = SpongeSystem((AffineContraction(half, (0, 0, 0)), AffineContraction(half, (F(1, 2),) * 3)))
    assert len(generate_cloud(two, F(1, 4))) == 4
    for k in (1, 2, 3):
        assert len(generate_cloud(corner_cube(), F(1, 3**k))) == 8**k


def test_grid_count_examples():
    cube = generate_cloud(corner_cube(), F(1, 27))
    assert grid_count(cube, F(1, 1)).count == 1
    assert grid_count(cube, F(1, 3)).count == 8
    tiling = generate_cloud(full_tiling(2), F(1, 8))
    assert grid_count(tiling, F(1, 8)).count == 512


def test_slope_examples():
    exact = dim_slope([GridCount(F(1, 2**k), 2**k) for k in range(1, 6)])
    assert exact.slope == pytest.approx(1.0, abs=1e-12) and exact.stderr == pytest.approx(0.0, abs=1e-12)
    deltas = [F(1, 3**k) for k in range(2, 7)]
    cloud = generate_cloud(corner_cube(), deltas[-1])
    assert abs(dim_slope([grid_count(cloud, d) for d in deltas]).slope - 1.8928) < 0.05
    tiling = generate_cloud(full_tiling(2), F(1, 64))
    fit = dim_slope([grid_count(tiling, F(1, 2**k)) for k in range(2, 7)])
    assert abs(fit.slope - 3) < 0.02


def test_cover_bound_examples():
    sys = corner_cube()
    dims = projection_dims(sys)
    delta, eps = F(1, 81), 0.05
    size = len(cut_set(sys, delta))
    assert theoretical_cover_bound(sys, dims, delta, eps) == pytest.approx(size * float(delta) ** -eps, rel=1e-9)

    sys = two_map_s3()
    full = ProjectionDims.constant(1.0, 2.0)
    expected = 0.0
    for w in cut_set(sys, F(1, 30)).words:
        a1, a2, a3 = sorted((float(x) for x in compose_word(sys, w).linear.scales), reverse=True)
        expected += a1 * a2 / a3**2 * a3**-eps
    assert theoretical_cover_bound(sys, full, F(1, 30), eps) == pytest.approx(expected, rel=1e-9)


def test_cover_bound_for_the_drop_sponge():
    sys = drop_system(DimensionDropParams.figure())
    dims = projection_dims(sys)
    delta = F(1, 256)
    bound = theoretical_cover_bound(sys, dims, delta, 0.05)
    assert math.isfinite(bound) and bound > 0
    # a cut set at a coarser scale is small enough to count directly
    coarse = F(1, 16)
    count = grid_count(generate_cloud(sys, coarse), coarse).count
    assert count <= 64 * theoretical_cover_bound(sys, dims, coarse, 0.05)


# -- scenarios -----------------------------------------------------------------------------------


def test_search_restricted_to_small_n_fails(monkeypatch):
    grid = dict(scenarios.DROP_GRID)
    grid["N"] = [10]
    monkeypatch.setattr(scenarios, "DROP_GRID", grid)
    with pytest.raises(SearchFailed) as info:
        search_drop_params()
    best = info.value.best
    cond = scenarios.drop_conditions(best)
    assert best.N == 10
    assert not (all(cond[k] for k in ("i", "ii", "iii_scale", "iii_root")) and cond["margin"] > scenarios.MIN_MARGIN)


def test_root_tends_to_two_as_n_grows():
    roots = [closed_form_s0(DimensionDropParams(F(1, 2), F(1, 4), F(3, 20), 10**k, 0.01)) for k in (1, 3, 10, 30, 100)]
    assert all(a < b < 2 for a, b in zip(roots, roots[1:]))
    assert 2 - roots[-1] < 0.01


def test_beta_property_examples():
    p = DimensionDropParams.figure()
    fractions = [estimate_beta_property(p, 2.0**-k, 1.05).fraction for k in (4, 6, 8, 10)]
    assert all(0.0 <= f <= 1.0 for f in fractions)
    assert fractions[-1] >= 0.9
    assert np.mean(np.diff(fractions)) >= 0
    column = [(F(1, 3), F(1, 4), F(0), F(j, 4)) for j in range(4)]
    assert estimate_beta_property(column, 2.0**-5, 1.2).fraction == 1.0


def test_discontinuity_requires_a_below_one_half():
    with pytest.raises(ValidationError):
        run_planar_discontinuity(F(1, 2))
