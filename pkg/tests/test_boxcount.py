from __future__ import annotations

import math
from fractions import Fraction as F

import numpy as np
import pytest
from systems import corner_cube, two_map_s3

from sponge_dim.boxcount import (
    GridCount,
    PointCloud,
    boxcount_rows,
    dim_slope,
    generate_cloud,
    grid_count,
    planar_cloud,
    theoretical_cover_bound,
    thread_count,
)
from sponge_dim.errors import ValidationError
from sponge_dim.gpm_core import AffineContraction, ScaledPermutation
from sponge_dim.projections import PlanarCarpetSystem, projection_dims


def cloud_of(points, delta_gen=F(1, 1024)):
    return PointCloud(np.array(points, dtype=np.float64), delta_gen, (0, 0, 0))


def test_grid_count_cells_and_edges():
    pts = [(0.5, 0.1, 0.1), (0.49, 0.1, 0.1), (1.0, 1.0, 1.0), (0.999, 0.999, 0.999)]
    assert grid_count(cloud_of(pts), F(1, 2)).count == 3
    assert grid_count(cloud_of(pts), F(1, 1)).count == 1
    # a point a hair below a grid line (rounding noise) joins the cell above
    assert grid_count(cloud_of([(0.5 - 1e-12, 0.0, 0.0), (0.5, 0.0, 0.0)]), F(1, 2)).count == 1


def test_grid_side_validation():
    cloud = cloud_of([(0.1, 0.2, 0.3)], F(1, 8))
    with pytest.raises(ValidationError):
        grid_count(cloud, F(2, 3))
    with pytest.raises(ValidationError):
        grid_count(cloud, F(1, 16))


def test_dim_slope_recovers_a_power_law():
    counts = [GridCount(F(1, 2**k), 3**k) for k in range(2, 8)]
    fit = dim_slope(counts)
    assert fit.slope == pytest.approx(math.log(3) / math.log(2), abs=1e-12)
    assert fit.stderr == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError):
        dim_slope(counts[:3])


def test_corner_cube_cloud_is_exact():
    cloud = generate_cloud(corner_cube(), F(1, 9))
    assert len(cloud) == 64
    levels = {0.0, 2 / 9, 2 / 3, 8 / 9}
    assert all(min(abs(x - v) for v in levels) < 1e-12 for x in cloud.points.ravel())
    assert grid_count(cloud, F(1, 9)).count == 64
    assert grid_count(cloud, F(1, 3)).count == 8


def test_stop_rules_and_validation():
    sys = two_map_s3()
    longest = generate_cloud(sys, F(1, 100))
    shortest = generate_cloud(sys, F(1, 100), stop="shortest")
    assert len(longest) >= len(shortest) > 0
    with pytest.raises(ValidationError):
        generate_cloud(sys, F(1, 100), stop="middle")
    with pytest.raises(ValidationError):
        generate_cloud(sys, 2)
    with pytest.raises(ValidationError):
        generate_cloud(sys, F(1, 10), anchor=(2, 0, 0))


def test_thread_count_does_not_change_counts(monkeypatch):
    cloud = generate_cloud(corner_cube(), F(1, 3**7))
    assert len(cloud) > 1 << 20
    monkeypatch.setenv("SPONGE_DIM_THREADS", "1")
    single = grid_count(cloud, F(1, 3**6)).count
    monkeypatch.setenv("SPONGE_DIM_THREADS", "4")
    assert thread_count() == 4
    assert grid_count(cloud, F(1, 3**6)).count == single == 8**6
    monkeypatch.setenv("SPONGE_DIM_THREADS", "many")
    with pytest.raises(ValidationError):
        thread_count()


def test_planar_cloud_of_a_carpet():
    lin = ScaledPermutation.diagonal(F(1, 2), F(1, 4))
    carpet = PlanarCarpetSystem.from_maps2d([AffineContraction(lin, (0, 0)), AffineContraction(lin, (F(1, 2), F(1, 2)))])
    cloud = planar_cloud(carpet, F(1, 16))
    assert cloud.points.shape[1] == 2
    assert grid_count(cloud, F(1, 4)).count == 4


def test_cover_bound_and_rows():
    sys = corner_cube()
    dims = projection_dims(sys)
    bound = theoretical_cover_bound(sys, dims, F(1, 27), 0.05)
    # every cut-set term is (1/27)**(-0.05) for the cube, and there are 8**3 of them
    assert bound == pytest.approx(8**3 * 27**0.05, rel=1e-9)
    with pytest.raises(ValidationError):
        theoretical_cover_bound(sys, dims, F(1, 27), 1.5)
    rows = boxcount_rows(sys, [F(1, 3), F(1, 9), F(1, 27)], dims)
    assert [r["count"] for r in rows] == [8, 64, 512]
    assert set(rows[0]) == {"delta", "count", "log_count", "theoretical_bound"}
