import io
import math

import numpy as np
import pytest

from measure_morph.errors import InvalidParameter
from measure_morph.paths import Functional, PathSample, make_grid, sample_paths, sample_wiener
from measure_morph.substitution import (
    SubMap,
    apply_sub,
    continuum_inverse,
    invert_sub,
    pushforward_covariance,
    verify_sub_identity,
    write_matrix_csv,
)


def test_constant_path_image():
    grid = make_grid((0, 1), 4)
    y = apply_sub(PathSample(grid, np.ones(5), kind="wiener"), 1.0)
    assert np.allclose(y.values, 1.0 + grid.nodes)


def test_linear_and_unit_triangular():
    grid = make_grid((0, 1), 16)
    s = SubMap(0.7, grid)
    a = sample_wiener(grid, 1, 0).values
    b = sample_wiener(grid, 1, 1).values
    assert np.allclose(s.apply(2 * a - 3 * b), 2 * s.apply(a) - 3 * s.apply(b), atol=1e-13)
    assert np.allclose(s.matrix @ a, s.apply(a), atol=1e-14)
    assert np.allclose(np.diag(s.matrix), 1.0)
    assert np.linalg.det(s.matrix) == pytest.approx(1.0)


@pytest.mark.parametrize("m", [-2.0, 0.0, 1.0, 5.0])
def test_round_trip(m):
    grid = make_grid((0, 1), 64)
    x = sample_wiener(grid, 4, 0)
    assert np.max(np.abs(invert_sub(apply_sub(x, m), m).values - x.values)) < 1e-12
    assert np.max(np.abs(apply_sub(invert_sub(x, m), m).values - x.values)) < 1e-12


def test_bridge_becomes_free():
    grid = make_grid((0, 1), 4)
    x = PathSample(grid, [0, 1, 0, -1, 0])
    assert apply_sub(x, 1.0).kind == "free"


def test_continuum_inverse_closed_form():
    # y = t gives x = (1 - exp(-m t)) / m
    m = 2.0
    t = np.array([0.25, 0.5, 1.0])
    assert np.allclose(continuum_inverse(lambda s: s, m, t), (1 - np.exp(-m * t)) / m, atol=1e-12)


def test_discrete_inverse_converges_first_order():
    m = 1.5
    y = lambda s: math.sin(3 * s) + s * s
    errs, ns = [], [32, 64, 128, 256]
    for n in ns:
        grid = make_grid((0, 1), n)
        yv = np.array([y(t) for t in grid.nodes])
        x = invert_sub(PathSample(grid, yv, kind="free"), m).values
        errs.append(np.max(np.abs(x - continuum_inverse(y, m, grid.nodes))))
    order = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert order >= 0.9


def test_pushforward_covariance_mc():
    grid = make_grid((0, 1), 16)
    m = 1.0
    cov = pushforward_covariance(grid, m)
    y = SubMap(m, grid).apply(sample_paths(grid, 8, 100_000, kind="wiener"))[:, 1:]
    prod = y[:, :, None] * y[:, None, :]
    se = prod.std(axis=0, ddof=1) / math.sqrt(y.shape[0])
    assert np.all(np.abs(prod.mean(axis=0) - cov) < 4 * se)


def test_verify_sub_identity():
    rep = verify_sub_identity(Functional.point_square(0.5), 1.0, n_paths=20_000, grid_n=32, seed=2)
    assert rep.rhs.stderr == 0.0
    assert rep.z_score < 4
    rw = rep.extra["reweighting"]
    assert rw["status"] == "derived"
    assert rw["correction"] == pytest.approx(0.5, abs=0.02)


def test_dense_limit_and_csv():
    with pytest.raises(InvalidParameter):
        pushforward_covariance(make_grid((0, 1), 1024), 1.0)
    buf = io.StringIO()
    write_matrix_csv(buf, np.eye(2))
    assert buf.getvalue().splitlines() == ["1,0", "0,1"]
