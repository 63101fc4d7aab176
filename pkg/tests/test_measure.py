import math

import numpy as np
import pytest

from measure_morph import G0, Identity, MobiusEnds, compose
from measure_morph.errors import GridMismatch, InvalidParameter
from measure_morph.measure import (
    MCEstimate,
    coefficient_fixed_ends,
    coefficient_g0,
    estimate_identity,
    feynman_kac,
    gaussian_oracle,
    normalizing_coefficient,
    rn_weight,
    tilted_gaussian,
    z_score,
)
from measure_morph.paths import Functional, PathSample, make_grid, sample_bridge, sample_wiener


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0, -1.0, 1e-6])
def test_fixed_ends_coefficient_closed_form(m):
    assert coefficient_fixed_ends(G0(m)) == pytest.approx(coefficient_g0(m), rel=1e-12)


def test_coefficient_values():
    assert coefficient_g0(1.0) == pytest.approx(math.sinh(1.0), rel=1e-15)
    assert coefficient_g0(0.0) == 1.0
    assert normalizing_coefficient(G0(1.0)) == pytest.approx(math.sqrt(math.sinh(1.0)), rel=1e-14)
    assert coefficient_g0(1.0, (0.0, 2.0)) == pytest.approx(math.sinh(2.0) / 2.0, rel=1e-14)


@pytest.mark.parametrize("delta", [0.5, 1.0, 10.0, 1000.0])
def test_mobius_invariance(delta):
    g = G0(1.0)
    h = compose(MobiusEnds(delta), g)
    assert coefficient_fixed_ends(h) == pytest.approx(coefficient_fixed_ends(g), rel=1e-12)
    assert normalizing_coefficient(h) == pytest.approx(normalizing_coefficient(g), rel=1e-12)


def test_rn_weight_parts():
    g = G0(1.0)
    grid = make_grid((0, 1), 16, g)
    x = sample_bridge(grid, 0, 0)
    w = rn_weight(x, g)
    assert w.boundary == 0.0
    assert w.schwarz_integral <= 0.0 and w.log_weight == w.schwarz_integral
    free = PathSample(grid, np.linspace(0, 1, 17), kind="free")
    wf = rn_weight(free, g)
    b = g.derivs(np.array([0.0, 1.0]))
    assert wf.boundary == pytest.approx(0.25 * b.g2[1] / b.g1[1])
    ident = Identity(0, 1)
    y = sample_bridge(make_grid((0, 1), 16, ident), 0, 0)
    assert rn_weight(y, ident).log_weight == 0.0


def test_rn_weight_grid_mismatch():
    x = sample_bridge(make_grid((0, 1), 8), 0, 0)
    with pytest.raises(GridMismatch):
        rn_weight(x, G0(1.0))


def test_tilted_gaussian_one_dim():
    log_norm, tilted = tilted_gaussian(np.array([[2.0]]), np.array([[0.5]]))
    assert log_norm == pytest.approx(-0.5 * math.log(2.0))
    assert tilted[0, 0] == pytest.approx(1.0)


# frozen values of C det(I + K M)^(-1/2) on the pull-back grid
@pytest.mark.parametrize(
    "m,n,expected",
    [(0.5, 64, 1.0000066), (1.0, 64, 1.000057), (1.0, 512, 1.0000009), (2.0, 512, 1.0000453)],
)
def test_oracle_normalization(m, n, expected):
    lhs, rhs = gaussian_oracle(make_grid((0, 1), n), m=m)
    assert lhs == 1.0
    assert rhs == pytest.approx(expected, abs=2e-7)


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0])
def test_fixed_ends_breaks_identity_by_known_factor(m):
    grid = make_grid((0, 1), 128)
    _, norm = gaussian_oracle(grid, m=m)
    _, fixed = gaussian_oracle(grid, m=m, coefficient="fixed-ends")
    assert fixed / norm == pytest.approx(math.sqrt(math.sinh(m) / m), rel=1e-12)


def test_oracle_expectation_converges_to_sqrt_sinh_ratio():
    m = 1.0
    target = math.sqrt(m / math.sinh(m))
    errs = []
    for n in (64, 128, 256, 512):
        _, rhs = gaussian_oracle(make_grid((0, 1), n), m=m)
        errs.append(abs(rhs / normalizing_coefficient(G0(m)) - target))
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    assert errs[-1] < 1e-6


@pytest.mark.parametrize(
    "functional",
    [Functional.point_square(0.5), Functional.exp_quadratic(1.0, 0.3), Functional.integrated_square()],
)
def test_oracle_sides_agree(functional):
    lhs, rhs = gaussian_oracle(make_grid((0, 1), 256), m=1.5, functional=functional)
    assert rhs == pytest.approx(lhs, rel=2e-4)


def test_oracle_mobius_composite():
    g = compose(MobiusEnds(0.7), G0(1.0))
    lhs, rhs = gaussian_oracle(make_grid((0, 1), 256), g, Functional.point_square(0.5))
    assert lhs == pytest.approx(0.25, abs=1e-12)
    assert rhs == pytest.approx(lhs, rel=1e-4)


def test_oracle_limits():
    with pytest.raises(InvalidParameter):
        gaussian_oracle(make_grid((0, 1), 1024), m=1.0)
    with pytest.raises(GridMismatch):
        gaussian_oracle(make_grid((0, 1), 8, G0(1.0)), m=1.0)


def test_estimate_identity_small_run():
    rep = estimate_identity(Functional.point_square(0.5), m=1.0, n_paths=20_000, grid_n=64, seed=3)
    assert rep.z_score < 4
    assert abs(rep.lhs.mean - 0.25) < 4 * rep.lhs.stderr
    assert abs(rep.rhs.mean - rep.oracle_rhs) < 4 * rep.rhs.stderr


def test_identity_map_gives_equal_sides():
    rep = estimate_identity(Functional.integrated_square(), m=0.0, n_paths=2048, grid_n=16, seed=1)
    assert rep.coefficient == 1.0
    assert rep.lhs.mean != rep.rhs.mean  # independent streams
    assert rep.z_score < 4


def test_feynman_kac_m_zero_exact():
    rep = feynman_kac(0.0, n_paths=10, grid_n=8, seed=1)
    assert rep.lhs.mean == rep.rhs.mean == 1.0
    assert rep.z_score == 0.0


def test_feynman_kac_extras():
    rep = feynman_kac(1.0, n_paths=4096, grid_n=64, seed=2)
    assert rep.extra["analytic"] == pytest.approx(0.9224522, abs=1e-7)
    assert rep.extra["analytic_fixed_ends"] == pytest.approx(0.8509181, abs=1e-7)
    assert rep.extra["oracle_expectation"] == pytest.approx(0.9224522, abs=1e-4)


def test_z_score():
    assert z_score(MCEstimate(1, 0, 0), MCEstimate(1, 0, 0)) == 0
    assert z_score(MCEstimate(1, 0, 0), MCEstimate(2, 0, 0)) == math.inf
    assert z_score(MCEstimate(1, 3, 10), MCEstimate(6, 4, 10)) == pytest.approx(1.0)
    e = MCEstimate.from_values([1.0, 2.0, 3.0])
    assert (e.mean, e.n) == (2.0, 3) and e.stderr == pytest.approx(1 / math.sqrt(3))
