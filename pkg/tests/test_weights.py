import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mhardy.errors import ParameterError
from mhardy.field_core import PeriodicGrid, ScalarField, build_field
from mhardy.weights import (
    ABOVE_GRID,
    BallFamily,
    WeightField,
    a_q_constant,
    b_r_condition_ratio,
    ball_max,
    ball_sum,
    critical_weight_index,
    doubling_check,
    reverse_holder_constant,
    weight_diagnostics,
)

Q_GRID = [round(1 + 0.1 * k, 10) for k in range(21)]


def weight(grid, expr):
    return WeightField(build_field(grid, expr))


def odd_interval_family(grid, k_max):
    """Centered balls of radius (k + 1/2) h, i.e. every odd-length interval."""
    return BallFamily(grid, tuple((k + 0.5) * grid.spacing for k in range(k_max + 1)))


def interval_stats(v, k_max):
    """Yield (mean v, max 1/v) over every periodic run of 2k+1 nodes, k <= k_max.

    Sums come from a prefix sum over the tripled array and maxima from a
    running elementwise maximum, independently of the ball machinery.
    """
    N = len(v)
    tiled = np.concatenate([v, v, v])
    prefix = np.concatenate([[0.0], np.cumsum(tiled)])
    inv = 1 / tiled
    run_max = inv.copy()  # run_max[s] = max inv[s .. s + 2k]
    for k in range(k_max + 1):
        if k:
            m = len(run_max) - 2
            run_max = np.maximum.reduce([run_max[:m], inv[2 * k - 1 : 2 * k - 1 + m], inv[2 * k : 2 * k + m]])
        starts = np.arange(N, 2 * N) - k
        mean = (prefix[starts + 2 * k + 1] - prefix[starts]) / (2 * k + 1)
        yield mean, run_max[starts]


def test_unit_weight_is_exactly_one():
    for dim, N in [(1, 64), (2, 32)]:
        g = PeriodicGrid(dim, 1.0, N)
        w = WeightField(ScalarField(g, np.ones(g.shape), True))
        balls = BallFamily.dyadic(g)
        for q in (1.0, 1.5, 2.0, 3.0):
            assert a_q_constant(w, q, balls) == 1.0
        assert reverse_holder_constant(w, 2.0, balls) == 1.0


def test_a1_matches_exhaustive_interval_oracle():
    g = PeriodicGrid(1, 1.0, 512, 0.5)
    w = weight(g, "|x|^(-0.5)")
    k_max = 255
    got = a_q_constant(w, 1.0, odd_interval_family(g, k_max))
    oracle = max(float(np.max(mean * mx)) for mean, mx in interval_stats(w.values, k_max))
    assert math.isfinite(got)
    assert got == pytest.approx(oracle, rel=1e-10)


def test_a1_of_linear_weight_grows_with_resolution():
    # balls shrink around the zero of |x| as J grows; the grid refines with J
    def constant(J):
        g = PeriodicGrid(1, 1.0, 2 ** (J + 2), 0.5)
        return a_q_constant(weight(g, "|x|"), 1.0, BallFamily.dyadic(g, J))

    assert constant(8) >= 4 * constant(4)


def test_reverse_holder_matches_exhaustive_oracle():
    g = PeriodicGrid(1, math.pi, 128)
    w = weight(g, "1 + 0.5*cos(x1)")
    k_max = 63
    got = reverse_holder_constant(w, 2.0, odd_interval_family(g, k_max))
    means = [m for m, _ in interval_stats(w.values, k_max)]
    means_sq = [m for m, _ in interval_stats(w.values**2, k_max)]
    oracle = max(float(np.max(np.sqrt(a) / b)) for a, b in zip(means_sq, means))
    assert 1.0 < got <= 1.5
    assert got == pytest.approx(oracle, rel=1e-10)


def test_reverse_holder_monotone_in_r():
    g = PeriodicGrid(1, math.pi, 128)
    w = weight(g, "1 + 0.5*cos(x1)")
    balls = BallFamily.dyadic(g)
    vals = [reverse_holder_constant(w, r, balls) for r in (1.1, 1.5, 2.0)]
    assert 1.0 <= vals[0] <= vals[1] <= vals[2]


def test_parameter_errors():
    g = PeriodicGrid(1, 1.0, 16)
    w = weight(g, "1")
    balls = BallFamily.dyadic(g)
    with pytest.raises(ParameterError):
        a_q_constant(w, 0.5, balls)
    with pytest.raises(ParameterError):
        reverse_holder_constant(w, 1.0, balls)
    with pytest.raises(ParameterError):
        critical_weight_index(w, [])
    with pytest.raises(ParameterError):
        WeightField(build_field(g, "x1"))


def test_zero_sample_gives_infinite_a1():
    g = PeriodicGrid(1, 1.0, 16)
    w = weight(g, "max(x1, 0)")
    assert a_q_constant(w, 1.0, BallFamily.dyadic(g)) == math.inf


@given(st.floats(0.01, 100.0), st.sampled_from([1.0, 1.3, 2.0, 2.7]))
def test_scaling_invariance(c, q):
    g = PeriodicGrid(1, 1.0, 64, 0.5)
    w = weight(g, "|x|^0.3 + 0.1")
    balls = BallFamily.dyadic(g)
    assert a_q_constant(w.scaled(c), q, balls) == pytest.approx(a_q_constant(w, q, balls), rel=1e-12)


@pytest.mark.parametrize("expr", ["1 + 0.5*cos(x1)", "|x|^0.5", "|x|^(-0.5)"])
def test_a_q_nonincreasing_in_q(expr):
    g = PeriodicGrid(1, math.pi, 256, 0.5)
    w = weight(g, expr)
    balls = BallFamily.dyadic(g)
    vals = [a_q_constant(w, q, balls) for q in Q_GRID]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))


def test_critical_index_of_unit_weight():
    g = PeriodicGrid(1, 1.0, 256)
    assert critical_weight_index(weight(g, "1"), Q_GRID) == 1.0


@pytest.mark.parametrize(
    "dim, N, a",
    [(1, 1024, -0.5), (1, 1024, 0.5), (1, 1024, 1.0), (2, 256, -0.5), (2, 256, 0.5), (2, 256, 1.0)],
)
def test_power_weight_critical_index(dim, N, a):
    g = PeriodicGrid(dim, 1.0, N, 0.5)
    got = critical_weight_index(weight(g, f"|x|^({a})"), Q_GRID)
    assert abs(got - (1 + max(a, 0) / dim)) <= 0.1 + 1e-9


def test_critical_index_above_grid():
    g = PeriodicGrid(1, 1.0, 1024, 0.5)
    assert critical_weight_index(weight(g, "|x|^3"), Q_GRID[:6]) == ABOVE_GRID


def test_doubling_lebesgue():
    g = PeriodicGrid(1, 1.0, 1024, 0.5)
    p, d = doubling_check(weight(g, "1"), BallFamily.dyadic(g))
    assert abs(p - 1) <= 0.05 and abs(d - 1) <= 0.05


def test_doubling_power_weights_at_origin():
    g = PeriodicGrid(1, 1.0, 4096, 0.5)
    balls = BallFamily.centered(g, 0.0)
    p, _ = doubling_check(weight(g, "|x|^0.5"), balls)
    _, d = doubling_check(weight(g, "|x|^(-0.5)"), balls)
    assert 1.4 <= p <= 1.6
    assert 0.4 <= d <= 0.6


def test_doubling_needs_three_scales():
    g = PeriodicGrid(1, 1.0, 64)
    with pytest.raises(ParameterError):
        doubling_check(weight(g, "1"), BallFamily(g, (0.5, 0.25)))


def test_b_r_lebesgue_scale_invariance():
    g = PeriodicGrid(1, 64.0, 8192)
    w = weight(g, "1")
    a = b_r_condition_ratio(w, 2.0, 0.0, 0.5)
    b = b_r_condition_ratio(w, 2.0, 0.0, 1.0)
    assert a == pytest.approx(b, rel=0.05)


def test_b_r_bounded_for_smooth_weight():
    g = PeriodicGrid(1, math.pi, 512)
    w = weight(g, "1 + 0.5*cos(x1)")
    vals = [b_r_condition_ratio(w, 2.0, 0.3, s * math.pi) for s in (0.1, 0.5, 1.0)]
    assert max(vals) <= 10


def test_b_r_power_weight_at_origin():
    g = PeriodicGrid(1, 8.0, 4096, 0.5)
    w = weight(g, "|x|^0.5")
    vals = [b_r_condition_ratio(w, 3.0, 0.0, t) for t in (0.25, 0.5, 1.0)]
    assert max(vals) <= 2 * min(vals)


def test_b_r_precondition():
    g = PeriodicGrid(1, 1.0, 64)
    with pytest.raises(ParameterError):
        b_r_condition_ratio(weight(g, "1"), 2.0, 0.0, g.spacing)


def test_ball_helpers_against_direct_loops():
    rng = np.random.default_rng(0)
    g = PeriodicGrid(2, 1.0, 16)
    v = rng.random(g.shape)
    r = 3.2 * g.spacing
    sums, maxs = ball_sum(v, g, r), ball_max(v, g, r)
    N = g.N
    for i in range(0, N, 5):
        for j in range(0, N, 3):
            pts = [
                v[(i + a) % N, (j + b) % N]
                for a in range(-4, 5)
                for b in range(-4, 5)
                if (a * a + b * b) * g.spacing**2 < r * r
            ]
            assert sums[i, j] == pytest.approx(sum(pts), rel=1e-12)
            assert maxs[i, j] == max(pts)


def test_diagnostics_document():
    g = PeriodicGrid(1, 1.0, 256, 0.5)
    diag = weight_diagnostics(weight(g, "|x|^0.5"), Q_GRID[:11])
    doc = diag.to_dict()
    assert doc["critical_index"] >= 1
    vals = list(diag.a_q_constant.values())
    assert all(b <= a for a, b in zip(vals, vals[1:]))
