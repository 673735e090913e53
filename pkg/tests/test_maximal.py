import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from mhardy.errors import KernelError, ParameterError
from mhardy.field_core import PeriodicGrid, ScalarField, build_field
from mhardy.halfspace import TimeLevels, poisson_extend
from mhardy.maximal import (
    PolyGaussian,
    SampledKernel,
    TestDictionary as Dictionary,
    default_dictionary,
    gaussian_kernel,
    grand_maximal,
    hardy_littlewood,
    hl_family,
    nontangential_maximal,
    poisson_maximal,
    q_order_maximal,
    radial_maximal,
    smoothed_nontangential,
)

G1 = PeriodicGrid(1, 8.0, 256)
G2 = PeriodicGrid(2, 8.0, 32)


def field(grid, expr):
    return build_field(grid, expr)


def random_field(grid, seed):
    return ScalarField(grid, np.random.default_rng(seed).standard_normal(grid.shape), True)


# exhaustive oracles


def ball_offsets(dim, r_over_h):
    reach = int(math.ceil(r_over_h))
    rng = np.arange(-reach, reach + 1)
    mesh = np.stack(np.meshgrid(*([rng] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    return [tuple(d) for d in mesh if np.sum(d * d) < r_over_h**2]


def maximal_oracle(v, grid, radii, q=1.0):
    """sup over balls B (centered at nodes, given radii) with x in B of (mean_B |v|^q)^(1/q)."""
    a = np.abs(v) ** q
    axes = tuple(range(grid.dim))
    best = np.zeros(grid.shape)
    for r in radii:
        offs = ball_offsets(grid.dim, r / grid.spacing)
        mean = sum(np.roll(a, d, axis=axes) for d in offs) / len(offs)
        # x lies in the ball around c iff c lies in the ball around x
        best = np.maximum(best, np.max([np.roll(mean, d, axis=axes) for d in offs], axis=0))
    return best ** (1 / q)


def cone_oracle_1d(slices, levels, grid, aperture=1.0):
    x = grid.axis()
    N = grid.N
    out = np.zeros(N)
    for i in range(N):
        for vals, t in zip(slices, levels):
            d = np.abs((x - x[i] + grid.L) % (2 * grid.L) - grid.L)
            inside = d < aperture * t
            out[i] = max(out[i], float(np.max(np.abs(vals[inside]))))
    return out


BUMP = "max(0, 1 - |x|^2)"


# Hardy-Littlewood and q-order


def test_hl_constant():
    M = hardy_littlewood(field(G2, "-2.5"))
    assert np.max(np.abs(M.values - 2.5)) <= 1e-13


@pytest.mark.parametrize("grid", [PeriodicGrid(1, 8.0, 512), G2])
def test_hl_matches_exhaustive_oracle(grid):
    f = field(grid, BUMP)
    M = hardy_littlewood(f)
    expect = maximal_oracle(f.values, grid, hl_family(grid).radii)
    assert np.max(np.abs(M.values - expect)) <= 1e-10


def test_hl_decays_along_rays():
    grid = PeriodicGrid(1, 8.0, 512)
    M = hardy_littlewood(field(grid, BUMP)).values
    x = grid.axis()
    far = (x > 1.5) & (x < 4)
    assert np.all(np.diff(M[far]) <= 1e-15)
    # mass 4/3 spread over a ball of radius about |x|
    assert np.all(M[far] * x[far] >= 0.1) and np.all(M[far] * x[far] <= 2.0)


@given(st.integers(0, 2**32 - 1))
def test_hl_dominates(seed):
    f = random_field(G2, seed)
    assert np.all(hardy_littlewood(f).values >= np.abs(f.values) - 1e-15)


@pytest.mark.parametrize("grid", [PeriodicGrid(1, 8.0, 512), G2])
def test_half_order_matches_oracle(grid):
    f = field(grid, BUMP + " * cos(3*x1)")
    M = q_order_maximal(f, 0.5)
    expect = maximal_oracle(f.values, grid, hl_family(grid).radii, q=0.5)
    assert np.max(np.abs(M.values - expect)) <= 1e-10


def test_q_one_is_hl():
    f = field(G2, BUMP)
    np.testing.assert_array_equal(q_order_maximal(f, 1.0).values, hardy_littlewood(f).values)


@given(st.integers(0, 2**32 - 1), st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_power_mean_monotone(seed, q1, q2):
    q1, q2 = sorted((q1, q2))
    f = random_field(G2, seed)
    assert np.all(q_order_maximal(f, q1).values <= q_order_maximal(f, q2).values + 1e-12)


def test_q_order_rejects_nonpositive():
    with pytest.raises(ParameterError):
        q_order_maximal(field(G2, "1"), 0.0)


# radial and non-tangential


def test_radial_constant():
    M = radial_maximal(field(G2, "3"))
    assert np.max(np.abs(M.values - 3.0)) <= 1e-12


def test_radial_dominates_finest_level():
    f = field(G2, "exp(-|x|^2)")
    lv = TimeLevels.default(G2)
    M = radial_maximal(f, levels=lv)
    finest = radial_maximal(f, levels=[lv[0]])
    assert np.all(M.values >= finest.values)


def test_radial_single_mode():
    L = G1.L
    f = field(G1, f"cos(3*pi*x1/{L})")
    lv = TimeLevels.logspace(0.1, 2.0, 7)
    xi = 3 / (2 * L)
    # Gaussian exp(-pi x^2) has transform exp(-pi xi^2), so the damped modes shrink with t
    expect = math.exp(-math.pi * (lv[0] * xi) ** 2) * np.abs(np.cos(3 * np.pi * G1.axis() / L))
    assert np.max(np.abs(radial_maximal(f, levels=lv).values - expect)) <= 1e-10


def test_radial_kernel_mass_checked():
    with pytest.raises(KernelError):
        radial_maximal(field(G1, "exp(-x1^2)"), kernel="exp(-x1^2)")


def test_sampled_kernel_matches_analytic():
    # h = 1/4 so the sampled unit-width Gaussian has mass 1 well inside 1e-6
    grid = PeriodicGrid(2, 8.0, 64)
    f = field(grid, "exp(-|x|^2) * (1 + x1)")
    # dilates stay narrow enough that truncating the sampled kernel at the cell edge is invisible
    lv = TimeLevels.logspace(4 * grid.spacing, 2.5, 6)
    a = radial_maximal(f, kernel=gaussian_kernel(2), levels=lv)
    b = radial_maximal(f, kernel=SampledKernel("exp(-pi*|x|^2)", 2), levels=lv)
    assert np.max(np.abs(a.values - b.values)) <= 1e-10


def test_nontangential_constant():
    u = poisson_extend(field(G2, "-4"), TimeLevels.default(G2))
    assert np.max(np.abs(nontangential_maximal(u).values - 4.0)) <= 1e-12


def test_nontangential_matches_brute_force():
    f = field(G1, "exp(-x1^2) * (1 + sin(2*x1))")
    lv = TimeLevels.default(G1)
    u = poisson_extend(f, lv)
    slices = [s.values for s in u.slices]
    expect = cone_oracle_1d(slices, lv, G1)
    assert np.max(np.abs(nontangential_maximal(u).values - expect)) <= 1e-14
    assert np.max(np.abs(poisson_maximal(f, lv).values - expect)) <= 1e-14
    wide = cone_oracle_1d(slices, lv, G1, aperture=2.0)
    assert np.max(np.abs(nontangential_maximal(u, aperture=2.0).values - wide)) <= 1e-14


def test_nontangential_matches_brute_force_2d():
    f = field(G2, "exp(-|x|^2) * (1 + x1*x2)")
    lv = TimeLevels.logspace(G2.spacing, 4.0, 5)
    u = poisson_extend(f, lv)
    axes = (0, 1)
    expect = np.zeros(G2.shape)
    for s, t in zip(u.slices, lv):
        offs = [d for d in ball_offsets(2, t / G2.spacing) if max(abs(k) for k in d) < G2.N // 2]
        expect = np.maximum(expect, np.max([np.roll(np.abs(s.values), d, axis=axes) for d in offs], axis=0))
    assert np.max(np.abs(nontangential_maximal(u).values - expect)) <= 1e-14


@given(st.integers(0, 2**32 - 1))
def test_radial_below_nontangential(seed):
    f = random_field(G2, seed)
    lv = TimeLevels.default(G2)
    assert np.all(radial_maximal(f, levels=lv).values <= smoothed_nontangential(f, levels=lv).values)
    centers = np.max([np.abs(s.values) for s in poisson_extend(f, lv).slices], axis=0)
    assert np.all(poisson_maximal(f, lv).values >= centers)


def test_aperture_validation():
    with pytest.raises(ParameterError):
        nontangential_maximal(poisson_extend(field(G2, "1"), [0.5, 1.0]), aperture=0)


@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_sublinear(s1, s2):
    f, g = random_field(G2, s1), random_field(G2, s2)
    lv = TimeLevels.default(G2)
    ops = [
        hardy_littlewood,
        lambda h: radial_maximal(h, levels=lv),
        lambda h: poisson_maximal(h, lv),
        lambda h: q_order_maximal(h, 1.5),
    ]
    for op in ops:
        assert np.all(op(f + g).values <= op(f).values + op(g).values + 1e-12)


def test_dilation_covariance():
    coarse = PeriodicGrid(1, 8.0, 256)
    fine = PeriodicGrid(1, 4.0, 256)
    f = field(coarse, "exp(-x1^2) * (1 + sin(x1))")
    f2 = field(fine, "exp(-(2*x1)^2) * (1 + sin(2*x1))")
    assert np.max(np.abs(f.values - f2.values)) <= 1e-14
    assert np.max(np.abs(hardy_littlewood(f).values - hardy_littlewood(f2).values)) <= 1e-12
    lv = TimeLevels.logspace(0.1, 4.0, 8)
    lv2 = TimeLevels(tuple(t / 2 for t in lv))
    pairs = [
        (radial_maximal(f, levels=lv), radial_maximal(f2, levels=lv2)),
        (poisson_maximal(f, lv), poisson_maximal(f2, lv2)),
    ]
    for a, b in pairs:
        assert np.max(np.abs(a.values - b.values)) <= 1e-12


# grand maximal


def test_default_dictionary_certified():
    for n in (1, 2):
        d = default_dictionary(n)
        assert len(d.members) == 12
        for k, cert in d.members:
            assert cert == pytest.approx(0.99, abs=1e-12)
            assert 0 < k.integral <= 1


def gaussian_certificate_oracle(sigma, m=1):
    a = math.pi / sigma**2

    def derivs(x):
        e = math.exp(-a * x * x)
        return [e, 2 * a * abs(x) * e, abs(4 * a * a * x * x - 2 * a) * e]

    best = 0.0
    for k in range(m + 2):
        for lo, hi in [(0.0, 0.5), (0.5, 2.0), (2.0, 10.0), (10.0, 30.0)]:
            res = minimize_scalar(
                lambda x: -((1 + x) ** ((m + 2) * 2)) * derivs(x)[k], bounds=(lo, hi), method="bounded",
                options={"xatol": 1e-12},
            )
            best = max(best, -res.fun, (1 + lo) ** ((m + 2) * 2) * derivs(lo)[k])
    return best


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_certificate_matches_continuous_oracle(sigma):
    cert = PolyGaussian.gaussian(1, sigma).certificate(1)
    assert cert == pytest.approx(gaussian_certificate_oracle(sigma), rel=1e-4)


def test_uncertified_member_rejected():
    with pytest.raises(KernelError):
        Dictionary(((gaussian_kernel(1), 5.0),), 1)


def test_single_member_is_its_nontangential():
    f = field(G2, "exp(-|x|^2) * (1 + x1)")
    c = 0.99 / gaussian_kernel(2).certificate(1)
    k = gaussian_kernel(2).scaled(c)
    cert = k.certificate(1)
    assert cert == pytest.approx(0.99, abs=1e-12)
    d = Dictionary(((k, cert),), 1)
    lv = TimeLevels.default(G2)
    expect = c * smoothed_nontangential(f, levels=lv).values
    assert np.max(np.abs(grand_maximal(f, d, lv).values - expect)) <= 1e-14


def test_grand_monotone_in_dictionary():
    f = random_field(G2, 5)
    full = default_dictionary(2)
    lv = TimeLevels.default(G2)
    part = Dictionary(full.members[:4], 1)
    more = part.extended(Dictionary(full.members[4:8], 1))
    a, b, c = (grand_maximal(f, d, lv).values for d in (part, more, full))
    assert np.all(a <= b) and np.all(b <= c)


@pytest.mark.parametrize("n", [1, 2])
def test_grand_of_constant(n):
    grid = G1 if n == 1 else G2
    d = default_dictionary(n)
    M = grand_maximal(field(grid, "-2"), d)
    assert np.max(np.abs(M.values - 2 * max(k.integral for k in d.kernels))) <= 1e-12
