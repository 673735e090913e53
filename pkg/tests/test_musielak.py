import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mhardy.errors import ConvergenceError, InvalidFunctionError, ParameterError
from mhardy.field_core import PeriodicGrid, ScalarField, build_field
from mhardy.musielak import (
    CriticalIndices,
    Custom,
    LogPerturbed,
    Separable,
    critical_order,
    critical_weight_exponent,
    estimate_type_indices,
    evaluate,
    luxembourg_norm,
    modular,
    phi_from_spec,
    power_rescale,
    regularize,
)

SINGULAR_GRID = PeriodicGrid(1, 1.0, 1024, 0.5)


# evaluation


def test_evaluate_examples():
    assert evaluate(Separable("1", "t^0.8"), [0.3], 1.0) == 1.0
    assert evaluate(LogPerturbed(1, 0, 0), [5.0], 2.0) == 2.0
    assert evaluate(LogPerturbed(1, 1, 1), [0.0], 1.0) == pytest.approx(1 / (1 + math.log(math.e + 1)), abs=1e-15)
    assert evaluate(Custom("t*(1+x1^2)"), [2.0], 0.0) == 0.0


def test_negative_t_rejected():
    with pytest.raises(ParameterError):
        evaluate(Separable("1", "t"), [0.0], -1.0)


def test_phi_from_spec_kinds():
    assert isinstance(phi_from_spec("t^2"), Custom)
    phi = phi_from_spec({"kind": "rescaled", "q": 2, "base": {"kind": "separable", "orlicz": "t^2"}})
    assert evaluate(phi, [0.0], 9.0) == pytest.approx(9.0)
    with pytest.raises(ParameterError):
        phi_from_spec({"kind": "nope"})


# type indices


def test_pure_power_indices():
    ti = estimate_type_indices(Custom("t^0.9"))
    assert abs(ti.i_phi - 0.9) <= 0.02 and abs(ti.I_phi - 0.9) <= 0.02


def test_separable_indices_ignore_weight():
    ti = estimate_type_indices(Separable("1+0.5*cos(x1)", "t^0.7"))
    assert abs(ti.i_phi - 0.7) <= 0.02 and abs(ti.I_phi - 0.7) <= 0.02


def test_min_t_t2_indices():
    ti = estimate_type_indices(Custom("min(t, t^2)"))
    assert abs(ti.i_phi - 1) <= 0.05 and abs(ti.I_phi - 2) <= 0.05


def test_non_monotone_rejected():
    with pytest.raises(InvalidFunctionError):
        estimate_type_indices(Custom("t*exp(-t)"))


def test_nonzero_at_origin_rejected():
    with pytest.raises(InvalidFunctionError):
        estimate_type_indices(Custom("1 + t"))


# regularization and rescaling


def test_regularized_closed_forms():
    assert evaluate(regularize(Custom("t^0.5")), [0.0], 1.0) == pytest.approx(2.0, abs=1e-6)
    assert evaluate(regularize(Custom("min(t, t^2)")), [0.0], 1.0) == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("expr", ["t^0.9", "min(t, t^2)"])
def test_regularization_keeps_indices(expr):
    base = estimate_type_indices(Custom(expr))
    reg = estimate_type_indices(regularize(Custom(expr)))
    assert abs(reg.i_phi - base.i_phi) <= 0.05
    assert abs(reg.I_phi - base.I_phi) <= 0.05


def test_regularized_is_increasing():
    phi = regularize(Custom("min(t, t^2)"))
    t = np.logspace(-3, 2, 40)
    vals = phi(np.zeros((len(t), 1)), t)
    assert np.all(np.diff(vals) > 0)


def test_power_rescale_halves_index():
    ti = estimate_type_indices(power_rescale(Custom("t^0.9"), 2.0))
    assert abs(ti.i_phi - 0.45) <= 0.02


def test_power_rescale_identity():
    rng = np.random.default_rng(1)
    base = LogPerturbed(0.8, 1, 1)
    same = power_rescale(base, 1.0)
    x = rng.normal(size=(100, 2))
    t = rng.exponential(size=100)
    np.testing.assert_allclose(same(x, t), base(x, t), rtol=1e-15, atol=0)


def test_power_rescale_doubles_log_perturbed_index():
    ti = estimate_type_indices(power_rescale(LogPerturbed(0.8, 1, 0), 0.5))
    assert abs(ti.i_phi - 1.6) <= 0.05


def test_power_rescale_rejects_nonpositive():
    with pytest.raises(ParameterError):
        power_rescale(Custom("t"), 0.0)


# critical weight exponent and order


def test_critical_exponent_of_pure_power():
    assert critical_weight_exponent(Custom("t^0.8"), SINGULAR_GRID) == 1.0


def test_critical_exponent_of_power_weight():
    q = critical_weight_exponent(Separable("|x|^0.5", "t^0.8"), SINGULAR_GRID)
    assert abs(q - 1.5) <= 0.1 + 1e-9


def test_critical_exponent_of_log_perturbed():
    q = critical_weight_exponent(LogPerturbed(1, 1, 0), SINGULAR_GRID)
    assert abs(q - 1.0) <= 0.1 + 1e-9


@pytest.mark.parametrize(
    "i, q, n, m", [(1.0, 1.0, 3, 0), (0.5, 1.0, 2, 2), (0.7, 1.2, 3, 2), (1.0, 1.5, 1, 0)]
)
def test_critical_order(i, q, n, m):
    assert critical_order(CriticalIndices(i, max(i, 1.0), q, 0), n) == m


# modular and norm


def gaussian_field(dim=1, N=256, L=8.0):
    return build_field(PeriodicGrid(dim, L, N), "exp(-|x|^2) * (1 + 0.5*cos(3*x1))")


def test_zero_field_modular_and_norm():
    g = PeriodicGrid(1, 1.0, 16)
    zero = ScalarField(g, np.zeros(g.shape), True)
    assert modular(Custom("t^2"), zero) == 0
    assert luxembourg_norm(Custom("t^2"), zero) == 0


@pytest.mark.parametrize("p", [0.5, 1.0, 2.5])
def test_modular_power_sum(p):
    f = gaussian_field()
    direct = f.grid.cell_volume * sum(abs(v) ** p for v in f.values)
    assert modular(Separable("1", f"t^{p}"), f) == pytest.approx(direct, rel=1e-12)


def test_modular_weighted_sum():
    f = gaussian_field()
    x = f.grid.axis()
    direct = f.grid.cell_volume * float(np.sum((1 + 0.5 * np.cos(x)) * np.abs(f.values) ** 1.5))
    assert modular(Separable("1+0.5*cos(x1)", "t^1.5"), f) == pytest.approx(direct, rel=1e-12)


@pytest.mark.parametrize("p", [0.6, 1.0, 3.0])
def test_norm_power_closed_form(p):
    f = gaussian_field(2, 64)
    exact = (f.grid.cell_volume * np.sum(np.abs(f.values) ** p)) ** (1 / p)
    assert luxembourg_norm(Separable("1", f"t^{p}"), f) == pytest.approx(exact, rel=1e-8)


def test_norm_weighted_l1():
    g = PeriodicGrid(1, math.pi, 256)
    f = build_field(g, "exp(-16*x1^2)")
    w = 1 + 0.5 * np.cos(g.axis())
    mass = float(np.sum(w * np.abs(f.values))) * g.cell_volume
    assert luxembourg_norm(Separable("1+0.5*cos(x1)", "t"), f) == pytest.approx(mass, rel=1e-8)


@pytest.mark.parametrize("c", [0.1, 2.0, 100.0])
def test_norm_homogeneity(c):
    f = gaussian_field()
    phi = Separable("1", "t^0.7")
    assert luxembourg_norm(phi, f * c) == pytest.approx(c * luxembourg_norm(phi, f), rel=1e-8)


PHIS = [
    Separable("1", "t^0.7"),
    Separable("1+0.5*cos(x1)", "t*ln(e+t)"),
    LogPerturbed(0.8, 1, 1),
    Custom("min(t, t^2)"),
]


@given(st.integers(0, 2**32 - 1), st.sampled_from(range(len(PHIS))), st.floats(1e-3, 1e3))
def test_modular_at_norm(seed, k, scale):
    rng = np.random.default_rng(seed)
    g = PeriodicGrid(1, 2.0, 32)
    f = ScalarField(g, scale * rng.standard_normal(g.shape), True)
    lam = luxembourg_norm(PHIS[k], f, tol=1e-10)
    assert 1 - 1e-10 <= modular(PHIS[k], ScalarField(g, f.values / lam, True)) <= 1


@given(st.integers(0, 2**32 - 1), st.sampled_from(range(len(PHIS))))
def test_norm_monotone(seed, k):
    rng = np.random.default_rng(seed)
    g = PeriodicGrid(1, 2.0, 32)
    small = np.abs(rng.standard_normal(g.shape))
    big = small + np.abs(rng.standard_normal(g.shape))
    phi = PHIS[k]
    a = luxembourg_norm(phi, ScalarField(g, small, True))
    b = luxembourg_norm(phi, ScalarField(g, big, True))
    assert a <= b * (1 + 1e-10)


@pytest.mark.parametrize("q", [0.9, 0.5])
@given(seed=st.integers(0, 2**32 - 1))
def test_scaling_identity(q, seed):
    rng = np.random.default_rng(seed)
    g = PeriodicGrid(2, 1.0, 16)
    F = np.abs(rng.standard_normal(g.shape)) + 0.01
    phi = Separable("1+0.5*cos(x1)", "t*ln(e+t)")
    lhs = luxembourg_norm(phi, ScalarField(g, F, True))
    rhs = luxembourg_norm(power_rescale(phi, q), ScalarField(g, F**q, True)) ** (1 / q)
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_discontinuous_phi_fails_post_check():
    g = PeriodicGrid(1, 4.0, 8)
    v = np.zeros(g.shape)
    v[3] = 1.0
    step = Custom("2*min(1, max(0, 1e12*(t - 1)))")
    with pytest.raises(ConvergenceError):
        luxembourg_norm(step, ScalarField(g, v, True))


def test_indices_record():
    idx = CriticalIndices(0.8, math.inf, 1.2, 1)
    d = idx.to_dict()
    assert d["I_phi"] == "inf" and d["m_phi"] == 1
    with pytest.raises(ParameterError):
        CriticalIndices(0.0, 1.0, 1.0, 0)
