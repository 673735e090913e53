import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mhardy.errors import DomainError, ExpressionError, ParameterError, ResourceError
from mhardy.field_core import (
    PeriodicGrid,
    ScalarField,
    build_field,
    discrete_laplacian,
    field_to_csv,
    from_spectral,
    load_field,
    save_field,
    to_spectral,
)


def test_grid_geometry():
    g = PeriodicGrid(2, 3.0, 12)
    assert g.spacing == pytest.approx(0.5)
    assert g.shape == (12, 12)
    assert g.axis()[0] == -3.0 and g.axis()[-1] == pytest.approx(2.5)
    freqs = np.fft.fftfreq(12, d=0.5)
    np.testing.assert_allclose(np.sort(freqs), np.arange(-6, 6) / 6.0)


@pytest.mark.parametrize("N", [7, 6, 9])
def test_grid_rejects_bad_sizes(N):
    with pytest.raises(ParameterError):
        PeriodicGrid(1, 1.0, N)


def test_grid_memory_budget():
    with pytest.raises(ResourceError):
        PeriodicGrid(3, 1.0, 512)


def test_default_sizes():
    assert [PeriodicGrid.default(n).points_per_axis for n in (1, 2, 3)] == [4096, 512, 64]


def test_zero_field():
    f = build_field(PeriodicGrid(1, math.pi, 8), "0")
    assert np.all(f.values == 0) and f.mean == 0


def test_cosine_has_zero_mean():
    f = build_field(PeriodicGrid(1, math.pi, 64), "cos(x1)")
    assert abs(f.mean) <= 1e-14


def test_samples_match_pointwise_evaluation():
    g = PeriodicGrid(2, 8.0, 64)
    f = build_field(g, "exp(-|x|^2)")
    pts = g.points()
    direct = np.array([[math.exp(-(p[0] ** 2 + p[1] ** 2)) for p in row] for row in pts])
    assert np.max(np.abs(f.values - direct)) <= 1e-15


def test_build_field_errors():
    g = PeriodicGrid(1, 1.0, 8)
    with pytest.raises(ExpressionError):
        build_field(g, "exp(")
    with pytest.raises(DomainError) as info:
        build_field(g, "1/x1")
    assert info.value.index == (4,)


def test_constant_spectrum():
    g = PeriodicGrid(2, 2.0, 16)
    F = to_spectral(ScalarField(g, np.full(g.shape, 3.5), True))
    assert F.coefficients[0, 0] == pytest.approx(3.5, abs=1e-14)
    rest = np.abs(F.coefficients).ravel()[1:]
    assert rest.max() <= 1e-14


def test_cosine_spectrum_two_lines():
    g = PeriodicGrid(1, math.pi, 64)
    c = to_spectral(build_field(g, "cos(x1)")).coefficients
    big = np.flatnonzero(np.abs(c) > 1e-12)
    assert list(big) == [1, 63]
    assert abs(c[1]) == pytest.approx(0.5, abs=1e-14) and abs(c[63]) == pytest.approx(abs(c[1]), abs=1e-15)
    # index 1 is the frequency 1/(2 pi), i.e. the angular frequency 1 of cos(x1)
    assert np.fft.fftfreq(64, d=g.spacing)[1] == pytest.approx(1 / (2 * math.pi))


@given(st.integers(1, 3), st.integers(0, 2**32 - 1), st.booleans())
def test_spectral_round_trip(dim, seed, real):
    rng = np.random.default_rng(seed)
    g = PeriodicGrid(dim, 1.0, 8 if dim == 3 else 16)
    v = rng.standard_normal(g.shape)
    if not real:
        v = v + 1j * rng.standard_normal(g.shape)
    f = ScalarField(g, v, real)
    back = from_spectral(to_spectral(f))
    assert np.max(np.abs(back.values - f.values)) <= 1e-12 * np.max(np.abs(v))
    if real:
        assert back.is_real and not np.iscomplexobj(back.values)


@given(st.integers(0, 2**32 - 1))
def test_parseval(seed):
    rng = np.random.default_rng(seed)
    g = PeriodicGrid(2, 1.7, 16)
    v = rng.standard_normal(g.shape)
    c = to_spectral(ScalarField(g, v, True)).coefficients
    energy = np.sum(v**2) * g.cell_volume
    spectral = np.sum(np.abs(c) ** 2) * (2 * g.half_width) ** g.dim
    assert spectral == pytest.approx(energy, rel=1e-12)


def test_laplacian_of_constant_is_zero():
    g = PeriodicGrid(2, 1.0, 16)
    assert np.all(discrete_laplacian(ScalarField(g, np.full(g.shape, 2.0), True)).values == 0)


def test_laplacian_of_cosine():
    g = PeriodicGrid(1, math.pi, 128)
    f = build_field(g, "cos(x1)")
    err = np.max(np.abs(discrete_laplacian(f).values + f.values))
    assert err <= 1e-3
    # Taylor remainder h^2/12 max|f''''| bounds the error
    assert err <= g.spacing**2 / 12 * 1.0001


def test_laplacian_exact_on_quadratics_away_from_seam():
    g = PeriodicGrid(2, 4.0, 32)
    f = build_field(g, "x1^2")
    lap = discrete_laplacian(f).values
    assert np.max(np.abs(lap[4:-4, :] - 2.0)) <= 1e-9


def test_laplacian_convergence_order():
    errs = []
    for N in (32, 64, 128):
        g = PeriodicGrid(2, math.pi, N)
        f = build_field(g, "sin(x1)*cos(2*x2)")
        errs.append(np.max(np.abs(discrete_laplacian(f).values + 5 * f.values)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.8)


def test_real_flag_survives_round_trip_below_threshold():
    g = PeriodicGrid(1, 1.0, 32)
    f = build_field(g, "exp(-x1^2)")
    raw = np.fft.ifftn(to_spectral(f).coefficients, norm="forward")
    assert np.max(np.abs(raw.imag)) < 1e-12


@pytest.mark.parametrize("real", [True, False])
def test_binary_round_trip(tmp_path, real):
    g = PeriodicGrid(2, 2.5, 8, 0.5)
    rng = np.random.default_rng(3)
    v = rng.standard_normal(g.shape) + (0 if real else 1j * rng.standard_normal(g.shape))
    f = ScalarField(g, v, real)
    path = tmp_path / "f.mhf"
    save_field(f, path)
    raw = path.read_bytes()
    assert raw[:6] == b"MHFLD1"
    assert len(raw) == 32 + 8 * g.size * (1 if real else 2)
    back = load_field(path)
    assert back.grid == g and back.is_real == real
    assert np.array_equal(back.values, f.values)


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.mhf"
    path.write_bytes(b"NOTAFIELD" * 8)
    with pytest.raises(ParameterError):
        load_field(path)


def test_csv_export():
    g = PeriodicGrid(2, 1.0, 8)
    text = field_to_csv(build_field(g, "x1 + 10*x2"))
    lines = text.strip().splitlines()
    assert len(lines) == 1 + 64
    first = lines[1].split(",")
    assert float(first[-1]) == pytest.approx(-1.0 - 10.0)


def test_fields_are_immutable():
    f = build_field(PeriodicGrid(1, 1.0, 8), "x1")
    with pytest.raises(ValueError):
        f.values[0] = 1.0
