"""Poisson and conjugate Poisson extensions to the upper half-space.

A :class:`HalfSpaceField` keeps, besides its slices at the stored levels,
the boundary spectrum it was generated from, so that the slice at any
height t > 0 is available exactly as the inverse transform of
``spectrum * exp(-2 pi t |xi|)``. The t-direction stencils of the
subharmonicity and Laplace checks use this instead of interpolating
between levels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from pathlib import Path

import numpy as np

from .errors import ParameterError, ResourceError
from .field_core import (
    MEMORY_BUDGET,
    PeriodicGrid,
    ScalarField,
    load_field,
    save_field,
    to_spectral,
)
from .multipliers import riesz_symbol, unit_frequencies

__all__ = [
    "TimeLevels",
    "HalfSpaceField",
    "HarmonicTensorField",
    "poisson_symbol",
    "poisson_extend",
    "conjugate_poisson_extend",
    "build_harmonic_vector",
    "build_tensor_field",
    "cr_residual",
    "laplace_residual",
    "subharmonic_defect",
    "harmonic_majorant_gap",
    "save_halfspace",
    "load_halfspace",
]

DEFAULT_LEVEL_COUNT = 16


@dataclass(frozen=True)
class TimeLevels:
    """Strictly increasing heights t > 0."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ParameterError("at least one level is required")
        if vals[0] <= 0 or any(not math.isfinite(v) for v in vals):
            raise ParameterError("levels must be finite and positive")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ParameterError("levels must be strictly increasing")

    @classmethod
    def default(cls, grid: PeriodicGrid, count: int = DEFAULT_LEVEL_COUNT) -> "TimeLevels":
        """``count`` log-spaced levels in [h/2, L]."""
        return cls.logspace(grid.spacing / 2, grid.half_width, count)

    @classmethod
    def logspace(cls, lo: float, hi: float, count: int) -> "TimeLevels":
        if count < 1 or not 0 < lo <= hi:
            raise ParameterError("need 0 < lo <= hi and count >= 1")
        if count == 1:
            return cls((lo,))
        return cls(tuple(np.geomspace(lo, hi, count)))

    def check_grid(self, grid: PeriodicGrid) -> None:
        if self.values[0] < grid.spacing / 4 * (1 - 1e-12):
            raise ParameterError("smallest level must be at least h/4")

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values)


def poisson_symbol(grid: PeriodicGrid, t: float) -> np.ndarray:
    """exp(-2 pi t |xi|), the Fourier transform of P_t."""
    return np.exp(-2 * np.pi * t * grid.frequency_norm())


@dataclass(frozen=True, eq=False)
class HalfSpaceField:
    """Slices u(., t) at the stored levels, plus the generating boundary spectrum."""

    grid: PeriodicGrid
    levels: TimeLevels
    slices: tuple[ScalarField, ...]
    spectrum: np.ndarray | None = None
    is_real: bool = True

    def __post_init__(self):
        if len(self.slices) != len(self.levels):
            raise ParameterError("one slice per level is required")
        if any(s.grid != self.grid for s in self.slices):
            raise ParameterError("all slices must share the grid")

    @classmethod
    def from_spectrum(cls, grid, levels, spectrum, is_real=True) -> "HalfSpaceField":
        levels = levels if isinstance(levels, TimeLevels) else TimeLevels(tuple(levels))
        spectrum = np.asarray(spectrum, dtype=complex)
        spectrum.setflags(write=False)
        fld = cls(grid, levels, tuple(_slice(grid, spectrum, t, is_real) for t in levels), spectrum, is_real)
        return fld

    def at(self, t: float) -> ScalarField:
        """Slice at an arbitrary height, exactly when the spectrum is known."""
        for lvl, s in zip(self.levels, self.slices):
            if lvl == t:
                return s
        if self.spectrum is None:
            raise ParameterError(f"level {t} is not stored and no spectrum is available")
        if not t > 0:
            raise ParameterError("t must be positive")
        return _slice(self.grid, self.spectrum, t, self.is_real)

    def stack(self) -> np.ndarray:
        """Array of shape (levels, *grid.shape)."""
        return np.stack([s.values for s in self.slices])

    def zeroed(self) -> "HalfSpaceField":
        zero = np.zeros(self.grid.shape)
        return HalfSpaceField(
            self.grid,
            self.levels,
            tuple(ScalarField(self.grid, zero, True) for _ in self.levels),
            None if self.spectrum is None else np.zeros_like(self.spectrum),
            True,
        )


def _slice(grid, spectrum, t, is_real) -> ScalarField:
    return from_spectral_values(grid, spectrum * poisson_symbol(grid, t), is_real)


def from_spectral_values(grid: PeriodicGrid, coef: np.ndarray, is_real: bool) -> ScalarField:
    values = np.fft.ifftn(coef, norm="forward")
    return ScalarField(grid, values.real if is_real else values, is_real)


def _levels(grid, levels) -> TimeLevels:
    if levels is None:
        return TimeLevels.default(grid)
    if not isinstance(levels, TimeLevels):
        levels = TimeLevels(tuple(levels))
    return levels


def poisson_extend(f: ScalarField, levels=None) -> HalfSpaceField:
    """u(x, t) = (f * P_t)(x); the zero frequency passes unchanged."""
    levels = _levels(f.grid, levels)
    return HalfSpaceField.from_spectrum(f.grid, levels, to_spectral(f).coefficients, f.is_real)


def _riesz_factor(grid: PeriodicGrid, j: int) -> np.ndarray:
    return riesz_symbol(grid, j)


def _real_spectrum(coef: np.ndarray) -> np.ndarray:
    """Spectrum of the real part of the field with spectrum ``coef``."""
    mirrored = np.conj(coef)
    for ax in range(coef.ndim):
        mirrored = np.roll(np.flip(mirrored, axis=ax), 1, axis=ax)
    return 0.5 * (coef + mirrored)


def conjugate_poisson_extend(f: ScalarField, j: int, levels=None) -> HalfSpaceField:
    """(Q_t^(j) * f)(x) via the symbol -i xi_j/|xi| exp(-2 pi t |xi|)."""
    levels = _levels(f.grid, levels)
    coef = to_spectral(f).coefficients * _riesz_factor(f.grid, j)
    if f.is_real:
        coef = _real_spectrum(coef)
    return HalfSpaceField.from_spectrum(f.grid, levels, coef, f.is_real)


# ---------------------------------------------------------------------------
# tensor fields


def _multiplicity(word: tuple[int, ...]) -> int:
    out = math.factorial(len(word))
    for j in set(word):
        out //= math.factorial(word.count(j))
    return out


@dataclass(frozen=True, eq=False)
class HarmonicTensorField:
    """Rank-m field with components indexed by words in {0..n}^m.

    Components are symmetric, so only nondecreasing words are stored;
    ``component`` sorts its argument.
    """

    rank: int
    grid: PeriodicGrid
    levels: TimeLevels
    components: dict
    symmetry_flag: bool = True
    trace_zero_flag: bool = True

    def component(self, word) -> HalfSpaceField:
        word = tuple(sorted(int(j) for j in word))
        if len(word) != self.rank:
            raise ParameterError(f"expected a word of length {self.rank}")
        return self.components[word]

    @property
    def stored_words(self) -> list[tuple[int, ...]]:
        return list(self.components)

    def norm_squared(self) -> np.ndarray:
        """|F|^2 over all (n+1)^m components, shape (levels, *grid.shape)."""
        total = 0.0
        for word, comp in self.components.items():
            total = total + _multiplicity(word) * np.abs(comp.stack()) ** 2
        return total

    def norm_squared_at(self, t: float) -> np.ndarray:
        total = 0.0
        for word, comp in self.components.items():
            total = total + _multiplicity(word) * np.abs(comp.at(t).values) ** 2
        return total

    def with_component(self, word, comp: HalfSpaceField) -> "HarmonicTensorField":
        comps = dict(self.components)
        comps[tuple(sorted(word))] = comp
        return HarmonicTensorField(self.rank, self.grid, self.levels, comps, False, False)


def _component_symbol(grid: PeriodicGrid, word, factors) -> np.ndarray:
    sym = np.ones(grid.shape, dtype=complex)
    for j in word:
        if j:
            sym = sym * factors[j - 1]
    return sym


def build_tensor_field(f: ScalarField, m: int, levels=None, check: bool = True) -> HarmonicTensorField:
    """F_{j_1..j_m}(x, t) = (R_{j_1} ... R_{j_m} f * P_t)(x) with R_0 = I.

    For m >= 2 the seed mean is removed first: the identity factor keeps the
    zero frequency while the Riesz factors kill it, so the trace over the
    first two indices equals the mean unless it is zero.
    """
    if int(m) != m or m < 1:
        raise ParameterError("rank must be a positive integer")
    grid = f.grid
    levels = _levels(grid, levels)
    n = grid.dim
    words = list(combinations_with_replacement(range(n + 1), m))
    if len(words) * len(levels) * grid.size > 4 * MEMORY_BUDGET:
        raise ResourceError(
            f"{len(words)} components x {len(levels)} levels x {grid.size} points exceeds the memory budget"
        )
    base = to_spectral(f).coefficients
    if m >= 2:
        base = base.copy()
        base.flat[0] = 0.0
    omega, _ = unit_frequencies(grid)
    factors = [-1j * w for w in omega]
    comps = {}
    for word in words:
        coef = base * _component_symbol(grid, word, factors)
        if f.is_real:
            coef = _real_spectrum(coef)
        comps[word] = HalfSpaceField.from_spectrum(grid, levels, coef, f.is_real)
    sym_ok = trace_ok = True
    if check:
        sym_ok = _check_symmetry(base, grid, words, factors, comps, f.is_real, levels[0])
        trace_ok = _check_trace(comps, m, n) if m >= 2 else True
    return HarmonicTensorField(m, grid, levels, comps, sym_ok, trace_ok)


def _check_symmetry(base, grid, words, factors, comps, is_real, t) -> bool:
    for word in words:
        if len(set(word)) > 1:
            rev = tuple(reversed(word))
            coef = base * _component_symbol(grid, rev, factors)
            if is_real:
                coef = _real_spectrum(coef)
            direct = _slice(grid, coef, t, is_real).values
            stored = comps[word].slices[0].values
            scale = max(1.0, float(np.max(np.abs(stored))))
            if np.max(np.abs(direct - stored)) > 1e-13 * scale:
                return False
    return True


def _check_trace(comps, m, n) -> bool:
    for rest in combinations_with_replacement(range(n + 1), m - 2):
        total = 0.0
        for j in range(n + 1):
            total = total + comps[tuple(sorted((j, j) + rest))].stack()
        scale = max(1.0, max(float(np.max(np.abs(c.stack()))) for c in comps.values()))
        if np.max(np.abs(total)) > 1e-10 * scale:
            return False
    return True


def build_harmonic_vector(f: ScalarField, levels=None) -> HarmonicTensorField:
    """(u_0, ..., u_n) with u_0 = f * P_t and u_j = f * Q_t^(j)."""
    return build_tensor_field(f, 1, levels)


# ---------------------------------------------------------------------------
# checks


def _centered_derivative(v: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(v, -1, axis=axis) - np.roll(v, 1, axis=axis)) / (2 * h)


def _spectral_derivative(v: np.ndarray, grid: PeriodicGrid, axis: int) -> np.ndarray:
    xi = np.broadcast_to(grid.frequencies()[axis], grid.shape)
    sym = 2j * np.pi * xi
    n2 = grid.points_per_axis // 2
    idx = [slice(None)] * grid.dim
    idx[axis] = n2
    sym = sym.copy()
    sym[tuple(idx)] = 0.0
    out = np.fft.ifftn(np.fft.fftn(v) * sym)
    return out.real if np.isrealobj(v) else out


def _t_derivative_exact(comp: HalfSpaceField, t: float) -> np.ndarray:
    grid = comp.grid
    coef = comp.spectrum * poisson_symbol(grid, t) * (-2 * np.pi * grid.frequency_norm())
    return from_spectral_values(grid, coef, comp.is_real).values


def cr_residual(F: HarmonicTensorField, method: str = "fd") -> tuple[float, float]:
    """Max-norms of the divergence and the antisymmetric gradient of (u_0..u_n).

    Coordinates are (t, x_1, ..., x_n) with u_0 paired with t. ``fd`` uses
    centered differences in x and the exact generator -2 pi |xi| in t,
    ``spectral`` differentiates exactly in every direction, ``levels`` uses
    centered differences in x and non-uniform three-point differences across
    the stored levels (interior levels only).
    """
    if F.rank != 1:
        raise ParameterError("Cauchy-Riemann residuals need a rank-1 field")
    if len(F.levels) < 3:
        raise ParameterError("at least three levels are required")
    if method not in ("fd", "spectral", "levels"):
        raise ParameterError(f"unknown method {method!r}")
    grid = F.grid
    n = grid.dim
    h = grid.spacing
    comps = [F.component((j,)) for j in range(n + 1)]
    stacks = [c.stack() for c in comps]
    lv = F.levels.array
    if method == "levels":
        sel = list(range(1, len(lv) - 1))
    else:
        sel = list(range(len(lv)))

    def dx(j_comp, axis, li):
        v = stacks[j_comp][li]
        if method == "spectral":
            return _spectral_derivative(v, grid, axis)
        return _centered_derivative(v, axis, h)

    def dt(j_comp, li):
        if method == "levels":
            t0, t1, t2 = lv[li - 1], lv[li], lv[li + 1]
            a, b = t1 - t0, t2 - t1
            s = stacks[j_comp]
            return (-b / (a * (a + b))) * s[li - 1] + ((b - a) / (a * b)) * s[li] + (a / (b * (a + b))) * s[li + 1]
        if comps[j_comp].spectrum is None:
            raise ParameterError("exact t-derivative needs the boundary spectrum")
        return _t_derivative_exact(comps[j_comp], lv[li])

    div = curl = 0.0
    for li in sel:
        d = dt(0, li)
        for j in range(1, n + 1):
            d = d + dx(j, j - 1, li)
        div = max(div, float(np.max(np.abs(d))))
        for j in range(1, n + 1):
            c = dt(j, li) - dx(0, j - 1, li)
            curl = max(curl, float(np.max(np.abs(c))))
            for k in range(j + 1, n + 1):
                c = dx(j, k - 1, li) - dx(k, j - 1, li)
                curl = max(curl, float(np.max(np.abs(c))))
    return div, curl


def _x_laplacian(v: np.ndarray, h: float) -> np.ndarray:
    out = -2.0 * v.ndim * v
    for ax in range(v.ndim):
        out = out + np.roll(v, 1, axis=ax) + np.roll(v, -1, axis=ax)
    return out / h**2


def _interior(levels: TimeLevels, delta: float) -> list[float]:
    vals = levels.values
    inner = vals[1:-1] if len(vals) > 2 else ()
    return [t for t in inner if t - delta > 0]


def laplace_residual(u: HalfSpaceField, delta: float | None = None) -> float:
    """Max over interior levels of the (n+1)-point discrete Laplacian of u."""
    delta = u.grid.spacing if delta is None else delta
    worst = 0.0
    for t in _interior(u.levels, delta):
        mid = u.at(t).values
        lap = _x_laplacian(mid, u.grid.spacing)
        lap = lap + (u.at(t + delta).values - 2 * mid + u.at(t - delta).values) / delta**2
        worst = max(worst, float(np.max(np.abs(lap))))
    return worst


def _gradient(comp: HalfSpaceField, t: float) -> list[np.ndarray]:
    """Exact (d/dt, d/dx_1, ..., d/dx_n) of a component at height t."""
    grid = comp.grid
    if comp.spectrum is None:
        raise ParameterError("exact derivatives need the boundary spectrum")
    base = comp.spectrum * poisson_symbol(grid, t)
    syms = [-2 * np.pi * grid.frequency_norm()]
    syms += [2j * np.pi * np.broadcast_to(x, grid.shape) for x in grid.frequencies()]
    return [from_spectral_values(grid, base * s, comp.is_real).values for s in syms]


def _chain_laplacian(F: "HarmonicTensorField", q: float, t: float) -> np.ndarray:
    # S = |F|^2 with harmonic components: Lap S = 2 sum |grad F_w|^2
    S = 0.0
    lap_s = 0.0
    grad_s = None
    for word, comp in F.components.items():
        mult = _multiplicity(word)
        u = comp.at(t).values
        grads = _gradient(comp, t)
        S = S + mult * np.abs(u) ** 2
        lap_s = lap_s + 2 * mult * sum(np.abs(g) ** 2 for g in grads)
        terms = [2 * mult * np.real(np.conj(u) * g) for g in grads]
        grad_s = terms if grad_s is None else [a + b for a, b in zip(grad_s, terms)]
    p = q / 2
    S = np.maximum(S, np.finfo(float).tiny)
    return p * S ** (p - 1) * lap_s + p * (p - 1) * S ** (p - 2) * sum(g * g for g in grad_s)


def subharmonic_defect(
    F: HarmonicTensorField,
    q: float,
    method: str = "chain",
    delta: float | None = None,
    with_scale: bool = False,
):
    """Minimum over interior nodes of the (n+1)-D Laplacian of |F|^q.

    Interior means every stored level except the first and the last.
    ``chain`` evaluates Lap |F|^q = Lap S^(q/2), S = |F|^2, by the chain rule
    from exact spectral first derivatives of the components; this stays
    accurate where |F| is small and |F|^q is too sharp for a stencil.
    ``stencil`` applies the second-order (2n+2)-point stencil to |F|^q
    (periodic in x, exact slices at t -/+ delta, delta = h by default).
    With ``with_scale`` the pair (defect, scale) is returned, scale being
    the largest Laplacian magnitude seen.
    """
    if not q > 0:
        raise ParameterError("q must be positive")
    if method not in ("chain", "stencil"):
        raise ParameterError(f"unknown method {method!r}")
    h = F.grid.spacing
    delta = h if delta is None else delta
    interior = _interior(F.levels, delta if method == "stencil" else 0.0)
    if not interior:
        raise ParameterError("no interior levels")
    defect, scale = math.inf, 0.0
    for t in interior:
        if method == "chain":
            lap = _chain_laplacian(F, q, t)
        else:
            g = [F.norm_squared_at(s) ** (q / 2) for s in (t - delta, t, t + delta)]
            lap = _x_laplacian(g[1], h) + (g[2] - 2 * g[1] + g[0]) / delta**2
        defect = min(defect, float(np.min(lap)))
        scale = max(scale, float(np.max(np.abs(lap))))
    return (defect, scale) if with_scale else defect


def harmonic_majorant_gap(F: HarmonicTensorField, q: float, a: float, t: float, with_scale: bool = False):
    """min_x [(|F(., a)|^q * P_t)(x) - |F(x, a + t)|^q].

    ``a`` and ``a + t`` must lie within the stored level range; slices come
    from the boundary spectrum. With ``with_scale`` returns (gap, scale),
    scale being max |F(., a)|^q.
    """
    if F.rank < 1:
        raise ParameterError("tensor field required")
    lo, hi = F.levels[0], F.levels[-1]
    if not (lo <= a <= hi and 0 < t and a + t <= hi * (1 + 1e-12)):
        raise ParameterError(f"levels a={a}, a+t={a + t} outside [{lo}, {hi}]")
    grid = F.grid
    base = F.norm_squared_at(a) ** (q / 2)
    smoothed = from_spectral_values(
        grid, np.fft.fftn(base, norm="forward") * poisson_symbol(grid, t), True
    ).values
    top = F.norm_squared_at(a + t) ** (q / 2)
    gap = float(np.min(smoothed - top))
    scale = float(np.max(base))
    return (gap, scale) if with_scale else gap


# ---------------------------------------------------------------------------
# serialization


def save_halfspace(F, directory) -> None:
    """Write per-level field files and a JSON manifest into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if isinstance(F, HalfSpaceField):
        comps = {(): F}
        rank = 0
    else:
        comps = F.components
        rank = F.rank
    entries = []
    for word, comp in comps.items():
        tag = "".join(map(str, word)) or "u"
        for li, s in enumerate(comp.slices):
            name = f"c{tag}_l{li:03d}.mhf"
            save_field(s, d / name)
            entries.append({"word": list(word), "level": li, "file": name})
        if comp.spectrum is not None:
            spec_name = f"c{tag}_spectrum.npy"
            np.save(d / spec_name, np.asarray(comp.spectrum))
            entries.append({"word": list(word), "spectrum": spec_name})
    manifest = {
        "format": "mh-halfspace/1",
        "rank": rank,
        "grid": F.grid.to_dict(),
        "levels": list(F.levels.values),
        "entries": entries,
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_halfspace(directory):
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    levels = TimeLevels(tuple(manifest["levels"]))
    slices: dict = {}
    spectra: dict = {}
    for e in manifest["entries"]:
        word = tuple(e["word"])
        if "spectrum" in e:
            spectra[word] = np.load(d / e["spectrum"])
        else:
            slices.setdefault(word, {})[e["level"]] = load_field(d / e["file"])
    comps = {}
    for word, by_level in slices.items():
        ordered = tuple(by_level[i] for i in range(len(levels)))
        comps[word] = HalfSpaceField(
            ordered[0].grid, levels, ordered, spectra.get(word), ordered[0].is_real
        )
    if manifest["rank"] == 0:
        return comps[()]
    grid = next(iter(comps.values())).grid
    return HarmonicTensorField(manifest["rank"], grid, levels, comps)
