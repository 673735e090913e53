"""Maximal operators on the periodic grid.

Ball suprema use the discrete balls of :mod:`mhardy.weights`; cone suprema
take, level by level, the maximum of |u(., t)| over the ball of radius
aperture * t, which is exactly the double loop over (y, t) with
|y - x| < aperture * t. Convolutions with dilated kernels are spectral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import KernelError, ParameterError
from .expression import parse_expression
from .field_core import PeriodicGrid, ScalarField, to_spectral
from .halfspace import HalfSpaceField, TimeLevels, poisson_extend
from .weights import BallFamily, ball_max, ball_mean

__all__ = [
    "hl_family",
    "hardy_littlewood",
    "q_order_maximal",
    "PolyGaussian",
    "SampledKernel",
    "gaussian_kernel",
    "radial_maximal",
    "smoothed_nontangential",
    "nontangential_maximal",
    "poisson_maximal",
    "TestDictionary",
    "default_dictionary",
    "grand_maximal",
    "smoothed_levels",
]

KERNEL_TOL = 1e-6
CERT_TOL = 1e-12


def hl_family(grid: PeriodicGrid) -> BallFamily:
    """Dyadic radii L 2^-j down to h; the radius-h ball is the center alone."""
    return BallFamily.dyadic(grid, min_radius=grid.spacing)


def q_order_maximal(f: ScalarField, q: float, balls: BallFamily | None = None) -> ScalarField:
    """x -> sup over family balls B containing x of (mean_B |f|^q)^(1/q).

    Balls are centered at every node; ``balls.centers`` is not used.
    """
    if not q > 0:
        raise ParameterError("q must be positive")
    grid = f.grid
    balls = balls or hl_family(grid)
    a = np.abs(f.values)
    v = a if q == 1 else a**q
    best = None
    for r in balls.radii:
        m = ball_max(ball_mean(v, grid, r), grid, r)
        best = m if best is None else np.maximum(best, m)
    if q != 1:
        best = best ** (1.0 / q)
    return ScalarField(grid, best, True)


def hardy_littlewood(f: ScalarField, balls: BallFamily | None = None) -> ScalarField:
    """Uncentered Hardy-Littlewood maximal function over the ball family."""
    return q_order_maximal(f, 1.0, balls)


# ---------------------------------------------------------------------------
# kernels


def _poly_add(a: dict, b: dict, scale=1.0) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0) + scale * v
    return {k: v for k, v in out.items() if v != 0}


def _poly_dx(p: dict, j: int) -> dict:
    out: dict = {}
    for exps, c in p.items():
        if exps[j]:
            e = list(exps)
            e[j] -= 1
            out[tuple(e)] = out.get(tuple(e), 0) + c * exps[j]
    return out


def _poly_times_x(p: dict, j: int, scale) -> dict:
    out: dict = {}
    for exps, c in p.items():
        e = list(exps)
        e[j] += 1
        out[tuple(e)] = out.get(tuple(e), 0) + c * scale
    return out


def _poly_eval(p: dict, coords) -> np.ndarray:
    total = 0.0
    for exps, c in p.items():
        term = c
        for x, e in zip(coords, exps):
            if e:
                term = term * x**e
        total = total + term
    return total


@dataclass(frozen=True)
class PolyGaussian:
    """phi(x) = P(x) exp(-pi |x|^2 / sigma^2), tracked in both domains.

    ``fourier_poly`` is the polynomial Q with phi^(xi) = Q(xi) sigma^n
    exp(-pi sigma^2 |xi|^2).
    """

    dim: int
    sigma: float
    poly: dict
    fourier_poly: dict
    label: str = "G"

    @classmethod
    def gaussian(cls, dim: int, sigma: float = 1.0) -> "PolyGaussian":
        one = {(0,) * dim: 1.0}
        return cls(dim, float(sigma), one, dict(one), f"G[{sigma:g}]")

    def derivative(self, j: int) -> "PolyGaussian":
        """d/dx_j (axes counted from 1)."""
        k = j - 1
        p = _poly_add(_poly_dx(self.poly, k), _poly_times_x(self.poly, k, -2 * np.pi / self.sigma**2))
        q = _poly_times_x(self.fourier_poly, k, 2j * np.pi)
        return PolyGaussian(self.dim, self.sigma, p, q, f"d{j}({self.label})")

    def laplacian(self) -> "PolyGaussian":
        out = None
        for j in range(1, self.dim + 1):
            d = self.derivative(j).derivative(j)
            out = d if out is None else out + d
        return PolyGaussian(self.dim, self.sigma, out.poly, out.fourier_poly, f"lap({self.label})")

    def __add__(self, other: "PolyGaussian") -> "PolyGaussian":
        if other.sigma != self.sigma or other.dim != self.dim:
            raise ParameterError("can only add kernels of the same width")
        return PolyGaussian(
            self.dim,
            self.sigma,
            _poly_add(self.poly, other.poly),
            _poly_add(self.fourier_poly, other.fourier_poly),
            f"{self.label}+{other.label}",
        )

    def scaled(self, c: float, label: str | None = None) -> "PolyGaussian":
        return PolyGaussian(
            self.dim,
            self.sigma,
            {k: c * v for k, v in self.poly.items()},
            {k: c * v for k, v in self.fourier_poly.items()},
            label or f"{c:g}*{self.label}",
        )

    def __call__(self, *coords) -> np.ndarray:
        r2 = sum(x * x for x in coords)
        return np.real(_poly_eval(self.poly, coords)) * np.exp(-np.pi * r2 / self.sigma**2)

    def fourier(self, *xi) -> np.ndarray:
        r2 = sum(x * x for x in xi)
        q = _poly_eval(self.fourier_poly, xi)
        return q * self.sigma**self.dim * np.exp(-np.pi * self.sigma**2 * r2)

    @property
    def integral(self) -> float:
        return float(np.real(self.fourier(*([0.0] * self.dim))))

    def certificate(self, m: int, half_width: float | None = None, points: int | None = None) -> float:
        """Sampled sup_x max_{|beta| <= m+1} (1+|x|)^((m+2)(n+1)) |d^beta phi(x)|."""
        n = self.dim
        R = half_width or max(8.0 * self.sigma, 4.0) + 2.0
        pts = points or {1: 4097, 2: 401, 3: 81}.get(n, 41)
        ax = np.linspace(-R, R, pts)
        coords = np.meshgrid(*([ax] * n), indexing="ij", sparse=True)
        weight = (1 + np.sqrt(sum(c * c for c in coords))) ** ((m + 2) * (n + 1))
        best = 0.0
        frontier = [((0,) * n, self)]
        seen = {(0,) * n}
        for _ in range(m + 2):
            nxt = []
            for beta, k in frontier:
                best = max(best, float(np.max(weight * np.abs(k(*coords)))))
                for j in range(n):
                    b = list(beta)
                    b[j] += 1
                    b = tuple(b)
                    if sum(b) <= m + 1 and b not in seen:
                        seen.add(b)
                        nxt.append((b, k.derivative(j + 1)))
            frontier = nxt
        return best


def gaussian_kernel(dim: int) -> PolyGaussian:
    """exp(-pi |x|^2), integral 1."""
    return PolyGaussian.gaussian(dim, 1.0)


@dataclass(frozen=True)
class SampledKernel:
    """A kernel given by an expression in x1..xn, dilated by direct sampling."""

    expr: str
    dim: int

    @cached_property
    def tree(self):
        return parse_expression(self.expr, names=[f"x{j}" for j in range(1, self.dim + 1)])

    def __call__(self, *coords):
        env = {f"x{j + 1}": c for j, c in enumerate(coords)}
        env["|x|"] = np.sqrt(sum(c * c for c in coords))
        return np.asarray(self.tree.evaluate(env), dtype=float) * np.ones(np.broadcast(*coords).shape)


def _displacements(grid: PeriodicGrid):
    d = np.fft.fftfreq(grid.N, d=1.0 / grid.N) * grid.spacing
    return np.meshgrid(*([d] * grid.dim), indexing="ij", sparse=True)


def _kernel_multiplier(kernel, grid: PeriodicGrid, t: float) -> np.ndarray:
    if isinstance(kernel, PolyGaussian):
        xi = grid.frequencies()
        return kernel.fourier(*[t * x for x in xi]) * np.ones(grid.shape)
    # sampled dilates are renormalized to unit discrete mass, so that below
    # grid scale the kernel tends to the identity instead of losing mass
    disp = _displacements(grid)
    samples = kernel(*[d / t for d in disp])
    return np.fft.fftn(samples) / np.sum(samples)


def _check_kernel(kernel, grid: PeriodicGrid) -> None:
    if isinstance(kernel, PolyGaussian):
        mass = kernel.integral
    else:
        disp = _displacements(grid)
        mass = float(np.sum(kernel(*disp)) * grid.cell_volume)
    if not abs(mass - 1.0) <= KERNEL_TOL:
        raise KernelError(f"kernel integrates to {mass!r}, not 1")


def _resolve_kernel(kernel, dim: int):
    if kernel is None or kernel == "gaussian":
        return gaussian_kernel(dim)
    if isinstance(kernel, str):
        return SampledKernel(kernel, dim)
    return kernel


def smoothed_levels(f: ScalarField, kernel, levels) -> list[np.ndarray]:
    """Arrays (f * kernel_t) for each t in ``levels``."""
    coef = to_spectral(f).coefficients
    out = []
    for t in levels:
        vals = np.fft.ifftn(coef * _kernel_multiplier(kernel, f.grid, t), norm="forward")
        # kernels are real, so their transforms are Hermitian
        out.append(vals.real if f.is_real else vals)
    return out


def _levels(grid, levels) -> TimeLevels:
    if levels is None:
        return TimeLevels.default(grid)
    return levels if isinstance(levels, TimeLevels) else TimeLevels(tuple(levels))


def radial_maximal(f: ScalarField, kernel=None, levels=None) -> ScalarField:
    """x -> max over levels t of |(f * kernel_t)(x)|, kernel_t(x) = t^-n kernel(x/t).

    ``kernel`` is a :class:`PolyGaussian` (dilated exactly in frequency), an
    expression in x (sampled at each dilation), or ``None`` for
    exp(-pi |x|^2). Its integral must be 1 to within 1e-6.
    """
    grid = f.grid
    kernel = _resolve_kernel(kernel, grid.dim)
    _check_kernel(kernel, grid)
    levels = _levels(grid, levels)
    best = None
    for vals in smoothed_levels(f, kernel, levels):
        a = np.abs(vals)
        best = a if best is None else np.maximum(best, a)
    return ScalarField(grid, best, True)


def _cone_max(grid: PeriodicGrid, slices, levels, aperture: float) -> np.ndarray:
    best = None
    diam = grid.half_width * math.sqrt(grid.dim)
    for vals, t in zip(slices, levels):
        a = np.abs(vals)
        r = aperture * t
        if r > diam:
            m = np.full(grid.shape, float(a.max()))
        else:
            m = ball_max(a, grid, r)
        best = m if best is None else np.maximum(best, m)
    return best


def nontangential_maximal(u: HalfSpaceField, aperture: float = 1.0) -> ScalarField:
    """x -> sup over levels t and nodes y with |y - x| < aperture t of |u(y, t)|."""
    if not aperture > 0:
        raise ParameterError("aperture must be positive")
    vals = [s.values for s in u.slices]
    return ScalarField(u.grid, _cone_max(u.grid, vals, u.levels, aperture), True)


def smoothed_nontangential(f: ScalarField, kernel=None, levels=None, aperture: float = 1.0) -> ScalarField:
    """Non-tangential maximal function of the extension (x, t) -> f * kernel_t."""
    if not aperture > 0:
        raise ParameterError("aperture must be positive")
    grid = f.grid
    kernel = _resolve_kernel(kernel, grid.dim)
    _check_kernel(kernel, grid)
    levels = _levels(grid, levels)
    slices = smoothed_levels(f, kernel, levels)
    return ScalarField(grid, _cone_max(grid, slices, levels, aperture), True)


def poisson_maximal(f: ScalarField, levels=None, aperture: float = 1.0) -> ScalarField:
    """Non-tangential maximal function of the Poisson extension."""
    return nontangential_maximal(poisson_extend(f, _levels(f.grid, levels)), aperture)


# ---------------------------------------------------------------------------
# grand maximal


@dataclass(frozen=True)
class TestDictionary:
    """Finite set of kernels, each certified to lie in the unit ball of S_m."""

    members: tuple[tuple[PolyGaussian, float], ...]
    m: int

    def __post_init__(self):
        if not self.members:
            raise ParameterError("dictionary is empty")
        for k, cert in self.members:
            if cert > 1 + CERT_TOL:
                raise KernelError(f"member {k.label} has S_m seminorm {cert:.6g} > 1")

    @classmethod
    def certify(cls, kernels, m: int, rescale: bool = False) -> "TestDictionary":
        """Compute certificates; with ``rescale`` each kernel is scaled to 0.99/cert."""
        members = []
        for k in kernels:
            cert = k.certificate(m)
            if rescale:
                k = k.scaled(0.99 / cert, f"{k.label}")
                cert = k.certificate(m)
            members.append((k, cert))
        return cls(tuple(members), m)

    def extended(self, other: "TestDictionary") -> "TestDictionary":
        if other.m != self.m:
            raise ParameterError("dictionaries of different order")
        return TestDictionary(self.members + other.members, self.m)

    @property
    def kernels(self) -> list[PolyGaussian]:
        return [k for k, _ in self.members]


DEFAULT_WIDTHS = (0.5, 1.0, 2.0)


def default_dictionary(dim: int, m: int = 1, widths=DEFAULT_WIDTHS) -> TestDictionary:
    """Twelve members: G, G + d1 G, G - Lap G and G + d1 d1 G at three widths.

    Every member has positive integral; each is rescaled to seminorm 0.99.
    """
    kernels = []
    for s in widths:
        g = PolyGaussian.gaussian(dim, s)
        d1 = g.derivative(1)
        kernels += [
            g,
            (g + d1.scaled(0.5 * s)).scaled(1.0, f"G+d1G[{s:g}]"),
            (g + g.laplacian().scaled(-0.25 * s * s)).scaled(1.0, f"G-LapG[{s:g}]"),
            (g + d1.derivative(1).scaled(0.25 * s * s)).scaled(1.0, f"G+d11G[{s:g}]"),
        ]
    return TestDictionary.certify(kernels, m, rescale=True)


def grand_maximal(
    f: ScalarField, dictionary: TestDictionary, levels=None, aperture: float = 1.0
) -> ScalarField:
    """Max over dictionary members of the non-tangential maximal of f * member_t.

    A finite dictionary gives a lower bound for the grand maximal function.
    """
    grid = f.grid
    levels = _levels(grid, levels)
    best = None
    for k, cert in dictionary.members:
        if cert > 1 + CERT_TOL:
            raise KernelError(f"member {k.label} is not certified")
        if k.dim != grid.dim:
            raise ParameterError("kernel dimension does not match the grid")
        slices = smoothed_levels(f, k, levels)
        m = _cone_max(grid, slices, levels, aperture)
        best = m if best is None else np.maximum(best, m)
    return ScalarField(grid, best, True)
