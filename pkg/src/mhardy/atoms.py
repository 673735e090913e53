"""Atoms: compactly supported seeds with vanishing moments and a size bound.

An atom lives on a ball B that must fit inside one period cell. Its samples
are built on a local stencil around the grid cell holding the center, so
translating the center by a whole number of grid steps moves the samples
without changing a single bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConstructionError, ParameterError
from .field_core import PeriodicGrid, ScalarField
from .musielak import CriticalIndices, MusielakFunction, gauge

__all__ = [
    "Ball",
    "AtomSpec",
    "AtomReport",
    "make_atom",
    "validate_atom",
    "atom_size_norm",
    "size_profile",
    "ball_indicator_norm",
    "monomial_exponents",
    "moment_residuals",
    "T_GRID",
]

# sup over t is taken on this grid and then refined between neighbours
T_GRID = np.logspace(-4.0, 4.0, 64)
SAFETY = 0.99
# centers are snapped to this fraction of a grid step
_SNAP = 2.0**20


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if not self.radius > 0:
            raise ParameterError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def mask(self, grid: PeriodicGrid) -> np.ndarray:
        """Nodes strictly inside the ball, measured from the snapped center.

        Falls back to plain distances (no wrap-around) when the ball crosses
        the seam, so validation of foreign fields never raises.
        """
        try:
            patch = _patch(grid, self)
        except ParameterError:
            d2 = np.sum((grid.points() - np.asarray(self.center)) ** 2, axis=-1)
            return d2 < self.radius**2
        out = np.zeros(grid.shape, dtype=bool)
        out[tuple((np.asarray(patch.start) + patch.offsets).T)] = True
        return out

    def to_dict(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class AtomSpec:
    """A (phi, q, s) atom request.

    ``q`` may be ``math.inf``. ``extra_degree`` is how far the polynomial
    factor of the profile exceeds the moment order.
    """

    ball: Ball
    q: float = math.inf
    s: int = 0
    profile: str = "bump"
    extra_degree: int = 2

    def __post_init__(self):
        if self.s < 0 or int(self.s) != self.s:
            raise ParameterError("moment order s must be a non-negative integer")
        if not self.q >= 1:
            raise ParameterError("size exponent q must be in [1, inf]")
        if self.profile != "bump":
            raise ParameterError(f"unknown atom profile {self.profile!r}")
        if self.extra_degree < 0:
            raise ParameterError("extra_degree must be non-negative")

    def check(self, grid: PeriodicGrid, indices: CriticalIndices | None = None) -> None:
        if self.ball.dim != grid.dim:
            raise ParameterError("ball dimension does not match the grid")
        if self.ball.radius < 4 * grid.spacing:
            raise ParameterError(f"ball radius {self.ball.radius} is below 4h = {4 * grid.spacing}")
        if indices is not None:
            if math.isfinite(self.q) and not self.q > indices.q_phi:
                raise ParameterError(f"q = {self.q} must exceed q(phi) = {indices.q_phi}")
            if self.s < indices.m_phi:
                raise ParameterError(f"s = {self.s} is below m(phi) = {indices.m_phi}")

    def to_dict(self) -> dict:
        return {
            "ball": self.ball.to_dict(),
            "q": "inf" if math.isinf(self.q) else self.q,
            "s": self.s,
            "profile": self.profile,
        }


def monomial_exponents(dim: int, degree: int) -> list[tuple[int, ...]]:
    """All exponent tuples with total degree <= ``degree``, graded order."""
    out = []
    for d in range(degree + 1):
        for combo in combinations_with_replacement(range(dim), d):
            out.append(tuple(combo.count(j) for j in range(dim)))
    return out


def _monomials(y: np.ndarray, exps) -> np.ndarray:
    """Columns y^alpha for points ``y`` of shape (K, n)."""
    return np.stack([np.prod(y**np.asarray(e), axis=1) for e in exps], axis=1)


@dataclass
class _Patch:
    start: tuple[int, ...]
    offsets: np.ndarray  # (K, n) integer offsets from start
    local: np.ndarray  # (K, n) (y - c)/r
    points: np.ndarray  # (K, n) absolute node coordinates


def _patch(grid: PeriodicGrid, ball: Ball) -> _Patch:
    """In-ball nodes around a snapped center, in canonical order."""
    h, r = grid.spacing, ball.radius
    u = (np.asarray(ball.center) + grid.half_width) / h - grid.offset
    base = np.floor(u)
    frac = np.round((u - base) * _SNAP) / _SNAP
    reach = int(math.ceil(r / h)) + 1
    rng = np.arange(-reach, reach + 2)
    mesh = np.stack(np.meshgrid(*([rng] * grid.dim), indexing="ij"), axis=-1).reshape(-1, grid.dim)
    disp = (mesh - frac) * h
    inside = np.sum(disp * disp, axis=1) < r * r
    mesh, disp = mesh[inside], disp[inside]
    idx = base.astype(int) + mesh
    if idx.size == 0:
        raise ParameterError("ball contains no grid nodes")
    if idx.min() < 0 or idx.max() >= grid.points_per_axis:
        raise ParameterError("ball crosses the periodic seam; move it inside one cell")
    points = -grid.half_width + (idx + grid.offset) * h
    return _Patch(tuple(base.astype(int)), mesh, disp / r, points)


def _bump(local: np.ndarray) -> np.ndarray:
    rho2 = np.sum(local * local, axis=1)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(rho2 < 1, np.exp(-1.0 / (1.0 - np.minimum(rho2, 1 - 1e-300))), 0.0)


def _moment_free(patch: _Patch, s: int, extra: int, dim: int) -> np.ndarray:
    """Bump times a polynomial, with moments of order <= s removed."""
    b = _bump(patch.local)
    profile = b[:, None] * _monomials(patch.local, monomial_exponents(dim, s + extra))
    tests = _monomials(patch.local, monomial_exponents(dim, s))
    if profile.shape[0] < profile.shape[1]:
        raise ConstructionError("too few nodes in the ball for the profile space")
    # orthonormalize the profile columns, then solve the moment constraints
    q, rr = np.linalg.qr(profile)
    if np.min(np.abs(np.diag(rr))) <= 1e-12 * np.max(np.abs(np.diag(rr))):
        raise ConstructionError("profile space is degenerate on this ball")
    m = tests.T @ q
    target = q.T @ b
    coef = target - np.linalg.lstsq(m, m @ target, rcond=None)[0]
    for _ in range(2):
        coef -= np.linalg.lstsq(m, m @ coef, rcond=None)[0]
    a = q @ coef
    if np.linalg.norm(a) <= 1e-8 * np.linalg.norm(b):
        raise ConstructionError("moment system leaves no admissible profile (profile space too small)")
    return a


def ball_indicator_norm(phi: MusielakFunction, points: np.ndarray, volume: float) -> float:
    """Luxembourg norm of the indicator of the sampled ball."""
    return gauge(lambda t: phi(points, t), np.ones(points.shape[0]), volume)


def _size_at(phi, points, mag, volume, q, t):
    tt = np.full(points.shape[0], float(t))
    w = phi(points, tt)
    mass = float(np.sum(w)) * volume
    if not mass > 0:
        return 0.0
    return (float(np.sum(mag**q * w)) * volume / mass) ** (1.0 / q)


def _size(phi, points, values, volume, q) -> tuple[float, float | None]:
    mag = np.abs(values)
    if mag.size == 0:
        raise ParameterError("empty ball")
    if math.isinf(q):
        return float(mag.max()), None
    prof = np.array([_size_at(phi, points, mag, volume, q, t) for t in T_GRID])
    k = int(np.argmax(prof))
    best, arg = float(prof[k]), float(T_GRID[k])
    if 0 < k < len(T_GRID) - 1:
        res = minimize_scalar(
            lambda lt: -_size_at(phi, points, mag, volume, q, math.exp(lt)),
            bounds=(math.log(T_GRID[k - 1]), math.log(T_GRID[k + 1])),
            method="bounded",
            options={"xatol": 1e-10},
        )
        if -res.fun > best:
            best, arg = float(-res.fun), float(math.exp(res.x))
    return best, arg


def _ball_samples(a: ScalarField, ball: Ball):
    mask = ball.mask(a.grid)
    return a.grid.points()[mask], np.asarray(a.values)[mask]


def size_profile(a: ScalarField, ball: Ball, q: float, phi: MusielakFunction, t_grid=T_GRID) -> np.ndarray:
    """The size functional at each t of ``t_grid`` (finite q)."""
    points, values = _ball_samples(a, ball)
    if values.size == 0:
        raise ParameterError("empty ball")
    mag = np.abs(values)
    return np.array([_size_at(phi, points, mag, a.grid.cell_volume, q, t) for t in t_grid])


def atom_size_norm(a: ScalarField, ball: Ball, q: float, phi: MusielakFunction, with_argsup: bool = False):
    """sup_t [phi(B,t)^{-1} int_B |a|^q phi(x,t) dx]^{1/q}; sup|a| on B for q = inf."""
    if not q >= 1:
        raise ParameterError("q must be in [1, inf]")
    points, values = _ball_samples(a, ball)
    value, arg = _size(phi, points, values, a.grid.cell_volume, q)
    return (value, arg) if with_argsup else value


def make_atom(
    spec: AtomSpec, phi: MusielakFunction, grid: PeriodicGrid, indices: CriticalIndices | None = None
) -> ScalarField:
    """Bump-polynomial atom with vanishing moments through order s.

    Scaled so that the size functional equals 0.99 / ||chi_B||.
    """
    spec.check(grid, indices)
    patch = _patch(grid, spec.ball)
    raw = _moment_free(patch, spec.s, spec.extra_degree, grid.dim)
    vol = grid.cell_volume
    size, _ = _size(phi, patch.points, raw, vol, spec.q)
    chi = ball_indicator_norm(phi, patch.points, vol)
    local = raw * (SAFETY / (chi * size))
    values = np.zeros(grid.shape)
    idx = tuple((np.asarray(patch.start) + patch.offsets).T)
    values[idx] = local
    return ScalarField(grid, values, True)


@dataclass
class AtomReport:
    support_ok: bool
    leak_mass: float
    leak_max: float
    size_ok: bool
    size_ratio: float
    size_argsup: float | None
    moments_ok: bool
    moment_residual: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.support_ok and self.size_ok and self.moments_ok

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "tol": self.tol,
            "support": {"pass": self.support_ok, "leak_mass": self.leak_mass, "leak_max": self.leak_max},
            "size": {"pass": self.size_ok, "ratio": self.size_ratio, "argsup_t": self.size_argsup},
            "moments": {"pass": self.moments_ok, "max_residual": self.moment_residual},
        }


def moment_residuals(a: ScalarField, ball: Ball, s: int) -> np.ndarray:
    """|int a ((x - c)/r)^alpha| / int |a| for every |alpha| <= s."""
    grid = a.grid
    vals = np.asarray(a.values).reshape(-1)
    local = (grid.points().reshape(-1, grid.dim) - np.asarray(ball.center)) / ball.radius
    mon = _monomials(local, monomial_exponents(grid.dim, s))
    total = float(np.sum(np.abs(vals)))
    if total == 0:
        return np.zeros(mon.shape[1])
    return np.abs(vals @ mon) / total


def validate_atom(
    a: ScalarField, spec: AtomSpec, phi: MusielakFunction, tol: float = 1e-8
) -> AtomReport:
    """Check support, size bound and vanishing moments; never raises on failure."""
    ball = spec.ball
    grid = a.grid
    mask = ball.mask(grid)
    outside = np.abs(np.asarray(a.values))[~mask]
    leak_max = float(outside.max()) if outside.size else 0.0
    leak_mass = float(outside.sum()) * grid.cell_volume
    points, values = grid.points()[mask], np.asarray(a.values)[mask]
    if values.size == 0:
        size, arg, chi = math.inf, None, 1.0
    else:
        size, arg = _size(phi, points, values, grid.cell_volume, spec.q)
        chi = ball_indicator_norm(phi, points, grid.cell_volume)
    ratio = size * chi
    residual = float(moment_residuals(a, ball, spec.s).max())
    return AtomReport(
        support_ok=leak_max <= 1e-13,
        leak_mass=leak_mass,
        leak_max=leak_max,
        size_ok=ratio <= 1 + tol,
        size_ratio=ratio,
        size_argsup=arg,
        moments_ok=residual <= tol,
        moment_residual=residual,
        tol=tol,
    )
