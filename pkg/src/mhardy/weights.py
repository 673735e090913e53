"""Muckenhoupt-type diagnostics for weights sampled on a periodic grid.

A discrete ball is the set of nodes ``{y : |y - x| < r}`` (periodic
distance) around a node ``x``; averages are plain means over those nodes.
Ball sums for every center at once are computed row by row: a ball is a
stack of contiguous runs along the last axis, so each run is a periodic
window sum and each row is a shift of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.ndimage import maximum_filter1d

from .errors import ParameterError
from .field_core import PeriodicGrid, ScalarField

__all__ = [
    "ABOVE_GRID",
    "WeightField",
    "BallFamily",
    "WeightDiagnostics",
    "ball_stencil",
    "ball_count",
    "ball_sum",
    "ball_max",
    "coarsen",
    "a_q_constant",
    "a_q_profile",
    "reverse_holder_constant",
    "critical_weight_index",
    "doubling_check",
    "b_r_condition_ratio",
    "weight_diagnostics",
]

#: Returned by the critical-index estimators when no q on the grid qualifies.
ABOVE_GRID = math.inf

DEFAULT_THRESHOLD = 1.0e3
STABILITY = 0.10


@dataclass(frozen=True)
class WeightField:
    """A nonnegative, not identically zero, finite field."""

    field: ScalarField

    def __post_init__(self):
        v = self.field.values
        if not self.field.is_real:
            raise ParameterError("a weight must be real-valued")
        if not np.all(np.isfinite(v)):
            raise ParameterError("a weight must be finite at every node")
        if np.any(v < 0):
            raise ParameterError("a weight must be nonnegative")
        if not np.any(v > 0):
            raise ParameterError("a weight must not vanish identically")

    @property
    def grid(self) -> PeriodicGrid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def positivity_floor(self) -> float:
        return float(self.values.min())

    def scaled(self, c: float) -> "WeightField":
        return WeightField(self.field * c)


@dataclass(frozen=True)
class BallFamily:
    """Balls of the given radii around the given centers.

    ``centers`` is ``None`` for "every node" (the covering family) or a tuple
    of node indices.
    """

    grid: PeriodicGrid
    radii: tuple[float, ...]
    centers: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        if not self.radii:
            raise ParameterError("a ball family needs at least one radius")
        for r in self.radii:
            if not r > 0:
                raise ParameterError("radii must be positive")
            if r > self.grid.half_width * (1 + 1e-12):
                raise ParameterError("radii may not exceed the half width L")
            if ball_count(self.grid, r) < 1:
                raise ParameterError(f"radius {r} contains no grid point")
        object.__setattr__(self, "radii", tuple(sorted(self.radii, reverse=True)))
        if self.centers is not None:
            object.__setattr__(
                self, "centers", tuple(tuple(int(k) % self.grid.N for k in c) for c in self.centers)
            )

    @classmethod
    def dyadic(
        cls,
        grid: PeriodicGrid,
        j_max: int | None = None,
        min_radius: float | None = None,
        centers=None,
    ) -> "BallFamily":
        """Radii ``L 2^-j`` for ``j = 0..j_max`` that are at least ``min_radius`` (default 2h)."""
        floor = 2.0 * grid.spacing if min_radius is None else min_radius
        radii = []
        j = 0
        while True:
            r = grid.half_width * 2.0**-j
            if r < floor * (1 - 1e-12) or (j_max is not None and j > j_max):
                break
            radii.append(r)
            j += 1
        if not radii:
            raise ParameterError("no dyadic radius satisfies the lower bound")
        return cls(grid, tuple(radii), centers)

    @classmethod
    def centered(cls, grid: PeriodicGrid, point, j_max: int | None = None, min_radius=None):
        """Dyadic family restricted to balls centered at the node nearest ``point``."""
        return cls.dyadic(grid, j_max, min_radius, centers=(grid.nearest_index(point),))

    @property
    def j_max(self) -> int:
        return int(round(math.log2(self.grid.half_width / min(self.radii))))

    def select(self, arr: np.ndarray) -> np.ndarray:
        """Values of a per-center array at the family's centers."""
        if self.centers is None:
            return arr.ravel()
        return np.array([arr[c] for c in self.centers])


@dataclass
class WeightDiagnostics:
    a_q_constant: dict[float, float]
    rh_constant: dict[float, float]
    critical_index: float
    doubling_exponents: tuple[float, float]
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def num(v):
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")

        return {
            "a_q_constant": {repr(q): num(v) for q, v in self.a_q_constant.items()},
            "rh_constant": {repr(r): num(v) for r, v in self.rh_constant.items()},
            "critical_index": num(self.critical_index),
            "doubling_exponents": {"p": self.doubling_exponents[0], "delta": self.doubling_exponents[1]},
            "flags": list(self.flags),
        }


# ---------------------------------------------------------------------------
# ball stencils


@lru_cache(maxsize=256)
def _stencil(dim: int, r_over_h: float) -> tuple[tuple[tuple[int, ...], int], ...]:
    """Rows of the ball ``|d| < r/h``: (offset in the first dim-1 axes, half run length)."""
    R2 = r_over_h * r_over_h
    reach = int(math.ceil(r_over_h))
    rows = []
    outer = [()] if dim == 1 else list(np.ndindex(*([2 * reach + 1] * (dim - 1))))
    for o in outer:
        d = tuple(int(k) - reach for k in o)
        s = sum(k * k for k in d)
        if s >= R2:
            continue
        a = int(math.isqrt(int(math.floor(R2 - s))))
        while a * a + s >= R2:
            a -= 1
        while (a + 1) * (a + 1) + s < R2:
            a += 1
        rows.append((d, a))
    return tuple(rows)


def ball_stencil(grid: PeriodicGrid, radius: float):
    return _stencil(grid.dim, radius / grid.spacing)


def ball_count(grid: PeriodicGrid, radius: float) -> int:
    return sum(2 * a + 1 for _, a in ball_stencil(grid, radius))


def _window_sum(v: np.ndarray, a: int) -> np.ndarray:
    if a == 0:
        return v
    N = v.shape[-1]
    if 2 * a + 1 > N:
        raise ParameterError("ball wider than the torus")
    ext = np.concatenate([v[..., N - a :], v, v[..., :a]], axis=-1)
    c = np.cumsum(ext, axis=-1)
    c = np.concatenate([np.zeros(v.shape[:-1] + (1,)), c], axis=-1)
    return c[..., 2 * a + 1 :] - c[..., : N]


def _accumulate(v: np.ndarray, grid: PeriodicGrid, radius: float, window, combine):
    rows = ball_stencil(grid, radius)
    cache: dict[int, np.ndarray] = {}
    out = None
    axes = tuple(range(grid.dim - 1))
    for d, a in rows:
        if a not in cache:
            cache[a] = window(v, a)
        term = cache[a]
        if d:
            term = np.roll(term, tuple(-k for k in d), axis=axes)
        out = term.copy() if out is None else combine(out, term)
    return out


def ball_sum(values: np.ndarray, grid: PeriodicGrid, radius: float) -> np.ndarray:
    """Sum of ``values`` over the ball of ``radius`` around every node."""
    return _accumulate(np.asarray(values, dtype=float), grid, radius, _window_sum, np.add)


def ball_max(values: np.ndarray, grid: PeriodicGrid, radius: float) -> np.ndarray:
    """Maximum of ``values`` over the ball of ``radius`` around every node."""

    def window(v, a):
        if a == 0:
            return v
        return maximum_filter1d(v, size=2 * a + 1, axis=-1, mode="wrap")

    return _accumulate(np.asarray(values, dtype=float), grid, radius, window, np.maximum)


def ball_mean(values: np.ndarray, grid: PeriodicGrid, radius: float) -> np.ndarray:
    return ball_sum(values, grid, radius) / ball_count(grid, radius)


def coarsen(w: WeightField) -> WeightField:
    """Average over 2^n blocks of nodes: the same weight seen at twice the spacing."""
    g = w.grid
    if g.N // 2 < 8 or (g.N // 2) % 2:
        raise ParameterError("grid too coarse to coarsen")
    shape = []
    for _ in range(g.dim):
        shape += [g.N // 2, 2]
    v = w.values.reshape(shape).mean(axis=tuple(range(1, 2 * g.dim, 2)))
    coarse = PeriodicGrid(g.dim, g.half_width, g.N // 2, (g.offset + 0.5) / 2)
    return WeightField(ScalarField(coarse, v, True))


# ---------------------------------------------------------------------------
# A_q and reverse Hoelder


def _as_weight(w) -> WeightField:
    return w if isinstance(w, WeightField) else WeightField(w)


def a_q_profile(w, q: float, balls: BallFamily) -> dict[float, float]:
    """Sup over the family's centers of the A_q ball quantity, per radius."""
    w = _as_weight(w)
    if not q >= 1:
        raise ParameterError(f"A_q requires q >= 1, got {q}")
    v = w.values
    g = w.grid
    out = {}
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if q == 1:
            inv = np.where(v > 0, 1.0 / np.where(v > 0, v, 1.0), np.inf)
        else:
            qp = q / (q - 1.0)
            dual = np.where(v > 0, np.power(np.where(v > 0, v, 1.0), 1.0 - qp), np.inf)
        for r in balls.radii:
            avg_w = ball_mean(v, g, r)
            if q == 1:
                other = ball_max(inv, g, r)
            else:
                other = np.power(ball_mean(dual, g, r), q - 1.0)
            vals = balls.select(avg_w * other)
            vals = np.where(np.isnan(vals), np.inf, vals)
            out[r] = float(np.max(vals))
    return out


def a_q_constant(w, q: float, balls: BallFamily) -> float:
    """Sup over the ball family of avg(w) avg(w^(1-q'))^(q-1), or avg(w) max(1/w) for q = 1.

    A zero sample makes the q = 1 quantity infinite; ``inf`` is returned.
    """
    return max(a_q_profile(w, q, balls).values())


def reverse_holder_constant(w, r: float, balls: BallFamily) -> float:
    """Sup over balls of (avg w^r)^(1/r) / avg w."""
    w = _as_weight(w)
    if not r > 1:
        raise ParameterError(f"reverse Hoelder exponent must exceed 1, got {r}")
    v = w.values
    best = 0.0
    for rad in balls.radii:
        num = np.power(ball_mean(v**r, w.grid, rad), 1.0 / r)
        den = ball_mean(v, w.grid, rad)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = balls.select(np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0))
        best = max(best, float(np.max(ratio)))
    return best


def _stable_constant(w: WeightField, q: float, j_max: int | None) -> tuple[float, float]:
    fine = a_q_constant(w, q, BallFamily.dyadic(w.grid, j_max))
    coarse_w = coarsen(w)
    coarse = a_q_constant(
        coarse_w, q, BallFamily.dyadic(coarse_w.grid, None if j_max is None else j_max - 1)
    )
    return fine, coarse


def critical_weight_index(
    w,
    q_grid,
    threshold: float = DEFAULT_THRESHOLD,
    j_max: int | None = None,
    details: list | None = None,
) -> float:
    """Smallest q on ``q_grid`` whose A_q constant is below ``threshold`` and stable.

    Stability compares the constant on the given grid with the constant of
    the block-averaged weight on the grid of twice the spacing (one dyadic
    level fewer). A weight outside A_q shows growth with the resolution of
    its singular set, so a change above 10% disqualifies q. Returns
    ``ABOVE_GRID`` when nothing qualifies.
    """
    w = _as_weight(w)
    qs = list(q_grid)
    if not qs:
        raise ParameterError("empty q grid")
    if any(b < a for a, b in zip(qs, qs[1:])) or qs[0] < 1:
        raise ParameterError("q grid must be ascending and start at q >= 1")
    for q in qs:
        fine, coarse = _stable_constant(w, q, j_max)
        ok = math.isfinite(fine) and fine <= threshold and abs(fine - coarse) <= STABILITY * coarse
        if details is not None:
            details.append({"q": q, "fine": fine, "coarse": coarse, "accepted": bool(ok)})
        if ok:
            return float(q)
    return ABOVE_GRID


# ---------------------------------------------------------------------------
# doubling and B_r'


def doubling_check(w, balls: BallFamily, p_step: float = 0.01) -> tuple[float, float]:
    """Fit the doubling exponent p and the reverse-doubling exponent delta.

    Over every nested concentric pair B1 subset B2 of the family,
    ``w(B2)/w(B1) <= C (|B2|/|B1|)^p`` and ``w(B1)/w(B2) <= C' (|B1|/|B2|)^delta``
    with C, C' fixed by the coarsest pair. Ball volumes are node counts.
    """
    w = _as_weight(w)
    radii = balls.radii
    if len(radii) < 3:
        raise ParameterError("doubling fit needs at least three nested scales")
    masses = [balls.select(ball_sum(w.values, w.grid, r)) for r in radii]
    counts = [ball_count(w.grid, r) for r in radii]
    if any(np.any(m <= 0) for m in masses):
        raise ParameterError("a ball of the family carries no mass")
    pairs = []
    for i in range(len(radii)):
        for j in range(i + 1, len(radii)):
            lm = np.log(masses[i] / masses[j])
            pairs.append((float(lm.max()), float(lm.min()), math.log(counts[i] / counts[j])))
    top_max, top_min, top_v = pairs[0]
    slack = 1e-9
    grid = np.arange(0.0, 10.0 * w.grid.dim + p_step / 2, p_step)

    p_fit = math.inf
    for p in grid:
        c = top_max - p * top_v
        if all(m - p * v <= c + slack for m, _, v in pairs):
            p_fit = float(round(p, 10))
            break
    delta_fit = 0.0
    for d in grid[::-1]:
        # in logs: -log(w(B2)/w(B1)) <= log C' - d log(|B2|/|B1|)
        c = -top_min + d * top_v
        if all(-mn + d * v <= c + slack for _, mn, v in pairs):
            delta_fit = float(round(d, 10))
            break
    return p_fit, delta_fit


def b_r_condition_ratio(w, r_prime: float, x, t: float) -> float:
    """The B_{r'} quotient at the node ``x`` (index tuple or point) and radius ``t``."""
    w = _as_weight(w)
    g = w.grid
    if not r_prime > 1:
        raise ParameterError("r' must exceed 1")
    if t < 2 * g.spacing * (1 - 1e-12):
        raise ParameterError("t must be at least 2h")
    idx = tuple(x) if _is_index(x, g) else g.nearest_index(x)
    center = g.node(idx)
    coords = g.coordinates()
    dist2 = 0.0
    for j, c in enumerate(coords):
        d = (c - center[j] + g.half_width) % (2 * g.half_width) - g.half_width
        dist2 = dist2 + d * d
    dist = np.sqrt(dist2) * np.ones(g.shape)
    n = g.dim
    num = np.sum(w.values / (t + dist) ** (n * r_prime))
    den = t ** (-n * r_prime) * np.sum(w.values[dist < t])
    return float(num / den)


def _is_index(x, g: PeriodicGrid) -> bool:
    return (
        isinstance(x, tuple)
        and len(x) == g.dim
        and all(isinstance(k, (int, np.integer)) for k in x)
    )


def weight_diagnostics(
    w,
    q_grid,
    r_values=(1.1, 1.5, 2.0),
    j_max: int | None = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> WeightDiagnostics:
    w = _as_weight(w)
    balls = BallFamily.dyadic(w.grid, j_max)
    flags = []
    aq = {}
    for q in q_grid:
        aq[float(q)] = a_q_constant(w, q, balls)
        if not math.isfinite(aq[float(q)]):
            flags.append(f"A_{q} constant infinite (zero sample)")
    rh = {float(r): reverse_holder_constant(w, r, balls) for r in r_values}
    crit = critical_weight_index(w, q_grid, threshold, j_max)
    if crit == ABOVE_GRID:
        flags.append("critical index above grid")
    try:
        dbl = doubling_check(w, balls)
    except ParameterError as exc:
        dbl = (math.nan, math.nan)
        flags.append(str(exc))
    return WeightDiagnostics(aq, rh, crit, dbl, flags)
