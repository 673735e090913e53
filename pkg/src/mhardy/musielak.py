"""Musielak-Orlicz growth functions phi(x, t) and the Luxembourg quasi-norm.

Points ``x`` are arrays whose last axis holds the coordinates; ``t`` is
broadcast against the leading axes. On a grid, :meth:`MusielakFunction.on_grid`
precomputes the x-dependent parts once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import ConvergenceError, DomainError, InvalidFunctionError, ParameterError
from .expression import parse_expression
from .field_core import PeriodicGrid, ScalarField, coordinate_env
from .weights import (
    ABOVE_GRID,
    DEFAULT_THRESHOLD,
    STABILITY,
    WeightField,
    _stable_constant,
)

__all__ = [
    "MusielakFunction",
    "Separable",
    "LogPerturbed",
    "Custom",
    "Rescaled",
    "Regularized",
    "SampleSpec",
    "TypeIndices",
    "CriticalIndices",
    "phi_from_spec",
    "evaluate",
    "validate",
    "estimate_type_indices",
    "critical_weight_exponent",
    "critical_indices",
    "critical_order",
    "regularize",
    "power_rescale",
    "modular",
    "luxembourg_norm",
    "gauge",
]

_X_NAMES = [f"x{k}" for k in range(1, 10)]


def _point_env(x) -> dict:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    env = {name: x[..., j] for j, name in enumerate(_X_NAMES[: x.shape[-1]])}
    env["|x|"] = np.sqrt(np.sum(x * x, axis=-1))
    return env


class MusielakFunction:
    """Base class: a growth function phi(x, t) >= 0 with phi(x, 0) = 0."""

    kind = "abstract"
    declared_lower_type: float | None = None
    declared_upper_type: float | None = None

    def _eval(self, env: dict, t):
        raise NotImplementedError

    def __call__(self, x, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ParameterError("phi(x, t) is defined for t >= 0 only")
        return np.asarray(self._eval(_point_env(x), t), dtype=float)

    def on_grid(self, grid: PeriodicGrid) -> Callable[[np.ndarray], np.ndarray]:
        """Return ``t -> phi(x_i, t_i)`` for arrays ``t`` of the grid's shape."""
        env = coordinate_env(grid)
        return lambda t: np.asarray(self._eval(env, np.asarray(t, dtype=float)), dtype=float)

    def weight_slice(self, grid: PeriodicGrid, t: float) -> WeightField:
        """The weight x -> phi(x, t) sampled on ``grid``."""
        vals = self.on_grid(grid)(np.full(grid.shape, float(t)))
        return WeightField(ScalarField(grid, vals, True))

    def to_spec(self) -> dict:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_spec()})"


class Separable(MusielakFunction):
    """phi(x, t) = w(x) Phi(t)."""

    kind = "separable"

    def __init__(self, weight: str = "1", orlicz: str = "t", lower_type=None, upper_type=None):
        self.weight = weight
        self.orlicz = orlicz
        self._w = parse_expression(weight, names=_X_NAMES)
        self._phi = parse_expression(orlicz, names=["t"])
        self.declared_lower_type = lower_type
        self.declared_upper_type = upper_type

    def _eval(self, env, t):
        with np.errstate(all="ignore"):
            return self._w.evaluate(env) * self._phi.evaluate({"t": t})

    def on_grid(self, grid):
        w = np.broadcast_to(np.asarray(self._w.evaluate(coordinate_env(grid)), float), grid.shape)

        def ev(t):
            with np.errstate(all="ignore"):
                return w * self._phi.evaluate({"t": np.asarray(t, dtype=float)})

        return ev

    def to_spec(self):
        return {"kind": self.kind, "weight": self.weight, "orlicz": self.orlicz}


class LogPerturbed(MusielakFunction):
    """phi(x, t) = t^alpha / ([ln(e+|x|)]^beta + [ln(e+t)]^gamma).

    With beta = gamma = 0 the denominator is taken to be 1, i.e. no
    perturbation at all, rather than the literal value 2.
    """

    kind = "log_perturbed"

    def __init__(self, alpha: float, beta: float = 0.0, gamma: float = 0.0):
        if not alpha > 0:
            raise ParameterError("alpha must be positive")
        self.alpha, self.beta, self.gamma = float(alpha), float(beta), float(gamma)
        self.declared_lower_type = None
        self.declared_upper_type = None

    def _denominator(self, r, t):
        if self.beta == 0 and self.gamma == 0:
            return 1.0
        return np.log(np.e + r) ** self.beta + np.log(np.e + t) ** self.gamma

    def _eval(self, env, t):
        return t**self.alpha / self._denominator(env["|x|"], t)

    def on_grid(self, grid):
        r = np.broadcast_to(coordinate_env(grid)["|x|"], grid.shape)
        if self.beta == 0 and self.gamma == 0:
            return lambda t: np.asarray(t, dtype=float) ** self.alpha
        lx = np.log(np.e + r) ** self.beta

        def ev(t):
            t = np.asarray(t, dtype=float)
            return t**self.alpha / (lx + np.log(np.e + t) ** self.gamma)

        return ev

    def to_spec(self):
        return {"kind": self.kind, "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}


class Custom(MusielakFunction):
    """phi given by an expression in x1..x9, |x| and t."""

    kind = "custom"

    def __init__(self, expr: str, lower_type=None, upper_type=None):
        self.expr = expr
        self._tree = parse_expression(expr)
        self.declared_lower_type = lower_type
        self.declared_upper_type = upper_type

    def _eval(self, env, t):
        e = dict(env)
        e["t"] = t
        with np.errstate(all="ignore"):
            return self._tree.evaluate(e) + np.zeros_like(t)

    def to_spec(self):
        return {"kind": self.kind, "expr": self.expr}


class Rescaled(MusielakFunction):
    """phi_q(x, t) = phi(x, t^(1/q))."""

    kind = "rescaled"

    def __init__(self, base: MusielakFunction, q: float):
        if not q > 0:
            raise ParameterError(f"rescaling exponent must be positive, got {q}")
        self.base = base
        self.q = float(q)

    def _eval(self, env, t):
        return self.base._eval(env, t if self.q == 1 else t ** (1.0 / self.q))

    def on_grid(self, grid):
        ev = self.base.on_grid(grid)
        inv = 1.0 / self.q
        return lambda t: ev(t if self.q == 1 else np.asarray(t, dtype=float) ** inv)

    def to_spec(self):
        return {"kind": self.kind, "q": self.q, "base": self.base.to_spec()}


# Gauss-Legendre rule on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class Regularized(MusielakFunction):
    """phi~(x, t) = int_0^t phi(x, s)/s ds.

    Substituting s = t e^{-u} gives int_0^inf phi(x, t e^{-u}) du, which is
    integrated with composite Gauss-Legendre panels on a log grid in s. The
    far tail is closed with the local power law, which is exact for
    power-type growth near 0. Panel width is halved until two successive
    rules agree to ``rtol``.
    """

    kind = "regularized"

    def __init__(self, base: MusielakFunction, rtol: float = 1e-9, u_max: float = 60.0):
        self.base = base
        self.rtol = rtol
        self.u_max = u_max
        self.declared_lower_type = base.declared_lower_type
        self.declared_upper_type = base.declared_upper_type

    def _rule(self, ev, t, width):
        n_panels = int(round(self.u_max / width))
        total = np.zeros(np.shape(t))
        for k in range(n_panels):
            for x, w in zip(_GL_X, _GL_W):
                total = total + width * w * ev(t * math.exp(-(k + x) * width))
        a = ev(t * math.exp(-self.u_max))
        b = ev(t * math.exp(-self.u_max - 1.0))
        with np.errstate(all="ignore"):
            slope = np.log(a / b)
            tail = np.where(a > 0, a / slope, 0.0)
        if np.any(~np.isfinite(tail)) or np.any((a > 0) & (slope <= 0)):
            raise InvalidFunctionError("phi(x, s)/s is not integrable near s = 0")
        return total + tail

    def _integrate(self, ev, t):
        t = np.asarray(t, dtype=float)
        width = 0.5
        prev = self._rule(ev, t, width)
        for _ in range(5):
            width /= 2
            cur = self._rule(ev, t, width)
            scale = np.maximum(np.abs(cur), np.finfo(float).tiny)
            if np.all(np.abs(cur - prev) <= self.rtol * scale):
                return cur
            prev = cur
        if not np.all(np.isfinite(cur)):
            raise InvalidFunctionError("regularization quadrature diverged")
        return cur

    def _eval(self, env, t):
        return self._integrate(lambda s: self.base._eval(env, s), t)

    def on_grid(self, grid):
        ev = self.base.on_grid(grid)
        return lambda t: self._integrate(ev, t)

    def to_spec(self):
        return {"kind": self.kind, "base": self.base.to_spec()}


def phi_from_spec(spec) -> MusielakFunction:
    """Build a growth function from a config value.

    Accepts an expression string in (x, t) or a mapping with ``kind`` one of
    ``separable`` (``weight``, ``orlicz``), ``log_perturbed`` (``alpha``,
    ``beta``, ``gamma``), ``custom`` (``expr``), ``rescaled`` (``base``,
    ``q``) or ``regularized`` (``base``).
    """
    if isinstance(spec, MusielakFunction):
        return spec
    if isinstance(spec, str):
        return Custom(spec)
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ParameterError(f"cannot interpret growth-function spec {spec!r}")
    kind = spec["kind"]
    if kind == "separable":
        return Separable(spec.get("weight", "1"), spec.get("orlicz", "t"))
    if kind == "log_perturbed":
        return LogPerturbed(spec["alpha"], spec.get("beta", 0.0), spec.get("gamma", 0.0))
    if kind == "custom":
        return Custom(spec["expr"])
    if kind == "rescaled":
        return Rescaled(phi_from_spec(spec["base"]), spec["q"])
    if kind == "regularized":
        return Regularized(phi_from_spec(spec["base"]))
    raise ParameterError(f"unknown growth-function kind {kind!r}")


def evaluate(phi: MusielakFunction, x, t):
    """phi(x, t); scalar in, scalar out."""
    out = phi(x, t)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# type indices


@dataclass(frozen=True)
class SampleSpec:
    """Sampling lattice for the type-index estimators."""

    dim: int = 1
    s_exponent: int = 10
    t_exponent: int = 8
    x_samples: int = 64
    x_radius: float = 8.0
    c_max: float = 100.0
    p_step: float = 0.01
    p_max: float = 10.0
    stability: float = 0.02
    reference_octaves: int = 1

    def x_points(self) -> np.ndarray:
        sampler = qmc.Halton(d=self.dim, scramble=False)
        pts = sampler.random(self.x_samples)
        pts = (2.0 * pts - 1.0) * self.x_radius
        pts[0] = 0.0
        return pts

    def t_values(self) -> np.ndarray:
        return 2.0 ** np.arange(-self.t_exponent, self.t_exponent + 1, dtype=float)


@dataclass(frozen=True)
class TypeIndices:
    i_phi: float
    I_phi: float
    c_lower: float
    c_upper: float


@dataclass(frozen=True)
class CriticalIndices:
    i_phi: float
    I_phi: float
    q_phi: float
    m_phi: int

    def __post_init__(self):
        if not 0 < self.i_phi <= self.I_phi:
            raise ParameterError("indices must satisfy 0 < i_phi <= I_phi")
        if not self.q_phi >= 1:
            raise ParameterError("q_phi must be at least 1")

    def to_dict(self) -> dict:
        def num(v):
            return v if math.isfinite(v) else "inf"

        return {"i_phi": self.i_phi, "I_phi": num(self.I_phi), "q_phi": num(self.q_phi), "m_phi": self.m_phi}


def _samples(phi: MusielakFunction, spec: SampleSpec):
    x = spec.x_points()[:, None, :]
    t = spec.t_values()[None, :]
    base = phi(x, t)
    if np.any(~np.isfinite(base)) or np.any(base <= 0):
        raise InvalidFunctionError("phi(x, t) must be finite and positive for t > 0")
    return x, t, base


def validate(phi: MusielakFunction, spec: SampleSpec | None = None) -> None:
    """Check phi(x,0) = 0, positivity and monotonicity in t on the sample lattice."""
    spec = spec or SampleSpec()
    x = spec.x_points()
    zero = phi(x, np.zeros(len(x)))
    if np.any(np.abs(zero) > 0):
        raise InvalidFunctionError("phi(x, 0) must vanish")
    k = spec.t_exponent + spec.s_exponent
    t = 2.0 ** np.arange(-k, k + 1, 0.25)
    vals = phi(x[:, None, :], t[None, :])
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise InvalidFunctionError("phi(x, t) must be finite and positive for t > 0")
    if np.any(np.diff(vals, axis=1) < -1e-12 * np.abs(vals[:, 1:])):
        raise InvalidFunctionError("phi(x, .) is not nondecreasing")


def _required_constant(ratios: np.ndarray, log_s: np.ndarray, p: float) -> float:
    return float(np.max(ratios * np.exp(-p * log_s)))


def estimate_type_indices(phi: MusielakFunction, spec: SampleSpec | None = None) -> TypeIndices:
    """Estimate the lower index i(phi) and the upper index I(phi).

    For each p on the grid the smallest admissible constant
    C(p) = max phi(x, s t) / (s^p phi(x, t)) is computed over the sampled
    (x, t) and s in [2^-K, 1] (lower) or [1, 2^K] (upper). On a finite range
    every p admits some constant, so a type p is accepted only when
    C(p) <= c_max and C(p) exceeds the constant already needed on the first
    ``reference_octaves`` octaves of s by at most the stability margin.
    Growth of the constant with the s-range is what rejects a type.
    """
    spec = spec or SampleSpec()
    validate(phi, spec)
    x, t, base = _samples(phi, spec)
    K = spec.s_exponent
    half = min(spec.reference_octaves, K)
    ks = np.arange(0, K + 1)
    ps = np.round(np.arange(spec.p_step, spec.p_max + spec.p_step / 2, spec.p_step), 10)

    def collect(sign):
        s = 2.0 ** (sign * ks)
        vals = phi(x[:, :, None, :], t[..., None] * s)  # (X, T, S)
        ratios = vals / base[..., None]
        return ratios.reshape(-1, len(ks)), np.log(s)

    r_lo, ls_lo = collect(-1)
    r_hi, ls_hi = collect(+1)
    if np.any(r_lo > 1 + 1e-12) or np.any(r_hi < 1 - 1e-12):
        raise InvalidFunctionError("phi(x, .) is not nondecreasing on the samples")
    mlo = r_lo.max(axis=0)
    mhi = r_hi.max(axis=0)

    def admissible(m, ls, p):
        full = _required_constant(m, ls, p)
        part = _required_constant(m[: half + 1], ls[: half + 1], p)
        return full <= spec.c_max and full <= (1 + spec.stability) * part, full

    i_phi, c_lower = None, math.nan
    for p in ps[::-1]:
        ok, c = admissible(mlo, ls_lo, p)
        if ok:
            i_phi, c_lower = float(p), c
            break
    if i_phi is None:
        raise InvalidFunctionError("no positive lower type found on the p-grid")
    I_phi, c_upper = math.inf, math.nan
    for p in ps:
        ok, c = admissible(mhi, ls_hi, p)
        if ok:
            I_phi, c_upper = float(p), c
            break
    return TypeIndices(i_phi, I_phi, c_lower, c_upper)


def critical_weight_exponent(
    phi: MusielakFunction,
    grid: PeriodicGrid,
    t_grid=None,
    q_grid=None,
    threshold: float = DEFAULT_THRESHOLD,
    details: list | None = None,
) -> float:
    """Smallest q with every slice phi(., t), t in ``t_grid``, stably in A_q.

    Uses the same resolution-stability criterion as
    :func:`mhardy.weights.critical_weight_index`.
    """
    t_grid = list(2.0 ** np.arange(-4, 5, 2) if t_grid is None else t_grid)
    q_grid = list(np.round(np.arange(1.0, 3.0 + 1e-9, 0.1), 10) if q_grid is None else q_grid)
    if not t_grid or not q_grid:
        raise ParameterError("t grid and q grid must be nonempty")
    slices = [phi.weight_slice(grid, t) for t in t_grid]
    for q in q_grid:
        ok = True
        for t, w in zip(t_grid, slices):
            fine, coarse = _stable_constant(w, q, None)
            good = math.isfinite(fine) and fine <= threshold and abs(fine - coarse) <= STABILITY * coarse
            if details is not None:
                details.append({"q": q, "t": t, "fine": fine, "coarse": coarse, "accepted": good})
            if not good:
                ok = False
                break
        if ok:
            return float(q)
    return ABOVE_GRID


def critical_order(indices: CriticalIndices, n: int) -> int:
    """m(phi) = floor(n (q/i - 1)), floored at 0."""
    val = n * (indices.q_phi / indices.i_phi - 1.0)
    return max(0, int(math.floor(val + 1e-9)))


def critical_indices(
    phi: MusielakFunction,
    grid: PeriodicGrid,
    spec: SampleSpec | None = None,
    **kwargs,
) -> CriticalIndices:
    spec = spec or SampleSpec(dim=grid.dim)
    types = estimate_type_indices(phi, spec)
    q = critical_weight_exponent(phi, grid, **kwargs)
    m = max(0, int(math.floor(grid.dim * (q / types.i_phi - 1.0) + 1e-9))) if math.isfinite(q) else 0
    return CriticalIndices(types.i_phi, types.I_phi, q, m)


def regularize(phi: MusielakFunction) -> MusielakFunction:
    return Regularized(phi)


def power_rescale(phi: MusielakFunction, q: float) -> MusielakFunction:
    return Rescaled(phi, q)


# ---------------------------------------------------------------------------
# modular and norm


def _magnitudes(f) -> tuple[PeriodicGrid, np.ndarray]:
    if isinstance(f, ScalarField):
        return f.grid, np.abs(f.values)
    raise ParameterError("expected a ScalarField")


def modular(phi: MusielakFunction, f: ScalarField, _ev=None) -> float:
    """h^n sum_i phi(x_i, |f(x_i)|)."""
    grid, a = _magnitudes(f)
    ev = _ev or phi.on_grid(grid)
    with np.errstate(all="ignore"):
        total = float(np.sum(ev(a))) * grid.cell_volume
    if not math.isfinite(total):
        raise DomainError("modular is not finite")
    return total


def luxembourg_norm(phi: MusielakFunction, f: ScalarField, tol: float = 1e-10) -> float:
    """inf{lambda > 0 : modular(phi, f/lambda) <= 1} by bracketing and bisection.

    The returned lambda satisfies modular(phi, f/lambda) in [1 - tol, 1].
    """
    grid, a = _magnitudes(f)
    return gauge(phi.on_grid(grid), a, grid.cell_volume, tol)


def gauge(ev: Callable[[np.ndarray], np.ndarray], a: np.ndarray, volume: float, tol: float = 1e-10) -> float:
    """Luxembourg gauge of samples ``a`` >= 0 with cell volume ``volume``.

    ``ev`` maps an array of t-values (same shape as ``a``) to phi(x_i, t_i).
    Bisection runs in log(lambda) from the bracket [1e-8, 1e8] max(a),
    widened tenfold up to five times per side.
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    a = np.asarray(a, dtype=float)
    top = float(a.max()) if a.size else 0.0
    if top == 0:
        return 0.0

    def rho(lam):
        with np.errstate(all="ignore"):
            v = float(np.sum(ev(a / lam))) * volume
        if math.isnan(v):
            raise DomainError("modular is not finite")
        return v

    lo, hi = 1e-8 * top, 1e8 * top
    for _ in range(5):
        if rho(lo) > 1:
            break
        lo /= 10
    for _ in range(5):
        if rho(hi) <= 1:
            break
        hi *= 10
    if not (rho(lo) > 1 >= rho(hi)):
        raise ConvergenceError("could not bracket the Luxembourg norm")
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if not lo < mid < hi:
            break
        if rho(mid) > 1:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 2e-16 * hi:
            break
    else:
        raise ConvergenceError("bisection did not converge in 200 iterations")
    value = rho(hi)
    if not 1 - tol <= value <= 1:
        raise ConvergenceError(
            f"modular at the norm is {value!r}, outside [1 - {tol}, 1]; phi may be discontinuous"
        )
    return hi
