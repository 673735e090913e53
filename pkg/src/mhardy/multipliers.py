"""Fourier multipliers on the torus: Riesz transforms and their relatives.

Every homogeneous symbol is evaluated at xi/|xi| and set to 0 at xi = 0,
so outputs are mean-free. A real input stays real whenever the symbol is
Hermitian (theta(-xi) = conj theta(xi)); the Nyquist planes, which are their
own mirror images, are symmetrized by taking the real part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement, product
from typing import Callable, Mapping

import numpy as np
from scipy.special import gamma
from scipy.stats import qmc

from .errors import DecompositionError, InvalidPolynomialError, InvalidSymbolError, ParameterError
from .expression import parse_expression
from .field_core import PeriodicGrid, ScalarField, from_spectral, to_spectral

__all__ = [
    "RieszWord",
    "HarmonicPolynomial",
    "MultiplierFunction",
    "unit_frequencies",
    "alias_averaged",
    "apply_symbol",
    "riesz_symbol",
    "riesz_transform",
    "word_symbol",
    "compose_riesz",
    "harmonic_poly_symbol",
    "harmonic_poly_riesz",
    "kernel_normalization",
    "harmonic_basis",
    "sphere_points",
    "kurokawa_decompose",
    "KurokawaDecomposition",
    "apply_multiplier",
    "partition_of_unity",
    "rank_condition",
    "words_of_order",
]

SYMBOL_BOUND = 1e8
RANK_TOL = 1e-10


# ---------------------------------------------------------------------------
# spectral plumbing


def unit_frequencies(grid: PeriodicGrid) -> tuple[tuple[np.ndarray, ...], np.ndarray]:
    """Dense arrays omega_j = xi_j/|xi| (0 at the origin) and the mask xi != 0."""
    xi = [np.broadcast_to(x, grid.shape) for x in grid.frequencies()]
    norm = np.sqrt(sum(x * x for x in xi))
    nonzero = norm > 0
    safe = np.where(nonzero, norm, 1.0)
    return tuple(np.where(nonzero, x / safe, 0.0) for x in xi), nonzero


def alias_averaged(grid: PeriodicGrid, fn: Callable[..., np.ndarray]) -> np.ndarray:
    """Symbol ``fn(omega_1, ..., omega_n)`` on the frequency lattice, 0 at the origin.

    For even N the Nyquist index stands for both +N/2 and -N/2; there the
    symbol is averaged over the sign choices. Odd symbols such as -i omega_j
    then vanish on their own Nyquist plane, which keeps real data real
    regardless of the array dtype.
    """
    omega, nonzero = unit_frequencies(grid)
    ones = np.ones(grid.shape)
    if grid.N % 2:
        return np.where(nonzero, np.asarray(fn(*omega), dtype=complex) * ones, 0.0)
    nyq = grid.N // 2
    planes = []
    for ax in range(grid.dim):
        shape = [1] * grid.dim
        shape[ax] = grid.N
        planes.append((np.arange(grid.N) == nyq).reshape(shape))
    total = np.zeros(grid.shape, dtype=complex)
    for flips in product((False, True), repeat=grid.dim):
        om = tuple(np.where(p, -w, w) if flip else w for w, p, flip in zip(omega, planes, flips))
        total += np.asarray(fn(*om), dtype=complex) * ones
    return np.where(nonzero, total / 2**grid.dim, 0.0)


def _is_hermitian(sym: np.ndarray) -> bool:
    if np.ndim(sym) == 0:
        return bool(np.imag(sym) == 0)
    mirrored = np.conj(sym)
    for ax in range(sym.ndim):
        mirrored = np.roll(np.flip(mirrored, axis=ax), 1, axis=ax)
    interior = np.ones(sym.shape, dtype=bool)
    for ax in range(sym.ndim):
        idx = [slice(None)] * sym.ndim
        idx[ax] = sym.shape[ax] // 2
        interior[tuple(idx)] = False
    scale = max(1.0, float(np.max(np.abs(sym))))
    return bool(np.all(np.abs(sym - mirrored)[interior] <= 1e-13 * scale))


def apply_symbol(f: ScalarField, symbol, real: bool | None = None) -> ScalarField:
    """Multiply the spectrum of ``f`` by ``symbol`` (array in FFT order or scalar)."""
    if real is None:
        real = f.is_real and _is_hermitian(np.asarray(symbol))
    return from_spectral(to_spectral(f).multiply(symbol), is_real=real)


# ---------------------------------------------------------------------------
# Riesz words


@dataclass(frozen=True)
class RieszWord:
    """A product R_{j_1} ... R_{j_m}; index 0 stands for the identity."""

    indices: tuple[int, ...]
    dim: int

    def __post_init__(self):
        idx = tuple(int(j) for j in self.indices)
        object.__setattr__(self, "indices", idx)
        if any(j < 0 or j > self.dim for j in idx):
            raise ParameterError(f"Riesz indices must lie in 0..{self.dim}, got {idx}")

    @classmethod
    def parse(cls, text: str, dim: int) -> "RieszWord":
        parts = [p for p in text.replace(" ", "").split(",") if p]
        try:
            return cls(tuple(int(p) for p in parts), dim)
        except ValueError:
            raise ParameterError(f"cannot parse Riesz word {text!r}") from None

    @property
    def order(self) -> int:
        return len(self.indices)

    @property
    def k(self) -> int:
        """Number of genuine Riesz factors."""
        return sum(1 for j in self.indices if j)

    @property
    def active(self) -> tuple[int, ...]:
        return tuple(j for j in self.indices if j)

    def __str__(self) -> str:
        return ",".join(map(str, self.indices))


def _as_word(word, dim: int) -> RieszWord:
    if isinstance(word, RieszWord):
        if word.dim != dim:
            raise ParameterError("word dimension does not match the grid")
        return word
    if isinstance(word, (int, np.integer)):
        word = (int(word),)
    return RieszWord(tuple(word), dim)


def words_of_order(order: int, dim: int, include_identity: bool = False) -> list[RieszWord]:
    """All nondecreasing words of the given length (symbols commute, so order is irrelevant)."""
    lo = 0 if include_identity else 1
    return [RieszWord(w, dim) for w in combinations_with_replacement(range(lo, dim + 1), order)]


def riesz_symbol(grid: PeriodicGrid, j: int) -> np.ndarray:
    if not 1 <= j <= grid.dim:
        raise ParameterError(f"Riesz index must lie in 1..{grid.dim}, got {j}")
    return alias_averaged(grid, lambda *om: -1j * om[j - 1])


def riesz_transform(f: ScalarField, j: int) -> ScalarField:
    """R_j f via the symbol -i xi_j/|xi|."""
    return apply_symbol(f, riesz_symbol(f.grid, j))


def word_symbol(grid: PeriodicGrid, word) -> np.ndarray:
    word = _as_word(word, grid.dim)

    def product_symbol(*om):
        sym = 1.0 + 0j
        for j in word.active:
            sym = sym * (-1j * om[j - 1])
        return sym

    return alias_averaged(grid, product_symbol)


def compose_riesz(f: ScalarField, word) -> ScalarField:
    """Apply a whole Riesz word as one product symbol.

    Identity factors contribute 1 away from the origin; the zero frequency
    is always removed.
    """
    return apply_symbol(f, word_symbol(f.grid, word))


# ---------------------------------------------------------------------------
# harmonic polynomials


def _monomials(dim: int, degree: int) -> list[tuple[int, ...]]:
    out = []
    for combo in combinations_with_replacement(range(dim), degree):
        exps = [0] * dim
        for j in combo:
            exps[j] += 1
        out.append(tuple(exps))
    return sorted(out, reverse=True)


class HarmonicPolynomial:
    """Homogeneous polynomial stored as {exponent tuple: coefficient}.

    Homogeneity is enforced at construction. Harmonicity is a property
    checked exactly on the coefficient table (``is_harmonic``); operators
    that need it raise ``InvalidPolynomialError`` otherwise.
    """

    def __init__(self, dim: int, coefficients: Mapping[tuple[int, ...], float]):
        if dim < 1:
            raise ParameterError("dim must be positive")
        coefs = {}
        for exps, c in coefficients.items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != dim or any(e < 0 for e in exps):
                raise InvalidPolynomialError(f"bad exponent tuple {exps} for dimension {dim}")
            if c != 0:
                coefs[exps] = coefs.get(exps, 0.0) + float(c)
        degrees = {sum(e) for e in coefs}
        if len(degrees) > 1:
            raise InvalidPolynomialError(f"polynomial is not homogeneous (degrees {sorted(degrees)})")
        self.dim = dim
        self.coefficients = dict(sorted(coefs.items(), reverse=True))
        self.degree = degrees.pop() if degrees else 0

    @classmethod
    def coordinate(cls, j: int, dim: int) -> "HarmonicPolynomial":
        exps = [0] * dim
        exps[j - 1] = 1
        return cls(dim, {tuple(exps): 1.0})

    @classmethod
    def constant(cls, dim: int, value: float = 1.0) -> "HarmonicPolynomial":
        return cls(dim, {(0,) * dim: value})

    @classmethod
    def from_vector(cls, dim: int, degree: int, vec) -> "HarmonicPolynomial":
        return cls(dim, dict(zip(_monomials(dim, degree), np.asarray(vec, dtype=float))))

    def vector(self) -> np.ndarray:
        return np.array([self.coefficients.get(m, 0.0) for m in _monomials(self.dim, self.degree)])

    def laplacian(self) -> dict[tuple[int, ...], float]:
        out: dict[tuple[int, ...], float] = {}
        for exps, c in self.coefficients.items():
            for j, e in enumerate(exps):
                if e >= 2:
                    lowered = list(exps)
                    lowered[j] -= 2
                    key = tuple(lowered)
                    out[key] = out.get(key, 0.0) + c * e * (e - 1)
        return out

    @property
    def is_harmonic(self) -> bool:
        scale = max((abs(c) for c in self.coefficients.values()), default=0.0)
        lap = self.laplacian()
        return all(abs(v) <= 1e-12 * max(scale, 1e-300) * (self.degree**2 + 1) for v in lap.values())

    def require_harmonic(self) -> None:
        if not self.is_harmonic:
            raise InvalidPolynomialError("polynomial is not harmonic")

    def __call__(self, *coords):
        """Evaluate at broadcastable coordinate arrays (one per axis)."""
        if len(coords) == 1 and np.ndim(coords[0]) >= 1 and np.shape(coords[0])[-1] == self.dim and self.dim > 1:
            arr = np.asarray(coords[0], dtype=float)
            coords = tuple(arr[..., j] for j in range(self.dim))
        if len(coords) != self.dim:
            raise ParameterError("wrong number of coordinates")
        total = 0.0
        for exps, c in self.coefficients.items():
            term = c
            for x, e in zip(coords, exps):
                if e:
                    term = term * x**e
            total = total + term
        return total

    def scaled(self, c: float) -> "HarmonicPolynomial":
        return HarmonicPolynomial(self.dim, {k: c * v for k, v in self.coefficients.items()})

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "degree": self.degree,
            "terms": [[list(k), v] for k, v in self.coefficients.items()],
        }

    def __repr__(self) -> str:
        terms = []
        for exps, c in self.coefficients.items():
            mono = "*".join(f"y{j + 1}^{e}" if e > 1 else f"y{j + 1}" for j, e in enumerate(exps) if e)
            terms.append(f"{c:+.6g}" + (f"*{mono}" if mono else ""))
        return f"HarmonicPolynomial({' '.join(terms) or '0'})"


def kernel_normalization(k: int, n: int) -> float:
    """pi^{n/2} Gamma(k/2) / Gamma((k+n)/2), the classical kernel-to-symbol constant.

    The multiplier of the kernel P(y)/|y|^{n+k} is (-i)^k times this
    constant times P(xi)/|xi|^k. The operators here are normalized so that
    degree 1 reproduces R_j, i.e. this factor is divided out.
    """
    if k < 1:
        raise ParameterError("kernel normalization needs k >= 1")
    return math.pi ** (n / 2) * gamma(k / 2) / gamma((k + n) / 2)


def harmonic_poly_symbol(grid: PeriodicGrid, P: HarmonicPolynomial) -> np.ndarray:
    """(-i)^k P(xi)/|xi|^k, zero at the origin."""
    if P.dim != grid.dim:
        raise ParameterError("polynomial dimension does not match the grid")
    P.require_harmonic()
    return alias_averaged(grid, lambda *om: (-1j) ** P.degree * np.asarray(P(*om), dtype=complex))


def harmonic_poly_riesz(f: ScalarField, P: HarmonicPolynomial) -> ScalarField:
    """Riesz transform of degree k associated with the harmonic polynomial P.

    The constant in front of P(xi)/|xi|^k is (-i)^k: it reproduces R_j for
    P(y) = y_j and makes the Kurokawa reconstruction of every Riesz word hold
    with coefficients (-1)^j, so no further calibration is needed.
    """
    return apply_symbol(f, harmonic_poly_symbol(f.grid, P))


# ---------------------------------------------------------------------------
# Kurokawa decomposition


def _laplacian_matrix(dim: int, degree: int) -> np.ndarray:
    src = _monomials(dim, degree)
    dst = _monomials(dim, degree - 2)
    pos = {m: i for i, m in enumerate(dst)}
    A = np.zeros((len(dst), len(src)))
    for col, exps in enumerate(src):
        for j, e in enumerate(exps):
            if e >= 2:
                lowered = list(exps)
                lowered[j] -= 2
                A[pos[tuple(lowered)], col] += e * (e - 1)
    return A


@lru_cache(maxsize=None)
def harmonic_basis(dim: int, degree: int) -> tuple[HarmonicPolynomial, ...]:
    """Orthonormal (in coefficient space) basis of degree-``degree`` harmonics."""
    mons = _monomials(dim, degree)
    if degree < 2:
        eye = np.eye(len(mons))
        return tuple(HarmonicPolynomial.from_vector(dim, degree, row) for row in eye)
    A = _laplacian_matrix(dim, degree)
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-10 * s[0]))
    null = vt[rank:]
    return tuple(HarmonicPolynomial.from_vector(dim, degree, row) for row in null)


def sphere_points(dim: int, count: int) -> np.ndarray:
    """Deterministic quasi-uniform points on S^{dim-1}, shape (count, dim).

    Equispaced on the circle, a Fibonacci lattice on S^2, and normalized
    Sobol-mapped Gaussians above that.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        ang = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if dim == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        r = np.sqrt(1 - z * z)
        ang = np.pi * (1 + 5**0.5) * i
        return np.stack([r * np.cos(ang), r * np.sin(ang), z], axis=1)
    from scipy.stats import norm

    u = qmc.Sobol(d=dim, scramble=True, seed=12345).random(count)
    g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass(frozen=True)
class KurokawaDecomposition:
    """Product symbol = constant + sum coefficient * (-i)^d P_d(xi)/|xi|^d."""

    word: RieszWord
    constant: float
    components: tuple[tuple[HarmonicPolynomial, float], ...]
    residual: float

    def symbol_at(self, omega: np.ndarray) -> np.ndarray:
        """Reassembled symbol at unit vectors ``omega`` (shape (..., n))."""
        out = np.full(omega.shape[:-1], complex(self.constant))
        for P, c in self.components:
            out = out + c * (-1j) ** P.degree * P(*[omega[..., j] for j in range(omega.shape[-1])])
        return out


def kurokawa_decompose(word, dim: int | None = None, tol: float = 1e-8) -> KurokawaDecomposition:
    """Split a Riesz word into constant plus harmonic-polynomial transforms.

    The real product of the direction cosines of the active indices is a
    homogeneous polynomial of degree k; on the sphere it equals a sum of
    harmonics of degrees k, k-2, ..., found by least squares on a
    quasi-uniform sample set. With the (-i)^d normalization of
    :func:`harmonic_poly_riesz` the degree-d piece enters with coefficient
    (-i)^(k-d) = (-1)^((k-d)/2).
    """
    if dim is None:
        if not isinstance(word, RieszWord):
            raise ParameterError("dimension required for a plain index tuple")
        dim = word.dim
    word = _as_word(word, dim)
    k = word.k
    degrees = list(range(k, -1, -2))
    blocks = [(d, harmonic_basis(dim, d)) for d in degrees]
    size = sum(len(b) for _, b in blocks)
    count = max(64, 4 * size)
    pts = sphere_points(dim, count)
    coords = [pts[:, j] for j in range(dim)]
    target = np.ones(count)
    for j in word.active:
        target = target * coords[j - 1]
    cols = [np.asarray(P(*coords), dtype=float) * np.ones(count) for _, basis in blocks for P in basis]
    A = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(A, target, rcond=None)
    residual = float(np.max(np.abs(A @ coef - target)))
    if residual > tol:
        raise DecompositionError(f"reconstruction residual {residual:.3e} exceeds {tol:.1e}")
    pieces = []
    constant = 0.0
    pos = 0
    for d, basis in blocks:
        vec = sum(c * P.vector() for c, P in zip(coef[pos : pos + len(basis)], basis))
        pos += len(basis)
        if d == 0:
            constant = float(np.real((-1j) ** k) * np.asarray(vec).ravel()[0])
            constant = constant if abs(constant) > 1e-13 else 0.0
            continue
        vec = np.where(np.abs(vec) > 1e-13, vec, 0.0)
        if np.any(vec):
            pieces.append((HarmonicPolynomial.from_vector(dim, d, vec), float((-1) ** ((k - d) // 2))))
    return KurokawaDecomposition(word, constant, tuple(pieces), residual)


# ---------------------------------------------------------------------------
# generic multipliers


class MultiplierFunction:
    """A bounded function theta on the unit sphere, used as xi -> theta(xi/|xi|)."""

    def __init__(self, fn: Callable[..., np.ndarray], description: str = "custom", smoothness: str = "smooth"):
        self._fn = fn
        self.description = description
        self.smoothness = smoothness

    @classmethod
    def from_expression(cls, src: str, dim: int, scale: complex = 1.0) -> "MultiplierFunction":
        """``scale`` times a real expression in xi1..xin (evaluated on unit vectors)."""
        names = [f"xi{j}" for j in range(1, dim + 1)]
        tree = parse_expression(src, names=names)

        def fn(*omega):
            env = {name: w for name, w in zip(names, omega)}
            return scale * np.asarray(tree.evaluate(env), dtype=complex)

        return cls(fn, f"{scale}*({src})")

    @classmethod
    def from_word(cls, word: RieszWord) -> "MultiplierFunction":
        def fn(*omega):
            out = np.ones(np.broadcast(*omega).shape, dtype=complex)
            for j in word.active:
                out = out * (-1j * omega[j - 1])
            return out

        return cls(fn, f"word({word})")

    @classmethod
    def constant(cls, value: complex = 1.0) -> "MultiplierFunction":
        return cls(lambda *omega: np.full(np.broadcast(*omega).shape, complex(value)), f"const({value})")

    def __call__(self, *omega) -> np.ndarray:
        return np.asarray(self._fn(*omega), dtype=complex) * np.ones(np.broadcast(*omega).shape)

    def __mul__(self, other: "MultiplierFunction") -> "MultiplierFunction":
        return MultiplierFunction(lambda *w: self(*w) * other(*w), f"({self.description})*({other.description})")

    def __add__(self, other: "MultiplierFunction") -> "MultiplierFunction":
        return MultiplierFunction(lambda *w: self(*w) + other(*w), f"({self.description})+({other.description})")

    def symbol(self, grid: PeriodicGrid) -> np.ndarray:
        with np.errstate(all="ignore"):
            vals = alias_averaged(grid, self)
        if not np.all(np.isfinite(vals)) or np.max(np.abs(vals)) > SYMBOL_BOUND:
            raise InvalidSymbolError(f"symbol {self.description} is unbounded on the frequency lattice")
        return vals

    def __repr__(self) -> str:
        return f"MultiplierFunction({self.description})"


def apply_multiplier(f: ScalarField, theta: MultiplierFunction) -> ScalarField:
    return apply_symbol(f, theta.symbol(f.grid))


def partition_of_unity(
    order: int, dim: int, bump: MultiplierFunction | None = None
) -> tuple[MultiplierFunction, list[tuple[RieszWord, MultiplierFunction]]]:
    """Multipliers psi, psi_w with psi + sum_w theta_w psi_w = 1 on the sphere.

    The words w run over all ordered index sequences of length ``order``
    in 1..n, for which sum_w |theta_w|^2 = |omega|^(2 order) = 1. Taking
    psi_w = conj(theta_w) eta and psi = 1 - eta works for any smooth eta.
    """
    eta = bump or MultiplierFunction(lambda *w: 0.75 + 0.25 * np.cos(np.pi * w[0]), "0.75+0.25cos(pi xi1)")
    words = [RieszWord(w, dim) for w in product(range(1, dim + 1), repeat=order)]
    pairs = []
    for w in words:
        theta = MultiplierFunction.from_word(w)
        pairs.append(
            (w, MultiplierFunction(lambda *om, th=theta: np.conj(th(*om)) * eta(*om), f"conj(word({w}))*eta"))
        )
    psi = MultiplierFunction(lambda *om: 1.0 - eta(*om), "1-eta")
    return psi, pairs


def rank_condition(k: int, n: int, sphere_samples: int = 100) -> int:
    """Minimum numerical rank of [theta(omega); theta(-omega)] over sphere samples.

    The family is {1} together with (-i omega_j)^k, j = 1..n, giving a
    2 x (n+1) matrix per sample.
    """
    if k < 1 or n < 1:
        raise ParameterError("k and n must be positive")
    pts = sphere_points(n, sphere_samples)
    best = 2
    for w in pts:
        top = np.concatenate([[1.0], (-1j * w) ** k])
        bottom = np.concatenate([[1.0], (1j * w) ** k])
        s = np.linalg.svd(np.stack([top, bottom]), compute_uv=False)
        best = min(best, int(np.sum(s > RANK_TOL)))
    return best
