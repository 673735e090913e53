"""Periodic grids, scalar fields and their spectral representation.

R^n is modelled by the torus [-L, L)^n sampled at N points per axis
(spacing h = 2L/N). Node k on an axis sits at ``-L + (k + offset) h``; the
``offset`` option (0 or 1/2 in practice) moves the origin off-node so that
singular weights such as |x|^a stay finite.

Fourier normalization
---------------------
The spectral coefficients are Fourier-series coefficients::

    c_k = N^{-n} sum_m f_m exp(-2 pi i k.m/N),   k in [-N/2, N/2)^n

over node indices m, so a constant field c has c_0 = c, and Parseval reads

    h^n sum |f|^2 = (2L)^n sum |c_k|^2.

This map is unitary from L^2 of the torus with normalized measure onto
l^2 of the frequency lattice. Frequencies are xi = k/(2L), and every
multiplier in the toolkit is a function of xi, stored in numpy FFT order.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DomainError, ParameterError, ResourceError
from .expression import parse_expression

__all__ = [
    "MEMORY_BUDGET",
    "DEFAULT_POINTS",
    "PeriodicGrid",
    "ScalarField",
    "SpectralField",
    "build_field",
    "field_from_values",
    "to_spectral",
    "from_spectral",
    "discrete_laplacian",
    "coordinate_env",
    "save_field",
    "load_field",
    "field_to_csv",
]

#: Largest number of samples a single grid may hold.
MEMORY_BUDGET = 2**24

DEFAULT_POINTS = {1: 4096, 2: 512, 3: 64}

_MAGIC = b"MHFLD1"
_HEADER = struct.Struct("<6sHIIdd")  # magic, flags, dim, N, L, offset -> 32 bytes


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on the torus [-L, L)^n."""

    dim: int
    half_width: float
    points_per_axis: int
    offset: float = 0.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ParameterError(f"dim must be a positive integer, got {self.dim}")
        if not self.half_width > 0 or not math.isfinite(self.half_width):
            raise ParameterError(f"half_width must be positive, got {self.half_width}")
        N = self.points_per_axis
        if int(N) != N or N < 8 or N % 2:
            raise ParameterError(f"points_per_axis must be an even integer >= 8, got {N}")
        if N**self.dim > MEMORY_BUDGET:
            raise ResourceError(f"grid of {N}^{self.dim} points exceeds the memory budget")
        if not 0.0 <= self.offset < 1.0:
            raise ParameterError("offset must lie in [0, 1)")

    @classmethod
    def default(cls, dim: int, half_width: float = 8.0, offset: float = 0.0) -> "PeriodicGrid":
        return cls(dim, half_width, DEFAULT_POINTS.get(dim, 32), offset)

    @property
    def n(self) -> int:
        return self.dim

    @property
    def L(self) -> float:
        return self.half_width

    @property
    def N(self) -> int:
        return self.points_per_axis

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    h = spacing

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis."""
        k = np.arange(self.points_per_axis)
        return -self.half_width + (k + self.offset) * self.spacing

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays (one per axis, sparse meshgrid)."""
        ax = self.axis()
        return tuple(np.meshgrid(*([ax] * self.dim), indexing="ij", sparse=True))

    def points(self) -> np.ndarray:
        """Dense array of node coordinates with shape ``shape + (dim,)``."""
        ax = self.axis()
        mesh = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def radius(self) -> np.ndarray:
        """|x| at every node."""
        return np.sqrt(sum(c * c for c in self.coordinates())) * np.ones(self.shape)

    def frequencies(self) -> tuple[np.ndarray, ...]:
        """Broadcastable frequency arrays xi_j = k_j/(2L) in FFT order."""
        f = np.fft.fftfreq(self.points_per_axis, d=self.spacing)
        return tuple(np.meshgrid(*([f] * self.dim), indexing="ij", sparse=True))

    def frequency_norm(self) -> np.ndarray:
        return np.sqrt(sum(x * x for x in self.frequencies())) * np.ones(self.shape)

    def nearest_index(self, point) -> tuple[int, ...]:
        """Index of the node closest to ``point`` (periodic)."""
        p = np.broadcast_to(np.asarray(point, dtype=float), (self.dim,))
        k = np.rint((p + self.half_width) / self.spacing - self.offset).astype(int)
        return tuple(int(v) % self.points_per_axis for v in k)

    def node(self, index) -> np.ndarray:
        idx = np.asarray(index, dtype=float)
        return -self.half_width + (idx + self.offset) * self.spacing

    def refined(self, factor: int = 2) -> "PeriodicGrid":
        return PeriodicGrid(self.dim, self.half_width, self.points_per_axis * factor, self.offset)

    def to_dict(self) -> dict:
        d = {"dim": self.dim, "N": self.points_per_axis, "L": self.half_width}
        if self.offset:
            d["offset"] = self.offset
        return d


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Samples of a function on a :class:`PeriodicGrid`.

    ``values`` is a read-only array of shape ``grid.shape``; it is real when
    ``is_real`` is set, complex otherwise.
    """

    grid: PeriodicGrid
    values: np.ndarray
    is_real: bool = True

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            if v.size == self.grid.size:
                v = v.reshape(self.grid.shape)
            else:
                raise ParameterError(f"expected {self.grid.size} samples, got {v.size}")
        if self.is_real:
            if np.iscomplexobj(v):
                v = v.real
            v = v.astype(float, copy=False)
        else:
            v = v.astype(complex, copy=False)
        object.__setattr__(self, "values", _freeze(v))

    @cached_property
    def mean(self):
        m = self.values.mean()
        return float(m) if self.is_real else complex(m)

    @property
    def abs(self) -> np.ndarray:
        return np.abs(self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume))

    def integral(self):
        return self.values.sum() * self.grid.cell_volume

    def with_values(self, values, is_real: bool | None = None) -> "ScalarField":
        return ScalarField(self.grid, values, self.is_real if is_real is None else is_real)

    def __add__(self, other):
        return self.with_values(self.values + _values(other), self.is_real and _is_real(other))

    def __sub__(self, other):
        return self.with_values(self.values - _values(other), self.is_real and _is_real(other))

    def __mul__(self, other):
        return self.with_values(self.values * _values(other), self.is_real and _is_real(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.with_values(self.values / _values(other), self.is_real and _is_real(other))

    def __neg__(self):
        return self.with_values(-self.values)

    def __abs__(self):
        return ScalarField(self.grid, np.abs(self.values), True)

    def __repr__(self) -> str:
        kind = "real" if self.is_real else "complex"
        return f"ScalarField({kind}, grid={self.grid}, mean={self.mean:.6g})"


def _values(x):
    return x.values if isinstance(x, ScalarField) else x


def _is_real(x) -> bool:
    if isinstance(x, ScalarField):
        return x.is_real
    return not np.iscomplexobj(x)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier-series coefficients of a field, in numpy FFT order."""

    grid: PeriodicGrid
    coefficients: np.ndarray
    is_real: bool = False

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.shape != self.grid.shape:
            raise ParameterError("coefficient array does not match the grid")
        object.__setattr__(self, "coefficients", _freeze(c))

    def multiply(self, symbol) -> "SpectralField":
        return SpectralField(self.grid, self.coefficients * symbol, self.is_real)


def field_from_values(grid: PeriodicGrid, values, is_real: bool | None = None) -> ScalarField:
    if is_real is None:
        is_real = not np.iscomplexobj(values)
    return ScalarField(grid, values, is_real)


def coordinate_env(grid: PeriodicGrid) -> dict:
    """Name bindings ``x1..xn`` and ``|x|`` for evaluating expressions on a grid."""
    coords = grid.coordinates()
    env = {f"x{j + 1}": c for j, c in enumerate(coords)}
    env["|x|"] = np.sqrt(sum(c * c for c in coords))
    return env


def build_field(grid: PeriodicGrid, spec) -> ScalarField:
    """Sample a function expression (or a callable of the coordinates) on ``grid``."""
    if callable(spec) and not isinstance(spec, str):
        raw = spec(*grid.coordinates())
    else:
        tree = parse_expression(spec, names=[f"x{j + 1}" for j in range(grid.dim)])
        raw = tree.evaluate(coordinate_env(grid))
    values = np.broadcast_to(np.asarray(raw), grid.shape)
    finite = np.isfinite(values)
    if not finite.all():
        bad = tuple(int(i) for i in np.argwhere(~finite)[0])
        raise DomainError("non-finite sample", index=bad)
    return ScalarField(grid, values, not np.iscomplexobj(values))


def to_spectral(f: ScalarField) -> SpectralField:
    coef = np.fft.fftn(f.values, norm="forward")
    return SpectralField(f.grid, coef, f.is_real)


def from_spectral(F: SpectralField, is_real: bool | None = None) -> ScalarField:
    """Inverse transform; the result is real when the spectral field is flagged real."""
    real = F.is_real if is_real is None else is_real
    values = np.fft.ifftn(F.coefficients, norm="forward")
    return ScalarField(F.grid, values.real if real else values, real)


def discrete_laplacian(f: ScalarField) -> ScalarField:
    """Second-order centered-difference Laplacian with periodic wrap."""
    v = f.values
    out = -2.0 * f.grid.dim * v
    for ax in range(f.grid.dim):
        out = out + np.roll(v, 1, axis=ax) + np.roll(v, -1, axis=ax)
    return f.with_values(out / f.grid.spacing**2)


def save_field(f: ScalarField, path) -> None:
    """Write the binary field format: 32-byte header then little-endian float64."""
    g = f.grid
    flags = 0 if f.is_real else 1
    header = _HEADER.pack(_MAGIC, flags, g.dim, g.points_per_axis, g.half_width, g.offset)
    if f.is_real:
        body = np.ascontiguousarray(f.values, dtype="<f8").tobytes()
    else:
        pair = np.stack([f.values.real, f.values.imag], axis=-1)
        body = np.ascontiguousarray(pair, dtype="<f8").tobytes()
    Path(path).write_bytes(header + body)


def load_field(path) -> ScalarField:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ParameterError(f"{path}: file too short for a field header")
    magic, flags, dim, N, L, offset = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ParameterError(f"{path}: bad magic {magic!r}")
    grid = PeriodicGrid(dim, L, N, offset)
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if flags & 1:
        if data.size != 2 * grid.size:
            raise ParameterError(f"{path}: truncated complex payload")
        pair = data.reshape(grid.shape + (2,))
        return ScalarField(grid, pair[..., 0] + 1j * pair[..., 1], False)
    if data.size != grid.size:
        raise ParameterError(f"{path}: truncated payload")
    return ScalarField(grid, data.reshape(grid.shape), True)


def field_to_csv(f: ScalarField, max_points: int = 65536) -> str:
    """CSV export: one row per node with the index tuple and the value."""
    if f.grid.size > max_points:
        raise ResourceError(f"CSV export limited to {max_points} points")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    idx_cols = [f"i{j + 1}" for j in range(f.grid.dim)]
    w.writerow(idx_cols + (["value"] if f.is_real else ["re", "im"]))
    for idx in np.ndindex(f.grid.shape):
        v = f.values[idx]
        w.writerow(list(idx) + ([repr(float(v))] if f.is_real else [repr(v.real), repr(v.imag)]))
    return buf.getvalue()
