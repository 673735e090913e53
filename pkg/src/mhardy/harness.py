"""Experiment configs, the characterization runs, identity suites and reports."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .atoms import AtomSpec, Ball, make_atom
from .errors import MHError, ParameterError, RankError
from .expression import parse_expression
from .field_core import PeriodicGrid, ScalarField, build_field
from .halfspace import (
    TimeLevels,
    build_harmonic_vector,
    build_tensor_field,
    conjugate_poisson_extend,
    cr_residual,
    harmonic_majorant_gap,
    poisson_extend,
    subharmonic_defect,
)
from .maximal import q_order_maximal, hl_family, radial_maximal
from .multipliers import (
    HarmonicPolynomial,
    compose_riesz,
    harmonic_basis,
    harmonic_poly_riesz,
    kurokawa_decompose,
    rank_condition,
    riesz_transform,
    sphere_points,
    words_of_order,
)
from .musielak import (
    CriticalIndices,
    MusielakFunction,
    Separable,
    critical_indices,
    luxembourg_norm,
    modular,
    phi_from_spec,
    power_rescale,
)

__all__ = [
    "SCHEMA",
    "EXPERIMENTS",
    "DEFAULT_TOLERANCES",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "SeedRow",
    "IdentityRow",
    "Band",
    "parse_expression",
    "build_seeds",
    "default_atom_orbit",
    "run_riesz_characterization",
    "run_identity_suite",
    "run_experiment",
    "emit_report",
    "parse_report",
    "uchiyama_diagnostic",
    "check_config",
    "nyquist_content",
]

SCHEMA = "mh-report/1"
EXPERIMENTS = (
    "thm1_first_order",
    "thm2_higher_order",
    "thm3_odd_order",
    "identity_suite",
    "halfspace_suite",
)
DEFAULT_TOLERANCES = {
    "band": 10.0,
    "riesz_square_sum": 1e-12,
    "semigroup": 1e-10,
    "conjugacy": 1e-12,
    "scaling": 1e-6,
    "luxembourg_closed_form": 1e-8,
    "kurokawa": 1e-8,
    "subharmonic": 1e-6,
    "majorant": 1e-6,
    "cr_order": 1.8,
}
THM3_CAVEAT = (
    "the odd-order hypothesis involves an unspecified exponent p0 in (0, 1); "
    "only i/q > 1/2 is checked"
)
# coarsest grid for which the convergence-order row is meaningful
MIN_ORDER_POINTS = 32
# half-space identities need the seed to be band-limited on the grid
NYQUIST_LIMIT = 1e-8


class ConfigError(MHError, ValueError):
    """The experiment configuration is malformed."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    phi: MusielakFunction
    grid: PeriodicGrid
    seeds: list | None
    experiment: dict
    tol: dict
    phi_spec: object = None

    @property
    def kind(self) -> str:
        return self.experiment["kind"]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - {"phi", "grid", "seeds", "experiment", "tol"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            phi_spec = data.get("phi", {"kind": "separable", "weight": "1", "orlicz": "t"})
            phi = phi_from_spec(phi_spec)
            g = data.get("grid", {})
            dim = int(g.get("dim", 1))
            grid = PeriodicGrid(
                dim, float(g.get("L", 8.0)), int(g.get("N", 256 if dim == 1 else 128)), float(g.get("offset", 0.0))
            )
        except (MHError, TypeError, KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        exp = data.get("experiment", {"kind": "thm1_first_order"})
        if isinstance(exp, str):
            exp = {"kind": exp}
        exp = dict(exp)
        if exp.get("kind") not in EXPERIMENTS:
            raise ConfigError(f"experiment kind must be one of {EXPERIMENTS}, got {exp.get('kind')!r}")
        if exp["kind"] == "thm2_higher_order" and not int(exp.get("m", 0)) >= 1:
            raise ConfigError("thm2_higher_order needs an order m >= 1")
        if exp["kind"] == "thm3_odd_order" and not int(exp.get("k", 0)) >= 1:
            raise ConfigError("thm3_odd_order needs an order k >= 1")
        seeds = data.get("seeds")
        if seeds is not None and not isinstance(seeds, list):
            raise ConfigError("seeds must be a list")
        tol = dict(DEFAULT_TOLERANCES)
        extra = data.get("tol", {})
        if not isinstance(extra, dict):
            raise ConfigError("tol must be an object")
        tol.update({k: float(v) for k, v in extra.items()})
        return cls(phi, grid, seeds, exp, tol, phi_spec)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)


# ---------------------------------------------------------------------------
# seeds


def _snap(grid: PeriodicGrid, value: float) -> float:
    return round(value / grid.spacing) * grid.spacing


def default_atom_orbit(grid: PeriodicGrid, s: int = 0, q: float = math.inf) -> list[dict]:
    """Four dyadic radii, each at three translates along x1.

    Radii run from 4h to 32h; on small cells the top radius is capped at
    0.7 L so every ball stays inside one period.
    """
    h = grid.spacing
    shift = _snap(grid, grid.half_width / 4)
    top = min(32 * h, 0.7 * grid.half_width)
    if top / 8 < 4 * h:
        raise ParameterError("grid too coarse for the default atom orbit (need L/h >= 320/7)")
    out = []
    for j in range(4):
        r = top / 2 ** (3 - j)
        for k in range(3):
            c = [0.0] * grid.dim
            c[0] = (k - 1) * shift
            out.append({"kind": "atom", "center": c, "radius": r, "s": s, "q": q, "id": f"atom-r{j}-c{k}"})
    return out


def _seed_id(spec: dict, index: int) -> str:
    return str(spec.get("id", f"{spec.get('kind', 'seed')}-{index}"))


def _one_seed(spec: dict, cfg: ExperimentConfig, s_default: int) -> ScalarField:
    grid = cfg.grid
    kind = spec.get("kind")
    if kind == "atom":
        center = spec.get("center", [0.0] * grid.dim)
        q = spec.get("q", math.inf)
        q = math.inf if q in ("inf", None) else float(q)
        f = make_atom(
            AtomSpec(Ball(tuple(center), float(spec["radius"])), q, int(spec.get("s", s_default))),
            cfg.phi,
            grid,
        )
    elif kind == "gaussian":
        c = np.asarray(spec.get("center", [0.0] * grid.dim), dtype=float)
        w = float(spec.get("width", 1.0))
        r2 = sum((x - cj) ** 2 for x, cj in zip(grid.coordinates(), c))
        f = ScalarField(grid, np.exp(-r2 / w**2) * np.ones(grid.shape), True)
    elif kind == "mode":
        k = np.asarray(spec.get("k", [1] + [0] * (grid.dim - 1)), dtype=float)
        phase = sum(kj * x for kj, x in zip(k, grid.coordinates())) * math.pi / grid.half_width
        f = ScalarField(grid, np.cos(phase) * np.ones(grid.shape), True)
    elif kind == "expr":
        f = build_field(grid, spec["expr"])
    else:
        raise ConfigError(f"unknown seed kind {kind!r}")
    shift = spec.get("shift")
    if shift:
        f = f.with_values(np.roll(f.values, tuple(int(v) for v in shift), axis=tuple(range(grid.dim))))
    if "scale" in spec:
        f = f * float(spec["scale"])
    return f


def build_seeds(cfg: ExperimentConfig, s_default: int = 0) -> list[tuple[str, ScalarField]]:
    """Expand the config's seed list; ``None`` means the default atom orbit.

    ``{"kind": "gaussian", "dilates": d}`` expands to widths w, 2w, ..., 2^d w;
    ``{"kind": "atom_orbit"}`` expands to :func:`default_atom_orbit`.
    """
    specs = cfg.seeds
    if specs is None:
        specs = [{"kind": "atom_orbit"}]
    expanded = []
    for i, spec in enumerate(specs):
        if not isinstance(spec, dict):
            raise ConfigError(f"seed {i} must be an object")
        if spec.get("kind") == "atom_orbit":
            s = int(spec.get("s", s_default))
            q = spec.get("q", math.inf)
            expanded.extend(default_atom_orbit(cfg.grid, s, math.inf if q == "inf" else float(q)))
        elif spec.get("kind") == "gaussian" and spec.get("dilates"):
            base = _seed_id(spec, i)
            for d in range(int(spec["dilates"]) + 1):
                sub = {k: v for k, v in spec.items() if k != "dilates"}
                sub["width"] = float(spec.get("width", 0.25)) * 2**d
                sub["id"] = f"{base}-d{d}"
                expanded.append(sub)
        else:
            expanded.append(dict(spec, id=_seed_id(spec, i)))
    try:
        return [(s["id"], _one_seed(s, cfg, s_default)) for s in expanded]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed seed: {exc}") from exc


# ---------------------------------------------------------------------------
# reports


@dataclass
class SeedRow:
    seed: str
    norm_f: float
    riesz_sum: float
    maximal_norm: float
    ratio: float

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "norm_f": self.norm_f,
            "riesz_sum": self.riesz_sum,
            "maximal_norm": self.maximal_norm,
            "ratio": self.ratio,
        }


@dataclass
class IdentityRow:
    name: str
    residual: float
    tolerance: float
    status: str  # pass, fail or insufficient_resolution
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "status": self.status,
            "detail": self.detail,
        }


@dataclass
class Band:
    min: float
    max: float
    spread: float  # max / min

    @classmethod
    def of(cls, ratios) -> "Band | None":
        r = [x for x in ratios]
        if not r:
            return None
        lo, hi = min(r), max(r)
        return cls(lo, hi, hi / lo if lo > 0 else math.inf)

    def to_dict(self) -> dict:
        return {"min": self.min, "max": self.max, "max_over_min": self.spread}


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    experiment: str | None = None
    band: Band | None = None
    environment: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return any(isinstance(r, IdentityRow) and r.status == "fail" for r in self.rows)

    def to_dict(self) -> dict:
        out = {"schema": SCHEMA, "rows": [r.to_dict() for r in self.rows]}
        if self.experiment is not None:
            out["experiment"] = self.experiment
        if self.band is not None:
            out["band"] = self.band.to_dict()
        if self.environment:
            out["environment"] = self.environment
        if self.warnings:
            out["warnings"] = list(self.warnings)
        if self.diagnostics:
            out["diagnostics"] = self.diagnostics
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        if data.get("schema") != SCHEMA:
            raise ParameterError(f"unsupported report schema {data.get('schema')!r}")
        rows = []
        for r in data.get("rows", []):
            rows.append(IdentityRow(**r) if "status" in r else SeedRow(**r))
        b = data.get("band")
        band = Band(b["min"], b["max"], b["max_over_min"]) if b else None
        return cls(
            rows,
            data.get("experiment"),
            band,
            data.get("environment", {}),
            data.get("warnings", []),
            data.get("diagnostics", {}),
        )


def _check_finite(rep: ExperimentReport) -> None:
    for r in rep.rows:
        vals = [r.residual] if isinstance(r, IdentityRow) else [r.norm_f, r.riesz_sum, r.maximal_norm, r.ratio]
        if not all(math.isfinite(v) for v in vals):
            raise ParameterError(f"report row {r} is not finite")


def emit_report(rep: ExperimentReport, format: str = "json") -> str:
    """Serialize deterministically as ``json``, ``csv`` or ``markdown``."""
    if format not in ("json", "csv", "markdown"):
        raise ParameterError(f"unknown report format {format!r}")
    _check_finite(rep)
    if format == "json":
        return json.dumps(rep.to_dict(), sort_keys=True, indent=2) + "\n"
    seed_rows = [r for r in rep.rows if isinstance(r, SeedRow)]
    id_rows = [r for r in rep.rows if isinstance(r, IdentityRow)]
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if id_rows and not seed_rows:
            w.writerow(["name", "residual", "tolerance", "status", "detail"])
            for r in id_rows:
                w.writerow([r.name, repr(r.residual), repr(r.tolerance), r.status, r.detail])
        else:
            w.writerow(["seed", "norm_f", "riesz_sum", "maximal_norm", "ratio"])
            for r in seed_rows:
                w.writerow([r.seed, repr(r.norm_f), repr(r.riesz_sum), repr(r.maximal_norm), repr(r.ratio)])
        return buf.getvalue()
    lines = [f"# {rep.experiment or 'report'}", ""]
    if rep.band is not None:
        lines += [
            "| band min | band max | max/min |",
            "|---|---|---|",
            f"| {rep.band.min:.6g} | {rep.band.max:.6g} | {rep.band.spread:.6g} |",
            "",
        ]
    if seed_rows:
        lines += ["| seed | norm f | Riesz sum | maximal norm | ratio |", "|---|---|---|---|---|"]
        lines += [
            f"| {r.seed} | {r.norm_f:.6g} | {r.riesz_sum:.6g} | {r.maximal_norm:.6g} | {r.ratio:.6g} |"
            for r in seed_rows
        ]
        lines.append("")
    if id_rows:
        lines += ["| identity | residual | tolerance | status |", "|---|---|---|---|"]
        lines += [f"| {r.name} | {r.residual:.3e} | {r.tolerance:.3e} | {r.status} |" for r in id_rows]
        lines.append("")
    for wmsg in rep.warnings:
        lines.append(f"- warning: {wmsg}")
    return "\n".join(lines).rstrip() + "\n"


def parse_report(text: str) -> ExperimentReport:
    return ExperimentReport.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# characterization experiments


def _gate(cfg: ExperimentConfig, idx: CriticalIndices) -> tuple[float, str, list[str]]:
    n = cfg.grid.dim
    kind = cfg.kind
    ratio = idx.i_phi / idx.q_phi
    warnings = []
    if kind == "thm1_first_order":
        need, label = (n - 1) / n, "(n-1)/n"
    elif kind == "thm2_higher_order":
        m = int(cfg.experiment["m"])
        need, label = (n - 1) / (n + m - 1), "(n-1)/(n+m-1)"
    else:
        need, label = 0.5, "1/2"
        warnings.append(THM3_CAVEAT)
    if not ratio > need:
        warnings.append(
            f"outside theorem hypotheses: i/q = {ratio:.6g} does not exceed {label} = {need:.6g}"
        )
    return need, label, warnings


def _riesz_side(cfg: ExperimentConfig):
    """Return (description, f -> list of transformed fields)."""
    n = cfg.grid.dim
    kind = cfg.kind
    exp = cfg.experiment
    if kind == "thm1_first_order":
        return "first-order", lambda f: [riesz_transform(f, j) for j in range(1, n + 1)]
    if kind == "thm2_higher_order":
        m = int(exp["m"])
        if exp.get("mode", "words") == "polynomial":
            polys = _polynomials(exp, n, m)
            return "harmonic-polynomial", lambda f: [harmonic_poly_riesz(f, P) for P in polys]
        words = [w for order in range(1, m + 1) for w in words_of_order(order, n)]
        return f"words up to order {m}", lambda f: [compose_riesz(f, w) for w in words]
    k = int(exp["k"])
    if rank_condition(k, n) != 2:
        raise RankError(f"rank condition fails for k = {k}: even-order transforms do not characterize")
    words = words_of_order(k, n)
    return f"words of order {k}", lambda f: [compose_riesz(f, w) for w in words]


def _polynomials(exp: dict, n: int, m: int) -> list[HarmonicPolynomial]:
    given = exp.get("polynomials")
    if given is None:
        return [P for d in range(1, m + 1) for P in harmonic_basis(n, d)]
    out = []
    for item in given:
        coefs = {tuple(int(v) for v in key.split(",")): float(c) for key, c in item.items()}
        P = HarmonicPolynomial(n, coefs)
        P.require_harmonic()
        out.append(P)
    return out


def _indices(cfg: ExperimentConfig) -> CriticalIndices:
    return critical_indices(cfg.phi, cfg.grid)


def run_riesz_characterization(
    cfg: ExperimentConfig, indices: CriticalIndices | None = None, workers: int = 1
) -> ExperimentReport:
    """Ratios (||f|| + sum ||T f||) / ||M f|| over the seeds, and their band.

    ``M`` is the radial maximal function with the unit Gaussian kernel.
    Hypothesis violations become warnings; the experiment still runs.
    """
    if cfg.kind not in ("thm1_first_order", "thm2_higher_order", "thm3_odd_order"):
        raise ParameterError(f"{cfg.kind} is not a characterization experiment")
    desc, transforms = _riesz_side(cfg)
    if cfg.seeds is not None and len(cfg.seeds) == 0:
        return ExperimentReport()
    idx = indices or _indices(cfg)
    need, label, warnings = _gate(cfg, idx)
    seeds = build_seeds(cfg, s_default=idx.m_phi)
    phi = cfg.phi

    def row(item):
        sid, f = item
        nf = luxembourg_norm(phi, f)
        rs = sum(luxembourg_norm(phi, g) for g in transforms(f))
        mx = luxembourg_norm(phi, radial_maximal(f))
        return SeedRow(sid, nf, rs, mx, (nf + rs) / mx)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(row, seeds))
    else:
        rows = [row(item) for item in seeds]
    band = Band.of([r.ratio for r in rows])
    env = {
        "grid": cfg.grid.to_dict(),
        "phi": phi.to_spec(),
        "indices": idx.to_dict(),
        "riesz_side": desc,
        "maximal_side": "radial maximal, kernel exp(-pi|x|^2)",
        "hypothesis": {"i_over_q": idx.i_phi / idx.q_phi, "threshold": need, "label": label},
        "band_bound": cfg.tol["band"],
    }
    rep = ExperimentReport(rows, _experiment_label(cfg), band, env, warnings)
    if band is not None and band.spread > cfg.tol["band"]:
        rep.warnings.append(f"band max/min {band.spread:.6g} exceeds {cfg.tol['band']:.6g}")
    if cfg.kind == "thm3_odd_order" and cfg.experiment.get("uchiyama") and rows:
        f = seeds[0][1]
        rep.diagnostics["uchiyama"] = uchiyama_diagnostic(f, words_of_order(int(cfg.experiment["k"]), cfg.grid.dim)[0])
    return rep


def _experiment_label(cfg: ExperimentConfig) -> str:
    exp = cfg.experiment
    if cfg.kind == "thm2_higher_order":
        return f"thm2_higher_order(m={int(exp['m'])})" + (
            ", polynomial" if exp.get("mode") == "polynomial" else ""
        )
    if cfg.kind == "thm3_odd_order":
        return f"thm3_odd_order(k={int(exp['k'])})"
    return cfg.kind


def uchiyama_diagnostic(f: ScalarField, word, p0_values=(0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)) -> dict:
    """Exploratory: max_x M(Kf)(x) / M_p0(M_1/2(|Kf|))(x) for each p0.

    M is the radial maximal function, M_q the q-order ball maximal function.
    Reported only; the bound's constant and p0 are unknown.
    """
    g = compose_riesz(f, word)
    balls = hl_family(f.grid)
    top = radial_maximal(g).values
    inner = q_order_maximal(g, 0.5, balls)
    out = {}
    for p0 in p0_values:
        bottom = q_order_maximal(inner, p0, balls).values
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(bottom > 0, top / bottom, 0.0)
        out[f"{p0:.1f}"] = float(np.max(r))
    return out


# ---------------------------------------------------------------------------
# identity suites


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def _id_row(name, residual, tol, detail="", upper=True) -> IdentityRow:
    ok = residual <= tol if upper else residual >= tol
    return IdentityRow(name, float(residual), float(tol), _status(ok), detail)


def _identity_seed(grid: PeriodicGrid) -> ScalarField:
    return build_field(grid, "exp(-|x|^2) * (1 + 0.5*cos(x1))")


def _spectral_rows(grid: PeriodicGrid, tol: dict) -> list[IdentityRow]:
    f = _identity_seed(grid)
    rows = []
    acc = sum(compose_riesz(f, (j, j)).values for j in range(1, grid.dim + 1))
    res = np.max(np.abs(acc + (f.values - f.mean))) / f.sup_norm()
    rows.append(_id_row("riesz_square_sum", res, tol["riesz_square_sum"], "sum_j R_j R_j f = -(f - mean f)"))
    lv = TimeLevels.logspace(0.05, 1.0, 5)
    u = poisson_extend(f, lv)
    gap = 0.0
    for s, t in [(0.05, 0.1), (0.1, 0.2), (0.2, 0.3), (0.3, 0.5), (0.5, 0.5)]:
        comp = poisson_extend(u.at(s), [t]).slices[0].values
        gap = max(gap, float(np.max(np.abs(comp - u.at(s + t).values))))
    rows.append(_id_row("semigroup", gap / f.sup_norm(), tol["semigroup"], "P_s P_t f = P_(s+t) f"))
    res = 0.0
    for j in range(1, grid.dim + 1):
        q = conjugate_poisson_extend(f, j, lv)
        p = poisson_extend(riesz_transform(f, j), lv)
        res = max(res, max(float(np.max(np.abs(a.values - b.values))) for a, b in zip(q.slices, p.slices)))
    rows.append(_id_row("conjugacy", res / f.sup_norm(), tol["conjugacy"], "Q_t^(j) f = P_t R_j f"))
    return rows


def _musielak_rows(grid: PeriodicGrid, tol: dict) -> list[IdentityRow]:
    f = _identity_seed(grid)
    rows = []
    p = 0.8
    phi = Separable("1", f"t^{p}")
    exact = (float(np.sum(np.abs(f.values) ** p)) * grid.cell_volume) ** (1 / p)
    lux = luxembourg_norm(phi, f)
    rows.append(_id_row("luxembourg_closed_form", abs(lux - exact) / exact, tol["luxembourg_closed_form"], "phi = t^0.8"))
    at_norm = modular(phi, f * (1.0 / lux))
    rows.append(_id_row("modular_at_norm", 1 - at_norm, tol["luxembourg_closed_form"], "1 - rho(f/||f||)"))
    q = 0.5 if grid.dim == 1 else (grid.dim - 1) / grid.dim
    base = Separable("1+0.5*cos(x1)", "t*ln(e+t)")
    lhs = luxembourg_norm(power_rescale(base, q), f.with_values(np.abs(f.values) ** q))
    rhs = luxembourg_norm(base, f) ** q
    rows.append(_id_row("scaling", abs(lhs - rhs) / rhs, tol["scaling"], f"|| |f|^q ||_(phi_q) = ||f||^q, q = {q:.4g}"))
    return rows


def _kurokawa_rows(dim: int, tol: dict) -> list[IdentityRow]:
    dim = max(dim, 2)
    pts = sphere_points(dim, 500)
    worst = 0.0
    for order in range(1, 4):
        for w in words_of_order(order, dim):
            dec = kurokawa_decompose(w, dim)
            direct = np.ones(len(pts), dtype=complex)
            for j in w.active:
                direct = direct * (-1j * pts[:, j - 1])
            worst = max(worst, float(np.max(np.abs(dec.symbol_at(pts) - direct))))
    return [_id_row("kurokawa", worst, tol["kurokawa"], f"words up to order 3, n = {dim}")]


def nyquist_content(f: ScalarField) -> float:
    """Largest Fourier coefficient on a Nyquist plane, relative to the largest overall."""
    c = np.abs(np.fft.fftn(f.values, norm="forward"))
    top = float(c.max())
    if top == 0:
        return 0.0
    N = f.grid.points_per_axis
    edge = max(float(np.take(c, N // 2, axis=ax).max()) for ax in range(f.grid.dim))
    return edge / top


def _halfspace_rows(grid: PeriodicGrid, tol: dict) -> list[IdentityRow]:
    n = grid.dim
    f = build_field(grid, "exp(-|x|^2)")
    tail = nyquist_content(f)
    if tail > NYQUIST_LIMIT:
        why = f"seed not resolved: Nyquist content {tail:.2e} > {NYQUIST_LIMIT:.0e}"
        rows = [
            IdentityRow(name, 0.0, tol[key], "insufficient_resolution", why)
            for name, key in [
                ("subharmonic_rank1", "subharmonic"),
                ("subharmonic_rank2", "subharmonic"),
                ("harmonic_majorant", "majorant"),
            ]
        ]
        return rows + [_cr_order_row(grid, tol)]
    lv = TimeLevels.default(grid)
    rows = []
    F1 = build_harmonic_vector(f, lv)
    F2 = build_tensor_field(f, 2, lv)
    q1 = (n - 1) / n if n > 1 else 0.5
    q2 = (n - 1) / (n + 1) if n > 1 else 0.5
    for name, F, q in [("subharmonic_rank1", F1, q1), ("subharmonic_rank2", F2, q2)]:
        d, s = subharmonic_defect(F, q, with_scale=True)
        rows.append(_id_row(name, -d / s, tol["subharmonic"], f"q = {q:.4g}, defect/scale >= -tol"))
    a, t = lv[len(lv) // 4], lv[len(lv) // 4]
    gap = math.inf
    for q in (q1, 2.0):
        g, s = harmonic_majorant_gap(F1, q, a, t, with_scale=True)
        gap = min(gap, g / s)
    rows.append(_id_row("harmonic_majorant", -gap, tol["majorant"], "P_t |F(., a)|^q >= |F(., a + t)|^q"))
    rows.append(_cr_order_row(grid, tol))
    return rows


def _cr_order_row(grid: PeriodicGrid, tol: dict) -> IdentityRow:
    n, N, L = grid.dim, grid.points_per_axis, grid.half_width
    sizes = [N // 4, N // 2, N]
    if sizes[0] < MIN_ORDER_POINTS:
        return IdentityRow(
            "cr_order", 0.0, tol["cr_order"], "insufficient_resolution", f"coarsest grid N/4 = {sizes[0]} < {MIN_ORDER_POINTS}"
        )
    lv = TimeLevels.logspace(0.1 * L / 8, 2 * L / 8, 6)
    res = []
    for m in sizes:
        g = PeriodicGrid(n, L, m, grid.offset)
        F = build_harmonic_vector(build_field(g, "exp(-|x|^2)"), lv)
        div, curl = cr_residual(F)
        res.append(max(div, curl))
    if min(res) < 1e-13:
        return IdentityRow("cr_order", 0.0, tol["cr_order"], "insufficient_resolution", "residual at round-off level")
    order = math.log2(res[1] / res[2])
    return _id_row("cr_order", order, tol["cr_order"], f"residuals {res[0]:.3e}, {res[1]:.3e}, {res[2]:.3e}", upper=False)


def run_identity_suite(cfg: ExperimentConfig) -> ExperimentReport:
    """One row per identity with its residual and pass/fail status.

    ``halfspace_suite`` keeps only the half-space rows. An empty seed list
    yields an empty report.
    """
    if cfg.seeds is not None and len(cfg.seeds) == 0:
        return ExperimentReport()
    grid, tol = cfg.grid, cfg.tol
    rows = []
    if cfg.kind != "halfspace_suite":
        rows += _spectral_rows(grid, tol)
        rows += _musielak_rows(grid, tol)
        rows += _kurokawa_rows(grid.dim, tol)
    rows += _halfspace_rows(grid, tol)
    env = {"grid": grid.to_dict(), "tolerances": {k: tol[k] for k in sorted(tol)}}
    return ExperimentReport(rows, cfg.kind, None, env)


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    if cfg.kind in ("identity_suite", "halfspace_suite"):
        return run_identity_suite(cfg)
    return run_riesz_characterization(cfg, workers=workers)


def check_config(dim: int = 1, N: int | None = None) -> ExperimentConfig:
    """The default identity-suite configuration used by ``mh check``."""
    grid = {"dim": dim, "N": N or (256 if dim == 1 else 128), "L": 8.0}
    return ExperimentConfig.from_dict({"grid": grid, "experiment": {"kind": "identity_suite"}})

