"""Coupled Monte Carlo studies.

Paths are processed in fixed-size chunks of consecutive path indices.  The
chunking never depends on the worker count and every random number is
addressed by ``(seed, path, stream)``, so reports are byte-identical for any
``workers`` value.
"""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import rng
from .bounds import BoundInputs, local_time_bound_AB, local_time_bound_convex
from .coefficients import from_config as coefficients_from_config
from .errors import ConfigurationError
from .geometry import INFINITE_RADIUS, TruncatedDomain, domain_from_dict, truncate
from .paths import TimeGrid, brownian_batch, diameter, refine_batch
from .sde import check_reference, wong_zakai_batch

log = logging.getLogger(__name__)

CHUNK = 500
WINDOW_STREAM = 1 << 62
POINTWISE_FLOOR = 0.45
SUP_FLOOR = 0.17
SLOPE_ALLOWANCE = 0.05
ABORT_LIMIT = 0.01


@dataclass
class StudyConfig:
    domain: dict
    coefficients: dict
    x0: list
    T: float = 1.0
    levels: list = field(default_factory=lambda: [64, 128, 256, 512, 1024])
    reference_level: int = 16384
    paths: int = 2000
    substeps: int = 16
    seed: int = 0
    integrator: str = "heun"
    windows: int = 50
    bound: dict | None = None
    version: int = 1

    def __post_init__(self):
        self.levels = sorted(int(n) for n in self.levels)
        self.x0 = [float(v) for v in np.atleast_1d(self.x0)]
        self.validate()

    def validate(self) -> None:
        if self.version != 1:
            raise ConfigurationError(f"unsupported config version {self.version}")
        if not self.levels:
            raise ConfigurationError("at least one study level is required")
        for n in self.levels + [self.reference_level]:
            if n < 1 or n & (n - 1):
                raise ConfigurationError(f"level {n} is not a power of two")
        check_reference(self.reference_level, self.levels)
        if self.paths < 100:
            raise ConfigurationError("Monte Carlo count must be at least 100")
        if self.substeps < 1:
            raise ConfigurationError("substeps must be positive")
        if not self.T > 0:
            raise ConfigurationError("horizon must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> StudyConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)

    def build(self):
        dom = domain_from_dict(self.domain)
        coeff = coefficients_from_config(self.coefficients)
        return dom, coeff


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("REFLECT_SIM_WORKERS", "1"))
    return max(1, workers)


def _chunks(total: int):
    return [list(range(i, min(i + CHUNK, total))) for i in range(0, total, CHUNK)]


def _run_chunks(func, cfg: StudyConfig, workers: int | None, *extra):
    chunks = _chunks(cfg.paths)
    payload = cfg.to_dict()
    workers = resolve_workers(workers)
    if workers == 1 or len(chunks) == 1:
        return [func(payload, c, *extra) for c in chunks]
    with ProcessPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
        return list(pool.map(func, [payload] * len(chunks), chunks, *[[e] * len(chunks) for e in extra]))


def driver_paths(cfg: StudyConfig, paths, noise_dim: int) -> np.ndarray:
    """Reference-level Brownian paths built by bridge refinement from the coarsest study level."""
    N = cfg.levels[0]
    B = brownian_batch(noise_dim, TimeGrid(cfg.T, N), cfg.seed, paths)
    while N < cfg.reference_level:
        B = refine_batch(B, TimeGrid(cfg.T, N), cfg.seed, paths)
        N *= 2
    return B


# ---------------------------------------------------------------- slope fitting

def fit_loglog_slope(deltas, errors):
    """Least squares line through (log delta, log error): returns ``(slope, intercept, r2)``."""
    deltas = np.asarray(deltas, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if deltas.size < 3 or deltas.size != errors.size:
        raise ValueError("need at least three matched points")
    if np.any(deltas <= 0) or np.any(errors <= 0):
        raise ValueError("log-log fit needs positive values")
    res = stats.linregress(np.log(deltas), np.log(errors))
    return float(res.slope), float(res.intercept), float(res.rvalue ** 2)


def _slope_se(deltas, errors) -> float:
    res = stats.linregress(np.log(deltas), np.log(errors))
    return float(res.stderr) if np.isfinite(res.stderr) else 0.0


def _fit_block(deltas, errors, floor=None):
    if len(deltas) < 3 or np.any(np.asarray(errors) <= 0):
        return None
    slope, intercept, r2 = fit_loglog_slope(deltas, errors)
    se = _slope_se(deltas, errors)
    out = {"slope": slope, "intercept": intercept, "r2": r2, "slope_se": se}
    if floor is not None:
        out["floor"] = floor
        out["passed"] = bool(slope >= floor - min(se, SLOPE_ALLOWANCE))
    return out


# ---------------------------------------------------------------- strong error

def _strong_error_chunk(payload: dict, paths: list):
    cfg = StudyConfig.from_dict(payload)
    dom, coeff = cfg.build()
    B = driver_paths(cfg, paths, coeff.noise_dim)
    top = cfg.levels[-1]
    ref = wong_zakai_batch(dom, coeff, B, cfg.T, cfg.reference_level, cfg.substeps, cfg.x0,
                           stride=cfg.reference_level // top, integrator=cfg.integrator)
    failed = ref.failed.copy()
    sq = {}
    for N in cfg.levels:
        res = wong_zakai_batch(dom, coeff, B, cfg.T, N, cfg.substeps, cfg.x0, integrator=cfg.integrator)
        failed |= res.failed
        ref_nodes = ref.x[:, :: top // N]
        sq[N] = np.sum((res.x - ref_nodes) ** 2, axis=-1)
    return failed, sq


@dataclass
class LevelError:
    N: int
    delta: float
    e_pt: float
    se_pt: float
    e_sup: float
    se_sup: float


@dataclass
class ConvergenceReport:
    config: dict
    levels: list
    pointwise_fit: dict | None
    sup_fit: dict | None
    aborted: int
    checks: dict
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def levels_csv(self) -> str:
        lines = ["N,delta,e_pt,se_pt,e_sup,se_sup"]
        for lv in self.levels:
            lines.append(",".join([str(lv["N"])] + [f"{lv[k]:.17g}" for k in
                                                    ("delta", "e_pt", "se_pt", "e_sup", "se_sup")]))
        return "\n".join(lines) + "\n"


def strong_error_study(cfg: StudyConfig, workers: int | None = None) -> ConvergenceReport:
    """Mean-square errors of Wong-Zakai levels against the finest-level reference on coupled paths."""
    dom, _ = cfg.build()
    parts = _run_chunks(_strong_error_chunk, cfg, workers)
    failed = np.concatenate([p[0] for p in parts])
    ok = ~failed
    aborted = int(failed.sum())
    M = int(ok.sum())

    levels = []
    for N in cfg.levels:
        sq = np.concatenate([p[1][N] for p in parts])[ok]
        node_means = sq.mean(axis=0)
        k = int(np.argmax(node_means))
        sup = sq.max(axis=1)
        levels.append(asdict(LevelError(
            N, cfg.T / N, float(node_means[k]), float(sq[:, k].std(ddof=1) / math.sqrt(M)),
            float(sup.mean()), float(sup.std(ddof=1) / math.sqrt(M)))))

    deltas = [lv["delta"] for lv in levels]
    convex = dom.convex
    pt_fit = _fit_block(deltas, [lv["e_pt"] for lv in levels], POINTWISE_FLOOR if convex else None)
    sup_fit = _fit_block(deltas, [lv["e_sup"] for lv in levels], SUP_FLOOR if convex else None)

    sup = [lv["e_sup"] for lv in levels]
    checks = {
        "abort_rate_ok": aborted <= ABORT_LIMIT * cfg.paths,
        "sup_strictly_decreasing": all(a > b for a, b in zip(sup, sup[1:])),
        "sup_decay_factor": (sup[0] / sup[-1]) if sup[-1] > 0 else None,
    }
    if convex:
        checks["pointwise_slope_floor"] = bool(pt_fit and pt_fit["passed"])
        checks["sup_slope_floor"] = bool(sup_fit and sup_fit["passed"])
        passed = checks["abort_rate_ok"] and checks["pointwise_slope_floor"] and checks["sup_slope_floor"]
    else:
        checks["sup_decay_over_4"] = bool(sup[-1] < sup[0] / 4.0)
        passed = checks["abort_rate_ok"] and checks["sup_strictly_decreasing"] and checks["sup_decay_over_4"]
    return ConvergenceReport(cfg.to_dict(), levels, pt_fit, sup_fit, aborted, checks, bool(passed))


# ---------------------------------------------------------------- bound validation

def bound_constants(cfg: StudyConfig, dom) -> dict:
    """Constants of the applicable local-time bound, from the config or the domain itself."""
    spec = dict(cfg.bound or {"kind": "auto"})
    kind = spec.get("kind", "auto")
    if kind == "auto":
        if isinstance(dom, TruncatedDomain) and dom.base.convex:
            _, delta, beta = truncate(dom.base, dom.center, dom.radius, dom.inner_radius)
            return {"kind": "AB", "beta": beta, "delta": delta, "r0": None}
        raise ConfigurationError("no certified constants: give a 'bound' section for this domain")
    if kind == "AB":
        missing = {"beta", "delta"} - set(spec)
        if missing:
            raise ConfigurationError(f"bound section lacks {sorted(missing)}")
        return {"kind": "AB", "beta": float(spec["beta"]), "delta": float(spec["delta"]),
                "r0": None if spec.get("r0") is None else float(spec["r0"])}
    if kind == "convex":
        missing = {"center", "inner_radius"} - set(spec)
        if missing:
            raise ConfigurationError(f"bound section lacks {sorted(missing)}")
        if not dom.convex:
            raise ConfigurationError("convex bound requested for a non-convex domain")
        center = np.asarray(spec["center"], dtype=np.float64)
        TruncatedDomain(dom, center, float(spec["inner_radius"]), float(spec["inner_radius"]))
        return {"kind": "convex", "center": center.tolist(), "inner_radius": float(spec["inner_radius"])}
    raise ConfigurationError(f"unknown bound kind {kind!r}")


def evaluate_bound(constants: dict, omega: float, sup_osc: float, sup_xi: float = 0.0) -> float:
    if constants["kind"] == "AB":
        r0 = INFINITE_RADIUS if constants["r0"] is None else constants["r0"]
        return local_time_bound_AB(BoundInputs(1.0, omega, sup_osc, constants["beta"], constants["delta"], r0))
    return local_time_bound_convex(BoundInputs(1.0, omega, sup_osc, R0=constants["inner_radius"], sup_xi=sup_xi))


def random_dyadic_windows(seed: int, path: int, count: int, steps: int):
    """``count`` windows [i 2^-j, (i+1) 2^-j] as (level j, index i) pairs, 0 <= j <= log2(steps)."""
    J = int(math.log2(steps))
    u = rng.uniforms(seed, path, WINDOW_STREAM, 2 * count).reshape(count, 2)
    j = np.minimum((u[:, 0] * (J + 1)).astype(int), J)
    i = np.minimum((u[:, 1] * (1 << j)).astype(int), (1 << j) - 1)
    return list(zip(j.tolist(), i.tolist()))


def _bound_chunk(payload: dict, paths: list, windows: int):
    cfg = StudyConfig.from_dict(payload)
    dom, coeff = cfg.build()
    consts = bound_constants(cfg, dom)
    N = cfg.levels[-1]
    B = brownian_batch(coeff.noise_dim, TimeGrid(cfg.T, N), cfg.seed, paths)
    res = wong_zakai_batch(dom, coeff, B, cfg.T, N, cfg.substeps, cfg.x0,
                           record_substeps=True, integrator=cfg.integrator)
    sub = res.sub
    K = N * cfg.substeps
    dY = np.linalg.norm(np.diff(sub["y"], axis=1), axis=-1)
    cumY = np.concatenate([np.zeros((len(paths), 1)), np.cumsum(dY, axis=1)], axis=1)
    records = []
    for p_local, p in enumerate(paths):
        if res.failed[p_local]:
            continue
        sup_xi = 0.0
        if consts["kind"] == "convex":
            sup_xi = float(np.max(np.linalg.norm(sub["x"][p_local] - np.asarray(consts["center"]), axis=-1)))
        for j, i in random_dyadic_windows(cfg.seed, p, windows, N):
            width = K >> j
            a, b = i * width, (i + 1) * width
            local = float(sub["tv"][p_local, b] - sub["tv"][p_local, a])
            omega = float(cumY[p_local, b] - cumY[p_local, a])
            osc = diameter(sub["y"][p_local, a:b + 1])
            bound = evaluate_bound(consts, omega, osc, sup_xi)
            if local == 0.0:
                ratio = 0.0
            elif bound == 0.0:
                ratio = math.inf
            else:
                ratio = local / bound
            records.append({"path": p, "s": i * cfg.T / (1 << j), "t": (i + 1) * cfg.T / (1 << j),
                            "local_time": local, "omega": omega, "sup_osc": osc, "bound": bound,
                            "ratio": ratio})
    return int(res.failed.sum()), records


@dataclass
class BoundValidationReport:
    constants: dict
    windows_tested: int
    violations: int
    worst_ratio: float
    aborted: int
    records: list

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.windows_tested > 0

    def to_dict(self, with_records: bool = True) -> dict:
        out = asdict(self)
        if not with_records:
            out.pop("records")
        out["passed"] = self.passed
        return out


def bound_validation_study(cfg: StudyConfig, windows: int | None = None,
                           workers: int | None = None) -> BoundValidationReport:
    """Compare the empirical local time on random dyadic windows with the closed-form bound."""
    dom, _ = cfg.build()
    consts = bound_constants(cfg, dom)
    windows = cfg.windows if windows is None else windows
    parts = _run_chunks(_bound_chunk, cfg, workers, windows)
    records = [r for p in parts for r in p[1]]
    ratios = np.array([r["ratio"] for r in records])
    violations = int(np.count_nonzero(ratios > 1.0 + 1e-9))
    return BoundValidationReport(consts, len(records), violations,
                                 float(ratios.max()) if ratios.size else 0.0,
                                 sum(p[0] for p in parts), records)


# ---------------------------------------------------------------- moment growth

def _moment_chunk(payload: dict, paths: list, J: int):
    cfg = StudyConfig.from_dict(payload)
    dom, coeff = cfg.build()
    N = cfg.levels[-1]
    B = brownian_batch(coeff.noise_dim, TimeGrid(cfg.T, N), cfg.seed, paths)
    res = wong_zakai_batch(dom, coeff, B, cfg.T, N, cfg.substeps, cfg.x0, integrator=cfg.integrator)
    inc, lt = [], []
    for j in range(J + 1):
        step = N >> j
        dx = res.x[:, step::step] - res.x[:, :-step:step]
        dtv = res.tv[:, step::step] - res.tv[:, :-step:step]
        # per-path averages over the 2^j disjoint windows of this length
        inc.append(np.sum(dx ** 2, axis=-1).mean(axis=1))
        lt.append((dtv ** 2).mean(axis=1))
    return res.failed, np.array(inc).T, np.array(lt).T


def moment_growth_study(cfg: StudyConfig, max_depth: int = 8, workers: int | None = None) -> dict:
    """Second moments of X^N and of the local-time variation over dyadic windows of length T/2^j."""
    N = cfg.levels[-1]
    J = min(int(math.log2(N)), max_depth)
    parts = _run_chunks(_moment_chunk, cfg, workers, J)
    failed = np.concatenate([p[0] for p in parts])
    ok = ~failed
    inc = np.concatenate([p[1] for p in parts])[ok]
    lt = np.concatenate([p[2] for p in parts])[ok]
    M = inc.shape[0]
    widths = [cfg.T / (1 << j) for j in range(J + 1)]
    e_inc, se_inc = inc.mean(axis=0), inc.std(axis=0, ddof=1) / math.sqrt(M)
    e_lt, se_lt = lt.mean(axis=0), lt.std(axis=0, ddof=1) / math.sqrt(M)

    inc_fit = _fit_block(widths, e_inc)
    lt_fit = _fit_block(widths, e_lt)
    c_hat = float(e_inc[0] / widths[0])
    c_max = float(np.max(e_inc / np.asarray(widths)))
    within = [bool(e <= c_hat * w + 3.0 * se) for e, w, se in zip(e_inc, widths, se_inc)]
    reflection_active = bool(np.all(e_lt > 0))
    checks = {
        "increment_slope_in_range": bool(inc_fit and 0.9 <= inc_fit["slope"] <= 1.2),
        "increment_bound_from_largest_window": all(within),
        "local_time_slope_at_least_0.9": (bool(lt_fit and lt_fit["slope"] >= 0.9) if reflection_active else None),
    }
    return {
        "config": cfg.to_dict(),
        "level": N,
        "windows": [{"width": w, "increment_moment": float(a), "increment_se": float(b),
                     "local_time_moment": float(c), "local_time_se": float(d)}
                    for w, a, b, c, d in zip(widths, e_inc, se_inc, e_lt, se_lt)],
        "increment_fit": inc_fit,
        "local_time_fit": lt_fit,
        "c_hat": c_hat,
        "c_max": c_max,
        "aborted": int(failed.sum()),
        "checks": checks,
        "passed": checks["increment_slope_in_range"] and int(failed.sum()) <= ABORT_LIMIT * cfg.paths,
    }


# ---------------------------------------------------------------- plotting

def write_plot(report: ConvergenceReport, path) -> None:
    """Log-log plot of both error flavours with their fitted lines."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    deltas = np.array([lv["delta"] for lv in report.levels])
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for key, fit, marker, label in (("e_pt", report.pointwise_fit, "o", "pointwise"),
                                    ("e_sup", report.sup_fit, "s", "sup")):
        errs = np.array([lv[key] for lv in report.levels])
        if np.all(errs > 0):
            ax.loglog(deltas, errs, marker, label=label)
        if fit:
            ax.loglog(deltas, np.exp(fit["intercept"]) * deltas ** fit["slope"], "--",
                      label=f"{label} slope {fit['slope']:.3f}")
    ax.set_xlabel("mesh")
    ax.set_ylabel("mean-square error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
