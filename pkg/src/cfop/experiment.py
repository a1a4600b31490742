"""Experiment orchestration: sweeps, per-point CSV curves and reports."""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import (ConfigError, SystemConfig, Topology, env_overrides, parse_key_values,
                     system_config_from_mapping, SYSTEM_KEYS)
from .lognormal import fit_lognormal, outage_lognormal, rate_bounds, rate_lognormal, rate_uatf
from .moments import aggregate, subexpectations
from .sinr_sim import DeploymentSample, db_to_linear, draw_deployment, run_monte_carlo
from .udr import outage_exact_smallcase, outage_mmimo_closed_form, outage_udr

METHODS = ("mc", "lognormal", "udr", "mmimo_closed", "exact_small")
ORTHOGONAL_ONLY = ("udr", "mmimo_closed", "exact_small")
CSV_COLUMNS = ("threshold_db", "op_simulated", "op_lognormal", "op_udr", "rate_simulated", "rate_lognormal",
               "rate_lb", "rate_ub", "rate_uatf", "op_mmimo", "op_exact")
OP_COLUMN = {"lognormal": "op_lognormal", "udr": "op_udr", "mmimo_closed": "op_mmimo", "exact_small": "op_exact"}
BAND = (0.05, 0.95)


class SweepAxis(str, enum.Enum):
    K = "K"
    M = "M"
    THRESHOLD = "threshold"
    NONE = "none"


def _default_thresholds():
    return tuple(float(x) for x in range(-30, 31))


@dataclass(frozen=True)
class ExperimentSpec:
    base: SystemConfig = field(default_factory=SystemConfig)
    sweep_axis: SweepAxis = SweepAxis.NONE
    sweep_values: tuple = (None,)
    methods: frozenset = frozenset({"mc", "lognormal"})
    mc_deployments: int = 20
    mc_iters: int = 2000
    master_seed: int = 0
    output_path: str = "cfop_out"
    thresholds_db: tuple = field(default_factory=_default_thresholds)
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sweep_axis", SweepAxis(self.sweep_axis))
        object.__setattr__(self, "methods", frozenset(self.methods))
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        object.__setattr__(self, "thresholds_db", tuple(float(t) for t in self.thresholds_db))
        self.validate()

    def validate(self) -> None:
        if not self.methods:
            raise ConfigError("no methods requested")
        unknown = self.methods - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}; choose from {', '.join(METHODS)}")
        if not self.sweep_values:
            raise ConfigError("sweep_values must not be empty")
        if self.sweep_axis is not SweepAxis.THRESHOLD and not self.thresholds_db:
            raise ConfigError("thresholds_db must not be empty")
        for name in ("mc_deployments", "mc_iters", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for cfg in self.point_configs():
            if not cfg.orthogonal:
                bad = sorted(self.methods & set(ORTHOGONAL_ONLY))
                if bad:
                    raise ConfigError(f"methods {bad} need orthogonal pilots (pilot_mode={cfg.pilot_mode.value})")
            if "mmimo_closed" in self.methods and cfg.topology is not Topology.COLLOCATED:
                raise ConfigError("mmimo_closed needs topology = collocated")
            if "exact_small" in self.methods and cfg.M * cfg.N > 4:
                raise ConfigError(f"exact_small needs M*N <= 4 (got {cfg.M * cfg.N})")
            if cfg.K < 2 and self.methods & {"udr", "mmimo_closed", "exact_small"}:
                raise ConfigError("outage routes without contamination need K >= 2")

    def point_configs(self) -> list[SystemConfig]:
        if self.sweep_axis in (SweepAxis.NONE, SweepAxis.THRESHOLD):
            return [self.base]
        try:
            out = []
            for v in self.sweep_values:
                change = {self.sweep_axis.value: int(v)}
                # orthogonal pilots need tau_p >= K, so a K sweep carries tau_p along
                if self.sweep_axis is SweepAxis.K and self.base.orthogonal:
                    change["tau_p"] = max(self.base.tau_p, int(v))
                out.append(self.base.replace(**change))
            return out
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad sweep value for {self.sweep_axis.value}: {exc}") from exc

    def point_thresholds(self) -> tuple:
        if self.sweep_axis is SweepAxis.THRESHOLD:
            return tuple(sorted(float(v) for v in self.sweep_values))
        return tuple(sorted(self.thresholds_db))

    def point_labels(self) -> list[str]:
        if self.sweep_axis in (SweepAxis.NONE, SweepAxis.THRESHOLD):
            return ["base"]
        return [f"{self.sweep_axis.value}={int(v)}" for v in self.sweep_values]


EXPERIMENT_KEYS = ("sweep_axis", "sweep_values", "methods", "mc_deployments", "mc_iters", "master_seed",
                   "output_path", "thresholds_db", "threads")


def _float_list(raw: str) -> tuple:
    raw = raw.strip()
    if raw.count(":") == 2 and "," not in raw:
        start, stop, step = (float(p) for p in raw.split(":"))
        if step <= 0:
            raise ConfigError("range step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + i * step for i in range(n))
    return tuple(float(p) for p in raw.split(",") if p.strip())


def spec_from_mapping(values: dict) -> ExperimentSpec:
    unknown = set(values) - set(SYSTEM_KEYS) - set(EXPERIMENT_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = system_config_from_mapping({k: v for k, v in values.items() if k in SYSTEM_KEYS})
    kw = {"base": base}
    try:
        for key in EXPERIMENT_KEYS:
            if key not in values:
                continue
            raw = values[key]
            if key in ("sweep_values", "thresholds_db"):
                kw[key] = _float_list(raw)
            elif key == "methods":
                kw[key] = frozenset(p.strip() for p in raw.split(",") if p.strip())
            elif key in ("mc_deployments", "mc_iters", "master_seed", "threads"):
                kw[key] = int(raw)
            else:
                kw[key] = raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value in experiment config: {exc}") from exc
    if kw.get("sweep_axis", "none") in ("none", "threshold") and "sweep_values" not in kw:
        kw["sweep_values"] = kw.get("thresholds_db", _default_thresholds()) if kw.get("sweep_axis") == "threshold" else (None,)
    try:
        return ExperimentSpec(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_spec(path=None, environ=None, overrides: dict | None = None) -> ExperimentSpec:
    """Config file, then ``CFOP_*`` environment variables, then ``overrides``."""
    values = {}
    if path is not None:
        with open(path) as fh:
            values = parse_key_values(fh.read(), str(path))
    values.update(env_overrides(list(SYSTEM_KEYS) + list(EXPERIMENT_KEYS), environ))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return spec_from_mapping(values)


# ---------------------------------------------------------------------------
# evaluation


def fmt(x) -> str:
    """Shortest round-trip decimal; blank for missing values."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def _analytic_for_deployment(args):
    cfg, sample, methods, thr_lin = args
    dep, es = sample.deployment, sample.stats
    K, nT = dep.K, thr_lin.size
    out, errors = {}, {}
    if "lognormal" in methods:
        try:
            op = np.empty((K, nT))
            rates = np.empty((K, 4))
            for k in range(K):
                sub = subexpectations(es, dep, cfg.N, k)
                p = fit_lognormal(aggregate(sub, dep.rho_u))
                op[k] = outage_lognormal(p, thr_lin)
                lo, hi = rate_bounds(p)
                rates[k] = (rate_lognormal(p), lo, hi, rate_uatf(sub["E[A]"], sub["E[A2]"],
                                                                   aggregate(sub, dep.rho_u).ey, dep.rho_u))
            out["lognormal"] = (op, rates)
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            errors["lognormal"] = f"{type(exc).__name__}: {exc}"
    pos = thr_lin > 0
    finite = np.isfinite(thr_lin)
    for name in ("udr", "exact_small", "mmimo_closed"):
        if name not in methods:
            continue
        try:
            op = np.empty((K, nT))
            op[:, ~pos] = 0.0
            op[:, pos & ~finite] = 1.0
            mask = pos & finite
            T = thr_lin[mask]
            for k in range(K):
                if name == "udr":
                    op[k, mask] = outage_udr(es, dep, cfg, T, k=k) if T.size else []
                elif name == "exact_small":
                    op[k, mask] = [outage_exact_smallcase(es, dep, cfg, t, k=k) for t in T]
                else:
                    op[k, mask] = outage_mmimo_closed_form(dep.beta[0], es.gamma[0], cfg, T, k=k,
                                                           rho_u=dep.rho_u) if T.size else []
            out[name] = (op, None)
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            errors[name] = f"{type(exc).__name__}: {exc}"
    return out, errors


@dataclass
class PointResult:
    label: str
    cfg: SystemConfig
    thresholds_db: np.ndarray
    columns: dict
    errors: dict
    deviations: dict


def _band_deviation(sim: np.ndarray, ana: np.ndarray) -> float | None:
    mask = (sim >= BAND[0]) & (sim <= BAND[1])
    if not np.any(mask):
        return None
    return float(np.max(np.abs(sim[mask] - ana[mask])))


def evaluate_point(spec: ExperimentSpec, cfg: SystemConfig, label: str) -> PointResult:
    thr_db = np.asarray(spec.point_thresholds(), dtype=float)
    thr_lin = db_to_linear(thr_db)
    nT = thr_db.size
    cols = {c: [None] * nT for c in CSV_COLUMNS}
    cols["threshold_db"] = list(thr_db)
    errors = {}

    if "mc" in spec.methods:
        mc = run_monte_carlo(cfg, spec.mc_deployments, spec.mc_iters, thr_db, spec.master_seed, spec.threads)
        samples = mc.samples
        sysc = mc.system_curve()
        cols["op_simulated"] = list(sysc.op)
        cols["rate_simulated"] = [sysc.rate_bits] * nT
    else:
        samples = tuple(draw_deployment(cfg, spec.master_seed, d) for d in range(spec.mc_deployments))

    analytic = spec.methods - {"mc"}
    if analytic:
        jobs = [(cfg, s, analytic, thr_lin) for s in samples]
        if spec.threads > 1:
            with ProcessPoolExecutor(max_workers=spec.threads) as ex:
                parts = list(ex.map(_analytic_for_deployment, jobs))
        else:
            parts = [_analytic_for_deployment(j) for j in jobs]
        for name in sorted(analytic):
            failed = [f"deployment {d}: {e[name]}" for d, (_, e) in enumerate(parts) if name in e]
            if failed:
                errors[name] = failed[0] + (f" (+{len(failed) - 1} more)" if len(failed) > 1 else "")
                continue
            op = np.stack([p[name][0] for p, _ in parts])        # (D, K, nT)
            cols[OP_COLUMN[name]] = list(op.mean(axis=(0, 1)))
            if name == "lognormal":
                rates = np.stack([p[name][1] for p, _ in parts]).mean(axis=(0, 1))
                for col, v in zip(("rate_lognormal", "rate_lb", "rate_ub", "rate_uatf"), rates):
                    cols[col] = [float(v)] * nT

    deviations = {}
    if "mc" in spec.methods:
        sim = np.asarray(cols["op_simulated"], dtype=float)
        for name, col in OP_COLUMN.items():
            if name in spec.methods and name not in errors:
                deviations[name] = _band_deviation(sim, np.asarray(cols[col], dtype=float))
    return PointResult(label, cfg, thr_db, cols, errors, deviations)


def write_point_csv(res: PointResult, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for j in range(len(res.thresholds_db)):
        w.writerow([fmt(res.columns[c][j]) for c in CSV_COLUMNS])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def run_experiment(spec: ExperimentSpec) -> list[PointResult]:
    """Evaluate every sweep point and write the CSVs and the text report.

    Files in ``spec.output_path``: ``point_<i>_<label>.csv`` per sweep
    point, ``summary.csv`` and ``report.txt``.
    """
    spec.validate()
    os.makedirs(spec.output_path, exist_ok=True)
    results = []
    for i, (cfg, label) in enumerate(zip(spec.point_configs(), spec.point_labels())):
        try:
            res = evaluate_point(spec, cfg, label)
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            thr = np.asarray(spec.point_thresholds(), dtype=float)
            res = PointResult(label, cfg, thr, {c: [None] * thr.size for c in CSV_COLUMNS},
                              {"point": f"{type(exc).__name__}: {exc}"}, {})
            res.columns["threshold_db"] = list(thr)
        write_point_csv(res, os.path.join(spec.output_path, f"point_{i:03d}_{label}.csv"))
        results.append(res)

    methods = [m for m in METHODS if m in spec.methods and m != "mc"]
    with open(os.path.join(spec.output_path, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "M", "N", "K", "rate_simulated", "rate_lognormal", "rate_lb", "rate_ub", "rate_uatf"]
                   + [f"maxdev_{m}" for m in methods] + ["errors"])
        for r in results:
            rates = [fmt(r.columns[c][0]) if r.columns[c] else "" for c in
                     ("rate_simulated", "rate_lognormal", "rate_lb", "rate_ub", "rate_uatf")]
            w.writerow([r.label, r.cfg.M, r.cfg.N, r.cfg.K] + rates
                       + [fmt(r.deviations.get(m)) for m in methods]
                       + ["; ".join(f"{k}: {v}" for k, v in sorted(r.errors.items()))])
    with open(os.path.join(spec.output_path, "report.txt"), "w") as fh:
        fh.write(format_report(spec, results))
    return results


def format_report(spec: ExperimentSpec, results: list[PointResult]) -> str:
    lines = [f"max |analytic - simulated| outage in the band {BAND[0]} <= OP <= {BAND[1]}",
             f"deployments={spec.mc_deployments} iterations={spec.mc_iters} seed={spec.master_seed}", ""]
    for r in results:
        lines.append(f"[{r.label}] M={r.cfg.M} N={r.cfg.N} K={r.cfg.K} pilots={r.cfg.pilot_mode.value}")
        if not r.deviations and "mc" not in spec.methods:
            lines.append("  no simulation requested; deviations not computed")
        for name, dev in sorted(r.deviations.items()):
            lines.append(f"  {name:<13} {'no points in band' if dev is None else f'{dev:.4f}'}")
        for name, msg in sorted(r.errors.items()):
            lines.append(f"  {name:<13} FAILED: {msg}")
    return "\n".join(lines) + "\n"
