"""Cross-method consistency battery.

Every check compares two independent routes to the same quantity and
records the tolerance next to the achieved error.  ``fast`` finishes in
well under two minutes; ``full`` adds the nested small-case integral,
sampling checks of the hypoexponential CDF and more Monte-Carlo draws.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .channel import build_pilot_book, estimation_stats
from .config import PilotMode, SystemConfig, Topology
from .deployment import generate_deployment
from .lognormal import LogNormalParams, rate_bounds, rate_lognormal, rate_lognormal_tform
from .moments import moments_general, moments_mmimo, moments_npc, subexpectations
from .oracles import mc_subexpectations, wick_subexpectations
from .sinr_sim import draw_deployment, sinr_samples
from .udr import (HypoExpParams, _cdf_matrix, hypoexp_cdf, mmimo_constants, outage_exact_smallcase,
                  outage_mmimo_closed_form, outage_udr, separate_scales)

LEVELS = ("fast", "full")


@dataclass
class Check:
    block: str
    name: str
    tolerance: float
    achieved: float
    kind: str = "abs"     # abs | rel | se | ks | order

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.achieved) and self.achieved <= self.tolerance)


@dataclass
class VerifyReport:
    level: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def table(self) -> str:
        w = max(len(f"{c.block}: {c.name}") for c in self.checks) if self.checks else 10
        lines = [f"{'check':<{w}}  {'kind':>5}  {'tolerance':>10}  {'achieved':>10}  result",
                 "-" * (w + 43)]
        for c in self.checks:
            lines.append(f"{c.block + ': ' + c.name:<{w}}  {c.kind:>5}  {c.tolerance:>10.3g}  "
                         f"{c.achieved:>10.3g}  {'pass' if c.passed else 'FAIL'}")
        verdict = "all checks passed" if self.passed else f"{len(self.failures)} check(s) FAILED"
        lines.append(f"\n{verdict} ({self.level}, {self.seconds:.1f} s)")
        return "\n".join(lines)


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(b), 1e-300)
    return float(np.max(np.abs(a - b) / scale))


def _setup(cfg: SystemConfig, seed: int):
    dep = generate_deployment(cfg, seed)
    pb = build_pilot_book(cfg, seed + 1)
    return dep, pb, estimation_stats(dep, pb, cfg)


def _small_configs(n: int, rng: np.random.Generator, contaminated: bool):
    out = []
    while len(out) < n:
        M, N, K = int(rng.integers(1, 5)), int(rng.integers(1, 3)), int(rng.integers(2, 5))
        if contaminated:
            cfg = SystemConfig(M=M, N=N, K=K, tau_p=max(1, K - 1), area_side_km=0.2,
                               pilot_mode=PilotMode.RANDOM_CONTAMINATED)
        else:
            cfg = SystemConfig(M=M, N=N, K=K, tau_p=K, area_side_km=0.2)
        out.append(cfg)
    return out


def _block_subexpectations(report, rng, perturb, n_cfg):
    worst = {}
    for cfg in _small_configs(n_cfg, rng, contaminated=True):
        dep, _, es = _setup(cfg, int(rng.integers(1 << 31)))
        for k in range(cfg.K):
            closed = subexpectations(es, dep, cfg.N, k, perturb)
            exact = wick_subexpectations(es, dep, cfg.N, k)
            for name, ref in exact.items():
                worst[name] = max(worst.get(name, 0.0), _rel(closed[name], ref))
    for name in sorted(worst):
        report.checks.append(Check("sub-expectations", f"closed form {name} vs Wick expansion", 1e-9,
                                   worst[name], "rel"))


def _block_moment_routes(report, rng, perturb):
    cfg = SystemConfig(M=6, N=2, K=5, tau_p=5)
    dep, _, es = _setup(cfg, int(rng.integers(1 << 31)))
    err = max(_rel(moments_general(es, dep, cfg, k, perturb).as_array(),
                   moments_npc(es, dep, cfg, k).as_array()) for k in range(cfg.K))
    report.checks.append(Check("moments", "general vs orthogonal-pilot formulas", 1e-10, err, "rel"))

    cfg = SystemConfig(M=5, N=3, K=4, tau_p=4, topology=Topology.COLLOCATED)
    dep, _, es = _setup(cfg, int(rng.integers(1 << 31)))
    err = max(_rel(moments_general(es, dep, cfg, k, perturb).as_array(),
                   moments_mmimo(es.gamma[0, k], dep.beta[0], es.gamma[0], cfg, k, dep.rho_u).as_array())
              for k in range(cfg.K))
    report.checks.append(Check("moments", "general vs collocated Pochhammer formulas", 1e-10, err, "rel"))


def _block_mc_subexpectations(report, rng, perturb, n_cfg, draws):
    worst = 0.0
    for cfg in _small_configs(n_cfg, rng, contaminated=True):
        dep, pb, es = _setup(cfg, int(rng.integers(1 << 31)))
        k = int(rng.integers(cfg.K))
        closed = subexpectations(es, dep, cfg.N, k, perturb)
        mc = mc_subexpectations(dep, es, pb, cfg.N, k, draws, int(rng.integers(1 << 31)))
        for name, (mean, se) in mc.items():
            z = np.abs(np.asarray(closed[name]) - mean) / np.maximum(se, 1e-300)
            worst = max(worst, float(np.max(z)))
    report.checks.append(Check("sub-expectations", f"closed forms vs sampling ({draws} draws)", 4.0, worst, "se"))


def _block_sinr_moments(report, rng, draws):
    cfg = SystemConfig(M=4, N=2, K=4, tau_p=3, area_side_km=0.3, pilot_mode=PilotMode.RANDOM_CONTAMINATED)
    seed = int(rng.integers(1 << 31))
    sample = draw_deployment(cfg, seed, 0)
    _, X, Y = sinr_samples(cfg, sample, draws, seed + 7)
    sq = math.sqrt(draws)
    worst = 0.0
    for k in range(cfg.K):
        ms = moments_general(sample.stats, sample.deployment, cfg, k)
        for ref, v in ((ms.ex, X[:, k]), (ms.ey, Y[:, k]), (ms.ex2, X[:, k] ** 2),
                       (ms.ey2, Y[:, k] ** 2), (ms.exy, X[:, k] * Y[:, k])):
            worst = max(worst, abs(v.mean() - ref) / (v.std(ddof=1) / sq))
    report.checks.append(Check("moments", f"X/Y moments vs simulated SINR terms ({draws} draws)", 4.0,
                               worst, "se"))


def _random_scales(rng, n_vec):
    out = []
    for j in range(n_vec):
        n = int(rng.integers(2, 12))
        s = np.exp(rng.uniform(-3, 3, n))
        if j == 0:
            s[1] = s[0] * (1 + 1e-11)      # near-degenerate pair
        out.append(s)
    return out


def _block_hypoexp(report, rng, full):
    worst = 0.0
    for s in _random_scales(rng, 10):
        d = np.linspace(0.01, 5 * s.sum(), 40)
        a = hypoexp_cdf(HypoExpParams(s), d)
        sep = separate_scales(s)
        b = _cdf_matrix(np.broadcast_to(sep, (d.size, sep.size)), d)
        worst = max(worst, float(np.max(np.abs(a - b))))
    report.checks.append(Check("hypoexponential", "alternating sum vs matrix exponential", 1e-9, worst))

    d = np.linspace(0.05, 15, 50)
    err = max(float(np.max(np.abs(hypoexp_cdf(HypoExpParams(np.full(n, 1.3)), d) - stats.gamma(n, scale=1.3).cdf(d))))
              for n in (2, 3, 5))
    report.checks.append(Check("hypoexponential", "equal scales vs Erlang CDF", 1e-6, err))

    if full:
        worst = 0.0
        for s in _random_scales(rng, 10):
            x = (rng.exponential(size=(1_000_000, s.size)) * s).sum(axis=1)
            res = stats.ks_1samp(x, lambda t: hypoexp_cdf(HypoExpParams(s), t))
            worst = max(worst, float(res.statistic))
        report.checks.append(Check("hypoexponential", "KS distance to 10^6 samples", 0.005, worst, "ks"))


def _block_rate(report, rng):
    worst = 0.0
    viol = 0.0
    for mu in (-4.0, -1.0, 0.0, 2.0, 6.0):
        for sigma in (0.05, 0.5, 1.0, 2.0):
            p = LogNormalParams(mu, sigma)
            r = rate_lognormal(p)
            worst = max(worst, abs(r - rate_lognormal_tform(p)))
            lo, hi = rate_bounds(p)
            viol = max(viol, lo - r, r - hi)
    report.checks.append(Check("rate", "x-integral vs t-integral", 1e-8, worst))
    report.checks.append(Check("rate", "lower bound <= rate <= upper bound (max violation)", 0.0, viol, "order"))


def _block_udr(report, rng, full):
    cfg = SystemConfig(M=12, N=2, K=6, tau_p=6)
    dep, _, es = _setup(cfg, int(rng.integers(1 << 31)))
    T = np.logspace(-2, 2, 25)
    err = max(float(np.max(np.abs(outage_udr(es, dep, cfg, T, k=k) - outage_udr(es, dep, cfg, T, k=k, backend="gauss"))))
              for k in (0, cfg.K - 1))
    report.checks.append(Check("outage", "reduced integrals: adaptive vs fixed quadrature", 1e-8, err))

    cfg = SystemConfig(M=2, N=2, K=4, tau_p=4, topology=Topology.COLLOCATED)
    dep, _, es = _setup(cfg, 3)
    ts = mmimo_constants(dep.beta[0], es.gamma[0], cfg, 1.0, rho_u=dep.rho_u).threshold_split
    T = ts * np.logspace(-1, 1, 30)
    err = float(np.max(np.abs(outage_udr(es, dep, cfg, T)
                              - outage_mmimo_closed_form(dep.beta[0], es.gamma[0], cfg, T, rho_u=dep.rho_u))))
    report.checks.append(Check("outage", "collocated closed form vs reduced integrals", 1e-6, err))

    if full:
        cfg = SystemConfig(M=2, N=1, K=3, tau_p=3, area_side_km=0.3)
        dep, _, es = _setup(cfg, 5)
        T = np.logspace(-2, 2, 20)
        ex = np.array([outage_exact_smallcase(es, dep, cfg, t) for t in T])
        err = float(np.max(np.abs(ex - outage_udr(es, dep, cfg, T))))
        report.checks.append(Check("outage", "small-case nested integral vs reduced integrals", 0.01, err))


def verify_suite(level: str = "fast", perturb: dict | None = None, seed: int = 20240601) -> VerifyReport:
    """Run the consistency battery.

    Parameters
    ----------
    level : {"fast", "full"}
    perturb : dict, optional
        Multiplicative corruption of named sub-expectations, forwarded to the
        closed forms; used to confirm the battery catches a wrong term.
    seed : int
        Seed for the random configurations and sampling checks.

    Returns
    -------
    VerifyReport
        ``report.passed`` is False if any check misses its tolerance.
    """
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    full = level == "full"
    rng = np.random.default_rng(seed)
    report = VerifyReport(level)
    t0 = time.perf_counter()
    _block_subexpectations(report, rng, perturb, 6 if full else 3)
    _block_moment_routes(report, rng, perturb)
    _block_mc_subexpectations(report, rng, perturb, 5 if full else 2, 1_000_000 if full else 200_000)
    _block_sinr_moments(report, rng, 1_000_000 if full else 200_000)
    _block_hypoexp(report, rng, full)
    _block_rate(report, rng)
    _block_udr(report, rng, full)
    report.seconds = time.perf_counter() - t0
    return report
