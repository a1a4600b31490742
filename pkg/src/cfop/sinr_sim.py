"""Monte-Carlo SINR engine: empirical outage curves and ergodic rates."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import (ChannelRealization, EstimationStats, PilotBook, _pilot_pipeline,
                      build_pilot_book, estimation_stats)
from .config import SystemConfig
from .deployment import Deployment, generate_deployment

# complex entries per channel batch; fixed so results never depend on workers
_BATCH_ELEMENTS = 1_500_000


@dataclass(frozen=True)
class SinrSampleSet:
    user_index: int
    samples: np.ndarray
    deployment_id: int
    seed: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if not (np.all(np.isfinite(s)) and np.all(s > 0)):
            raise ValueError("SINR samples must be finite and positive")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class EmpiricalCurve:
    """Outage probabilities on a threshold grid plus the mean rate.

    ``counts[j]`` is the number of samples below ``thresholds_db[j]`` out
    of ``n_samples``.
    """

    thresholds_db: np.ndarray
    op: np.ndarray
    rate_bits: float
    counts: np.ndarray
    n_samples: int


@dataclass(frozen=True)
class DeploymentSample:
    """Everything drawn for one deployment (kept for analytic comparison)."""

    deployment_id: int
    deployment: Deployment
    pilots: PilotBook
    stats: EstimationStats


@dataclass(frozen=True)
class MonteCarloResult:
    """Per-deployment, per-user results.

    ``op`` has shape ``(D, K, nT)``, ``rate`` ``(D, K)``; ``counts`` holds
    the matching below-threshold counts.  ``mean_x``/``mean_y`` and their
    standard errors expose the SINR numerator and denominator averages.
    """

    thresholds_db: np.ndarray
    op: np.ndarray
    rate: np.ndarray
    counts: np.ndarray
    n_iters: int
    mean_x: np.ndarray
    se_x: np.ndarray
    mean_y: np.ndarray
    se_y: np.ndarray
    samples: tuple  # DeploymentSample per deployment

    def user_curve(self, k: int) -> EmpiricalCurve:
        """Curve of user index ``k`` averaged over deployments."""
        return EmpiricalCurve(self.thresholds_db, self.op[:, k].mean(axis=0), float(self.rate[:, k].mean()),
                              self.counts[:, k].sum(axis=0), self.n_iters * self.op.shape[0])

    def system_curve(self) -> EmpiricalCurve:
        """Average over users and deployments."""
        D, K, _ = self.op.shape
        return EmpiricalCurve(self.thresholds_db, self.op.mean(axis=(0, 1)), float(self.rate.mean()),
                              self.counts.sum(axis=(0, 1)), self.n_iters * D * K)


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def deployment_seeds(master_seed: int, deployment_id: int):
    """Independent (geometry, pilots, channels) seed sequences for one deployment."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(deployment_id,))
    return ss.spawn(3)


def draw_deployment(cfg: SystemConfig, master_seed: int, deployment_id: int) -> DeploymentSample:
    geo, pil, _ = deployment_seeds(master_seed, deployment_id)
    dep = generate_deployment(cfg, geo)
    pb = build_pilot_book(cfg, pil)
    return DeploymentSample(deployment_id, dep, pb, estimation_stats(dep, pb, cfg))


def sinr_sample(real: ChannelRealization, es: EstimationStats, dep: Deployment, k: int) -> float:
    """SINR of user ``k`` for one channel realization.

    ``rho ||g_k||^4 / (rho sum_{i != k} |g_k^H g_i|^2 + g_k^H (rho sum_i Lambda_i + I) g_k)``
    with the MN-stacked estimates ``g``.
    """
    g_hat = real.g_hat
    M, K, N = g_hat.shape
    if not 0 <= k < K:
        raise IndexError(f"user index {k} outside 0..{K - 1}")
    rho = dep.rho_u
    w = real.lambda_err.sum(axis=1)
    gk = g_hat[:, k, :]
    norms = (np.abs(gk) ** 2).sum(axis=1)
    A = norms.sum()
    inner = np.einsum("mn,min->i", gk.conj(), g_hat)
    interf = float((np.abs(np.delete(inner, k)) ** 2).sum())
    den = rho * interf + float(norms @ (rho * w + 1.0))
    if den == 0:
        raise ZeroDivisionError("SINR denominator is exactly zero")
    return rho * A * A / den


def sinr_batch(g_hat: np.ndarray, w: np.ndarray, rho: float, return_xy: bool = False):
    """SINR of every user for a batch of estimates ``(n, M, K, N)``.

    ``w[m] = sum_i (beta_mi - gamma_mi)``.  Returns ``(n, K)`` (and X, Y).
    """
    n, M, K, N = g_hat.shape
    norms = (np.abs(g_hat) ** 2).sum(axis=3)                  # (n, M, K)
    A = norms.sum(axis=1)                                      # (n, K)
    H = np.swapaxes(g_hat, 2, 3).reshape(n, M * N, K)
    gram = np.abs(np.swapaxes(H.conj(), 1, 2) @ H) ** 2        # (n, K, K)
    interf = gram.sum(axis=2) - A**2
    X = rho * A**2
    Y = rho * interf + np.einsum("nmk,m->nk", norms, rho * w + 1.0)
    if np.any(Y <= 0):
        raise ZeroDivisionError("SINR denominator is exactly zero")
    lam = X / Y
    return (lam, X, Y) if return_xy else lam


def _batch_size(cfg: SystemConfig) -> int:
    per_draw = cfg.M * cfg.K * max(cfg.N, cfg.tau_p)
    return max(1, _BATCH_ELEMENTS // per_draw)


def sinr_samples(cfg: SystemConfig, sample: DeploymentSample, n_iters: int, channel_seed) -> tuple:
    """All users' SINR draws ``(n_iters, K)`` plus X and Y."""
    dep, es, pb = sample.deployment, sample.stats, sample.pilots
    rng = np.random.default_rng(channel_seed)
    w = (dep.beta - es.gamma).sum(axis=1)
    batch = _batch_size(cfg)
    lam, X, Y = [], [], []
    done = 0
    while done < n_iters:
        n = min(batch, n_iters - done)
        _, g_hat = _pilot_pipeline(dep.beta, es.c, pb.phi, dep.rho_p, cfg.N, rng, n)
        l_, x_, y_ = sinr_batch(g_hat, w, dep.rho_u, return_xy=True)
        lam.append(l_)
        X.append(x_)
        Y.append(y_)
        done += n
    return np.concatenate(lam), np.concatenate(X), np.concatenate(Y)


def user_sample_sets(cfg: SystemConfig, master_seed: int, deployment_id: int, n_iters: int) -> list[SinrSampleSet]:
    sample = draw_deployment(cfg, master_seed, deployment_id)
    lam, _, _ = sinr_samples(cfg, sample, n_iters, deployment_seeds(master_seed, deployment_id)[2])
    return [SinrSampleSet(k, lam[:, k], deployment_id, master_seed) for k in range(cfg.K)]


def _one_deployment(args):
    cfg, master_seed, d, n_iters, thr_lin = args
    sample = draw_deployment(cfg, master_seed, d)
    lam, X, Y = sinr_samples(cfg, sample, n_iters, deployment_seeds(master_seed, d)[2])
    counts = (lam[:, :, None] < thr_lin[None, None, :]).sum(axis=0)   # (K, nT)
    rate = np.log2(1.0 + lam).mean(axis=0)
    sq = math.sqrt(n_iters)
    se = (lambda v: v.std(axis=0, ddof=1) / sq) if n_iters > 1 else (lambda v: np.full(v.shape[1], np.nan))
    return sample, counts, rate, X.mean(axis=0), se(X), Y.mean(axis=0), se(Y)


def run_monte_carlo(cfg: SystemConfig, n_deployments: int, n_iters: int, thresholds_db, master_seed: int,
                    threads: int = 1) -> MonteCarloResult:
    """Simulate ``n_deployments`` drops with ``n_iters`` channel draws each.

    Parameters
    ----------
    cfg : SystemConfig
    n_deployments, n_iters : int
        Number of random drops and of channel realizations per drop.
    thresholds_db : array_like
        SINR thresholds in dB; ``-inf``/``+inf`` are allowed.
    master_seed : int
        Seeds every drop through ``SeedSequence(master_seed, spawn_key=(d,))``.
    threads : int
        Worker processes.  Results are identical for any value.

    Returns
    -------
    MonteCarloResult
    """
    if int(n_deployments) != n_deployments or n_deployments < 1:
        raise ValueError("n_deployments must be a positive integer")
    if int(n_iters) != n_iters or n_iters < 1:
        raise ValueError("n_iters must be a positive integer")
    if threads < 1:
        raise ValueError("threads must be >= 1")
    cfg.validate()
    thr_db = np.asarray(thresholds_db, dtype=float)
    if np.any(np.diff(thr_db) < 0):
        raise ValueError("thresholds must be sorted")
    thr_lin = db_to_linear(thr_db)
    jobs = [(cfg, master_seed, d, n_iters, thr_lin) for d in range(n_deployments)]
    if threads == 1:
        parts = [_one_deployment(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(_one_deployment, jobs))   # map keeps deployment order
    samples, counts, rate, mx, sx, my, sy = zip(*parts)
    counts = np.stack(counts)
    return MonteCarloResult(
        thresholds_db=thr_db,
        op=counts / n_iters,
        rate=np.stack(rate),
        counts=counts,
        n_iters=n_iters,
        mean_x=np.stack(mx),
        se_x=np.stack(sx),
        mean_y=np.stack(my),
        se_y=np.stack(sy),
        samples=tuple(samples),
    )
