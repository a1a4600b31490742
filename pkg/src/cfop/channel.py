"""Pilot books, MMSE channel estimation and the derived estimate statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError, PilotMode, SystemConfig
from .deployment import Deployment


@dataclass(frozen=True)
class PilotBook:
    """Unit-norm pilots ``phi`` (K x tau_p) and their Gram matrix.

    ``gram[k, i] = phi_k^H phi_i``.
    """

    phi: np.ndarray
    gram: np.ndarray

    @property
    def tau_p(self) -> int:
        return self.phi.shape[1]


@dataclass(frozen=True)
class EstimationStats:
    """MMSE scalings ``c``, estimate variances ``gamma`` and cross terms ``nu``.

    ``nu[m, a, b] = E[ghat_ma ghat_mb^H]`` per antenna, i.e. the
    cross-statistic of users ``a`` and ``b`` at AP ``m``; ``nu[m, k, k]``
    equals ``gamma[m, k]`` and ``nu[m, a, b] == conj(nu[m, b, a])``.
    """

    c: np.ndarray
    gamma: np.ndarray
    nu: np.ndarray


@dataclass(frozen=True)
class ChannelRealization:
    """True channels, MMSE estimates and error variances.

    ``g`` and ``g_hat`` have shape ``(..., M, K, N)``; a leading batch axis
    is present when several realizations were drawn at once.
    """

    g: np.ndarray
    g_hat: np.ndarray
    lambda_err: np.ndarray

    @property
    def error(self) -> np.ndarray:
        return self.g - self.g_hat


def complex_normal(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """CN(0, variance) samples; ``variance`` broadcasts against ``shape``."""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def build_pilot_book(cfg: SystemConfig, seed: int) -> PilotBook:
    """Orthogonal pilots (identity rows) or i.i.d. uniform unit-norm pilots."""
    K, tau_p = cfg.K, cfg.tau_p
    if cfg.pilot_mode is PilotMode.ORTHOGONAL:
        if tau_p < K:
            raise ConfigError(f"orthogonal pilots need tau_p >= K (tau_p={tau_p}, K={K})")
        phi = np.eye(K, tau_p, dtype=complex)
        return PilotBook(phi=phi, gram=np.eye(K, dtype=complex))
    rng = np.random.default_rng(seed)
    raw = complex_normal(rng, (K, tau_p))
    phi = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    return PilotBook(phi=phi, gram=phi.conj() @ phi.T)


def estimation_stats(dep: Deployment, pb: PilotBook, cfg: SystemConfig | None = None) -> EstimationStats:
    """c_mk, gamma_mk and nu_mk^i for every AP/user pair."""
    beta = dep.beta
    M, K = beta.shape
    if pb.gram.shape != (K, K):
        raise ValueError("pilot book and deployment disagree on K")
    tau_rho = pb.tau_p * dep.rho_p
    overlap = np.abs(pb.gram) ** 2  # |phi_k^H phi_i|^2
    c = np.sqrt(tau_rho) * beta / (tau_rho * beta @ overlap.T + 1.0)
    gamma = np.sqrt(tau_rho) * beta * c
    # phi_a^H C_m phi_b = tau_rho sum_j beta_mj gram[a, j] gram[j, b] + gram[a, b]
    quad = tau_rho * np.einsum("mj,aj,jb->mab", beta, pb.gram, pb.gram) + pb.gram[None]
    # nu[m, k, i] = c_mk c_mi phi_i^H C_m phi_k
    nu = c[:, :, None] * c[:, None, :] * np.swapaxes(quad, 1, 2)
    return EstimationStats(c=c, gamma=gamma, nu=nu)


def _pilot_pipeline(beta, c, phi, rho_p, N, rng, n, noise=True):
    M, K = beta.shape
    tau_p = phi.shape[1]
    g = complex_normal(rng, (n, M, K, N), beta[None, :, :, None])
    # Y[b, m, n, t] = sqrt(tau rho) sum_k g[b, m, k, n] conj(phi[k, t]) + W
    y = np.sqrt(tau_p * rho_p) * (np.swapaxes(g, 2, 3) @ phi.conj())
    if noise:
        y += complex_normal(rng, (n, M, N, tau_p))
    # projection on phi_k, then MMSE scaling
    y_check = np.swapaxes(y @ phi.T, 2, 3)
    return g, c[None, :, :, None] * y_check


def draw_channels(dep: Deployment, es: EstimationStats, pb: PilotBook, cfg: SystemConfig,
                  seed, n: int | None = None, noise: bool = True) -> ChannelRealization:
    """Draw true channels and their MMSE estimates via the pilot pipeline.

    ``seed`` may be an integer or a ``numpy.random.Generator``.  With
    ``n=None`` a single realization of shape ``(M, K, N)`` is returned,
    otherwise ``n`` stacked realizations.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    g, g_hat = _pilot_pipeline(dep.beta, es.c, pb.phi, dep.rho_p, cfg.N, rng, 1 if n is None else n, noise)
    if n is None:
        g, g_hat = g[0], g_hat[0]
    return ChannelRealization(g=g, g_hat=g_hat, lambda_err=dep.beta - es.gamma)
