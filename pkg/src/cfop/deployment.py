"""Network geometry, three-slope path loss and large-scale fading."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig, Topology

BOLTZMANN = 1.380649e-23
T0_KELVIN = 290.0


@dataclass(frozen=True)
class Deployment:
    """AP/UE positions (km) with the M x K large-scale coefficients."""

    ap_xy: np.ndarray
    ue_xy: np.ndarray
    beta: np.ndarray
    rho_p: float
    rho_u: float

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 2:
            raise ValueError("beta must be an M x K matrix")
        if not np.all(np.isfinite(beta)) or np.any(beta <= 0):
            raise ValueError("beta entries must be finite and strictly positive")
        object.__setattr__(self, "beta", beta)

    @property
    def M(self) -> int:
        return self.beta.shape[0]

    @property
    def K(self) -> int:
        return self.beta.shape[1]


def hata_constant_db(cfg: SystemConfig) -> float:
    """COST-231 Hata constant ``L`` in dB.

    ``L = 46.3 + 33.9 log10(f) - 13.82 log10(h_AP) - (1.1 log10(f) - 0.7) h_UE
    + (1.56 log10(f) - 0.8)`` with ``f`` in MHz and heights in metres.
    """
    f_mhz = cfg.carrier_freq_hz / 1e6
    lf = math.log10(f_mhz)
    return (
        46.3
        + 33.9 * lf
        - 13.82 * math.log10(cfg.ap_height_m)
        - (1.1 * lf - 0.7) * cfg.ue_height_m
        + (1.56 * lf - 0.8)
    )


def path_loss_db(d_km, cfg: SystemConfig):
    """Three-slope path loss (a gain in dB, negative at range).

    Slopes are 0, 20 and 35 dB/decade with breakpoints ``d0`` and ``d1``::

        -L - 35 log10(d)                       d > d1
        -L - 15 log10(d1) - 20 log10(d)        d0 < d <= d1
        -L - 15 log10(d1) - 20 log10(d0)       d <= d0

    Accepts scalars or arrays of distances in km.
    """
    d = np.asarray(d_km, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    L = hata_constant_db(cfg)
    d0, d1 = cfg.breakpoint_d0_km, cfg.breakpoint_d1_km
    dc = np.maximum(d, d0)
    far = -L - 35.0 * np.log10(np.maximum(dc, d1))
    mid = -L - 15.0 * math.log10(d1) - 20.0 * np.log10(np.minimum(dc, d1))
    out = np.where(dc > d1, far, mid)
    return float(out) if out.ndim == 0 else out


def noise_power_w(cfg: SystemConfig) -> float:
    return BOLTZMANN * T0_KELVIN * cfg.bandwidth_hz * 10.0 ** (cfg.noise_figure_db / 10.0)


def normalized_snrs(cfg: SystemConfig) -> tuple[float, float]:
    noise = noise_power_w(cfg)
    return cfg.tx_power_pilot_w / noise, cfg.tx_power_uplink_w / noise


def deployment_from_positions(cfg: SystemConfig, ap_xy, ue_xy, shadow_z=None) -> Deployment:
    """Build a :class:`Deployment` from explicit coordinates.

    ``shadow_z`` is an optional M x K array of standard-normal shadowing
    draws; ``None`` disables shadowing.
    """
    ap_xy = np.atleast_2d(np.asarray(ap_xy, dtype=float))
    ue_xy = np.atleast_2d(np.asarray(ue_xy, dtype=float))
    dist = np.linalg.norm(ap_xy[:, None, :] - ue_xy[None, :, :], axis=-1)
    pl_db = path_loss_db(dist, cfg)
    if shadow_z is not None:
        pl_db = pl_db + cfg.shadow_std_db * np.asarray(shadow_z, dtype=float)
    rho_p, rho_u = normalized_snrs(cfg)
    return Deployment(ap_xy=ap_xy, ue_xy=ue_xy, beta=10.0 ** (pl_db / 10.0), rho_p=rho_p, rho_u=rho_u)


def generate_deployment(cfg: SystemConfig, seed: int) -> Deployment:
    """Drop APs and UEs uniformly on the D x D square and compute beta.

    In the collocated topology every AP sits at the square's centre and the
    shadowing draw is shared by all APs of a user, so ``beta[m, k]`` does not
    depend on ``m``.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    side = cfg.area_side_km
    ue_xy = rng.uniform(0.0, side, size=(cfg.K, 2))
    if cfg.topology is Topology.COLLOCATED:
        ap_xy = np.full((cfg.M, 2), side / 2.0)
        z = np.broadcast_to(rng.standard_normal(cfg.K), (cfg.M, cfg.K))
    else:
        ap_xy = rng.uniform(0.0, side, size=(cfg.M, 2))
        z = rng.standard_normal((cfg.M, cfg.K))
    if cfg.shadow_std_db == 0:
        z = None
    return deployment_from_positions(cfg, ap_xy, ue_xy, z)


def write_deployment_csv(dep: Deployment, prefix) -> list[str]:
    """Dump ``<prefix>_aps.csv`` (ap_x,ap_y), ``<prefix>_ues.csv`` (ue_x,ue_y)
    and ``<prefix>_beta.csv`` (m,k,beta); returns the paths written."""
    prefix = str(prefix)
    paths = []
    for suffix, header, rows in (
        ("aps", ["ap_x", "ap_y"], ([x, y] for x, y in dep.ap_xy)),
        ("ues", ["ue_x", "ue_y"], ([x, y] for x, y in dep.ue_xy)),
        ("beta", ["m", "k", "beta"], ([m, k, dep.beta[m, k]] for m in range(dep.M) for k in range(dep.K))),
    ):
        path = f"{prefix}_{suffix}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, int) else repr(float(v)) for v in row])
        paths.append(path)
    return paths
