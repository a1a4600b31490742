"""Closed-form moments of the SINR numerator X and denominator Y.

With ``A = ||ghat_k||^2``, ``B^i = |ghat_k^H ghat_i|^2`` and
``C = sum_m w_m ||ghat_mk||^2`` (``w_m = sum_i (beta_mi - gamma_mi)``)::

    X = rho A^2,    Y = rho sum_{i != k} B^i + A + rho C

Three evaluators are provided: the general one (any pilots, complex
cross-statistics ``nu``), a separate implementation for orthogonal pilots
that never touches ``nu``, and the collocated single-site specialization in
terms of Pochhammer symbols.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import EstimationStats
from .config import PilotModeError, SystemConfig
from .deployment import Deployment, normalized_snrs


@dataclass(frozen=True)
class MomentSet:
    """E[X], E[X^2], E[Y], E[Y^2] and E[XY] for one user."""

    ex: float
    ex2: float
    ey: float
    ey2: float
    exy: float

    def __post_init__(self):
        vals = (self.ex, self.ex2, self.ey, self.ey2, self.exy)
        if not all(np.isfinite(v) and v > 0 for v in vals):
            raise ValueError(f"moments must be finite and positive: {self}")
        # allow for rounding when the variance is tiny relative to the mean
        if self.ex2 < self.ex**2 * (1 - 1e-12) or self.ey2 < self.ey**2 * (1 - 1e-12):
            raise ValueError(f"negative variance in moment set: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.ex, self.ex2, self.ey, self.ey2, self.exy])

    def scaled(self, c: float) -> "MomentSet":
        """Moments of (cX, Y), i.e. of the SINR scaled by ``c``."""
        return MomentSet(c * self.ex, c * c * self.ex2, self.ey, self.ey2, c * self.exy)


def pochhammer(a: float, n: int) -> float:
    """Rising factorial ``(a)_n = a (a+1) ... (a+n-1)``; ``(a)_0 = 1``."""
    if n < 0 or int(n) != n:
        raise ValueError("n must be a non-negative integer")
    out = 1.0
    for j in range(int(n)):
        out *= a + j
    return out


def _x_terms(g: np.ndarray, N: int) -> dict:
    s1, s2, s3, s4 = (float((g**p).sum()) for p in (1, 2, 3, 4))
    EA2 = N * s2 + N**2 * s1**2
    return {
        "E[A]": N * s1,
        "E[A2]": EA2,
        "E[A3]": 2 * N * s3 + 3 * N**2 * s2 * s1 + N**3 * s1**3,
        "E[A4]": EA2**2 + 6 * N * s4 + 8 * N**2 * s3 * s1 + 2 * N**2 * s2**2 + 4 * N**3 * s2 * s1**2,
    }


def _c_terms(g: np.ndarray, w: np.ndarray, N: int, EA: float, EA2: float) -> dict:
    s1 = float(g.sum())
    EC = N * float((w * g).sum())
    return {
        "E[C]": EC,
        "E[C2]": N * float((w**2 * g**2).sum()) + EC**2,
        "E[AC]": N * float((w * g**2).sum()) + EA * EC,
        "E[A2C]": 2 * N * float((w * g**3).sum()) + 2 * N**2 * float((w * g**2).sum()) * s1 + EA2 * EC,
    }


def subexpectations(es: EstimationStats, dep: Deployment, N: int, k: int, perturb=None) -> dict:
    """All sub-expectations of A, B^i, C for user ``k``, general pilots.

    Per-user entries (``E[B]``, ``E[BA]``, ``E[BC]``, ``E[A2B]``) are arrays
    over the users ``i != k`` in increasing index order.  ``perturb`` maps a
    term name to a multiplicative factor; it exists so the verification
    battery can check that a corrupted term is caught.
    """
    K = dep.K
    if not 0 <= k < K:
        raise IndexError(f"user index {k} outside 0..{K - 1}")
    gam, nu = es.gamma, es.nu
    g = gam[:, k]
    w = (dep.beta - gam).sum(axis=1)
    oth = np.array([i for i in range(K) if i != k], dtype=int)

    out = _x_terms(g, N)
    out.update(_c_terms(g, w, N, out["E[A]"], out["E[A2]"]))
    EA, EA2, EC = out["E[A]"], out["E[A2]"], out["E[C]"]

    G = gam[:, oth]                      # (M, K')
    V = nu[:, k, :][:, oth]              # nu_mk^i, (M, K')
    Vs = V.sum(axis=0)                   # sum_n nu_nk^i
    V2 = np.abs(V) ** 2
    Re = np.real
    gc = g[:, None]

    EB = N * (gc * G).sum(0) + N**2 * np.abs(Vs) ** 2
    out["E[B]"] = EB
    out["E[BA]"] = (N * (gc**2 * G).sum(0) + N * (gc * V2).sum(0)
                    + 2 * N**2 * Re((gc * V).sum(0) * Vs.conj()) + EA * EB)
    wg = (w * g)[:, None]
    out["E[BC]"] = (N * (wg * V2).sum(0) + N * (wg * gc * G).sum(0)
                    + 2 * N**2 * Re((wg * V).sum(0) * Vs.conj()) + EC * EB)
    s1 = g.sum()
    out["E[A2B]"] = (EA2 * EB + 4 * N * (V2 * gc**2).sum(0) + 2 * N * (gc**3 * G).sum(0)
                     + 2 * N**2 * s1 * (V2 * gc).sum(0) + 2 * N**2 * s1 * (gc**2 * G).sum(0)
                     + 2 * N**2 * np.abs((gc * V).sum(0)) ** 2
                     + 4 * N**2 * Re((gc**2 * V).sum(0) * Vs.conj())
                     + 4 * N**3 * Re((gc * V).sum(0) * s1 * Vs.conj()))

    # E[(sum_i B^i)^2]: ten pairwise terms summed over i, j != k
    Nij = nu[:, oth][:, :, oth]          # nu_mi^j, (M, K', K')
    g3 = g[:, None, None]
    Vi, Vj = V[:, :, None], V[:, None, :]
    Gi, Gj = G[:, :, None], G[:, None, :]
    pair = (
        N * (g3**2 * Gi * Gj).sum(0)
        + N * (g3**2 * np.abs(Nij) ** 2).sum(0)
        + 2 * N * (g3 * Gj * np.abs(Vi) ** 2).sum(0)
        + 2 * N * Re((g3 * Vi.conj() * Vj * Nij.conj()).sum(0))
        + 4 * N**2 * Re((g3 * Gi * Vj).sum(0) * Vs.conj()[None, :])
        + 4 * N**2 * Re((g3 * Vi * Nij).sum(0) * Vs.conj()[None, :])
        + 2 * N**3 * Re((Vi * Vj).sum(0) * Vs.conj()[:, None] * Vs.conj()[None, :])
        + 2 * N**3 * Re((g3 * Nij.conj()).sum(0) * Vs.conj()[:, None] * Vs[None, :])
        + N**2 * np.abs((Vi * Vj).sum(0)) ** 2
        + N**2 * np.abs((g3 * Nij).sum(0)) ** 2
    )
    out["E[(sumB)2]"] = float(pair.sum()) + float(EB.sum()) ** 2

    if perturb:
        for name, factor in perturb.items():
            if name not in out:
                raise KeyError(f"unknown sub-expectation {name!r}")
            out[name] = out[name] * factor
    return out


def aggregate(sub: dict, rho: float) -> MomentSet:
    """Combine sub-expectations into the moments of X and Y."""
    EBs = float(np.sum(sub["E[B]"]))
    ey = rho * EBs + sub["E[A]"] + rho * sub["E[C]"]
    ey2 = (rho**2 * sub["E[(sumB)2]"] + sub["E[A2]"] + rho**2 * sub["E[C2]"]
           + 2 * rho * float(np.sum(sub["E[BA]"])) + 2 * rho * sub["E[AC]"]
           + 2 * rho**2 * float(np.sum(sub["E[BC]"])))
    exy = rho**2 * float(np.sum(sub["E[A2B]"])) + rho * sub["E[A3]"] + rho**2 * sub["E[A2C]"]
    return MomentSet(ex=rho * sub["E[A2]"], ex2=rho**2 * sub["E[A4]"], ey=ey, ey2=ey2, exy=exy)


def moments_general(es: EstimationStats, dep: Deployment, cfg: SystemConfig, k: int, perturb=None) -> MomentSet:
    """Moments of X and Y for user ``k`` under arbitrary (possibly
    contaminated) pilots.

    Parameters
    ----------
    es : EstimationStats
        MMSE statistics, including the complex cross terms ``nu``.
    dep : Deployment
        Supplies ``beta`` and the normalized uplink SNR ``rho_u``.
    cfg : SystemConfig
        Only ``N`` is used.
    k : int
        User index.
    perturb : dict, optional
        Multiplicative corruption of named sub-expectations (testing aid).

    Returns
    -------
    MomentSet
    """
    return aggregate(subexpectations(es, dep, cfg.N, k, perturb), dep.rho_u)


def moments_npc(es: EstimationStats, dep: Deployment, cfg: SystemConfig, k: int) -> MomentSet:
    """Moments for orthogonal pilots, written directly in ``gamma``.

    Independent of :func:`moments_general`: no cross-statistics are formed.
    """
    if not cfg.orthogonal:
        raise PilotModeError("moments_npc requires orthogonal pilots")
    N, rho = cfg.N, dep.rho_u
    gam = es.gamma
    g = gam[:, k]
    w = (dep.beta - gam).sum(axis=1)
    G = np.delete(gam, k, axis=1)

    xt = _x_terms(g, N)
    s1 = g.sum()
    gG = g @ G                          # sum_m gamma_mk gamma_mi, per i
    g2G = (g**2) @ G                    # sum_m gamma_mk^2 gamma_mi
    wg = float(w @ g)

    ey = N * rho * gG.sum() + N * s1 + N * rho * wg
    sumB2 = (N * ((g**2) @ G**2).sum() + (N * gG) @ (N * gG)
             + N * ((g**2) @ G.sum(axis=1) ** 2) + (N * gG.sum()) ** 2)
    ey2 = (rho**2 * sumB2
           + xt["E[A2]"]
           + rho**2 * (N * float((w**2) @ (g**2)) + N**2 * wg**2)
           + 2 * rho * (N * g2G.sum() + N**2 * s1 * gG.sum())
           + 2 * rho * (N * float(w @ g**2) + N**2 * s1 * wg)
           + 2 * rho**2 * (N * float((w * g**2) @ G.sum(axis=1)) + N**2 * wg * gG.sum()))
    # E[XY]: E[A^2 B^i] with nu_mk^i = 0 and E[B^i] = N sum gamma_mk gamma_mi
    a2b = (xt["E[A2]"] * N * gG + 2 * N * ((g**3) @ G) + 2 * N**2 * s1 * g2G)
    a2c = 2 * N * float(w @ g**3) + 2 * N**2 * float(w @ g**2) * s1 + xt["E[A2]"] * N * wg
    exy = rho**2 * a2b.sum() + rho * xt["E[A3]"] + rho**2 * a2c
    return MomentSet(ex=rho * xt["E[A2]"], ex2=rho**2 * xt["E[A4]"], ey=float(ey), ey2=float(ey2), exy=float(exy))


def moments_mmimo(gamma_k: float, beta_all, gamma_all, cfg: SystemConfig, k: int, rho_u: float | None = None) -> MomentSet:
    """Moments for a collocated array of ``MN`` antennas.

    ``beta_all`` and ``gamma_all`` hold the per-user scalars; ``rho_u``
    defaults to the SNR implied by ``cfg``.
    """
    beta_all = np.asarray(beta_all, dtype=float)
    gamma_all = np.asarray(gamma_all, dtype=float)
    rho = normalized_snrs(cfg)[1] if rho_u is None else rho_u
    L = cfg.M * cfg.N
    gi = np.delete(gamma_all, k)
    s_oth, s2_oth = gi.sum(), (gi**2).sum()
    w = float((beta_all - gamma_all).sum())
    bracket = rho * s_oth + 1 + rho * w
    ey2_inner = (rho**2 * (s2_oth + s_oth**2) + 1 + rho**2 * w**2
                 + 2 * rho * s_oth + 2 * rho * w + 2 * rho**2 * w * s_oth)
    return MomentSet(
        ex=rho * pochhammer(L, 2) * gamma_k**2,
        ex2=rho**2 * pochhammer(L, 4) * gamma_k**4,
        ey=L * gamma_k * bracket,
        ey2=pochhammer(L, 2) * gamma_k**2 * ey2_inner,
        exy=rho * pochhammer(L, 3) * gamma_k**3 * bracket,
    )
