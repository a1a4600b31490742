"""Outage probability without pilot contamination.

Given the tagged user's estimate, the interference ``W = sum_i |b^H ghat_i|^2``
is a sum of independent exponentials, so the conditional outage is a
hypoexponential tail.  Averaging over the estimate gives an MN-fold integral
(:func:`outage_exact_smallcase`), which the univariate dimension reduction
replaces by M one-dimensional integrals (:func:`outage_udr`).  For a
collocated array the integrals are elementary
(:func:`outage_mmimo_closed_form`).

Users other than the tagged one are ordered by increasing index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg
from scipy.special import gammaln

from .channel import EstimationStats
from .config import PilotModeError, SystemConfig
from .deployment import Deployment, normalized_snrs
from .quadrature import QuadratureError, gk15_intervals

DEGENERATE_REL_GAP = 1e-9
JITTER_REL = 1e-7
X_MAX = 40.0
# absolute error budget of the alternating sum before the matrix route takes over
_CANCEL_TOL = 1e-11


@dataclass(frozen=True)
class HypoExpParams:
    """Scales (means) ``alpha_i`` of the exponential summands."""

    scales: np.ndarray

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.scales, dtype=float))
        if s.ndim != 1 or s.size == 0 or not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("hypoexponential scales must be a non-empty vector of positive reals")
        object.__setattr__(self, "scales", s)


def separate_scales(scales: np.ndarray) -> np.ndarray:
    """Sort each row descending and pull apart near-equal scales.

    A scale closer than ``1e-9 * max`` to its (already processed) larger
    neighbour is reset to ``neighbour * (1 - 1e-7)``.  Works on the last axis.
    """
    s = -np.sort(-np.asarray(scales, dtype=float), axis=-1)
    top = s[..., :1]
    for j in range(1, s.shape[-1]):
        close = s[..., j - 1] - s[..., j] < DEGENERATE_REL_GAP * top[..., 0]
        s[..., j] = np.where(close, s[..., j - 1] * (1.0 - JITTER_REL), s[..., j])
    return s


def hypoexp_coefficients(scales: np.ndarray):
    """Log-magnitude and sign of ``alpha_i^(n-1) / prod_{j != i}(alpha_i - alpha_j)``.

    ``scales`` must already be separated (descending, distinct).
    """
    s = np.asarray(scales, dtype=float)
    n = s.shape[-1]
    # the coefficients are scale-free; normalizing keeps the products in range
    u = s / s[..., :1]
    logmag = (n - 1) * np.log(u)
    part = np.ones_like(u)
    for j in range(n):
        d = np.abs(u - u[..., j:j + 1])
        d[..., j] = 1.0
        part *= d
        if j % 8 == 7:
            logmag -= np.log(part)
            part.fill(1.0)
    logmag -= np.log(part)
    # descending order: alpha_i - alpha_j < 0 exactly for j < i
    sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return logmag, np.broadcast_to(sign, logmag.shape)


def _cdf_matrix(scales: np.ndarray, d: np.ndarray) -> np.ndarray:
    # phase-type form: P(W <= d) = 1 - e_1^T expm(Q d) 1, Q bidiagonal
    n = scales.shape[-1]
    rates = 1.0 / scales
    Q = np.zeros(scales.shape[:-1] + (n, n))
    idx = np.arange(n)
    Q[..., idx, idx] = -rates
    Q[..., idx[:-1], idx[:-1] + 1] = rates[..., :-1]
    E = linalg.expm(Q * d[..., None, None])
    return 1.0 - E[..., 0, :].sum(axis=-1)


_CHUNK_ROWS = 8192


def _cdf_rows(scales: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Hypoexponential CDF for rows of scales ``(P, n)`` at points ``d`` ``(P,)``."""
    scales = np.asarray(scales, dtype=float)
    d = np.asarray(d, dtype=float)
    if d.size > _CHUNK_ROWS:
        # cache-sized blocks; the coefficient loop is memory bound
        return np.concatenate([_cdf_block(scales[i:i + _CHUNK_ROWS], d[i:i + _CHUNK_ROWS])
                               for i in range(0, d.size, _CHUNK_ROWS)])
    return _cdf_block(scales, d)


def _cdf_block(scales: np.ndarray, d: np.ndarray) -> np.ndarray:
    out = np.zeros(d.shape)
    pos = d > 0
    if not np.any(pos):
        return out
    s = separate_scales(scales[pos])
    dp = d[pos]
    if s.shape[-1] == 1:
        out[pos] = -np.expm1(-dp / s[:, 0])
        return out
    logmag, sign = hypoexp_coefficients(s)
    terms = sign * np.exp(logmag) * -np.expm1(-dp[:, None] / s)
    val = terms.sum(axis=-1)
    bad = np.abs(terms).sum(axis=-1) * 8 * np.finfo(float).eps > _CANCEL_TOL
    bad |= ~np.isfinite(val)
    if np.any(bad):
        val[bad] = _cdf_matrix(s[bad], dp[bad])
    out[pos] = np.clip(val, 0.0, 1.0)
    return out


def _cdf_scalar(scales, d: float) -> float:
    # pure-Python path for one evaluation with a handful of scales
    if d <= 0:
        return 0.0
    s = sorted(scales, reverse=True)
    for j in range(1, len(s)):
        if s[j - 1] - s[j] < DEGENERATE_REL_GAP * s[0]:
            s[j] = s[j - 1] * (1.0 - JITTER_REL)
    n = len(s)
    total = spread = 0.0
    for i, a in enumerate(s):
        logmag = (n - 1) * math.log(a) - sum(math.log(abs(a - b)) for j, b in enumerate(s) if j != i)
        term = math.exp(logmag) * -math.expm1(-d / a)
        total += term if i % 2 == 0 else -term
        spread += term
    if spread * 8 * np.finfo(float).eps > _CANCEL_TOL or not math.isfinite(total):
        return float(_cdf_matrix(np.array([s]), np.array([d]))[0])
    return min(max(total, 0.0), 1.0)


def hypoexp_cdf(p: HypoExpParams, d):
    """CDF of a sum of independent exponentials with means ``p.scales``.

    ``d`` may be a scalar or an array; the result is 0 for ``d <= 0``.
    """
    d = np.asarray(d, dtype=float)
    flat = d.reshape(-1)
    rows = np.broadcast_to(p.scales, (flat.size, p.scales.size))
    out = _cdf_rows(rows, flat).reshape(d.shape)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Univariate dimension reduction


@dataclass(frozen=True)
class UdrConstants:
    """Per-AP constants of the reduced integrals for one threshold.

    ``c1``/``c2`` have shape ``(K-1, M)``, ``c3``/``c4`` ``(K-1, K-1, M)``,
    ``c5``..``c10`` ``(M,)``, ``ci`` ``(K-1,)``.  With ``x`` the free
    coordinate of AP ``m`` the exponential scales are ``x c1 + c2`` and the
    step argument is ``c5 x^2 + c9 x + c10``.
    """

    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    c4: np.ndarray
    c5: np.ndarray
    c6: np.ndarray
    c7: np.ndarray
    c8: np.ndarray
    c9: np.ndarray
    c10: np.ndarray
    ci: np.ndarray
    ckt: float


def _check_orthogonal(cfg: SystemConfig, K: int):
    if not cfg.orthogonal:
        raise PilotModeError("this outage route requires orthogonal pilots")
    if K < 2:
        raise ValueError("at least two users are needed (K >= 2)")


def _tagged(es: EstimationStats, dep: Deployment, k):
    K = dep.K
    k = K - 1 if k is None else k
    if not 0 <= k < K:
        raise IndexError(f"user index {k} outside 0..{K - 1}")
    gK = es.gamma[:, k]
    G = np.delete(es.gamma, k, axis=1)
    load = dep.rho_u * (dep.beta - es.gamma).sum(axis=1) + 1.0  # rho w_m + 1
    return gK, G, load


def udr_constants(es: EstimationStats, dep: Deployment, cfg: SystemConfig, T: float, k=None) -> UdrConstants:
    """Constants of the reduced integrals for user ``k`` (default: last)."""
    _check_orthogonal(cfg, dep.K)
    if not T > 0:
        raise ValueError("threshold must be positive")
    N, rho = cfg.N, dep.rho_u
    gK, G, load = _tagged(es, dep, k)
    c1 = (gK[:, None] * G).T
    tot = c1.sum(axis=1, keepdims=True)
    c2 = N * (tot - c1) + (N - 1) * c1
    c5 = gK**2 / T
    c6 = (N - 1) * gK + N * (gK.sum() - gK)
    c7 = load * gK
    c8 = N * (c7.sum() - c7) + (N - 1) * c7
    return UdrConstants(
        c1=c1,
        c2=c2,
        c3=c1[:, None, :] - c1[None, :, :],
        c4=c2[:, None, :] - c2[None, :, :],
        c5=c5,
        c6=c6,
        c7=c7,
        c8=c8,
        c9=2.0 * c6 * gK / T - c7 / rho,
        c10=c6**2 / T - c8 / rho,
        ci=N * tot[:, 0],
        ckt=float(N**2 / T * gK.sum() ** 2 - N / rho * c7.sum()),
    )


def _pieces(a2, a1, a0, x_max=X_MAX):
    """Split ``[0, x_max]`` at the real roots of ``a2 x^2 + a1 x + a0`` (a2 > 0)."""
    disc = a1 * a1 - 4.0 * a2 * a0
    sq = np.sqrt(np.maximum(disc, 0.0))
    # stable root pair
    q = -0.5 * (a1 + np.copysign(sq, a1))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(q != 0, q / a2, 0.0)
        r2 = np.where(q != 0, a0 / q, 0.0)
    r1 = np.where(disc > 0, r1, 0.0)
    r2 = np.where(disc > 0, r2, 0.0)
    lo = np.clip(np.minimum(r1, r2), 0.0, x_max)
    hi = np.clip(np.maximum(r1, r2), 0.0, x_max)
    return np.stack([np.zeros_like(lo), lo, hi, np.full_like(lo, x_max)], axis=-1)


def _reduced_integrand(x, idx, c1, c2, c5, c9, c10):
    # x: (P, q) abscissae for the integrals idx: (P,)
    scales = x[..., None] * c1[idx][:, None, :] + c2[idx][:, None, :]
    delta = (c5[idx][:, None] * x + c9[idx][:, None]) * x + c10[idx][:, None]
    cdf = _cdf_rows(scales.reshape(-1, scales.shape[-1]), delta.reshape(-1)).reshape(x.shape)
    return cdf * np.exp(-x)


_GRADING = 10.0 ** -np.arange(1, 8, 2)


def _graded_panels(edges):
    """Panels on ``[0, lo]`` and ``[hi, x_max]`` refined geometrically toward the roots.

    The step argument is negative on ``[lo, hi]``, so that piece is dropped.
    Just past a root the CDF can rise over a width far below the piece
    length, which a plain rule on the whole piece never samples.
    """
    P = edges.shape[0]
    zero, lo, hi, top = (edges[:, j] for j in range(4))
    left = lo[:, None] - lo[:, None] * _GRADING[None, :]          # toward lo
    right = hi[:, None] + (top - hi)[:, None] * _GRADING[None, ::-1]
    pts_l = np.concatenate([zero[:, None], left, lo[:, None]], axis=1)
    pts_r = np.concatenate([hi[:, None], right, top[:, None]], axis=1)
    a = np.concatenate([pts_l[:, :-1], pts_r[:, :-1]], axis=1)
    b = np.concatenate([pts_l[:, 1:], pts_r[:, 1:]], axis=1)
    owner = np.repeat(np.arange(P), a.shape[1])
    return owner, a.reshape(-1), b.reshape(-1)


def _integrate_pieces(f, edges, backend: str, tol: float) -> np.ndarray:
    """Integrate ``f(x, idx)`` over ``[0, x_max]`` minus ``[lo, hi]`` for each row of ``edges``."""
    P = edges.shape[0]
    owner, a, b = _graded_panels(edges)
    keep = b > a
    owner, a, b = owner[keep], a[keep], b[keep]
    if backend == "gk":
        value, _ = gk15_intervals(f, owner, a, b, P, tol=tol)
        return value
    if backend == "gauss":
        # fixed 40-point Gauss-Legendre per panel, no adaptivity
        xl, wl = np.polynomial.legendre.leggauss(40)
        half = 0.5 * (b - a)
        x = (0.5 * (a + b))[:, None] + half[:, None] * xl[None, :]
        total = np.zeros(P)
        np.add.at(total, owner, half * (f(x, owner) @ wl))
        return total
    raise ValueError(f"unknown quadrature backend {backend!r}")


@dataclass(frozen=True)
class UdrResult:
    op: np.ndarray       # clamped into [0, 1]
    raw: np.ndarray      # before clamping
    clamped: np.ndarray  # True where clamping moved the value by more than 1e-6


def outage_udr(es: EstimationStats, dep: Deployment, cfg: SystemConfig, T, k=None,
               backend: str = "gk", tol: float = 1e-10, return_info: bool = False):
    """Outage probability of user ``k`` by univariate dimension reduction.

    Parameters
    ----------
    es, dep, cfg
        Estimation statistics, deployment and configuration (orthogonal
        pilots).
    T : float or array_like
        Linear SINR threshold(s).
    k : int, optional
        Tagged user; defaults to the last user.
    backend : {"gk", "gauss"}
        Adaptive Gauss-Kronrod per interval, or a fixed composite
        Gauss-Legendre rule (used as a cross-check).
    tol : float
        Absolute tolerance per reduced integral for the adaptive backend.
    return_info : bool
        Also return raw values and clamping flags.

    Returns
    -------
    float or ndarray, or UdrResult
    """
    _check_orthogonal(cfg, dep.K)
    T = np.atleast_1d(np.asarray(T, dtype=float))
    if np.any(T <= 0):
        raise ValueError("thresholds must be positive")
    N, M = cfg.N, dep.M
    consts = [udr_constants(es, dep, cfg, t, k) for t in T]
    c1 = np.stack([c.c1.T for c in consts])       # (nT, M, K-1)
    c2 = np.stack([c.c2.T for c in consts])
    c5 = np.stack([c.c5 for c in consts])         # (nT, M)
    c9 = np.stack([c.c9 for c in consts])
    c10 = np.stack([c.c10 for c in consts])
    shape = c5.shape
    flat = [arr.reshape(-1, *arr.shape[2:]) for arr in (c1, c2, c5, c9, c10)]
    edges = _pieces(flat[2], flat[3], flat[4])    # (nT*M, 4)

    def f(x, idx):
        return _reduced_integrand(x, idx, *flat)

    per_ap = _integrate_pieces(f, edges, backend, tol).reshape(shape)
    centre = np.array([
        _cdf_rows(c.ci[None, :], np.array([c.ckt]))[0] for c in consts
    ])
    raw = 1.0 - N * per_ap.sum(axis=1) + (M * N - 1) * centre
    op = np.clip(raw, 0.0, 1.0)
    clamped = np.abs(op - raw) > 1e-6
    if return_info:
        return UdrResult(op=op, raw=raw, clamped=clamped)
    return float(op[0]) if op.size == 1 else op


# ---------------------------------------------------------------------------
# Exact small case


def conditional_success(es: EstimationStats, dep: Deployment, T: float, k=None):
    """``P(lambda >= T | estimate)`` as a function of the per-AP energies.

    The returned callable takes ``s`` with ``s[m] = ||ghat_mk||^2 / gamma_mk``
    (a sum of N unit exponentials) and evaluates the hypoexponential CDF of
    the interference at the step argument.
    """
    gK, G, load = _tagged(es, dep, k)
    rho = dep.rho_u
    gK_l, lg_l = gK.tolist(), (load * gK).tolist()
    cross = (gK[:, None] * G).T.tolist()   # per other user, per AP

    def conditional(s):
        A = sum(x * g for x, g in zip(s, gK_l))
        delta = A * A / T - sum(x * g for x, g in zip(s, lg_l)) / rho
        scales = [sum(x * c for x, c in zip(s, row)) for row in cross]
        return _cdf_scalar(scales, delta)

    return conditional


def univariate_reduction(h, n_dims: int, tol: float = 1e-10, breakpoints=None) -> float:
    """Univariate dimension reduction of ``E[h(x)]``, ``x`` i.i.d. unit exponentials.

    ``E[h] ~ sum_j E[h(1, .., x_j, .., 1)] - (n_dims - 1) h(1, .., 1)``,
    exact whenever ``h`` is additive in its arguments.  ``breakpoints(j)``
    may list discontinuities of the ``j``-th section.
    """
    ones = np.ones(n_dims)
    total = 0.0
    for j in range(n_dims):
        def f(t, j=j):
            x = ones.copy()
            x[j] = t
            return h(x) * math.exp(-t)

        pts = sorted(p for p in (breakpoints(j) if breakpoints else ()) if 0.0 < p < X_MAX)
        edges = [0.0, *pts, X_MAX]
        for a, b in zip(edges[:-1], edges[1:]):
            val, err = integrate.quad(f, a, b, epsabs=tol, epsrel=1e-12, limit=200)
            if err > 100 * tol:
                raise QuadratureError("section integral did not converge", err)
            total += val
    return total - (n_dims - 1) * h(ones)


def _quad(f, a, b, tol):
    # roundoff warnings at the kinks of the nested integrand are judged by the error estimate instead
    val, err, *_ = integrate.quad(f, a, b, epsabs=tol, epsrel=1e-10, limit=200, full_output=1)
    if err > 1e-6:
        raise QuadratureError("nested outage integral did not converge", err)
    return val


def outage_exact_smallcase(es: EstimationStats, dep: Deployment, cfg: SystemConfig, T: float, k=None,
                           tol: float = 1e-9) -> float:
    """Exact outage of user ``k`` by nested adaptive quadrature.

    The conditional outage depends on the estimate only through the per-AP
    energies ``S_m = ||ghat_mk||^2 / gamma_mk ~ Gamma(N, 1)``, so the MN-fold
    integral collapses to an M-fold one.  Refuses ``M N > 4``.
    """
    _check_orthogonal(cfg, dep.K)
    M, N = dep.M, cfg.N
    if M * N > 4:
        raise ValueError(f"exact evaluation is limited to M*N <= 4 (got {M * N}); use outage_udr instead")
    if not T > 0:
        raise ValueError("threshold must be positive")
    rho = dep.rho_u
    gK, G, load = _tagged(es, dep, k)
    upper = 40.0 + 10.0 * N
    log_norm = -gammaln(N)

    def dens(s):
        return math.exp((N - 1) * math.log(s) - s + log_norm) if s > 0 else (1.0 if N == 1 else 0.0)

    conditional = conditional_success(es, dep, T, k)

    def level(prefix):
        m = len(prefix)
        if m == M - 1:
            # innermost: split where delta changes sign (quadratic in s)
            base = np.array(prefix + [0.0])
            a0 = float(base @ gK)
            b0 = float(base @ (load * gK))
            g, l = gK[m], load[m] * gK[m]
            edges = _pieces(np.array(g * g / T), np.array(2 * a0 * g / T - l / rho),
                            np.array(a0 * a0 / T - b0 / rho), upper)
            total = 0.0
            for lo, hi in zip(edges[:-1], edges[1:]):
                if hi > lo:
                    total += _quad(lambda s: conditional(prefix + [s]) * dens(s), lo, hi, tol)
            return total
        return _quad(lambda s: level(prefix + [s]) * dens(s), 0.0, upper, tol)

    return float(min(max(1.0 - level([]), 0.0), 1.0))


# ---------------------------------------------------------------------------
# Collocated closed form


@dataclass(frozen=True)
class MmimoConstants:
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    d4: float
    d5: float
    d6: float
    kappa: float
    threshold_split: float


def mmimo_constants(beta_all, gamma_all, cfg: SystemConfig, T: float, k=None, rho_u=None) -> MmimoConstants:
    beta_all = np.asarray(beta_all, dtype=float)
    gamma_all = np.asarray(gamma_all, dtype=float)
    K = gamma_all.size
    k = K - 1 if k is None else k
    rho = normalized_snrs(cfg)[1] if rho_u is None else rho_u
    L = cfg.M * cfg.N
    gK = gamma_all[k]
    gi = separate_scales(np.delete(gamma_all, k))
    load = rho * float((beta_all - gamma_all).sum()) + 1.0
    logmag, sign = hypoexp_coefficients(gi)
    d4 = gK**2 / T
    d5 = 2.0 / T * (L - 1) * gK**2 - gK * load / rho
    d6 = (L - 1) * gK * ((L - 1) * gK / T - load / rho)
    disc = d5 * d5 - 4 * d4 * d6
    return MmimoConstants(
        d1=sign * np.exp(logmag),
        d2=gK / (T * gi),
        d3=(L - 1) * gK / (T * gi) - load / (rho * gi),
        d4=d4,
        d5=d5,
        d6=d6,
        kappa=(-d5 + math.sqrt(max(disc, 0.0))) / (2 * d4),
        threshold_split=rho * (L - 1) * gK / load,
    )


def outage_mmimo_closed_form(beta_all, gamma_all, cfg: SystemConfig, T, k=None, rho_u=None):
    """Closed-form outage for a collocated array of ``M N`` antennas.

    ``beta_all`` and ``gamma_all`` are the per-user scalars.  Thresholds up
    to ``T* = rho (MN-1) gamma_K / (rho sum_i (beta_i - gamma_i) + 1)`` use
    the full-range integral; above it the integration starts at the
    positive root ``kappa``.
    """
    if not cfg.orthogonal:
        raise PilotModeError("the collocated closed form requires orthogonal pilots")
    if np.asarray(gamma_all).size < 2:
        raise ValueError("at least two users are needed (K >= 2)")
    Ts = np.atleast_1d(np.asarray(T, dtype=float))
    L = cfg.M * cfg.N
    out = np.empty(Ts.shape)
    for n, t in enumerate(Ts):
        if not t > 0:
            raise ValueError("threshold must be positive")
        c = mmimo_constants(beta_all, gamma_all, cfg, t, k, rho_u)
        # d2 + d3 has the sign of d4 + d5 + d6; it is positive whenever t <= T*
        second = 0.0
        if c.d4 + c.d5 + c.d6 >= 0:
            second = (L - 1) * float(np.sum(c.d1 * -np.expm1(-(c.d2 + c.d3))))
        if t <= c.threshold_split:
            first = L * float(np.sum(c.d1 * (1.0 - np.exp(-c.d3) / (c.d2 + 1.0))))
        else:
            first = L * float(np.sum(c.d1 * (math.exp(-c.kappa)
                                             - np.exp(-c.d3 - c.kappa * (c.d2 + 1.0)) / (c.d2 + 1.0))))
        out[n] = min(max(1.0 - first + second, 0.0), 1.0)
    return float(out[0]) if out.size == 1 else out
