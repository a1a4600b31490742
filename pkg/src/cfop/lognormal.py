"""Log-normal approximation of the SINR by two-step moment matching.

X and Y are each matched to a Log-normal from their first two moments; the
ratio is again Log-normal with the log-domain covariance taken from E[XY].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .moments import MomentSet
from .quadrature import QuadratureError

LN2 = math.log(2.0)


class DegenerateApproximationError(ValueError):
    """The moment set implies a non-positive log-variance for the SINR."""

    def __init__(self, sigma2: float):
        super().__init__(f"approximation invalid for this configuration (sigma^2 = {sigma2!r})")
        self.sigma2 = sigma2


@dataclass(frozen=True)
class LogNormalParams:
    """ln(lambda) ~ Normal(mu, sigma^2), plus the component fits of X and Y."""

    mu: float
    sigma: float
    mu_x: float = float("nan")
    sigma_x: float = float("nan")
    mu_y: float = float("nan")
    sigma_y: float = float("nan")

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"invalid Log-normal parameters mu={self.mu}, sigma={self.sigma}")


def _match(m1: float, m2: float) -> tuple[float, float]:
    s2 = math.log(m2 / (m1 * m1))
    return math.log(m1 * m1 / math.sqrt(m2)), s2


def fit_lognormal(ms: MomentSet) -> LogNormalParams:
    """Two-step moment matching of the SINR ``X / Y``.

    Parameters
    ----------
    ms : MomentSet
        E[X], E[X^2], E[Y], E[Y^2] and E[XY] of one user.

    Returns
    -------
    LogNormalParams
        ``mu = mu_X - mu_Y`` and
        ``sigma^2 = sigma_X^2 + sigma_Y^2 - 2 ln(E[XY] / (E[X] E[Y]))``.

    Raises
    ------
    DegenerateApproximationError
        If ``sigma^2 <= 0``.
    """
    mu_x, s2x = _match(ms.ex, ms.ex2)
    mu_y, s2y = _match(ms.ey, ms.ey2)
    cov_log = math.log(ms.exy / (ms.ex * ms.ey))
    sigma2 = s2x + s2y - 2.0 * cov_log
    if not sigma2 > 0:
        raise DegenerateApproximationError(sigma2)
    return LogNormalParams(
        mu=mu_x - mu_y,
        sigma=math.sqrt(sigma2),
        mu_x=mu_x,
        sigma_x=math.sqrt(max(s2x, 0.0)),
        mu_y=mu_y,
        sigma_y=math.sqrt(max(s2y, 0.0)),
    )


def outage_lognormal(p: LogNormalParams, T):
    """``P(lambda < T)`` for linear threshold(s) ``T > 0``."""
    T = np.asarray(T, dtype=float)
    if np.any(T < 0):
        raise ValueError("threshold must be non-negative")
    with np.errstate(divide="ignore"):
        lnT = np.log(T)
    if p.sigma == 0:
        out = (lnT >= p.mu).astype(float)
    else:
        out = 0.5 * special.erfc(-(lnT - p.mu) / (p.sigma * math.sqrt(2.0)))
    return float(out) if out.ndim == 0 else out


def rate_lognormal(p: LogNormalParams, tol: float = 1e-9) -> float:
    """Ergodic rate ``E[log2(1 + lambda)]`` in bit/s/Hz.

    Integrated in ``x = ln(2^t - 1)``, where the integrand is
    ``erfc((x - mu)/(sigma sqrt 2)) / (1 + e^-x)``.  Below ``mu - 10 sigma``
    erfc equals 2 to double precision and the remaining tail
    ``2 ln(1 + e^L)`` is added in closed form; above ``mu + 10 sigma`` the
    integrand is negligible.
    """
    if p.sigma == 0:
        return float(np.logaddexp(p.mu, 0.0) / LN2)
    s = p.sigma * math.sqrt(2.0)
    lo, hi = p.mu - 10.0 * p.sigma, p.mu + 10.0 * p.sigma

    def f(x):
        return special.erfc((x - p.mu) / s) * special.expit(x)

    val, err, *rest = integrate.quad(f, lo, hi, points=[p.mu], epsabs=tol, epsrel=0.0, limit=200, full_output=1)
    if len(rest) > 1 or err > 10 * tol:
        raise QuadratureError("rate integral did not converge", err)
    tail = 2.0 * float(np.logaddexp(lo, 0.0))
    return (val + tail) / (2.0 * LN2)


def rate_lognormal_tform(p: LogNormalParams, tol: float = 1e-10) -> float:
    """Second route for the rate: the integral over ``t`` on ``[0, inf)``.

    Used to cross-check :func:`rate_lognormal`.
    """
    if p.sigma == 0:
        return float(np.logaddexp(p.mu, 0.0) / LN2)
    s = p.sigma * math.sqrt(2.0)

    def f(t):
        # ln(2^t - 1), stable for small t
        x = math.log(math.expm1(t * LN2)) if t > 0 else -math.inf
        return 0.5 * special.erfc((x - p.mu) / s)

    # the drop sits around t = log2(1 + e^mu); breakpoints across it, qagi for the tail
    pts = np.logaddexp(p.mu + p.sigma * np.linspace(-8.0, 8.0, 17), 0.0) / LN2
    t_mid = float(np.logaddexp(p.mu + 10 * p.sigma, 0.0) / LN2)
    a, ea = integrate.quad(f, 0.0, t_mid, points=pts[pts > 0], epsabs=tol, epsrel=1e-12, limit=400)
    b, eb = integrate.quad(f, t_mid, math.inf, epsabs=tol, epsrel=1e-12, limit=400)
    return a + b


def rate_bounds(p: LogNormalParams) -> tuple[float, float]:
    """Closed-form lower and upper bounds on :func:`rate_lognormal`."""
    lower = float(np.logaddexp(p.mu, 0.0)) / LN2
    # e^-mu / (1 + e^-2mu) = 1 / (2 cosh mu)
    gap = math.expm1(p.sigma**2 / 2.0) / (LN2 * 2.0 * math.cosh(p.mu)) if abs(p.mu) < 700 else 0.0
    return lower, lower + gap


def uatf_sinr(ea: float, ea2: float, ey: float, rho_u: float) -> float:
    """Use-and-then-forget effective SINR for MRC.

    ``rho E[A]^2 / (E[Y] + rho Var(A))``: the mean of the desired gain is
    treated as known and everything else as uncorrelated noise.
    """
    return rho_u * ea * ea / (ey + rho_u * (ea2 - ea * ea))


def rate_uatf(ea: float, ea2: float, ey: float, rho_u: float) -> float:
    """``log2(1 + SINR_UaTF)``; a lower bound on the ergodic rate."""
    return math.log2(1.0 + uatf_sinr(ea, ea2, ey, rho_u))
