"""Independent reference evaluations of the SINR sub-expectations.

Two routes, both independent of the closed forms in :mod:`cfop.moments`:

* :func:`wick_moment` evaluates an expectation exactly by Isserlis' theorem
  for circular complex Gaussians (sum over pairings of conjugated and plain
  factors), using only the per-antenna covariances ``nu``.
* :func:`mc_subexpectations` estimates the same quantities from channels
  drawn through the pilot pipeline, with standard errors.
"""

from __future__ import annotations

from itertools import permutations

import numpy as np

from .channel import EstimationStats, PilotBook, _pilot_pipeline
from .deployment import Deployment

# names shared with cfop.moments.subexpectations
SCALAR_TERMS = ("E[A2]", "E[A3]", "E[A4]", "E[C2]", "E[AC]", "E[A2C]", "E[(sumB)2]")
PER_USER_TERMS = ("E[B]", "E[BA]", "E[BC]", "E[A2B]")


def _cycles(perm):
    seen = [False] * len(perm)
    out = []
    for start in range(len(perm)):
        if seen[start]:
            continue
        cyc, j = [], start
        while not seen[j]:
            seen[j] = True
            cyc.append(j)
            j = perm[j]
        out.append(cyc)
    return out


def wick_moment(nu: np.ndarray, N: int, factors) -> complex:
    """Exact ``E[prod_f sum_{m,n} w_f[m] conj(z_a^{mn}) z_b^{mn}]``.

    ``factors`` is a sequence of ``(a, b, w)`` with user indices ``a`` (the
    conjugated variable), ``b`` (the plain one) and an optional length-M
    weight ``w``.  ``z^{mn}`` is the K-vector of estimates at AP ``m``,
    antenna ``n``, with ``E[z_a z_b^*] = nu[m, a, b]``; different (m, n) are
    independent.
    """
    M = nu.shape[0]
    factors = [(a, b, np.ones(M) if w is None else np.asarray(w, dtype=float)) for a, b, w in factors]
    F = len(factors)
    total = 0j
    for sigma in permutations(range(F)):
        term = 1 + 0j
        for cyc in _cycles(sigma):
            # plain z_b of factor f pairs with conj z_a of factor sigma(f); a cycle shares one location
            prod = np.ones(M, dtype=complex)
            for f in cyc:
                _, b, w = factors[f]
                a_next = factors[sigma[f]][0]
                prod = prod * w * nu[:, b, a_next]
            term *= N * prod.sum()
        total += term
    return total


def wick_subexpectations(es: EstimationStats, dep: Deployment, N: int, k: int) -> dict:
    """Exact sub-expectations for user ``k`` via :func:`wick_moment`."""
    nu = es.nu
    K = nu.shape[1]
    w = (dep.beta - es.gamma).sum(axis=1)
    A = (k, k, None)
    C = (k, k, w)
    others = [i for i in range(K) if i != k]

    def s(i):
        return (k, i, None)

    def s_conj(i):
        return (i, k, None)

    out = {
        "E[A2]": wick_moment(nu, N, [A, A]).real,
        "E[A3]": wick_moment(nu, N, [A, A, A]).real,
        "E[A4]": wick_moment(nu, N, [A, A, A, A]).real,
        "E[C2]": wick_moment(nu, N, [C, C]).real,
        "E[AC]": wick_moment(nu, N, [A, C]).real,
        "E[A2C]": wick_moment(nu, N, [A, A, C]).real,
        "E[A]": wick_moment(nu, N, [A]).real,
        "E[C]": wick_moment(nu, N, [C]).real,
    }
    out["E[B]"] = np.array([wick_moment(nu, N, [s(i), s_conj(i)]).real for i in others])
    out["E[BA]"] = np.array([wick_moment(nu, N, [s(i), s_conj(i), A]).real for i in others])
    out["E[BC]"] = np.array([wick_moment(nu, N, [s(i), s_conj(i), C]).real for i in others])
    out["E[A2B]"] = np.array([wick_moment(nu, N, [s(i), s_conj(i), A, A]).real for i in others])
    out["E[(sumB)2]"] = sum(
        wick_moment(nu, N, [s(i), s_conj(i), s(j), s_conj(j)]).real for i in others for j in others
    )
    return out


class _RunningMoments:
    """Streaming mean and standard error over batches."""

    def __init__(self):
        self.n = 0
        self.sum = None
        self.sumsq = None

    def add(self, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        s, ss = values.sum(axis=0), (values**2).sum(axis=0)
        self.sum = s if self.sum is None else self.sum + s
        self.sumsq = ss if self.sumsq is None else self.sumsq + ss
        self.n += values.shape[0]

    def result(self):
        mean = self.sum / self.n
        var = np.maximum(self.sumsq / self.n - mean**2, 0.0)
        return mean, np.sqrt(var / (self.n - 1))


def sample_terms(g_hat: np.ndarray, lam_total: np.ndarray, k: int) -> dict:
    """Per-draw values of A, B^i (i != k), C for user ``k``.

    ``g_hat`` has shape ``(n, M, K, N)``; ``lam_total[m] = sum_i (beta_mi - gamma_mi)``.
    """
    gk = g_hat[:, :, k, :]
    norms = (np.abs(gk) ** 2).sum(axis=-1)  # (n, M)
    A = norms.sum(axis=1)
    C = norms @ lam_total
    inner = np.einsum("bmn,bmin->bi", gk.conj(), g_hat)  # g_k^H g_i
    B = np.abs(np.delete(inner, k, axis=1)) ** 2
    return {"A": A, "B": B, "C": C}


def mc_subexpectations(dep: Deployment, es: EstimationStats, pb: PilotBook, N: int, k: int,
                       n_draws: int, seed, batch: int = 100_000) -> dict:
    """Monte-Carlo estimates ``{name: (mean, standard_error)}`` for user ``k``.

    Channels come from the pilot pipeline, so cross-user estimate
    correlation is produced physically rather than assumed.
    """
    rng = np.random.default_rng(seed)
    lam_total = (dep.beta - es.gamma).sum(axis=1)
    acc = {name: _RunningMoments() for name in SCALAR_TERMS + PER_USER_TERMS + ("E[A]", "E[C]")}
    done = 0
    while done < n_draws:
        n = min(batch, n_draws - done)
        _, g_hat = _pilot_pipeline(dep.beta, es.c, pb.phi, dep.rho_p, N, rng, n)
        t = sample_terms(g_hat, lam_total, k)
        A, B, C = t["A"], t["B"], t["C"]
        sumB = B.sum(axis=1)
        acc["E[A]"].add(A)
        acc["E[C]"].add(C)
        acc["E[A2]"].add(A**2)
        acc["E[A3]"].add(A**3)
        acc["E[A4]"].add(A**4)
        acc["E[C2]"].add(C**2)
        acc["E[AC]"].add(A * C)
        acc["E[A2C]"].add(A**2 * C)
        acc["E[(sumB)2]"].add(sumB**2)
        acc["E[B]"].add(B)
        acc["E[BA]"].add(B * A[:, None])
        acc["E[BC]"].add(B * C[:, None])
        acc["E[A2B]"].add(B * (A**2)[:, None])
        done += n
    return {name: a.result() for name, a in acc.items()}
