import numpy as np
import pytest
from hypothesis import given, strategies as st

from cfop.channel import EstimationStats, build_pilot_book, estimation_stats
from cfop.config import PilotModeError, SystemConfig
from cfop.deployment import Deployment, generate_deployment
from cfop.moments import (MomentSet, aggregate, moments_general, moments_mmimo, moments_npc, pochhammer,
                          subexpectations)
from cfop.oracles import wick_subexpectations

from conftest import make_system


def _stats(beta, gamma, rho_u=2.0):
    beta, gamma = np.asarray(beta, float), np.asarray(gamma, float)
    M, K = beta.shape
    nu = np.zeros((M, K, K), complex)
    nu[:, np.arange(K), np.arange(K)] = gamma
    dep = Deployment(np.zeros((M, 2)), np.zeros((K, 2)), beta, 1.0, rho_u)
    return dep, EstimationStats(c=np.ones_like(beta), gamma=gamma, nu=nu)


@pytest.mark.parametrize("a, n, expected", [(3, 0, 1), (4, 2, 20), (8, 4, 7920), (0.5, 3, 1.875)])
def test_pochhammer(a, n, expected):
    assert pochhammer(a, n) == expected


@given(st.floats(0.1, 50), st.integers(0, 8))
def test_pochhammer_recursion(a, n):
    assert pochhammer(a, n + 1) == pytest.approx(pochhammer(a, n) * (a + n), rel=1e-13)


def test_pochhammer_rejects_negative_order():
    with pytest.raises(ValueError):
        pochhammer(2.0, -1)


def test_single_antenna_single_user():
    beta, gamma, rho = 0.8, 0.3, 2.0
    dep, es = _stats([[beta]], [[gamma]], rho)
    cfg = SystemConfig(M=1, N=1, K=1, tau_p=1)
    ms = moments_general(es, dep, cfg, 0)
    assert ms.ex == pytest.approx(rho * 2 * gamma**2, rel=1e-15)
    assert ms.ey == pytest.approx(gamma * (1 + rho * (beta - gamma)), rel=1e-15)
    # A ~ gamma Exp(1): E[A^2] = 2 gamma^2, E[A^4] = 24 gamma^4
    assert ms.ex2 == pytest.approx(rho**2 * 24 * gamma**4, rel=1e-14)


def test_general_matches_wick_expansion(small_contaminated):
    cfg, dep, _, es = small_contaminated
    for k in range(cfg.K):
        closed = subexpectations(es, dep, cfg.N, k)
        exact = wick_subexpectations(es, dep, cfg.N, k)
        for name, ref in exact.items():
            np.testing.assert_allclose(closed[name], ref, rtol=1e-11, err_msg=name)


@pytest.mark.parametrize("seed", range(4))
def test_general_equals_npc_for_orthogonal_pilots(seed):
    cfg, dep, _, es = make_system(seed, M=7, N=3, K=5, tau_p=5)
    for k in range(cfg.K):
        np.testing.assert_allclose(moments_general(es, dep, cfg, k).as_array(),
                                   moments_npc(es, dep, cfg, k).as_array(), rtol=1e-10)


def test_npc_refuses_contaminated(small_contaminated):
    cfg, dep, _, es = small_contaminated
    with pytest.raises(PilotModeError):
        moments_npc(es, dep, cfg, 0)


@pytest.mark.parametrize("M, N", [(1, 4), (2, 2), (5, 3)])
def test_mmimo_matches_npc_on_collocated(M, N):
    cfg, dep, _, es = make_system(6, M=M, N=N, K=4, tau_p=4, topology="collocated")
    for k in range(cfg.K):
        mm = moments_mmimo(es.gamma[0, k], dep.beta[0], es.gamma[0], cfg, k, rho_u=dep.rho_u)
        np.testing.assert_allclose(mm.as_array(), moments_npc(es, dep, cfg, k).as_array(), rtol=1e-10)


def test_mmimo_pochhammer_mean():
    cfg = SystemConfig(M=2, N=2, K=1, tau_p=1)
    mm = moments_mmimo(0.5, [1.0], [0.5], cfg, 0, rho_u=3.0)
    assert mm.ex == pytest.approx(20 * 3.0 * 0.25)


def test_mmimo_single_user_mean_y():
    cfg = SystemConfig(M=3, N=2, K=1, tau_p=1)
    g, b, rho = 0.4, 0.9, 1.7
    mm = moments_mmimo(g, [b], [g], cfg, 0, rho_u=rho)
    assert mm.ey == pytest.approx(6 * g * (1 + rho * (b - g)), rel=1e-15)


def test_ey_increasing_in_other_users_gamma():
    rng = np.random.default_rng(1)
    beta = rng.uniform(1, 2, (3, 3))
    gamma = beta * rng.uniform(0.2, 0.8, (3, 3))
    cfg = SystemConfig(M=3, N=2, K=3, tau_p=3)
    dep, es = _stats(beta, gamma)
    base = moments_npc(es, dep, cfg, 0).ey
    for m in range(3):
        for i in (1, 2):
            g2 = gamma.copy()
            g2[m, i] *= 1.01
            b2 = beta.copy()
            b2[m, i] += g2[m, i] - gamma[m, i]      # keep beta - gamma fixed
            d2, e2 = _stats(b2, g2)
            assert moments_npc(e2, d2, cfg, 0).ey > base


def test_x_moments_homogeneous_in_tagged_gamma():
    rng = np.random.default_rng(2)
    beta = rng.uniform(1, 2, (4, 3))
    gamma = beta * rng.uniform(0.2, 0.8, (4, 3))
    cfg = SystemConfig(M=4, N=2, K=3, tau_p=3)
    dep, es = _stats(beta, gamma)
    c = 1.7
    g2, b2 = gamma.copy(), beta.copy()
    g2[:, 1] *= c
    b2[:, 1] += g2[:, 1] - gamma[:, 1]
    d2, e2 = _stats(b2, g2)
    m1, m2 = moments_npc(es, dep, cfg, 1), moments_npc(e2, d2, cfg, 1)
    assert m2.ex == pytest.approx(c**2 * m1.ex, rel=1e-13)
    assert m2.ex2 == pytest.approx(c**4 * m1.ex2, rel=1e-13)


def test_single_user_general():
    cfg, dep, _, es = make_system(0, M=4, N=2, K=1, tau_p=1)
    ms = moments_general(es, dep, cfg, 0)
    g, w = es.gamma[:, 0], dep.beta[:, 0] - es.gamma[:, 0]
    assert ms.ey == pytest.approx(cfg.N * float(g @ (1 + dep.rho_u * w)), rel=1e-13)


def test_perturb_changes_named_term(small_contaminated):
    cfg, dep, _, es = small_contaminated
    a = subexpectations(es, dep, cfg.N, 0)
    b = subexpectations(es, dep, cfg.N, 0, perturb={"E[A3]": 2.0})
    assert b["E[A3]"] == 2 * a["E[A3]"] and b["E[A2]"] == a["E[A2]"]
    with pytest.raises(KeyError):
        subexpectations(es, dep, cfg.N, 0, perturb={"E[Z]": 2.0})


def test_user_index_checked(small_orthogonal):
    cfg, dep, _, es = small_orthogonal
    with pytest.raises(IndexError):
        subexpectations(es, dep, cfg.N, cfg.K)


def test_momentset_validation():
    with pytest.raises(ValueError):
        MomentSet(1.0, 0.5, 1.0, 2.0, 1.0)       # Var X < 0
    with pytest.raises(ValueError):
        MomentSet(1.0, 2.0, -1.0, 2.0, 1.0)
    ms = MomentSet(2.0, 5.0, 3.0, 10.0, 7.0).scaled(3.0)
    assert ms.as_array().tolist() == [6.0, 45.0, 3.0, 10.0, 21.0]


def test_aggregate_consistent_with_general(small_contaminated):
    cfg, dep, _, es = small_contaminated
    sub = subexpectations(es, dep, cfg.N, 1)
    assert aggregate(sub, dep.rho_u) == moments_general(es, dep, cfg, 1)
