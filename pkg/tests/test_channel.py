import numpy as np
import pytest

from cfop.channel import build_pilot_book, draw_channels, estimation_stats
from cfop.config import ConfigError, PilotMode, SystemConfig
from cfop.deployment import Deployment, generate_deployment

from conftest import make_system


def _dep(beta, rho_p, rho_u=1.0):
    beta = np.asarray(beta, dtype=float)
    M, K = beta.shape
    return Deployment(np.zeros((M, 2)), np.zeros((K, 2)), beta, rho_p, rho_u)


def test_orthogonal_book_is_identity():
    pb = build_pilot_book(SystemConfig(K=4, tau_p=4), 0)
    assert np.array_equal(pb.gram, np.eye(4))
    np.testing.assert_allclose(np.linalg.norm(pb.phi, axis=1), 1.0, atol=1e-12)


def test_orthogonal_book_refuses_short_pilots():
    cfg = SystemConfig(K=4, tau_p=4)
    object.__setattr__(cfg, "tau_p", 3)      # bypass the config check
    with pytest.raises(ConfigError):
        build_pilot_book(cfg, 0)


def test_random_pilots_collide_in_one_dimension():
    pb = build_pilot_book(SystemConfig(K=2, tau_p=1, pilot_mode=PilotMode.RANDOM_CONTAMINATED), 5)
    assert abs(pb.gram[0, 1]) == pytest.approx(1.0, abs=1e-12)


def test_random_pilot_overlap_mean():
    # E|phi_k^H phi_i|^2 = 1/tau_p for independent uniform unit vectors
    tau = 4
    cfg = SystemConfig(K=2, tau_p=tau, pilot_mode=PilotMode.RANDOM_CONTAMINATED)
    vals = np.array([abs(build_pilot_book(cfg, s).gram[0, 1]) ** 2 for s in range(4000)])
    assert abs(vals.mean() - 1 / tau) < 3 * vals.std(ddof=1) / np.sqrt(vals.size)


def test_unit_substitution():
    # tau_p rho_p = 1, beta = 1 -> c = gamma = 1/2
    es = estimation_stats(_dep(np.ones((2, 3)), rho_p=1 / 3), build_pilot_book(SystemConfig(K=3, tau_p=3), 0))
    np.testing.assert_allclose(es.c, 0.5, rtol=1e-15)
    np.testing.assert_allclose(es.gamma, 0.5, rtol=1e-15)


def test_orthogonal_gamma_formula_and_nu_collapse():
    cfg, dep, pb, es = make_system(1, M=5, N=2, K=4, tau_p=6)
    tr = cfg.tau_p * dep.rho_p
    np.testing.assert_allclose(es.gamma, tr * dep.beta**2 / (tr * dep.beta + 1), rtol=1e-13)
    diag = np.einsum("mkk->mk", es.nu)
    np.testing.assert_allclose(diag.real, es.gamma, rtol=1e-12)
    assert np.max(np.abs(diag.imag)) <= 1e-12 * es.gamma.max()
    off = es.nu.copy()
    off[:, np.arange(4), np.arange(4)] = 0
    assert np.max(np.abs(off)) <= 1e-12 * es.gamma.max()


def test_perfect_csi_limit():
    beta = np.array([[1e-3, 2e-4], [5e-4, 1e-3]])
    es = estimation_stats(_dep(beta, rho_p=1e8 / 1e-4), build_pilot_book(SystemConfig(K=2, tau_p=2), 0))
    np.testing.assert_allclose(es.gamma, beta, rtol=1e-6)


def test_gamma_increasing_in_pilot_power():
    beta = np.array([[1e-3, 2e-4, 7e-5]])
    pb = build_pilot_book(SystemConfig(K=3, tau_p=2, pilot_mode="random_contaminated"), 3)
    gam = [estimation_stats(_dep(beta, r), pb).gamma for r in np.logspace(0, 8, 30)]
    assert np.all(np.diff(np.array(gam), axis=0) > 0)
    assert np.all((gam[-1] > 0) & (gam[-1] < beta))


def test_nu_matches_explicit_covariance():
    cfg, dep, pb, es = make_system(9, M=2, N=1, K=2, tau_p=2, pilot_mode="random_contaminated")
    tr = cfg.tau_p * dep.rho_p
    for m in range(2):
        C = tr * sum(dep.beta[m, j] * np.outer(pb.phi[j], pb.phi[j].conj()) for j in range(2)) + np.eye(2)
        for k in range(2):
            for i in range(2):
                ref = es.c[m, k] * es.c[m, i] * (pb.phi[i].conj() @ C @ pb.phi[k])
                assert es.nu[m, k, i] == pytest.approx(ref, rel=1e-12)
    np.testing.assert_allclose(es.nu, np.conj(np.swapaxes(es.nu, 1, 2)), rtol=1e-14)


def test_noiseless_high_power_estimates_equal_channels():
    cfg = SystemConfig(M=3, N=2, K=3, tau_p=3, tx_power_pilot_w=1e12)
    dep = generate_deployment(cfg, 0)
    pb = build_pilot_book(cfg, 0)
    real = draw_channels(dep, estimation_stats(dep, pb, cfg), pb, cfg, 1, noise=False)
    np.testing.assert_allclose(real.g_hat, real.g, rtol=1e-6, atol=0)


def test_estimate_statistics_by_sampling():
    cfg, dep, pb, es = make_system(2, M=2, N=2, K=3, tau_p=2, area_side_km=0.2, pilot_mode="random_contaminated")
    n = 100_000
    real = draw_channels(dep, es, pb, cfg, 11, n=n)
    gh, err = real.g_hat, real.error
    se_scale = np.sqrt(n)
    # per-entry variance of ghat is gamma
    p = np.abs(gh) ** 2
    z = (p.mean(axis=0) - es.gamma[:, :, None]) / (p.std(axis=0, ddof=1) / se_scale)
    assert np.max(np.abs(z)) < 4
    # ghat and error are uncorrelated
    x = gh * err.conj()
    zr = np.abs(x.mean(axis=0)) / (np.abs(x).std(axis=0, ddof=1) / se_scale)
    assert np.max(zr) < 4
    # E||ghat_mk||^2 = N gamma_mk
    nrm = p.sum(axis=-1)
    np.testing.assert_allclose(nrm.mean(axis=0), cfg.N * es.gamma, rtol=0.02)


def test_cross_user_estimate_correlation_present():
    cfg, dep, pb, es = make_system(2, M=1, N=1, K=2, tau_p=1, pilot_mode="random_contaminated")
    real = draw_channels(dep, es, pb, cfg, 3, n=200_000)
    emp = np.mean(real.g_hat[:, 0, 0, 0] * real.g_hat[:, 0, 1, 0].conj())
    assert abs(emp - es.nu[0, 0, 1]) < 0.02 * abs(es.nu[0, 0, 1])


def test_single_draw_shape():
    cfg, dep, pb, es = make_system(0, M=4, N=3, K=2, tau_p=2)
    real = draw_channels(dep, es, pb, cfg, np.random.default_rng(0))
    assert real.g.shape == real.g_hat.shape == (4, 2, 3)
    np.testing.assert_allclose(real.lambda_err, dep.beta - es.gamma)
