import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cfop.config import SystemConfig
from cfop.deployment import (deployment_from_positions, generate_deployment, hata_constant_db, noise_power_w,
                             normalized_snrs, path_loss_db, write_deployment_csv)

CFG = SystemConfig()


def test_hata_constant_reference():
    # 46.3 + 33.9 lg f - 13.82 lg 15 - (1.1 lg f - 0.7) 1.65 + (1.56 lg f - 0.8), f = 1900 MHz
    assert hata_constant_db(CFG) == pytest.approx(140.71508370390840, abs=1e-9)


@pytest.mark.parametrize("d, expected", [(0.2, -116.25113355214775), (0.03, -90.74205886334194),
                                         (0.005, -81.19963376894869), (0.0, -81.19963376894869)])
def test_path_loss_reference_values(d, expected):
    assert path_loss_db(d, CFG) == pytest.approx(expected, abs=1e-9)


def test_far_slope_35_db_per_decade():
    assert path_loss_db(1.0, CFG) - path_loss_db(0.1, CFG) == pytest.approx(-35.0, abs=1e-12)


def test_continuity_at_breakpoints():
    for b in (CFG.breakpoint_d0_km, CFG.breakpoint_d1_km):
        left, right = path_loss_db(b * (1 - 1e-13), CFG), path_loss_db(b * (1 + 1e-13), CFG)
        assert abs(left - right) < 1e-9


def test_monotone_on_grid():
    pl = path_loss_db(np.array([0.01, 0.05, 0.1, 0.5, 1.0]), CFG)
    assert np.all(np.diff(pl) < 0)


@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_non_increasing_property(a, b):
    lo, hi = min(a, b), max(a, b)
    assert path_loss_db(hi, CFG) <= path_loss_db(lo, CFG) + 1e-12


def test_negative_distance_rejected():
    with pytest.raises(ValueError):
        path_loss_db(-0.1, CFG)


def test_noise_and_snr_reference():
    # k_B 290 K 20 MHz 10^0.9
    assert noise_power_w(CFG) == pytest.approx(6.36079320107429828e-13, rel=1e-14)
    rho_p, rho_u = normalized_snrs(CFG)
    assert rho_u == pytest.approx(157213097233.07877, rel=1e-13)
    assert rho_p == rho_u


def test_snr_invariant_under_joint_scaling():
    cfg2 = CFG.replace(bandwidth_hz=2 * CFG.bandwidth_hz, tx_power_pilot_w=0.2, tx_power_uplink_w=0.2)
    assert normalized_snrs(cfg2) == pytest.approx(normalized_snrs(CFG), rel=1e-14)


def test_no_shadowing_equal_distance_gives_path_loss():
    cfg = CFG.replace(M=3, K=2, tau_p=2, shadow_std_db=0.0)
    d = 0.3
    ap = [[d, 0.0], [0.0, d], [-d, 0.0]]
    dep = deployment_from_positions(cfg, ap, [[0.0, 0.0], [0.0, 0.0]])
    np.testing.assert_allclose(dep.beta, 10 ** (path_loss_db(d, cfg) / 10), rtol=1e-13)


def test_generate_deterministic_and_seed_sensitive():
    cfg = CFG.replace(M=10, K=4, tau_p=4)
    a, b, c = generate_deployment(cfg, 7), generate_deployment(cfg, 7), generate_deployment(cfg, 8)
    assert np.array_equal(a.beta, b.beta) and np.array_equal(a.ap_xy, b.ap_xy)
    assert not np.array_equal(a.beta, c.beta)


def test_positions_inside_square_and_beta_positive():
    cfg = CFG.replace(M=50, K=10, area_side_km=0.7)
    dep = generate_deployment(cfg, 1)
    for xy in (dep.ap_xy, dep.ue_xy):
        assert np.all((xy >= 0) & (xy <= 0.7))
    assert np.all(dep.beta > 0) and np.all(np.isfinite(dep.beta))


def test_collocated_beta_shared_across_aps():
    cfg = CFG.replace(M=6, K=3, tau_p=3, topology="collocated")
    dep = generate_deployment(cfg, 2)
    assert np.all(dep.beta == dep.beta[0])


def test_csv_dump(tmp_path):
    dep = generate_deployment(CFG.replace(M=2, K=2, tau_p=2), 0)
    paths = write_deployment_csv(dep, tmp_path / "d")
    rows = (tmp_path / "d_beta.csv").read_text().splitlines()
    assert len(paths) == 3 and rows[0] == "m,k,beta" and len(rows) == 5
    assert math.isclose(float(rows[1].split(",")[2]), dep.beta[0, 0], rel_tol=0)
