import pytest

from cfop.config import (ConfigError, PilotMode, SystemConfig, Topology, dump_system_config, env_overrides,
                         load_system_config, parse_key_values, system_config_from_mapping)


def test_defaults_valid():
    cfg = SystemConfig()
    assert cfg.orthogonal and cfg.topology is Topology.CELLFREE


@pytest.mark.parametrize("kw", [dict(M=0), dict(K=-1), dict(N=1.5), dict(area_side_km=0.0),
                                dict(tx_power_uplink_w=-1.0), dict(shadow_std_db=-1.0),
                                dict(breakpoint_d0_km=0.06)])
def test_invalid_values_rejected(kw):
    with pytest.raises(ConfigError):
        SystemConfig(**kw)


def test_orthogonal_needs_enough_pilots():
    with pytest.raises(ConfigError):
        SystemConfig(K=5, tau_p=4)
    SystemConfig(K=5, tau_p=4, pilot_mode=PilotMode.RANDOM_CONTAMINATED)


def test_parse_comments_and_case():
    vals = parse_key_values("# header\nM = 12  # aps\n\nPilot_Mode = random_contaminated\n")
    assert vals == {"m": "12", "pilot_mode": "random_contaminated"}


def test_parse_rejects_garbage():
    with pytest.raises(ConfigError, match="expected"):
        parse_key_values("just words")


def test_unknown_key_is_error():
    with pytest.raises(ConfigError, match="unknown"):
        system_config_from_mapping({"mm": "3"})


def test_bad_value_is_error():
    with pytest.raises(ConfigError):
        system_config_from_mapping({"m": "three"})


def test_env_override_wins(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("m = 7\nk = 3\ntau_p = 3\n")
    cfg = load_system_config(path, environ={"CFOP_M": "9"})
    assert (cfg.M, cfg.K) == (9, 3)
    assert env_overrides(["k"], {"CFOP_K": "2", "OTHER": "1"}) == {"k": "2"}


def test_dump_roundtrip():
    cfg = SystemConfig(M=5, K=3, tau_p=3, pilot_mode="random_contaminated", topology="collocated")
    assert system_config_from_mapping(parse_key_values(dump_system_config(cfg))) == cfg
