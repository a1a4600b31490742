"""System configuration and the flat ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
import enum
import os
from dataclasses import dataclass, fields
from typing import Any, Mapping

ENV_PREFIX = "CFOP_"


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration."""


class PilotModeError(ConfigError):
    """Raised when an operation is not defined for the configured pilot mode."""


class PilotMode(str, enum.Enum):
    ORTHOGONAL = "orthogonal"
    RANDOM_CONTAMINATED = "random_contaminated"


class Topology(str, enum.Enum):
    CELLFREE = "cellfree"
    COLLOCATED = "collocated"


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of one uplink scenario.

    Defaults reproduce the simulation table used for the cell-free results:
    1.9 GHz carrier, 20 MHz bandwidth, 9 dB noise figure, 15 m / 1.65 m
    antenna heights, 8 dB shadowing and 100 mW pilot and data powers.
    """

    M: int = 80
    N: int = 4
    K: int = 10
    area_side_km: float = 1.0
    tau_p: int = 10
    carrier_freq_hz: float = 1.9e9
    bandwidth_hz: float = 20e6
    noise_figure_db: float = 9.0
    ap_height_m: float = 15.0
    ue_height_m: float = 1.65
    shadow_std_db: float = 8.0
    tx_power_pilot_w: float = 0.1
    tx_power_uplink_w: float = 0.1
    pilot_mode: PilotMode = PilotMode.ORTHOGONAL
    topology: Topology = Topology.CELLFREE
    breakpoint_d0_km: float = 0.01
    breakpoint_d1_km: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "pilot_mode", PilotMode(self.pilot_mode))
        object.__setattr__(self, "topology", Topology(self.topology))
        self.validate()

    def validate(self) -> None:
        for name in ("M", "N", "K", "tau_p"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in (
            "area_side_km",
            "carrier_freq_hz",
            "bandwidth_hz",
            "ap_height_m",
            "ue_height_m",
            "tx_power_pilot_w",
            "tx_power_uplink_w",
            "breakpoint_d0_km",
            "breakpoint_d1_km",
        ):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")
        if self.shadow_std_db < 0:
            raise ConfigError("shadow_std_db must be non-negative")
        if self.breakpoint_d0_km >= self.breakpoint_d1_km:
            raise ConfigError("breakpoint_d0_km must be below breakpoint_d1_km")
        if self.pilot_mode is PilotMode.ORTHOGONAL and self.tau_p < self.K:
            raise ConfigError(
                f"orthogonal pilots need tau_p >= K (tau_p={self.tau_p}, K={self.K})"
            )

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    @property
    def orthogonal(self) -> bool:
        return self.pilot_mode is PilotMode.ORTHOGONAL


# config-file key -> SystemConfig field
SYSTEM_KEYS = {f.name.lower(): f.name for f in fields(SystemConfig)}


def _coerce(raw: str, target: Any) -> Any:
    if isinstance(target, enum.Enum):
        return type(target)(raw.strip())
    if isinstance(target, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(target, int):
        return int(raw)
    if isinstance(target, float):
        return float(raw)
    return raw.strip()


def parse_key_values(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key.lower()] = value
    return out


def env_overrides(keys, environ: Mapping[str, str] | None = None) -> dict[str, str]:
    """Collect ``CFOP_<KEY>`` environment overrides for the given keys."""
    environ = os.environ if environ is None else environ
    found = {}
    for key in keys:
        env_key = ENV_PREFIX + key.upper()
        if env_key in environ:
            found[key] = environ[env_key]
    return found


def system_config_from_mapping(values: Mapping[str, str], base: SystemConfig | None = None) -> SystemConfig:
    base = SystemConfig() if base is None else base
    unknown = set(values) - set(SYSTEM_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    changes = {}
    for key, raw in values.items():
        name = SYSTEM_KEYS[key]
        try:
            changes[name] = _coerce(raw, getattr(base, name))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return base.replace(**changes)


def load_system_config(path: str | os.PathLike | None = None, environ=None) -> SystemConfig:
    values = {}
    if path is not None:
        with open(path) as fh:
            values = parse_key_values(fh.read(), str(path))
    values.update(env_overrides(SYSTEM_KEYS, environ))
    return system_config_from_mapping(values)


def dump_system_config(cfg: SystemConfig) -> str:
    lines = []
    for key, name in SYSTEM_KEYS.items():
        value = getattr(cfg, name)
        if isinstance(value, enum.Enum):
            value = value.value
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
