"""Simulation configuration: defaults, flat key=value files, manifests.

Defaults follow the evaluation setup: 400x400 m arena, coverage r=60 m,
slot 100 us, transmit power 30 dBm, processing power 10 dBm, path loss
10^-3.53 at 1 m with exponent 4.2 on device-to-device links and 2.0 on
reflected segments, N=250 reflecting elements, Rician K=10 dB, total
delay budget 50 ms, harvester (24 mW, a=150, b=0.014), BER target 1e-6,
blocklength 1000 at error probability 1e-4.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    """Bad key, bad value, or unreadable config file."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


@dataclass(frozen=True)
class SimConfig:
    # Topology
    arena_m: float = 400.0
    coverage_m: float = 60.0
    iu_count: int = 400
    ris_spacing_m: float | None = None  # None -> coverage_m / 2
    ris_elements: int = 250
    # Traffic (scalar or one value per IU)
    lambda_off_ms: float | tuple[float, ...] = 4.0
    mu_on_ms: float | tuple[float, ...] = 4.0
    slot_us: float = 100.0
    delta: float = 0.1
    p_th: float = 0.01
    # Channel / link budget
    rho_l_db: float = -35.3
    alpha_d2d: float = 4.2
    alpha_other: float = 2.0
    noise_dbm: float = -100.0
    tx_power_dbm: float = 30.0
    proc_power_dbm: float = 10.0
    rician_k_db: float = 10.0
    blocklength: int = 1000
    epsilon: float = 1e-4
    # Modulation / harvesting / demand
    target_ber: float = 1e-6
    threshold_rule: str = "table3"  # or "eqtext"
    mh_mw: float = 24.0
    eh_slope: float = 150.0
    eh_threshold_w: float = 0.014
    packets: int = 4
    bits_per_packet: int = 8
    # Routing
    total_delay_ms: float = 50.0
    fixed_rate_bits: int = 2  # constellation pinned by the fixed-modulation baseline
    # Metrics
    throughput_term: str = "size"  # Eq-verbatim constellation size; "bits" for log2(m)
    # Mobility
    v_max_mps: float = 0.0
    # Optional fixed endpoints (defaults: experiments pick their own)
    source_xy: tuple[float, float] | None = None
    dest_xy: tuple[float, float] | None = None

    def __post_init__(self):
        if self.arena_m <= 0 or self.coverage_m <= 0:
            raise ConfigError("arena_m and coverage_m must be positive")
        if self.iu_count < 0:
            raise ConfigError("iu_count must be nonnegative")
        if self.ris_elements < 1:
            raise ConfigError("ris_elements must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if not 0.0 < self.p_th < 1.0:
            raise ConfigError("p_th must lie in (0, 1)")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in (0, 1)")
        if not 0.0 < self.target_ber < 1.0:
            raise ConfigError("target_ber must lie in (0, 1)")
        if self.threshold_rule not in ("table3", "eqtext"):
            raise ConfigError(f"threshold_rule must be 'table3' or 'eqtext', got {self.threshold_rule!r}")
        if self.throughput_term not in ("size", "bits"):
            raise ConfigError(f"throughput_term must be 'size' or 'bits', got {self.throughput_term!r}")
        if self.slot_us <= 0 or self.total_delay_ms <= 0:
            raise ConfigError("slot_us and total_delay_ms must be positive")
        if self.packets < 1 or self.bits_per_packet < 1:
            raise ConfigError("packets and bits_per_packet must be >= 1")
        for name in ("lambda_off_ms", "mu_on_ms"):
            val = getattr(self, name)
            vals = val if isinstance(val, tuple) else (val,)
            if not vals or any(v <= 0 for v in vals):
                raise ConfigError(f"{name} values must be positive")

    # Derived quantities, SI units.

    @property
    def slot_s(self) -> float:
        return self.slot_us * 1e-6

    @property
    def total_delay_s(self) -> float:
        return self.total_delay_ms * 1e-3

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)

    @property
    def proc_power_w(self) -> float:
        return dbm_to_watts(self.proc_power_dbm)

    @property
    def noise_w(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    @property
    def rho_l(self) -> float:
        return db_to_linear(self.rho_l_db)

    @property
    def ris_spacing(self) -> float:
        return self.coverage_m / 2.0 if self.ris_spacing_m is None else self.ris_spacing_m

    @property
    def demand_bits(self) -> int:
        return self.packets * self.bits_per_packet

    def with_overrides(self, **kwargs) -> "SimConfig":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


_FIELD_TYPES = {f.name: f.type for f in fields(SimConfig)}

_INT_KEYS = {"iu_count", "ris_elements", "blocklength", "packets", "bits_per_packet", "fixed_rate_bits"}
_STR_KEYS = {"threshold_rule", "throughput_term"}
_LIST_OK = {"lambda_off_ms", "mu_on_ms"}
_PAIR_KEYS = {"source_xy", "dest_xy"}
_NULLABLE = {"ris_spacing_m", "source_xy", "dest_xy"}


def _coerce(key: str, raw) -> object:
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("none", "null")):
        if key in _NULLABLE:
            return None
        raise ConfigError(f"config key '{key}' cannot be null")
    if key in _STR_KEYS:
        return str(raw).strip()
    if isinstance(raw, str) and "," in raw:
        parts = [p for p in (s.strip() for s in raw.split(",")) if p]
        raw = [float(p) for p in parts]
    if isinstance(raw, (list, tuple)):
        if key in _LIST_OK:
            return tuple(float(v) for v in raw)
        if key in _PAIR_KEYS:
            if len(raw) != 2:
                raise ConfigError(f"config key '{key}' needs exactly two values")
            return (float(raw[0]), float(raw[1]))
        raise ConfigError(f"config key '{key}' does not accept a list")
    try:
        if key in _INT_KEYS:
            return int(str(raw).strip())
        return float(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key '{key}': cannot parse value {raw!r}") from exc


def config_from_mapping(mapping: dict, base: SimConfig | None = None) -> SimConfig:
    """Build a config from a flat mapping; unknown keys are rejected by name."""
    base = base or SimConfig()
    overrides = {}
    for key, raw in mapping.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key '{key}'")
        overrides[key] = _coerce(key, raw)
    return base.with_overrides(**overrides)


def load_config(path: str | Path, base: SimConfig | None = None) -> SimConfig:
    """Load a flat ``key = value`` file or a JSON run manifest.

    Lines starting with ``#`` and blank lines are ignored. A JSON file may
    either be a flat mapping or a manifest with a ``"config"`` entry.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        return config_from_mapping(data, base)
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        mapping[key.strip()] = value.split("#", 1)[0].strip()
    return config_from_mapping(mapping, base)
