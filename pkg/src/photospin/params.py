"""Device parameters, protocol settings and the plain-text config format.

Internal units are fixed throughout the package: energies in µeV, times in
ns, magnetic fields in T (Overhauser rms fields are stored in mT, as they
are usually quoted). Gate-referred noise is stored in volts and converted to
detuning energies through the lever arm by :func:`detuning_noise`.

Config grammar
--------------
One ``key = value`` pair per line. ``#`` starts a comment that runs to the
end of the line. Blank lines are ignored. Numeric values may carry a unit
suffix directly after the number (``100ueV``, ``-2.03meV``, ``5T``,
``50mT``, ``1ns``, ``8uV``, ``5e-20V2/Hz``); a bare number is read in the
internal unit of the key. Keys are case-sensitive and listed in
:data:`DEVICE_KEYS` and :data:`PROTOCOL_KEYS`.
"""
from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, fields
from pathlib import Path

HBAR = 0.6582119569  # µeV·ns
MU_B = 57.883818060  # µeV/T


class ConfigError(ValueError):
    """Raised for unreadable config files and invalid parameter values."""


# unit tables: suffix -> multiplier into the internal unit of that dimension
_UNITS = {
    "energy": {"": 1.0, "ueV": 1.0, "µeV": 1.0, "meV": 1e3, "eV": 1e6},
    "field": {"": 1.0, "T": 1.0, "mT": 1e-3, "uT": 1e-6, "µT": 1e-6},
    "field_mT": {"": 1.0, "mT": 1.0, "T": 1e3, "uT": 1e-3, "µT": 1e-3},
    "time": {"": 1.0, "ns": 1.0, "ps": 1e-3, "us": 1e3, "µs": 1e3, "ms": 1e6, "s": 1e9},
    "voltage": {"": 1.0, "V": 1.0, "mV": 1e-3, "uV": 1e-6, "µV": 1e-6},
    "psd_voltage": {"": 1.0, "V2/Hz": 1.0, "V^2/Hz": 1.0},
    "number": {"": 1.0},
}


@dataclass(frozen=True)
class DeviceParams:
    """Physical parameters of the exciton / gate-defined-dot device.

    Defaults are the GaAs parameter set used throughout the package. The
    record is immutable; use :func:`dataclasses.replace` to derive variants.
    Validation is explicit (:meth:`validate`) so that limiting cases such as
    ``t_c = 0`` can still be fed to the matrix builders.
    """

    delta0: float = 100.0
    delta1: float = 0.0
    delta2: float = 0.0
    B: float = 5.0
    g_e: float = -0.44
    g_h: float = 0.2
    g_e_tilde: float = -0.44
    t_c: float = 50.0
    tau: float = 1.0
    eps_rms_gate: float = 8e-6
    S_eps_gate: float = 5e-20
    lever_arm_L: float = 10.0
    B_of_rms: float = 50.0
    B_of_rms_tilde: float = 5.0
    eta: float = 0.0
    t_dd: float = 50.0
    eps_dd: float = -2030.0
    U: float = 2000.0
    V_plus: float = 0.8
    V_minus: float = 0.0
    swap_dd_singlets: bool = False
    hbar: float = HBAR
    mu_B: float = MU_B

    def validate(self) -> "DeviceParams":
        """Check physical invariants; return self so calls can be chained."""
        for key in ("delta0", "B", "t_c", "tau", "t_dd", "U", "lever_arm_L"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)!r}")
        if not self.V_minus >= 0:
            raise ConfigError(f"V_minus must be non-negative, got {self.V_minus!r}")
        if not self.V_plus >= self.V_minus:
            raise ConfigError(f"V_plus must be >= V_minus, got {self.V_plus!r}")
        if not self.g_e < 0:
            raise ConfigError(f"g_e must be negative, got {self.g_e!r}")
        if not self.g_h > 0:
            raise ConfigError(f"g_h must be positive, got {self.g_h!r}")
        for key in ("eps_rms_gate", "S_eps_gate", "B_of_rms", "B_of_rms_tilde"):
            if not getattr(self, key) >= 0:
                raise ConfigError(f"{key} must be non-negative, got {getattr(self, key)!r}")
        if not 0 <= self.eta <= 1e-3:
            raise ConfigError(f"eta must lie in [0, 0.001], got {self.eta!r}")
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float) and math.isnan(value):
                raise ConfigError(f"{f.name} is NaN")
        return self


SINGLE_SPIN = "single-spin"
SINGLET_TRIPLET = "singlet-triplet"
_PROTOCOL_ALIASES = {
    "single-spin": SINGLE_SPIN,
    "single": SINGLE_SPIN,
    "ss": SINGLE_SPIN,
    "singlet-triplet": SINGLET_TRIPLET,
    "st": SINGLET_TRIPLET,
}


def normalize_protocol(name: str) -> str:
    try:
        return _PROTOCOL_ALIASES[name.strip().lower()]
    except KeyError:
        raise ConfigError(
            f"unknown protocol {name!r}; expected one of {sorted(set(_PROTOCOL_ALIASES))}"
        ) from None


@dataclass(frozen=True)
class ProtocolConfig:
    """Settings of one protocol run (all detunings in µeV).

    ``grid_start``/``grid_stop`` bound the spectrum grid. For the
    singlet-triplet protocol the same grid is used to search the excitation
    point and the drive point, so it must extend below ``ep_search_start``.
    ``eps_ep`` is the excitation point of the single-spin protocol; the
    singlet-triplet protocol solves for it unless ``eps_ep`` is set
    explicitly (``None`` means "solve").
    """

    protocol: str = SINGLE_SPIN
    grid_start: float = -1500.0
    grid_stop: float = 1500.0
    grid_step: float = 1.0
    eps_ep: float | None = -35.0
    eps_final: float = 250.0
    p_lz: float = 0.01
    ep_search_start: float = 0.0
    ep_search_stop: float = 500.0
    vp_target: float = 0.2
    drive_search_start: float | None = None
    drive_search_stop: float = 600.0
    lambda_tolerance: float = 0.5

    def validate(self) -> "ProtocolConfig":
        normalize_protocol(self.protocol)
        if not self.grid_step > 0:
            raise ConfigError(f"grid_step must be positive, got {self.grid_step!r}")
        if not self.grid_start < self.grid_stop:
            raise ConfigError("grid_start must be below grid_stop")
        if not 0 < self.p_lz < 1:
            raise ConfigError(f"p_lz must lie in (0, 1), got {self.p_lz!r}")
        if self.eps_ep is not None and not self.eps_ep < self.eps_final:
            raise ConfigError(
                f"eps_ep ({self.eps_ep!r}) must be below eps_final ({self.eps_final!r})"
            )
        if not 0 < self.vp_target < 1:
            raise ConfigError(f"vp_target must lie in (0, 1), got {self.vp_target!r}")
        if not self.lambda_tolerance > 0:
            raise ConfigError("lambda_tolerance must be positive")
        return self

    @property
    def kind(self) -> str:
        return normalize_protocol(self.protocol)


# key -> (dimension, target record)
DEVICE_KEYS = {
    "delta0": "energy",
    "delta1": "energy",
    "delta2": "energy",
    "B": "field",
    "g_e": "number",
    "g_h": "number",
    "g_e_tilde": "number",
    "t_c": "energy",
    "tau": "time",
    "eps_rms_gate": "voltage",
    "S_eps_gate": "psd_voltage",
    "lever_arm_L": "number",
    "B_of_rms": "field_mT",
    "B_of_rms_tilde": "field_mT",
    "eta": "number",
    "t_dd": "energy",
    "eps_dd": "energy",
    "U": "energy",
    "V_plus": "energy",
    "V_minus": "energy",
    "swap_dd_singlets": "bool",
    "hbar": "number",
    "mu_B": "number",
}

PROTOCOL_KEYS = {
    "protocol": "text",
    "grid_start": "energy",
    "grid_stop": "energy",
    "grid_step": "energy",
    "eps_ep": "energy_or_none",
    "eps_final": "energy",
    "p_lz": "number",
    "ep_search_start": "energy",
    "ep_search_stop": "energy",
    "vp_target": "number",
    "drive_search_start": "energy_or_none",
    "drive_search_stop": "energy",
    "lambda_tolerance": "number",
}

_NUMBER_RE = re.compile(
    r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf)\s*([A-Za-zµ^/0-9]*)\s*$"
)


def parse_quantity(text: str, dimension: str, key: str = "?") -> float:
    """Parse ``'100ueV'``-style text into a float in the internal unit."""
    m = _NUMBER_RE.match(text)
    if not m:
        raise ConfigError(f"{key}: cannot parse number from {text!r}")
    value, suffix = float(m.group(1)), m.group(2)
    table = _UNITS[dimension]
    if suffix not in table:
        raise ConfigError(
            f"{key}: unit {suffix!r} not valid here; allowed: {sorted(u for u in table if u)}"
        )
    return value * table[suffix]


def _parse_value(key: str, kind: str, text: str):
    if kind == "text":
        return text.strip()
    if kind == "bool":
        t = text.strip().lower()
        if t in ("1", "true", "yes", "on"):
            return True
        if t in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    if kind == "energy_or_none":
        if text.strip().lower() in ("none", "auto", ""):
            return None
        return parse_quantity(text, "energy", key)
    return parse_quantity(text, kind, key)


def parse_config_text(text: str, source: str = "<string>"):
    """Parse config text into ``(DeviceParams, ProtocolConfig)`` and validate both."""
    dev, proto = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in DEVICE_KEYS:
            dev[key] = _parse_value(key, DEVICE_KEYS[key], value)
        elif key in PROTOCOL_KEYS:
            proto[key] = _parse_value(key, PROTOCOL_KEYS[key], value)
        else:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
    params = DeviceParams(**dev).validate()
    cfg = ProtocolConfig(**proto)
    if "protocol" in proto:
        cfg = dataclasses.replace(cfg, protocol=normalize_protocol(cfg.protocol))
    return params, cfg.validate()


def load_config(path) -> tuple[DeviceParams, ProtocolConfig]:
    """Read a config file; keys that are not set keep their defaults."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path))


def dump_config(params: DeviceParams, cfg: ProtocolConfig | None = None) -> str:
    """Serialize records to config text that :func:`parse_config_text` reads back exactly.

    Floats are written with ``repr`` so every value round-trips bit for bit.
    Values are written in the internal units (no suffix).
    """
    lines = ["# device parameters (µeV, ns, T; Overhauser rms in mT; gate noise in V, V^2/Hz)"]
    for f in fields(params):
        lines.append(f"{f.name} = {getattr(params, f.name)!r}")
    if cfg is not None:
        lines.append("# protocol settings (µeV)")
        for f in fields(cfg):
            value = getattr(cfg, f.name)
            lines.append(f"{f.name} = {value if isinstance(value, str) else repr(value)}")
    return "\n".join(lines) + "\n"


def detuning_noise(params: DeviceParams) -> tuple[float, float]:
    """Convert gate-referred charge noise into detuning noise.

    Returns ``(eps_rms, S_eps)`` in µeV and µeV²·ns. A gate voltage ``V``
    shifts the detuning by ``e·V/L``, so the rms scales as ``1/L`` and the
    spectral density as ``1/L²``. The defaults give 0.8 µeV and
    0.5 µeV²·ns.
    """
    L = params.lever_arm_L
    if not L > 0:
        raise ConfigError(f"lever_arm_L must be positive, got {L!r}")
    eps_rms = params.eps_rms_gate * 1e6 / L  # V -> µeV per elementary charge
    S_eps = params.S_eps_gate * 1e12 * 1e9 / L**2  # V²·s -> µeV²·ns
    return eps_rms, S_eps


def overhauser_rms_tesla(params: DeviceParams) -> tuple[float, float]:
    """Overhauser rms fields ``(B_OF, B̃_OF)`` in tesla."""
    return params.B_of_rms * 1e-3, params.B_of_rms_tilde * 1e-3


PRESET_DIR = Path(__file__).with_name("presets")


def preset_path(name: str) -> Path:
    path = PRESET_DIR / f"{name}.conf"
    if not path.exists():
        known = sorted(p.stem for p in PRESET_DIR.glob("*.conf"))
        raise ConfigError(f"unknown preset {name!r}; available: {known}")
    return path


def load_preset(name: str) -> tuple[DeviceParams, ProtocolConfig]:
    return load_config(preset_path(name))


__all__ = [
    "HBAR",
    "MU_B",
    "ConfigError",
    "DeviceParams",
    "ProtocolConfig",
    "SINGLE_SPIN",
    "SINGLET_TRIPLET",
    "normalize_protocol",
    "parse_quantity",
    "parse_config_text",
    "load_config",
    "dump_config",
    "detuning_noise",
    "overhauser_rms_tesla",
    "load_preset",
    "preset_path",
]
