"""Radio and run configuration.

Configuration files are flat ``key = value`` text, one entry per line, with
``#`` comments.  Keys mirror the simulation-parameter table names
(``K``, ``U``, ``N_RF``, ``epsilon`` ...).  Anything not given falls back to
the defaults below.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Raised for malformed or out-of-range configuration."""


def db_to_lin(x_db):
    return 10.0 ** (x_db / 10.0)


def lin_to_db(x):
    return 10.0 * math.log10(x)


def dbm_to_w(x_dbm):
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def w_to_dbm(x_w):
    return 10.0 * math.log10(x_w) + 30.0


@dataclass(frozen=True)
class RadioConfig:
    K: int = 7
    U: int = 8
    N_RF: int = 4
    N: int = 16
    N_t: int = 16
    g_min: float = 10.0 ** (-6.0 / 10.0)
    fc_GHz: float = 28.0
    W_Hz: float = 250e6
    radius_m: float = 100.0
    Pmax_dBm: float = 24.0
    P0_dBm: float = 24.0
    noise_figure_dB: float = 6.0
    epsilon: float = 0.08
    eta: float = 0.2
    periods: int = 20

    def __post_init__(self):
        for name in ("K", "N_RF", "N", "N_t"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        # U = 0 is allowed so an empty network can be described; nothing gets built for it
        if self.U < 0:
            raise ConfigError(f"U must be >= 0, got {self.U}")
        if self.N_t & (self.N_t - 1):
            raise ConfigError(f"N_t must be a power of two, got {self.N_t}")
        if not 0.0 < self.g_min < 1.0:
            raise ConfigError(f"g_min must lie in (0, 1), got {self.g_min}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.eta < 0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")
        if self.W_Hz <= 0 or self.radius_m <= 0 or self.fc_GHz <= 0:
            raise ConfigError("W_Hz, radius_m and fc_GHz must be positive")
        if self.periods < 1:
            raise ConfigError(f"periods must be >= 1, got {self.periods}")

    @property
    def Pmax_W(self) -> float:
        return dbm_to_w(self.Pmax_dBm)

    @property
    def P0_W(self) -> float:
        return dbm_to_w(self.P0_dBm)

    @property
    def n_users(self) -> int:
        return self.K * self.U

    def replace(self, **changes) -> "RadioConfig":
        return dataclasses.replace(self, **changes)


MODES = ("nif", "greedy", "uncoordinated", "is_based")


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs: radio constants plus run control."""

    radio: RadioConfig = field(default_factory=RadioConfig)
    mode: str = "nif"
    zf: bool = False
    realizations: int = 1
    seed: int = 0
    strict: bool = False
    epsilon_list: tuple = (0.02, 0.04, 0.06, 0.08, 0.10, 0.12)
    pmax_list: tuple = ()
    max_cycle_len: int = 8
    d_source: str = "random"
    d_file: str = ""
    out: str = "out"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.realizations < 1:
            raise ConfigError(f"realizations must be >= 1, got {self.realizations}")
        if self.d_source not in ("random", "random-zero-bound", "file"):
            raise ConfigError(f"unknown d_source {self.d_source!r}")
        if self.max_cycle_len < 3:
            raise ConfigError("max_cycle_len must be >= 3")

    def replace(self, **changes) -> "RunConfig":
        radio_keys = {f.name for f in fields(RadioConfig)}
        radio_changes = {k: v for k, v in changes.items() if k in radio_keys}
        run_changes = {k: v for k, v in changes.items() if k not in radio_keys}
        radio = self.radio.replace(**radio_changes) if radio_changes else self.radio
        return dataclasses.replace(self, radio=radio, **run_changes)


def _coerce(raw: str, proto, key: str, lineno: int):
    try:
        if isinstance(proto, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(proto, int):
            return int(raw)
        if isinstance(proto, float):
            return float(raw)
        if isinstance(proto, tuple):
            return tuple(float(x) for x in raw.replace(",", " ").split())
        return raw.strip().strip('"').strip("'")
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse {key} = {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse flat ``key = value`` text into a :class:`RunConfig`."""
    defaults = RunConfig()
    protos = {f.name: getattr(defaults.radio, f.name) for f in fields(RadioConfig)}
    protos.update({f.name: getattr(defaults, f.name) for f in fields(RunConfig) if f.name != "radio"})
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in protos:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(raw, protos[key], key, lineno)
    try:
        return defaults.replace(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RadioConfig):
        lines.append(f"{f.name} = {_fmt(getattr(cfg.radio, f.name))}")
    for f in fields(RunConfig):
        if f.name == "radio":
            continue
        lines.append(f"{f.name} = {_fmt(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
