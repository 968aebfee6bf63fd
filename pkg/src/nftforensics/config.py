"""Detector settings: defaults, ``key = value`` config files and overrides."""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Mapping, Optional

from .integrity import EVASION_WINDOW
from .trading import ConfigError, ShieldConfig, ShillConfig, WashConfig


def _int(v: str) -> int:
    return int(v)


def _opt_int(v: str) -> Optional[int]:
    return None if v.strip().lower() in ("none", "off", "") else int(v)


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _decimal(v: str) -> Decimal:
    try:
        return Decimal(v)
    except InvalidOperation:
        raise ValueError(f"not a decimal: {v!r}") from None


# key -> (parser, default)
KEYS = {
    "epsilon": (_int, 10),
    "max_component_users": (_int, 50),
    "epsilon_mode": (str, "all_pairs"),
    "hub_degree": (_opt_int, 1000),
    "min_bids": (_int, 3),
    "sigma": (_int, 10),
    "mu": (_decimal, Decimal("0.8")),
    "shield_max_cancel_before_end": (_opt_int, None),
    "shield_require_no_outbidding": (_bool, False),
    "evasion_window": (_int, EVASION_WINDOW),
    "name_max_distance": (_int, 2),
    "name_min_len": (_int, 8),
    "name_min_assets": (_int, 10),
    "hamming_threshold": (_int, 0),
}
ALIASES = {"n": "min_bids", "ε": "epsilon", "σ": "sigma", "μ": "mu"}


@dataclass(frozen=True)
class Settings:
    wash: WashConfig = field(default_factory=WashConfig)
    shill: ShillConfig = field(default_factory=ShillConfig)
    shield: ShieldConfig = field(default_factory=ShieldConfig)
    evasion_window: int = EVASION_WINDOW
    name_max_distance: int = 2
    name_min_len: int = 8
    name_min_assets: int = 10
    hamming_threshold: int = 0
    values: Mapping = field(default_factory=dict, compare=False)

    def echo(self) -> dict:
        """All effective values as strings, for the report."""
        return {k: ("none" if v is None else str(v).lower() if isinstance(v, bool) else str(v))
                for k, v in sorted(self.values.items())}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        key = ALIASES.get(key, key)
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value, f"{source}:{lineno}")
    return out


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config_text(text, str(path))


def _coerce(key: str, value, where: str):
    if not isinstance(value, str):
        return value
    try:
        return KEYS[key][0](value)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key}: {exc}") from None


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def build_settings(file_values: Optional[Mapping] = None, overrides: Optional[Mapping] = None,
                   config_source: str = "config") -> Settings:
    """Merge defaults < config file < overrides and validate every threshold.

    Errors are :class:`ConfigError` naming the file or flag that set the bad value.
    """
    values = {k: default for k, (_, default) in KEYS.items()}
    origin = {k: "default" for k in KEYS}
    for layer, is_flag in ((file_values or {}, False), (overrides or {}, True)):
        for k, v in layer.items():
            k = ALIASES.get(k, k)
            if k not in KEYS:
                raise ConfigError(f"unknown setting {k!r}")
            where = _flag(k) if is_flag else config_source
            values[k] = _coerce(k, v, where)
            origin[k] = where
    try:
        for k in ("evasion_window", "name_max_distance", "name_min_len", "name_min_assets", "hamming_threshold"):
            if values[k] < 0:
                raise ConfigError(f"{k} must be >= 0")
        if values["hamming_threshold"] > 64:
            raise ConfigError("hamming_threshold must be <= 64")
        return Settings(
            wash=WashConfig(values["epsilon"], values["max_component_users"], values["epsilon_mode"],
                            values["hub_degree"]),
            shill=ShillConfig(values["min_bids"], values["sigma"], values["mu"], values["hub_degree"]),
            shield=ShieldConfig(values["shield_max_cancel_before_end"], values["shield_require_no_outbidding"]),
            evasion_window=values["evasion_window"],
            name_max_distance=values["name_max_distance"],
            name_min_len=values["name_min_len"],
            name_min_assets=values["name_min_assets"],
            hamming_threshold=values["hamming_threshold"],
            values=values,
        )
    except ConfigError as exc:
        key = str(exc).split(" ", 1)[0]
        key = key if key in origin else "shield_" + key
        if key in origin:
            raise ConfigError(f"{origin[key]}: {exc}") from None
        raise
