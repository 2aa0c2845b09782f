"""``key = value`` run configuration shared by all CLI commands."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional

__all__ = ["RunConfig", "ConfigError", "parse_config", "load_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # corpus
    image_size: int = 64
    count_train: int = 512
    count_val: int = 32
    count_test: int = 16
    degrade_gains: str = "0.45,0.85,0.75"
    degrade_blur_sigma: float = 1.2
    degrade_haze_color: str = "-0.1,0.25,0.15"
    degrade_haze_weight: float = 0.25
    degrade_noise_sigma: float = 0.01
    # schedule
    T: int = 2000
    beta_min: float = 1e-6
    beta_max: float = 1e-2
    # network / training
    width: int = 16
    gate: str = "add"
    lr: float = 1e-4
    lr_drop_step: int = 0
    lr_drop_factor: float = 0.1
    batch_size: int = 8
    steps: int = 20000
    checkpoint_interval: int = 1000
    # sampling
    eta: float = 0.0
    sampling_steps: int = 10
    piecewise_m: int = 504
    piecewise_d1: int = 84
    piecewise_d2: int = 374
    # evolutionary search
    ea_Lg: int = 11
    ea_pc: float = 0.5
    ea_pm: float = 0.1
    ea_epochs: int = 50
    ea_K: int = 10
    oracle_sigma0: float = 0.05
    # benchmark
    s_values: str = "40,20,10"

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTERS = {"int": int, "float": float, "str": str}


def _cast(key: str, raw: str, lineno: Optional[int] = None) -> Any:
    where = f"line {lineno}: " if lineno is not None else ""
    try:
        return _CASTERS[_TYPES[key]](raw)
    except ValueError:
        raise ConfigError(f"{where}bad value {raw!r} for {key} ({_TYPES[key]})") from None


def parse_config(text: str, base: RunConfig = RunConfig()) -> RunConfig:
    """Parse config text; unknown keys and malformed lines name their line."""
    values: Dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _cast(key, raw, lineno)
    return replace(base, **values)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    return parse_config(p.read_text())
