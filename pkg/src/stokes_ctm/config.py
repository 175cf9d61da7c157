"""Experiment configuration: one dataclass, INI files with flat sections."""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError

# section of each field in the INI file
_SECTIONS = {
    "domain": ("half_width", "collar_width", "nx"),
    "modes": ("M", "M_f"),
    "horizons": ("T_list", "T_wave", "T_obs"),
    "kernel": ("L", "n_s", "n_t", "refine"),
    "tolerances": ("tol", "kernel_tol", "cg_tol"),
    "run": ("seed", "samples", "out", "threads"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    half_width: float = 0.5
    collar_width: float = 0.15
    nx: int = 32
    M: int = 200
    M_f: int = 40
    T_list: tuple = (0.2, 0.3, 0.4, 0.5, 0.7, 1.0)
    T_wave: float = 2.0
    T_obs: tuple = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
    L: float = 2.5
    n_s: int = 1001
    n_t: int = 129
    refine: int = 2
    tol: float = 1e-4
    kernel_tol: float = 1e-7
    cg_tol: float = 1e-12
    seed: int = 0
    samples: int = 20
    out: str = "runs"
    threads: int = 1
    extra: dict = field(default_factory=dict, compare=False)

    def validate(self) -> "ExperimentConfig":
        if not 0 < self.collar_width < self.half_width:
            raise ConfigError("need 0 < collar_width < half_width")
        if self.nx < 8:
            raise ConfigError("nx must be at least 8")
        if not 1 <= self.M_f <= self.M:
            raise ConfigError("need 1 <= M_f <= M")
        if not self.T_list or min(self.T_list) <= 0:
            raise ConfigError("T_list must hold positive horizons")
        t_max = min(math.pi / 2, self.L) ** 2
        bad = [T for T in self.T_list if T > t_max]
        if bad:
            raise ConfigError(f"horizons {bad} exceed the kernel limit min(pi/2, L)^2 = {t_max:.4f}")
        if self.n_s % 2 == 0 or self.n_s < 8 * self.L / math.sqrt(min(self.T_list)):
            raise ConfigError("n_s must be odd and at least 8 L / sqrt(min T)")
        if self.n_t < 8 or self.refine < 1:
            raise ConfigError("n_t >= 8 and refine >= 1 required")
        if self.threads < 1 or self.samples < 1:
            raise ConfigError("threads and samples must be positive")
        if self.T_wave <= 0 or min(self.T_obs) <= 0:
            raise ConfigError("wave and observability horizons must be positive")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        d["T_list"] = list(self.T_list)
        d["T_obs"] = list(self.T_obs)
        return d

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw).validate()


def _parse(name: str, raw: str, default):
    try:
        if isinstance(default, tuple):
            return tuple(float(x) for x in raw.replace(",", " ").split())
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    defaults = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in known or key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _parse(key, raw, getattr(defaults, key))
    return replace(defaults, **values).validate()


def write_config(cfg: ExperimentConfig, path) -> Path:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    d = cfg.to_dict()
    for section, keys in _SECTIONS.items():
        cp[section] = {k: (" ".join(repr(float(x)) for x in d[k]) if isinstance(d[k], list)
                           else repr(d[k]) if isinstance(d[k], float) else str(d[k]))
                       for k in keys}
    path = Path(path)
    with open(path, "w") as fh:
        cp.write(fh)
    return path
