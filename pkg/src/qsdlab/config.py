"""Run configuration: TOML sections mapped onto typed settings.

Unknown sections or keys are rejected with the offending key and its line
number, so a typo never silently falls back to a default.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, ModelError
from .model import Model, model_from_config
from .sde import SimConfig

DEFAULT_EPS_LADDER = (0.4, 0.3, 0.2, 0.14, 0.1, 0.07, 0.05)

# section -> {key: type}; a tuple type means "one of these"
_SCHEMA: dict[str, dict[str, Any]] = {
    "": {"seed": int, "threads": int, "output_dir": str},
    "model": {"kind": str, "mu": float, "kappa": float, "theta": float, "sigma": float, "gamma": float},
    "grid": {"n": int, "x_min": float, "x_max": float, "spectral_n": int, "exit_n": int},
    "sim": {"dt": float, "dt_boundary_factor": float, "scheme": str, "t_max": float,
            "n_paths": int, "x0": float, "backend": str},
    "scale": {"x_star": float, "beta": float},
    "fv": {"n_particles": int, "t_burn": float, "t_sample": float},
    "sweep": {"eps": list, "quick_paths": int, "mc_eps_min": float, "mc_dt": float, "law_eps": list, "contrast_eps": list,
              "contrast_paths": int, "oracle_eps": float, "multiscale_eps": float, "multiscale_paths": int},
}


@dataclass(frozen=True)
class GridSettings:
    n: int = 2000
    x_min: float = 1e-8
    x_max: float | None = None
    spectral_n: int = 4000
    exit_n: int = 400


@dataclass(frozen=True)
class FVSettings:
    n_particles: int = 5000
    t_burn: float = 20.0
    t_sample: float = 100.0


@dataclass(frozen=True)
class ScaleSettings:
    x_star: float = 0.25
    beta: float = 0.5


@dataclass(frozen=True)
class SweepSettings:
    """Ladders and budgets of the ``sweep`` suites.

    Monte Carlo mean-time sweeps use the ladder entries ``>= mc_eps_min``
    when ``Lambda0 > 0`` (mean times grow like ``eps^-2`` there), and the
    base step ``mc_dt``: the Euler error in the log-growth rate biases
    mean extinction times by ``O(dt |ln eps|)``, about -10% at
    ``eps = 0.05, dt = 0.01``.
    """

    eps: tuple[float, ...] = DEFAULT_EPS_LADDER
    quick_paths: int = 1000
    mc_eps_min: float = 0.1
    mc_dt: float = 0.0025
    law_eps: tuple[float, ...] = (0.1, 0.07, 0.05)
    contrast_eps: tuple[float, ...] = (0.45, 0.4, 0.35, 0.3)
    contrast_paths: int = 200
    oracle_eps: float = 0.2
    multiscale_eps: float = 0.1
    multiscale_paths: int = 20_000


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs.

    ``model_section`` keeps the raw model keys so that the config hash
    reflects exactly what was asked for.
    """

    model_section: Mapping[str, Any] = field(default_factory=lambda: {"kind": "logistic", "mu": 1.0, "kappa": 1.0,
                                                                       "sigma": 1.0, "gamma": 1.0})
    grid: GridSettings = field(default_factory=GridSettings)
    sim: SimConfig = field(default_factory=SimConfig)
    x0: float = 1.0
    scale: ScaleSettings = field(default_factory=ScaleSettings)
    fv: FVSettings = field(default_factory=FVSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    output_dir: str = "qsdlab-out"
    source: str | None = None

    @property
    def seed(self) -> int:
        return int(self.sim.seed)

    def model(self) -> Model:
        try:
            return model_from_config(self.model_section)
        except ModelError as exc:
            raise ConfigError(f"[model]: {exc}") from exc

    def canonical(self) -> dict:
        """Result-relevant settings (output location and thread count excluded)."""
        sim = asdict(self.sim)
        sim.pop("threads")
        sim.pop("backend")
        return {"model": dict(sorted(self.model_section.items())), "grid": asdict(self.grid), "sim": sim,
                "x0": self.x0, "scale": asdict(self.scale), "fv": asdict(self.fv),
                "sweep": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.sweep).items()}}

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, seed: int | None = None, threads: int | None = None,
                       output_dir: str | None = None) -> "RunConfig":
        sim = self.sim
        try:
            if seed is not None:
                sim = sim.with_(seed=int(seed))
            if threads is not None:
                sim = sim.with_(threads=int(threads))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return replace(self, sim=sim, output_dir=output_dir if output_dir is not None else self.output_dir)


def _line_of(text: str, section: str, key: str) -> int | None:
    """Line (1-based) where ``key`` is assigned inside ``section``."""
    current = ""
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_.\-]+)\s*\]", s)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section and re.match(rf"^\"?{re.escape(key)}\"?\s*=", s):
            return i
    return None


def _where(text, section, key=None) -> str:
    line = _line_of(text, section, key) if text is not None else None
    name = f"{section}.{key}" if section and key else (key or f"[{section}]")
    return f"{name!r}" + (f" (line {line})" if line else "")


def _coerce(value, typ, text, section, key):
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{_where(text, section, key)}: expected a number, got {value!r}")
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{_where(text, section, key)}: expected an integer, got {value!r}")
        return value
    if not isinstance(value, typ):
        raise ConfigError(f"{_where(text, section, key)}: expected {typ.__name__}, got {value!r}")
    return value


def parse_config(text: str, source: str | None = None) -> RunConfig:
    """Parse TOML text into a :class:`RunConfig`.

    Raises
    ------
    ConfigError
        On TOML syntax errors, unknown sections/keys, wrong value types or
        invalid model parameters.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config syntax error: {exc}") from exc

    values: dict[str, dict[str, Any]] = {s: {} for s in _SCHEMA}
    for key, val in raw.items():
        if isinstance(val, dict):
            if key not in _SCHEMA or key == "":
                raise ConfigError(f"unknown section {_where(text, key)}")
            for k, v in val.items():
                if k not in _SCHEMA[key]:
                    raise ConfigError(f"unknown key {_where(text, key, k)}")
                values[key][k] = _coerce(v, _SCHEMA[key][k], text, key, k)
        else:
            if key not in _SCHEMA[""]:
                raise ConfigError(f"unknown key {_where(text, '', key)}")
            values[""][key] = _coerce(val, _SCHEMA[""][key], text, "", key)

    base = RunConfig()
    model_section = dict(base.model_section)
    model_section.update(values["model"])

    sim_keys = dict(values["sim"])
    x0 = sim_keys.pop("x0", base.x0)
    if "seed" in values[""]:
        sim_keys["seed"] = values[""]["seed"]
    if "threads" in values[""]:
        sim_keys["threads"] = values[""]["threads"]
    try:
        sim = SimConfig(**sim_keys)
    except ValueError as exc:
        raise ConfigError(f"[sim]: {exc}") from exc
    if not x0 > 0:
        raise ConfigError(f"{_where(text, 'sim', 'x0')}: x0 must be positive")

    sweep = dict(values["sweep"])
    for key in ("eps", "law_eps", "contrast_eps"):
        if key in sweep:
            eps = sweep[key]
            if not eps or any(isinstance(e, bool) or not isinstance(e, (int, float)) or not e > 0 for e in eps):
                raise ConfigError(f"{_where(text, 'sweep', key)}: expected a list of positive numbers")
            sweep[key] = tuple(float(e) for e in eps)

    cfg = RunConfig(model_section=model_section, grid=GridSettings(**values["grid"]), sim=sim, x0=float(x0),
                    scale=ScaleSettings(**values["scale"]), fv=FVSettings(**values["fv"]),
                    sweep=SweepSettings(**sweep), output_dir=values[""].get("output_dir", base.output_dir),
                    source=source)
    g = cfg.grid
    if g.spectral_n < 2000 or g.n < 10 or g.exit_n < 10:
        raise ConfigError("[grid]: need spectral_n >= 2000 and n, exit_n >= 10")
    if not g.x_min > 0 or (g.x_max is not None and not g.x_max > g.x_min):
        raise ConfigError("[grid]: need 0 < x_min < x_max")
    if not 0 < cfg.scale.x_star < cfg.scale.beta:
        raise ConfigError("[scale]: need 0 < x_star < beta")
    cfg.model()  # model parameter errors surface at parse time
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    """Read a config file; ``None`` gives the built-in defaults."""
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(p)!r}: {exc.strerror}") from exc
    return parse_config(text, source=str(p))
