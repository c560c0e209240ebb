"""Experiment configuration: INI-style files merged with command-line flags."""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..lattice import DistributionSpec, LatticeError

EXPERIMENTS = (
    "ids",
    "dos",
    "wegner",
    "spectral-averaging",
    "lifshitz-fit",
    "minami",
    "probe-lemma",
    "probe-cutoff",
    "probe-decay",
    "probe-heat",
    "probe-decoupling",
)

# experiments that need L divisible by 4 (sublattice step)
NEEDS_L4 = {"probe-heat", "probe-decoupling"}
# experiments that never touch the lattice
NO_LATTICE = {"probe-lemma", "probe-cutoff"}

OUTPUT_ENV = "ANDERSONLAB_OUTPUT_DIR"

# Experiment-specific options with their defaults.  Values are kept as the
# parsed Python types so the canonical JSON (and thus the hash) is stable.
DEFAULTS: dict[str, dict] = {
    "ids": {"emin": 0.0, "emax": 1.0, "npoints": 41},
    "dos": {"bins": 100, "bandwidth": None},
    "wegner": {"interval": [[0.0, 0.1]], "energies": []},
    "spectral-averaging": {"site": 0, "interval": [[0.0, 0.05], [0.0, 0.2], [1.0, 1.3]], "nodes": 64},
    "lifshitz-fit": {
        "source": "ids", "emin": 0.05, "emax": 0.3, "npoints": 26, "window": [0.05, 0.3],
        "bin_width": 0.025, "min_count": 1, "ell_max": None,
    },
    "minami": {"energy": None, "half_width": None, "bins": 90, "spacings": 5.0},
    "probe-lemma": {"cases": 10000, "max_dim": 12},
    "probe-cutoff": {"energies": [0.1, 0.01]},
    "probe-decay": {"energy": 0.5, "fit_range": None},
    "probe-heat": {"cases": 100, "t": [0.5, 2.0, 8.0], "energy": 0.25},
    "probe-decoupling": {"energy": 0.2, "eps": 0.1, "interval": None, "k": None},
}

COMMON = {"dim": 1, "L": 32, "dist": "uniform:0,1", "samples": 100, "seed": 0, "workers": 1, "output": None}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending option."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class ExperimentConfig:
    experiment: str
    dim: int
    L: int
    dist: str
    samples: int
    seed: int
    workers: int = 1
    output: str | None = None
    params: dict = field(default_factory=dict)

    def distribution(self) -> DistributionSpec:
        return DistributionSpec.parse(self.dist)

    def canonical(self) -> dict:
        """Fields that determine results; worker count and output path do not."""
        d = asdict(self)
        d.pop("workers")
        d.pop("output")
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), allow_nan=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def output_paths(self) -> tuple[Path, Path]:
        stem = f"{self.experiment}-{self.hash[:12]}"
        out = self.output or os.environ.get(OUTPUT_ENV) or "results"
        p = Path(out)
        if p.suffix == ".csv":
            return p, p.with_suffix(".manifest.json")
        return p / f"{stem}.csv", p / f"{stem}.manifest.json"


def _floats(text, field: str) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(field, f"expected comma-separated numbers, got {text!r}") from None


def _intervals(values, field: str) -> list[list[float]]:
    out = []
    for v in values if isinstance(values, (list, tuple)) and values and isinstance(values[0], (list, tuple, str)) else [values]:
        pair = _floats(v, field)
        if len(pair) != 2 or pair[0] > pair[1]:
            raise ConfigError(field, f"interval must be 'lo,hi' with lo <= hi, got {v!r}")
        out.append(pair)
    return out


def _coerce(name: str, value, experiment: str):
    """Convert a raw string/flag value to the type of its default."""
    if value is None:
        return None
    try:
        if name in ("dim", "L", "samples", "seed", "workers", "npoints", "bins", "cases", "max_dim", "nodes",
                    "min_count"):
            return int(value)
        if name in ("emin", "emax", "bandwidth", "energy", "half_width", "eps", "spacings", "bin_width", "ell_max"):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"invalid value {value!r}") from None
    if name in ("energies", "t"):
        return _floats(value, name)
    if name in ("window", "fit_range"):
        pair = _floats(value, name)
        if len(pair) != 2:
            raise ConfigError(name, "expected 'lo,hi'")
        return pair
    if name == "interval":
        return _intervals(value, name)
    if name == "site":
        vals = [int(v) for v in _floats(value, name)]
        return vals[0] if len(vals) == 1 else vals
    if name == "k":
        return [int(v) for v in _floats(value, name)]
    return value


def read_config_file(path: str | os.PathLike) -> dict:
    """Flatten a sectioned key-value file into option names.

    The ``[experiment]`` section may carry ``name``; every other key in any
    section is an option name (dashes and underscores are interchangeable).
    Repeated intervals are written ``interval = 0,0.05; 0,0.2``.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    flat = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            key = key.replace("-", "_")
            if section == "experiment" and key == "name":
                key = "experiment"
            if key == "interval" and ";" in value:
                value = [v for v in value.split(";") if v.strip()]
            flat[key] = value
    return flat


def build_config(values: dict) -> ExperimentConfig:
    """Validate merged options (file values overridden by flags) into a config."""
    name = values.get("experiment")
    if name not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    allowed = set(COMMON) | set(DEFAULTS[name]) | {"experiment"}
    unknown = sorted(k for k, v in values.items() if k not in allowed and v is not None)
    if unknown:
        raise ConfigError(unknown[0], f"unknown option for experiment {name!r}")
    merged = {**COMMON, **DEFAULTS[name]}
    for key, value in values.items():
        if key != "experiment" and value is not None:
            merged[key] = _coerce(key, value, name)

    d, L = merged["dim"], merged["L"]
    if d < 1:
        raise ConfigError("dim", "must be >= 1")
    if name not in NO_LATTICE:
        if L % 2:
            raise ConfigError("L", f"L must be even, got {L}")
        if L < 4:
            raise ConfigError("L", f"L must be >= 4, got {L}")
        if name in NEEDS_L4 and L % 4:
            raise ConfigError("L", f"L must be divisible by 4, got {L}")
    try:
        DistributionSpec.parse(merged["dist"])
    except LatticeError as exc:
        raise ConfigError("dist", str(exc)) from None
    if merged["samples"] < 1:
        raise ConfigError("samples", "must be >= 1")
    if merged["workers"] < 1:
        raise ConfigError("workers", "must be >= 1")
    _validate_params(name, merged)

    params = {k: merged[k] for k in DEFAULTS[name]}
    return ExperimentConfig(name, d, L, merged["dist"], merged["samples"], merged["seed"], merged["workers"],
                            merged["output"], params)


def _validate_params(name: str, m: dict):
    if name in ("ids", "lifshitz-fit"):
        if m["npoints"] < 1 or not m["emin"] < m["emax"] and m["npoints"] > 1:
            raise ConfigError("emin", "energy grid needs emin < emax and npoints >= 1")
    if name == "lifshitz-fit":
        lo, hi = m["window"]
        if not 0 < lo < hi < 1:
            raise ConfigError("window", "must satisfy 0 < lo < hi < 1")
        if m["source"] not in ("ids", "dos"):
            raise ConfigError("source", "must be 'ids' or 'dos'")
    if name == "wegner":
        for lo, hi in m["interval"]:
            if not hi > lo:
                raise ConfigError("interval", "Wegner ratio needs an interval of positive width")
        if any(e <= 0 for e in m["energies"]):
            raise ConfigError("energies", "must be positive")
    if name == "probe-decoupling":
        if not 0 < m["eps"] < m["dim"] / 2:
            raise ConfigError("eps", f"must lie in (0, d/2) = (0, {m['dim'] / 2})")
    if name in ("probe-decay", "probe-decoupling", "probe-heat") and not m["energy"] > 0:
        raise ConfigError("energy", "must be positive")
    if name == "probe-cutoff" and any(e <= 0 for e in m["energies"]):
        raise ConfigError("energies", "must be positive")
    if name == "dos" and m["bins"] < 1:
        raise ConfigError("bins", "must be >= 1")
