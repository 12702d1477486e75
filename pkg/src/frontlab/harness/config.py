"""Experiment configuration: one JSON document drives every subcommand.

The document has four sub-sections mirroring the library layers (model,
grid, noise, sim) plus the experiment-level knobs. Every run artifact
embeds the sha256 of the canonical serialization, so any reported number
can be traced back to the exact configuration that produced it.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from ..model import GainParams, GridSpec, KernelParams
from ..noise import NoiseSpec
from ..sim import SimConfig

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "DEFAULT_CONFIG",
    "load_config",
    "config_from_dict",
    "config_hash",
]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


# Desk-scale defaults: the moving-front model on the wide grid, the
# trace-class forcing used throughout the test suite, and the ladders the
# report subcommand expects.
DEFAULT_CONFIG: dict = {
    "schema": 1,
    "model": {"gamma": 8.0, "theta": 0.6, "sigma": 1.0},
    "grid": {"half_length": 40.0, "n_points": 2048},
    "noise": {"rank": 16, "corr_length": 2.0, "envelope_width": 10.0,
              "amplitude": 0.025},
    "sim": {"horizon": 10.0, "dt": 1e-3, "q_exponent": 0.05,
            "record_stride": 10, "initial_eta": "mode-mix"},
    "epsilon_ladder": [0.1, 0.05, 0.025, 0.0125],
    "n_paths": 40,
    "m_ladder": [10.0, 100.0, 1000.0],
    "seed": 12345,
    "output_dir": "out",
}

_SECTION_KEYS = {
    "model": {"gamma", "theta", "sigma"},
    "grid": {"half_length", "n_points"},
    "noise": {"rank", "corr_length", "envelope_width", "amplitude"},
    "sim": {"horizon", "dt", "q_exponent", "record_stride", "initial_eta"},
}
_TOP_KEYS = {"schema", "model", "grid", "noise", "sim", "epsilon_ladder",
             "n_paths", "m_ladder", "seed", "output_dir"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration.

    The raw document is kept alongside the parsed values so that hashing
    and re-serialization are exact round trips.
    """

    model: dict
    grid: dict
    noise: dict
    sim: dict
    epsilon_ladder: tuple
    n_paths: int
    m_ladder: tuple
    seed: int
    output_dir: str

    def gain(self) -> GainParams:
        return GainParams(gamma=self.model["gamma"], theta=self.model["theta"])

    def kernel(self) -> KernelParams:
        return KernelParams(sigma=self.model["sigma"])

    def grid_spec(self) -> GridSpec:
        return GridSpec(half_length=self.grid["half_length"],
                        n_points=self.grid["n_points"])

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(**self.noise)

    def sim_config(self, epsilon: float) -> SimConfig:
        return SimConfig(epsilon=epsilon, horizon=self.sim["horizon"],
                         dt=self.sim["dt"], q_exponent=self.sim["q_exponent"],
                         initial_eta=self.sim["initial_eta"],
                         record_stride=self.sim["record_stride"])

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "model": dict(self.model),
            "grid": dict(self.grid),
            "noise": dict(self.noise),
            "sim": dict(self.sim),
            "epsilon_ladder": list(self.epsilon_ladder),
            "n_paths": self.n_paths,
            "m_ladder": list(self.m_ladder),
            "seed": self.seed,
            "output_dir": self.output_dir,
        }


def _require_number(section: str, key: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
    return float(value)


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration document must be a JSON object")
    doc = copy.deepcopy(doc)
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    if doc.get("schema", 1) != 1:
        raise ConfigError(f"unsupported config schema {doc.get('schema')!r}")

    merged = {}
    for section, keys in _SECTION_KEYS.items():
        defaults = dict(DEFAULT_CONFIG[section])
        given = doc.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"section {section!r} must be an object")
        bad = set(given) - keys
        if bad:
            raise ConfigError(f"unknown keys in {section!r}: {sorted(bad)}")
        defaults.update(given)
        merged[section] = defaults

    for section in ("model", "grid", "noise", "sim"):
        for key, value in merged[section].items():
            if key == "initial_eta":
                if value not in ("zero", "lead-mode", "mode-mix"):
                    raise ConfigError(
                        f"sim.initial_eta must be one of zero, lead-mode, "
                        f"mode-mix, got {value!r}")
                continue
            if key in ("n_points", "rank", "record_stride"):
                if not isinstance(value, int) or value <= 0:
                    raise ConfigError(
                        f"{section}.{key} must be a positive integer, "
                        f"got {value!r}")
                continue
            merged[section][key] = _require_number(section, key, value)

    ladder = doc.get("epsilon_ladder", DEFAULT_CONFIG["epsilon_ladder"])
    if (not isinstance(ladder, (list, tuple)) or len(ladder) == 0
            or any(isinstance(e, bool) or not isinstance(e, (int, float))
                   or e <= 0 for e in ladder)):
        raise ConfigError("epsilon_ladder must be a non-empty list of "
                          "positive numbers")
    ladder = tuple(float(e) for e in ladder)
    if any(a <= b for a, b in zip(ladder[1:], ladder[:-1])):
        raise ConfigError("epsilon_ladder must be strictly decreasing")

    n_paths = doc.get("n_paths", DEFAULT_CONFIG["n_paths"])
    if not isinstance(n_paths, int) or n_paths < 1:
        raise ConfigError(f"n_paths must be an integer >= 1, got {n_paths!r}")

    m_ladder = doc.get("m_ladder", DEFAULT_CONFIG["m_ladder"])
    if (not isinstance(m_ladder, (list, tuple)) or len(m_ladder) == 0
            or any(isinstance(m, bool) or not isinstance(m, (int, float))
                   or m <= 0 for m in m_ladder)):
        raise ConfigError("m_ladder must be a non-empty list of positive "
                          "numbers")

    seed = doc.get("seed", DEFAULT_CONFIG["seed"])
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")

    output_dir = doc.get("output_dir", DEFAULT_CONFIG["output_dir"])
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir must be a non-empty string")

    return ExperimentConfig(
        model=merged["model"], grid=merged["grid"], noise=merged["noise"],
        sim=merged["sim"], epsilon_ladder=ladder, n_paths=n_paths,
        m_ladder=tuple(float(m) for m in m_ladder), seed=seed,
        output_dir=output_dir)


def load_config(path: str | None) -> ExperimentConfig:
    """Read and validate a config file; the name "default" (or None) uses
    the built-in desk-scale document."""
    if path is None or path == "default":
        return config_from_dict(DEFAULT_CONFIG)
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def config_hash(cfg: ExperimentConfig) -> str:
    """First 12 hex digits of the sha256 of the canonical serialization."""
    canon = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]
