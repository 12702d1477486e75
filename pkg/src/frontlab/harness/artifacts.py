"""Result persistence: JSON summaries, CSV tables, and binary field dumps.

Nothing written here carries a timestamp; re-running a subcommand with the
same configuration and seed reproduces every output byte for byte. Each
summary embeds the config hash and seed so numbers stay traceable.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..model import Field, GridSpec
from ..wave import WaveSolution
from ..model import GainParams, KernelParams
from ..spectral import SpectralData
from .config import ExperimentConfig, config_hash

__all__ = [
    "SCHEMA_VERSION",
    "write_summary",
    "read_summary",
    "write_csv",
    "dump_field_series",
    "load_field_series",
    "wave_to_doc",
    "wave_from_doc",
    "adjoint_to_doc",
]

SCHEMA_VERSION = 1

_MAGIC = b"FLSNAP01"


def write_summary(output_dir: str | Path, kind: str, payload: dict,
                  cfg: ExperimentConfig) -> Path:
    """Write summary_<kind>.json with schema version, config hash, seed."""
    doc = {"schema": SCHEMA_VERSION, "kind": kind,
           "config_sha": config_hash(cfg), "seed": cfg.seed}
    doc.update(payload)
    out = Path(output_dir) / f"summary_{kind}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return out


def read_summary(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported summary schema in {path}")
    return doc


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    """Plain comma-delimited table; floats serialized with repr so reading
    the file back reproduces the doubles exactly."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            repr(float(v)) if isinstance(v, (int, float, np.floating))
            else str(v) for v in row))
    out.write_text("\n".join(lines) + "\n")
    return out


def dump_field_series(path: str | Path, grid: GridSpec, times: np.ndarray,
                      rows: np.ndarray) -> Path:
    """Binary snapshot dump.

    Layout (all little-endian): 8-byte magic "FLSNAP01"; uint32 n_points;
    float64 half_length; uint32 n_rows; then the record times as n_rows
    float64, then the snapshots as n_rows * n_points float64, row-major.
    """
    rows = np.asarray(rows, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if rows.shape != (len(times), grid.n_points):
        raise ValueError("snapshot block does not match times/grid")
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IdI", grid.n_points, grid.half_length,
                             len(times)))
        fh.write(times.astype("<f8").tobytes())
        fh.write(rows.astype("<f8").tobytes())
    return out


def load_field_series(path: str | Path) -> tuple[GridSpec, np.ndarray,
                                                 np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"not a snapshot dump: {path}")
        n_points, half_length, n_rows = struct.unpack("<IdI", fh.read(16))
        times = np.frombuffer(fh.read(8 * n_rows), dtype="<f8")
        data = np.frombuffer(fh.read(8 * n_rows * n_points), dtype="<f8")
    grid = GridSpec(half_length=half_length, n_points=int(n_points))
    return grid, times.copy(), data.reshape(n_rows, n_points).copy()


def wave_to_doc(ws: WaveSolution) -> dict:
    """Versioned JSON document for a solved front (grid + arrays + speed)."""
    return {
        "schema": SCHEMA_VERSION,
        "kind": "wave",
        "grid": {"half_length": ws.grid.half_length,
                 "n_points": ws.grid.n_points},
        "gain": {"gamma": ws.gain.gamma, "theta": ws.gain.theta},
        "kernel": {"sigma": ws.kernel.sigma},
        "speed": ws.speed,
        "fixed_points": list(ws.fixed_points),
        "profile": ws.profile.values.tolist(),
        "d1": ws.d1.values.tolist(),
        "d2": ws.d2.values.tolist(),
        "d3": ws.d3.values.tolist(),
    }


def wave_from_doc(doc: dict) -> WaveSolution:
    if doc.get("schema") != SCHEMA_VERSION or doc.get("kind") != "wave":
        raise ValueError("not a wave document")
    grid = GridSpec(half_length=doc["grid"]["half_length"],
                    n_points=doc["grid"]["n_points"])
    return WaveSolution(
        profile=Field(np.array(doc["profile"]), grid),
        d1=Field(np.array(doc["d1"]), grid),
        d2=Field(np.array(doc["d2"]), grid),
        d3=Field(np.array(doc["d3"]), grid),
        speed=float(doc["speed"]),
        fixed_points=tuple(doc["fixed_points"]),
        gain=GainParams(**doc["gain"]),
        kernel=KernelParams(**doc["kernel"]),
    )


def adjoint_to_doc(spectral: SpectralData) -> dict:
    """Adjoint frame document: eigenfunctions, density, and the certified
    constants, for reuse by the report figures."""
    return {
        "schema": SCHEMA_VERSION,
        "kind": "adjoint",
        "grid": {"half_length": spectral.wave.grid.half_length,
                 "n_points": spectral.wave.grid.n_points},
        "gap": spectral.gap,
        "l_rho": spectral.l_rho,
        "k_rho": spectral.k_rho,
        "m_bound": spectral.m_bound,
        "psi": spectral.psi.values.tolist(),
        "phi": spectral.phi.values.tolist(),
        "rho": spectral.rho.values.tolist(),
    }
