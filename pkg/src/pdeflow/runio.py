"""Run artifact formats: trajectory files, metrics CSV, grid snapshots.

A trajectory file is one JSON header line followed by raw little-endian
float64 parameter blocks, one block of length p per checkpoint.  Round trips
are bit-exact.  Grid snapshots are a raw float64 block next to a JSON
sidecar carrying the grid size, time and bounds.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .network import NetworkSpec

TRAJECTORY_FORMAT_VERSION = 1


def config_hash(resolved: dict) -> str:
    """Stable hash of a resolved configuration dictionary.

    The output directory is excluded: two runs of the same science must hash
    identically regardless of where their artifacts land.
    """
    content = {k: v for k, v in resolved.items() if k != "out_dir"}
    canonical = json.dumps(content, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def save_trajectory(
    path,
    spec: NetworkSpec,
    times,
    thetas,
    cfg_hash: str = "",
) -> None:
    """Write checkpoints as a header line plus raw float64 blocks."""
    times = [float(t) for t in times]
    if len(times) != len(thetas):
        raise ConfigError("times and parameter vectors must pair up")
    header = {
        "format_version": TRAJECTORY_FORMAT_VERSION,
        "config_hash": cfg_hash,
        "spec": spec.to_dict(),
        "times": times,
        "p": spec.param_count,
    }
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for theta in thetas:
            theta = np.asarray(theta, dtype=np.float64)
            if theta.shape != (spec.param_count,):
                raise ConfigError("parameter block length does not match the spec")
            fh.write(theta.astype("<f8", copy=False).tobytes())


def load_trajectory(path) -> tuple[NetworkSpec, list[float], list[np.ndarray], dict]:
    """Read a trajectory file back; blocks are validated against the header."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"trajectory file {path} does not exist")
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path} does not look like a trajectory file") from exc
        if header.get("format_version") != TRAJECTORY_FORMAT_VERSION:
            raise ConfigError(f"unsupported trajectory format: {header.get('format_version')}")
        spec = NetworkSpec.from_dict(header["spec"])
        p = int(header["p"])
        if p != spec.param_count:
            raise ConfigError("header parameter count disagrees with the spec")
        times = [float(t) for t in header["times"]]
        blob = fh.read()
    expected = len(times) * p * 8
    if len(blob) != expected:
        raise ConfigError(
            f"trajectory payload has {len(blob)} bytes, expected {expected}"
        )
    thetas = [
        np.frombuffer(blob, dtype="<f8", count=p, offset=i * p * 8).copy()
        for i in range(len(times))
    ]
    return spec, times, thetas, header


def write_csv(path, rows: list[dict], fieldnames: list[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def save_snapshot(path_base, field: np.ndarray, t: float, bounds=(-1.0, 1.0)) -> None:
    """Raw float64 block plus JSON sidecar {grid_n, t, bounds, shape}."""
    base = Path(path_base)
    base.parent.mkdir(parents=True, exist_ok=True)
    field = np.asarray(field, dtype=np.float64)
    with open(base.with_suffix(".f64"), "wb") as fh:
        fh.write(field.astype("<f8", copy=False).tobytes())
    sidecar = {
        "grid_n": int(field.shape[0]),
        "shape": list(field.shape),
        "t": float(t),
        "bounds": [float(bounds[0]), float(bounds[1])],
    }
    with open(base.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, sort_keys=True)
        fh.write("\n")


def load_snapshot(path_base) -> tuple[np.ndarray, dict]:
    base = Path(path_base)
    with open(base.with_suffix(".json")) as fh:
        sidecar = json.load(fh)
    raw = np.fromfile(base.with_suffix(".f64"), dtype="<f8")
    field = raw.reshape(sidecar["shape"])
    return field, sidecar
