"""
Artifact formats: CSV tables, binary field snapshots and JSON run manifests.

Floats are written with ``repr`` so every value round-trips exactly.  All
failures are re-raised as :class:`ArtifactIOError` carrying the path.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .errors import ArtifactIOError, ConfigError
from .grid import GridSpec, RadialSpectrum, RealField

SNAPSHOT_MAGIC = b"TSPD"
_HEADER = struct.Struct("<4sIII")

RADIAL_HEADER = ("kappa", "energy", "cardinality", "stderr")
SPECTRA_HEADER = ("N", "kappa", "mean_energy", "stderr", "cardinality")
INTERVALS_HEADER = ("N", "interval_index", "mean", "stderr")
PREDICTION_HEADER = ("x", "value", "source_equation")


@dataclass(frozen=True, eq=False)
class SpectrumTable:
    """Ensemble-averaged radial spectrum at one resolution."""

    kappa: np.ndarray
    mean_energy: np.ndarray
    stderr: np.ndarray
    cardinality: np.ndarray

    def restrict(self, kmin: float, kmax: float) -> "SpectrumTable":
        keep = (self.kappa >= kmin) & (self.kappa <= kmax)
        return SpectrumTable(self.kappa[keep], self.mean_energy[keep], self.stderr[keep], self.cardinality[keep])

    def at(self, kappa: int) -> tuple[float, float]:
        idx = np.flatnonzero(self.kappa == kappa)
        if idx.size == 0:
            raise KeyError(kappa)
        return float(self.mean_energy[idx[0]]), float(self.stderr[idx[0]])


@dataclass(frozen=True, eq=False)
class IntervalTable:
    mean: np.ndarray
    stderr: np.ndarray


@contextmanager
def _io_context(path: Path, action: str) -> Iterator[None]:
    try:
        yield
    except ArtifactIOError:
        raise
    except (OSError, UnicodeError) as exc:
        raise ArtifactIOError(f"cannot {action} {path}: {exc}") from exc
    except (ValueError, KeyError, IndexError, struct.error, json.JSONDecodeError) as exc:
        raise ArtifactIOError(f"malformed artifact {path}: {exc}") from exc


def _f(x: float) -> str:
    return repr(float(x))


def _write_rows(path: Path, header: tuple[str, ...], rows) -> Path:
    path = Path(path)
    with _io_context(path, "write"):
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    return path


def _read_rows(path: Path, header: tuple[str, ...]) -> list[dict[str, str]]:
    path = Path(path)
    with _io_context(path, "read"):
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != header:
                raise ValueError(f"expected header {','.join(header)}, got {reader.fieldnames}")
            return list(reader)


# ---------------------------------------------------------------------------
# radial spectrum of a single field


def write_radial_spectrum(path, R: RadialSpectrum) -> Path:
    err = R.stderr if R.stderr is not None else np.full(len(R.kappa), np.nan)
    rows = ((int(k), _f(e), int(c), _f(s)) for k, e, c, s in zip(R.kappa, R.energy, R.cardinality, err))
    return _write_rows(path, RADIAL_HEADER, rows)


def read_radial_spectrum(path, grid: GridSpec) -> RadialSpectrum:
    rows = _read_rows(path, RADIAL_HEADER)
    with _io_context(Path(path), "parse"):
        kappa = np.array([int(r["kappa"]) for r in rows], dtype=int)
        energy = np.array([float(r["energy"]) for r in rows])
        card = np.array([int(r["cardinality"]) for r in rows], dtype=int)
        err = np.array([float(r["stderr"]) for r in rows])
    return RadialSpectrum(grid, kappa, energy, card, None if np.all(np.isnan(err)) else err)


# ---------------------------------------------------------------------------
# field snapshots


def write_snapshot(path, f: RealField) -> Path:
    """16-byte header (magic, d, N, reserved) then little-endian float64 values."""
    path = Path(path)
    with _io_context(path, "write"):
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(SNAPSHOT_MAGIC, f.grid.d, f.grid.N, 0))
            fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    return path


def read_snapshot(path) -> RealField:
    path = Path(path)
    with _io_context(path, "read"):
        raw = path.read_bytes()
        magic, d, N, _ = _HEADER.unpack_from(raw)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        try:
            grid = GridSpec(d, N)
        except ConfigError as exc:
            raise ValueError(str(exc)) from exc
        body = raw[_HEADER.size :]
        if len(body) != 8 * N**d:
            raise ValueError(f"expected {N**d} values, found {len(body) // 8}")
        values = np.frombuffer(body, dtype="<f8").astype(float).reshape(grid.shape)
    return RealField(grid, values)


def clamp_for_export(f: RealField, lo: float = -5.0, hi: float = 5.0) -> RealField:
    """Copy of ``f`` with values clipped to ``[lo, hi]``, for plotting only."""
    return RealField(f.grid, np.clip(f.values, lo, hi))


# ---------------------------------------------------------------------------
# ensemble tables


def write_spectra(path, spectra: Mapping[int, SpectrumTable]) -> Path:
    def rows():
        for N in sorted(spectra):
            t = spectra[N]
            for k, m, s, c in zip(t.kappa, t.mean_energy, t.stderr, t.cardinality):
                yield (int(N), int(k), _f(m), _f(s), int(c))

    return _write_rows(path, SPECTRA_HEADER, rows())


def read_spectra(path) -> dict[int, SpectrumTable]:
    rows = _read_rows(path, SPECTRA_HEADER)
    grouped: dict[int, list[dict[str, str]]] = {}
    with _io_context(Path(path), "parse"):
        for r in rows:
            grouped.setdefault(int(r["N"]), []).append(r)
        return {
            N: SpectrumTable(
                np.array([int(r["kappa"]) for r in rs], dtype=int),
                np.array([float(r["mean_energy"]) for r in rs]),
                np.array([float(r["stderr"]) for r in rs]),
                np.array([int(r["cardinality"]) for r in rs], dtype=int),
            )
            for N, rs in grouped.items()
        }


def write_intervals(path, intervals: Mapping[int, IntervalTable]) -> Path:
    def rows():
        for N in sorted(intervals):
            t = intervals[N]
            for i, (m, s) in enumerate(zip(t.mean, t.stderr)):
                yield (int(N), i, _f(m), _f(s))

    return _write_rows(path, INTERVALS_HEADER, rows())


def read_intervals(path) -> dict[int, IntervalTable]:
    rows = _read_rows(path, INTERVALS_HEADER)
    grouped: dict[int, list[tuple[int, float, float]]] = {}
    with _io_context(Path(path), "parse"):
        for r in rows:
            grouped.setdefault(int(r["N"]), []).append((int(r["interval_index"]), float(r["mean"]), float(r["stderr"])))
    out = {}
    for N, items in grouped.items():
        items.sort()
        out[N] = IntervalTable(np.array([m for _, m, _ in items]), np.array([s for _, _, s in items]))
    return out


def write_prediction(path, x, values, source: str) -> Path:
    rows = ((_f(a), _f(b), source) for a, b in zip(x, values))
    return _write_rows(path, PREDICTION_HEADER, rows)


def read_prediction(path) -> tuple[np.ndarray, np.ndarray, str]:
    rows = _read_rows(path, PREDICTION_HEADER)
    with _io_context(Path(path), "parse"):
        x = np.array([float(r["x"]) for r in rows])
        v = np.array([float(r["value"]) for r in rows])
    sources = {r["source_equation"] for r in rows}
    return x, v, sources.pop() if len(sources) == 1 else ",".join(sorted(sources))


# ---------------------------------------------------------------------------
# manifests


def sha256_file(path) -> str:
    path = Path(path)
    h = hashlib.sha256()
    with _io_context(path, "checksum"):
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def write_manifest(path, manifest: dict, artifacts=()) -> Path:
    """Write ``manifest`` with checksums of ``artifacts`` added; call this last."""
    path = Path(path)
    doc = dict(manifest)
    doc["artifacts"] = {Path(a).name: sha256_file(a) for a in artifacts}
    with _io_context(path, "write"):
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True))
        tmp.replace(path)
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    with _io_context(path, "read"):
        return json.loads(path.read_text())


def verify_manifest(path) -> dict[str, bool]:
    """Map each recorded artifact to whether its checksum still matches."""
    path = Path(path)
    doc = read_manifest(path)
    return {name: (path.parent / name).exists() and sha256_file(path.parent / name) == digest for name, digest in doc.get("artifacts", {}).items()}


__all__ = [
    "SpectrumTable",
    "IntervalTable",
    "write_radial_spectrum",
    "read_radial_spectrum",
    "write_snapshot",
    "read_snapshot",
    "clamp_for_export",
    "write_spectra",
    "read_spectra",
    "write_intervals",
    "read_intervals",
    "write_prediction",
    "read_prediction",
    "write_manifest",
    "read_manifest",
    "verify_manifest",
    "sha256_file",
]
