"""Normalized feature vectors, simulated training sets and their file format.

Feature layout (schema version 1), for neighbours i = 1 .. n_bs-1::

    [rstd_1, x_1, y_1, rstd_2, x_2, y_2, ..., (s_1, ..., s_{n_bs-1})]

where ``rstd_i = c * RSTD_i / d_cell``, ``(x_i, y_i) = p_i / d_cell`` and the
trailing LOS flags ``s_i`` (1 = NLOS) are present only with ``include_los``.
Targets are ``p / d_cell``.

On disk a dataset is a tab-separated text file, one sample per line with the
feature columns followed by ``target_x``, ``target_y`` (17 significant
digits, so values round-trip exactly), plus a JSON sidecar ``<file>.json``
describing columns, schema and generator settings.
"""
from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import SPEED_OF_LIGHT, ChannelProfile, MeasurementSet, measure_toa
from .errors import DomainError, FormatError
from .geometry import BsLayout, sample_ues

SCHEMA_VERSION = 1
DATASET_FORMAT = "otdoa-lab/dataset"


@dataclass(frozen=True)
class FeatureSchema:
    n_bs: int = 7
    include_los: bool = False
    version: int = SCHEMA_VERSION

    @property
    def width(self) -> int:
        n = self.n_bs - 1
        return 3 * n + (n if self.include_los else 0)

    def columns(self) -> list[str]:
        cols = []
        for i in range(1, self.n_bs):
            cols += [f"rstd_{i}", f"x_{i}", f"y_{i}"]
        if self.include_los:
            cols += [f"los_{i}" for i in range(1, self.n_bs)]
        return cols

    def to_dict(self) -> dict:
        return {"version": self.version, "n_bs": self.n_bs, "include_los": self.include_los,
                "columns": self.columns()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        schema = cls(int(d["n_bs"]), bool(d["include_los"]), int(d["version"]))
        if "columns" in d and list(d["columns"]) != schema.columns():
            raise FormatError("feature column list does not match schema")
        return schema


def build_features(m: MeasurementSet, layout: BsLayout, include_los: bool = False) -> np.ndarray:
    """Feature vector(s) for one measurement set or a batch of them."""
    rstd = np.asarray(m.rstd, dtype=float)
    n_nb = layout.n_bs - 1
    if rstd.shape[-1] != n_nb or np.shape(m.los_status)[-1] != n_nb:
        raise DomainError(f"measurement has {rstd.shape[-1]} RSTDs, layout has {n_nb} neighbours")
    batch = rstd.shape[:-1]
    d = layout.d_cell
    coords = np.broadcast_to(layout.neighbors / d, batch + (n_nb, 2))
    triples = np.concatenate([(SPEED_OF_LIGHT * rstd / d)[..., None], coords], axis=-1)
    feats = triples.reshape(batch + (3 * n_nb,))
    if include_los:
        feats = np.concatenate([feats, np.asarray(m.los_status, dtype=float)], axis=-1)
    return feats


def rstd_m_from_features(features, schema: FeatureSchema, d_cell: float) -> np.ndarray:
    """Range differences in meters recovered from the RSTD slots."""
    f = np.asarray(features, dtype=float)
    n_nb = schema.n_bs - 1
    return f[..., 0 : 3 * n_nb : 3] * d_cell


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    schema: FeatureSchema
    meta: dict

    def __len__(self) -> int:
        return len(self.features)

    @property
    def config_digest(self) -> str:
        return digest_of(self.meta)


def digest_of(obj) -> str:
    """SHA-256 of the canonical JSON rendering of ``obj``."""
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def simulate(layout: BsLayout, profile: ChannelProfile, fs: float, n: int, seed, quantize: bool = True):
    """Draw ``n`` UE positions and their measurements.

    UE positions and channel errors come from two independent child streams
    of ``seed``, so datasets that differ only in channel share UE positions.
    """
    pos_ss, err_ss = np.random.SeedSequence(seed).spawn(2)
    points = sample_ues(layout, np.random.default_rng(pos_ss), n)
    m = measure_toa(points, layout, profile, fs, np.random.default_rng(err_ss), quantize=quantize)
    return points, m


def generate_dataset(
    layout: BsLayout,
    profile: ChannelProfile,
    fs: float,
    n_samples: int,
    include_los: bool,
    seed,
    quantize: bool = True,
) -> Dataset:
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    points, m = simulate(layout, profile, fs, n_samples, seed, quantize)
    feats = build_features(m, layout, include_los)
    schema = FeatureSchema(layout.n_bs, include_los)
    meta = {
        "d_cell": layout.d_cell,
        "n_bs": layout.n_bs,
        "fs": float(fs),
        "quantize": quantize,
        "channel": profile.name,
        "channel_probabilities": list(profile.probabilities),
        "include_los": include_los,
        "seed": seed if isinstance(seed, int) else list(seed),
        "count": n_samples,
    }
    return Dataset(feats, points / layout.d_cell, schema, meta)


def _render(ds: Dataset) -> bytes:
    buf = io.StringIO()
    np.savetxt(buf, np.hstack([ds.features, ds.targets]), fmt="%.17g", delimiter="\t")
    return buf.getvalue().encode()


def save_dataset(path, ds: Dataset) -> Path:
    """Write the data file and its sidecar; returns the sidecar path."""
    path = Path(path)
    data = _render(ds)
    path.write_bytes(data)
    sidecar = {
        "format": DATASET_FORMAT,
        "schema": ds.schema.to_dict(),
        "columns": ds.schema.columns() + ["target_x", "target_y"],
        "generator": ds.meta,
        "config_digest": ds.config_digest,
        "data_sha256": hashlib.sha256(data).hexdigest(),
        "count": len(ds),
    }
    side = sidecar_path(path)
    side.write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")
    return side


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def load_dataset(path, expected_schema: FeatureSchema | None = None) -> Dataset:
    path = Path(path)
    try:
        side = json.loads(sidecar_path(path).read_text())
        raw = path.read_bytes()
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: unreadable sidecar ({exc})") from exc
    try:
        if side["format"] != DATASET_FORMAT:
            raise FormatError(f"{path}: not a dataset sidecar")
        schema = FeatureSchema.from_dict(side["schema"])
        count = int(side["count"])
        digest = side["data_sha256"]
        meta = side["generator"]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: malformed sidecar ({exc})") from exc
    if expected_schema is not None and expected_schema != schema:
        raise FormatError(f"{path}: schema {schema} does not match expected {expected_schema}")
    if hashlib.sha256(raw).hexdigest() != digest:
        raise FormatError(f"{path}: data digest mismatch (file modified or truncated)")
    try:
        table = np.loadtxt(io.StringIO(raw.decode()), delimiter="\t", ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: unparsable data ({exc})") from exc
    if table.shape != (count, schema.width + 2):
        raise FormatError(f"{path}: expected {count} x {schema.width + 2} table, got {table.shape}")
    return Dataset(table[:, : schema.width], table[:, schema.width :], schema, meta)
