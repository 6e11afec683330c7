"""Bit-exact file formats and manifest loading.

Five binary carriers, all little-endian regardless of host byte order:

  DVEM  dense embedding volume: magic, version u32=1, H u32, W u32, D u32,
        dtype u8 (0 = float32, 1 = float16), 3 zero pad bytes, payload
        row-major (row, column, channel).
  SMSK  segment mask: magic, version u32=1, H u32, W u32, H*W u16 ids
        (0 = unlabeled).
  LMAP  label map: same layout as SMSK, 0xFFFF = ignore.
  SEGE  segment records: magic, version u32=1, N u32, D u32, then N of
        (segment_id u16, class_id u16 with 0xFFFF = none, D float32).
  DVE3  frozen 3D map: magic, version u32=1, cell_size float32, D u32,
        cell count u64, then per cell (x, y, z i32, count u32, D float32).

Readers reject any file whose declared dimensions disagree with its byte
length. Writers emit cells/records in sorted order so re-writes are
byte-for-byte stable.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from .closedset import ProbeWeights
from .core import SegmentRecord
from .distill import StudentParams
from .errors import (
    BadMagic,
    BadSchema,
    BadVersion,
    DimMismatch,
    DuplicateSegment,
    TruncatedPayload,
    UnknownDtype,
)
from .map3d import CameraIntrinsics, EmbeddingMap3D, Pose

FORMAT_VERSION = 1

DTYPE_F32 = 0
DTYPE_F16 = 1
_DTYPE_CODES = {"f32": DTYPE_F32, "f16": DTYPE_F16}
_DTYPE_NUMPY = {DTYPE_F32: np.dtype("<f4"), DTYPE_F16: np.dtype("<f2")}

NO_CLASS = 0xFFFF


def _read_file(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _check_magic(blob: bytes, magic: bytes, path) -> None:
    if len(blob) < 4:
        raise TruncatedPayload(f"{path}: file shorter than any header")
    if blob[:4] != magic:
        raise BadMagic(f"{path}: expected magic {magic!r}, found {blob[:4]!r}")
    if len(blob) < 8:
        raise TruncatedPayload(f"{path}: header truncated before version")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise BadVersion(f"{path}: unsupported version {version}")


def _check_length(blob: bytes, expected: int, path) -> None:
    if len(blob) != expected:
        raise TruncatedPayload(f"{path}: expected {expected} bytes, file has {len(blob)}")


# ---------------------------------------------------------------------------
# DVEM dense embedding volumes


def write_volume(emb_map: np.ndarray, path, dtype: str = "f32") -> None:
    """Write an (H, W, D) volume; dtype "f32" is lossless for f32 values,
    "f16" stores round-to-nearest-even halves."""
    emb_map = np.asarray(emb_map)
    if emb_map.ndim != 3 or emb_map.size == 0:
        raise DimMismatch(f"volume must be non-empty (H, W, D), got {emb_map.shape}")
    if dtype not in _DTYPE_CODES:
        raise UnknownDtype(f"dtype must be one of {sorted(_DTYPE_CODES)}, got {dtype!r}")
    code = _DTYPE_CODES[dtype]
    h, w, d = emb_map.shape
    header = struct.pack("<4sIIIIB3x", b"DVEM", FORMAT_VERSION, h, w, d, code)
    payload = np.ascontiguousarray(emb_map, dtype=_DTYPE_NUMPY[code])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def read_volume(path) -> np.ndarray:
    """Read a DVEM volume into a float64 (H, W, D) array."""
    blob = _read_file(path)
    _check_magic(blob, b"DVEM", path)
    if len(blob) < 24:
        raise TruncatedPayload(f"{path}: header truncated")
    h, w, d, code = struct.unpack_from("<IIIB", blob, 8)
    if code not in _DTYPE_NUMPY:
        raise UnknownDtype(f"{path}: dtype code {code}")
    if h * w * d == 0:
        raise TruncatedPayload(f"{path}: empty volume ({h}x{w}x{d})")
    np_dtype = _DTYPE_NUMPY[code]
    _check_length(blob, 24 + h * w * d * np_dtype.itemsize, path)
    data = np.frombuffer(blob, dtype=np_dtype, count=h * w * d, offset=24)
    return data.astype(np.float64).reshape(h, w, d)


def volume_header(path) -> dict:
    blob = _read_file(path)
    _check_magic(blob, b"DVEM", path)
    h, w, d, code = struct.unpack_from("<IIIB", blob, 8)
    if code not in _DTYPE_NUMPY:
        raise UnknownDtype(f"{path}: dtype code {code}")
    return {"format": "DVEM", "version": FORMAT_VERSION, "height": h, "width": w,
            "dim": d, "dtype": "f32" if code == DTYPE_F32 else "f16"}


# ---------------------------------------------------------------------------
# SMSK segment masks and LMAP label maps (same u16-grid layout)


def _write_u16_grid(grid: np.ndarray, magic: bytes, path) -> None:
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise DimMismatch(f"grid must be 2-D, got {grid.shape}")
    h, w = grid.shape
    header = struct.pack("<4sIII", magic, FORMAT_VERSION, h, w)
    payload = np.ascontiguousarray(grid, dtype=np.dtype("<u2"))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def _read_u16_grid(magic: bytes, path) -> np.ndarray:
    blob = _read_file(path)
    _check_magic(blob, magic, path)
    if len(blob) < 16:
        raise TruncatedPayload(f"{path}: header truncated")
    h, w = struct.unpack_from("<II", blob, 8)
    _check_length(blob, 16 + h * w * 2, path)
    data = np.frombuffer(blob, dtype=np.dtype("<u2"), count=h * w, offset=16)
    return data.reshape(h, w).astype(np.uint16)


def write_mask_map(mask: np.ndarray, path) -> None:
    _write_u16_grid(mask, b"SMSK", path)


def read_mask_map(path) -> np.ndarray:
    """Read an (H, W) uint16 segment-id mask; 0 means unlabeled."""
    return _read_u16_grid(b"SMSK", path)


def write_label_map(labels: np.ndarray, path) -> None:
    _write_u16_grid(labels, b"LMAP", path)


def read_label_map(path) -> np.ndarray:
    """Read an (H, W) uint16 label map; 0xFFFF means ignore."""
    return _read_u16_grid(b"LMAP", path)


def label_map_bytes(labels: np.ndarray) -> bytes:
    """LMAP file image as in-memory bytes (service payloads)."""
    labels = np.asarray(labels)
    h, w = labels.shape
    header = struct.pack("<4sIII", b"LMAP", FORMAT_VERSION, h, w)
    return header + np.ascontiguousarray(labels, dtype=np.dtype("<u2")).tobytes()


def _grid_header(magic: bytes, name: str, path) -> dict:
    blob = _read_file(path)
    _check_magic(blob, magic, path)
    h, w = struct.unpack_from("<II", blob, 8)
    return {"format": name, "version": FORMAT_VERSION, "height": h, "width": w}


# ---------------------------------------------------------------------------
# SEGE segment records


def write_segment_records(records: Mapping[int, SegmentRecord], path) -> None:
    """Write raw segment embeddings, sorted by id for stable bytes."""
    recs = [records[k] for k in sorted(records)]
    if recs:
        dim = recs[0].raw_embedding.shape[0]
    else:
        dim = 0
    for rec in recs:
        if rec.raw_embedding.shape[0] != dim:
            raise DimMismatch("segment records disagree on embedding dim")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", b"SEGE", FORMAT_VERSION, len(recs), dim))
        for rec in recs:
            class_id = NO_CLASS if rec.class_id is None else int(rec.class_id)
            fh.write(struct.pack("<HH", int(rec.segment_id), class_id))
            fh.write(rec.raw_embedding.astype("<f4").tobytes())


def read_segment_records(path) -> dict[int, SegmentRecord]:
    """Read raw segment records keyed by segment id.

    Raises DuplicateSegment if two records share one id. Segment id 0 is
    the whole-image embedding.
    """
    blob = _read_file(path)
    _check_magic(blob, b"SEGE", path)
    if len(blob) < 16:
        raise TruncatedPayload(f"{path}: header truncated")
    n, dim = struct.unpack_from("<II", blob, 8)
    record_size = 4 + 4 * dim
    _check_length(blob, 16 + n * record_size, path)
    records: dict[int, SegmentRecord] = {}
    offset = 16
    for _ in range(n):
        sid, cid = struct.unpack_from("<HH", blob, offset)
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset + 4).astype(np.float64)
        offset += record_size
        if sid in records:
            raise DuplicateSegment(sid)
        records[sid] = SegmentRecord(
            segment_id=sid,
            class_id=None if cid == NO_CLASS else cid,
            raw_embedding=vec,
        )
    return records


def segment_header(path) -> dict:
    blob = _read_file(path)
    _check_magic(blob, b"SEGE", path)
    n, dim = struct.unpack_from("<II", blob, 8)
    return {"format": "SEGE", "version": FORMAT_VERSION, "records": n, "dim": dim}


# ---------------------------------------------------------------------------
# DVE3 frozen maps


def write_map3d(map3d: EmbeddingMap3D, path) -> None:
    """Write a frozen 3D map, cells in sorted key order."""
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<4sIfIQ", b"DVE3", FORMAT_VERSION, map3d.cell_size, map3d.dim,
                len(map3d.cells),
            )
        )
        for key in sorted(map3d.cells):
            mean, count = map3d.cells[key]
            fh.write(struct.pack("<iiiI", key[0], key[1], key[2], count))
            fh.write(mean.astype("<f4").tobytes())


def read_map3d(path) -> EmbeddingMap3D:
    blob = _read_file(path)
    _check_magic(blob, b"DVE3", path)
    if len(blob) < 24:
        raise TruncatedPayload(f"{path}: header truncated")
    cell_size, dim, count = struct.unpack_from("<fIQ", blob, 8)
    record_size = 16 + 4 * dim
    _check_length(blob, 24 + count * record_size, path)
    cells: dict[tuple[int, int, int], tuple[np.ndarray, int]] = {}
    offset = 24
    for _ in range(count):
        x, y, z, n_obs = struct.unpack_from("<iiiI", blob, offset)
        mean = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset + 16).astype(np.float64)
        cells[(x, y, z)] = (mean, n_obs)
        offset += record_size
    return EmbeddingMap3D(cell_size=float(cell_size), dim=dim, cells=cells)


def map3d_header(path) -> dict:
    blob = _read_file(path)
    _check_magic(blob, b"DVE3", path)
    cell_size, dim, count = struct.unpack_from("<fIQ", blob, 8)
    return {"format": "DVE3", "version": FORMAT_VERSION, "cell_size": float(cell_size),
            "dim": dim, "cells": count}


# ---------------------------------------------------------------------------
# Embedding banks (JSON)


@dataclass
class EmbeddingBank:
    """Named embedding vectors: text-prompt outputs, class references,
    or raw query vectors. Names may repeat (multi-prompt entries)."""

    dim: int
    entries: list[tuple[str, np.ndarray]]

    def vectors_for(self, name: str) -> list[np.ndarray]:
        return [vec for entry_name, vec in self.entries if entry_name == name]

    def unique_names(self) -> list[str]:
        seen: list[str] = []
        for name, _ in self.entries:
            if name not in seen:
                seen.append(name)
        return seen


def load_embedding_bank(path) -> EmbeddingBank:
    """Load {"dim": int, "entries": [{"name", "vector"}...]} JSON."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BadSchema(f"{path}: not valid JSON ({exc})") from exc
    return parse_embedding_bank(doc, source=str(path))


def parse_embedding_bank(doc, source: str = "<bank>") -> EmbeddingBank:
    if not isinstance(doc, dict) or "dim" not in doc or "entries" not in doc:
        raise BadSchema(f"{source}: expected object with 'dim' and 'entries'")
    dim = doc["dim"]
    if not isinstance(dim, int) or dim <= 0:
        raise BadSchema(f"{source}: dim must be a positive integer")
    entries: list[tuple[str, np.ndarray]] = []
    if not isinstance(doc["entries"], list):
        raise BadSchema(f"{source}: entries must be a list")
    for i, entry in enumerate(doc["entries"]):
        if not isinstance(entry, dict) or "name" not in entry or "vector" not in entry:
            raise BadSchema(f"{source}: entry {i} needs 'name' and 'vector'")
        vec = np.asarray(entry["vector"], dtype=np.float64)
        if vec.ndim != 1 or vec.shape[0] != dim:
            raise DimMismatch(f"{source}: entry {i} vector length {vec.shape} != dim {dim}")
        if not np.all(np.isfinite(vec)):
            raise BadSchema(f"{source}: entry {i} vector has non-finite values")
        entries.append((str(entry["name"]), vec))
    return EmbeddingBank(dim=dim, entries=entries)


def save_embedding_bank(bank: EmbeddingBank, path) -> None:
    doc = {
        "dim": bank.dim,
        "entries": [{"name": name, "vector": vec.tolist()} for name, vec in bank.entries],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


# ---------------------------------------------------------------------------
# Probe weights and student params


def save_probe(probe: ProbeWeights, path) -> None:
    doc = {
        "dim": probe.dim,
        "classes": probe.class_names,
        "weight": probe.weight.tolist(),
        "bias": probe.bias.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_probe(path) -> ProbeWeights:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BadSchema(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "weight" not in doc or "bias" not in doc:
        raise BadSchema(f"{path}: expected object with 'weight' and 'bias'")
    names = doc.get("classes")
    return ProbeWeights(
        weight=np.asarray(doc["weight"], dtype=np.float64),
        bias=np.asarray(doc["bias"], dtype=np.float64),
        class_names=list(names) if names is not None else None,
    )


def save_student_params(params: StudentParams, path) -> None:
    arrays = {}
    for i, (weight, bias) in enumerate(params.layers):
        arrays[f"w{i}"] = weight
        arrays[f"b{i}"] = bias
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_student_params(path) -> StudentParams:
    with np.load(path) as data:
        layers = []
        i = 0
        while f"w{i}" in data:
            layers.append((data[f"w{i}"], data[f"b{i}"]))
            i += 1
    if not layers:
        raise BadSchema(f"{path}: no layer arrays found")
    return StudentParams(layers)


# ---------------------------------------------------------------------------
# Similarity heatmap export


def similarity_to_pgm(sim: np.ndarray) -> bytes:
    """Binary 8-bit PGM, similarity mapped linearly from [-1, 1] to [0, 255]."""
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2:
        raise DimMismatch(f"similarity map must be 2-D, got {sim.shape}")
    level = np.rint((np.clip(sim, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)
    h, w = sim.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + level.tobytes()


# ---------------------------------------------------------------------------
# Manifests (JSON)


@dataclass(frozen=True)
class ScanRecord:
    embedding_map: str
    depth: str
    intrinsics: CameraIntrinsics
    pose: Pose


def load_scan_manifest(path) -> list[ScanRecord]:
    """JSON array of {embedding_map, depth, intrinsics{...}, pose: [16 reals]}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BadSchema(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, list):
        raise BadSchema(f"{path}: scan manifest must be a JSON array")
    scans = []
    for i, rec in enumerate(doc):
        try:
            intr = rec["intrinsics"]
            pose_vals = np.asarray(rec["pose"], dtype=np.float64)
            if pose_vals.shape != (16,):
                raise BadSchema(f"{path}: scan {i} pose must hold 16 row-major reals")
            scans.append(
                ScanRecord(
                    embedding_map=rec["embedding_map"],
                    depth=rec["depth"],
                    intrinsics=CameraIntrinsics(
                        fx=float(intr["fx"]), fy=float(intr["fy"]),
                        cx=float(intr["cx"]), cy=float(intr["cy"]),
                        depth_scale=float(intr["depth_scale"]),
                    ),
                    pose=Pose.from_matrix(pose_vals.reshape(4, 4)),
                )
            )
        except (KeyError, TypeError) as exc:
            raise BadSchema(f"{path}: scan {i} malformed ({exc})") from exc
    return scans


def load_json_manifest(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BadSchema(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "samples" not in doc or not isinstance(doc["samples"], list):
        raise BadSchema(f"{path}: expected object with a 'samples' list")
    return doc


# ---------------------------------------------------------------------------
# `dve info` support


_HEADER_READERS = {
    b"DVEM": volume_header,
    b"SMSK": lambda p: _grid_header(b"SMSK", "SMSK", p),
    b"LMAP": lambda p: _grid_header(b"LMAP", "LMAP", p),
    b"SEGE": segment_header,
    b"DVE3": map3d_header,
}


def file_info(path) -> dict:
    """Parse the header of any known binary format."""
    blob = _read_file(path)
    if len(blob) < 4:
        raise TruncatedPayload(f"{path}: too short for a magic string")
    magic = blob[:4]
    reader = _HEADER_READERS.get(magic)
    if reader is None:
        raise BadMagic(f"{path}: unknown magic {magic!r}")
    return reader(path)
