"""Session state and request handlers behind the HTTP facade.

Everything here is a pure function of (session, request): loading builds
a fresh SessionState (the server swaps it atomically), queries never
mutate. Prompt embedding prefers exact bank hits and only then calls the
configured external provider; same-name bank entries are aggregated by
max similarity.
"""

from __future__ import annotations

import json
import os
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace
from typing import Literal, Optional

import numpy as np

from .closedset import (
    IGNORE_LABEL,
    ProbeWeights,
    ReferenceSet,
    classify_argmax,
    probe_predict,
    similarity_matrix,
)
from .core import NORM_EPS, l2_normalize
from .errors import (
    DimMismatch,
    MissingProbe,
    MissingReferences,
    NoEmbedderConfigured,
    NoMapLoaded,
    ProviderTimeout,
    ProviderUnreachable,
    UnknownImage,
    ZeroVector,
)
from .map3d import EmbeddingMap3D, VoxelKey, map_query
from .storage import (
    EmbeddingBank,
    label_map_bytes,
    load_embedding_bank,
    load_probe,
    read_map3d,
    read_volume,
    similarity_to_pgm,
)

DEFAULT_TOP_K = 100
DEFAULT_TIMEOUT_MS = 5000

ENV_EMBEDDER_URL = "DVE_EMBEDDER_URL"
ENV_EMBEDDER_TIMEOUT = "DVE_EMBEDDER_TIMEOUT_MS"


@dataclass(frozen=True)
class EmbedderConfig:
    """Where prompts that miss the bank are sent, if anywhere."""

    mode: Literal["bank-only", "external"] = "bank-only"
    endpoint: str = ""
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    def __post_init__(self):
        if self.mode == "external" and not self.endpoint:
            raise ValueError("external embedder mode requires an endpoint")


def embedder_from_env() -> EmbedderConfig:
    """Build the embedder config from DVE_EMBEDDER_URL / _TIMEOUT_MS."""
    url = os.environ.get(ENV_EMBEDDER_URL, "")
    timeout = int(os.environ.get(ENV_EMBEDDER_TIMEOUT, str(DEFAULT_TIMEOUT_MS)))
    if url:
        return EmbedderConfig(mode="external", endpoint=url, timeout_ms=timeout)
    return EmbedderConfig(mode="bank-only", timeout_ms=timeout)


@dataclass(frozen=True)
class SessionState:
    """Everything a session serves; immutable, replaced wholesale on load.

    All artifacts must agree on one embedding dim (the bank's).
    """

    bank: EmbeddingBank
    volumes: dict[str, np.ndarray] = field(default_factory=dict)
    display_images: dict[str, str] = field(default_factory=dict)
    map3d: Optional[EmbeddingMap3D] = None
    mean_refs: Optional[EmbeddingBank] = None
    probe: Optional[ProbeWeights] = None
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)

    @property
    def dim(self) -> int:
        return self.bank.dim

    def inventory(self) -> dict:
        """Deterministic summary for GET /session."""
        return {
            "dim": self.dim,
            "volumes": sorted(self.volumes),
            "images": sorted(self.display_images),
            "map_cells": self.map3d.num_cells if self.map3d is not None else None,
            "bank_entries": len(self.bank.entries),
            "mean_ref_entries": len(self.mean_refs.entries) if self.mean_refs else None,
            "probe_classes": self.probe.num_classes if self.probe is not None else None,
            "embedder_mode": self.embedder.mode,
        }


def session_load(session: SessionState, kind: str, path: str,
                 artifact_id: Optional[str] = None) -> SessionState:
    """Return a new session with one artifact added; the caller swaps it in.

    Kinds: volume (needs an id, or the file stem is used), image (display
    asset for an id), map, bank, mean-refs, probe.
    """
    if kind == "volume":
        vol = read_volume(path)
        if vol.shape[2] != session.dim:
            raise DimMismatch(f"volume dim {vol.shape[2]} vs session dim {session.dim}")
        vol_id = artifact_id or os.path.splitext(os.path.basename(path))[0]
        volumes = dict(session.volumes)
        volumes[vol_id] = vol
        return replace(session, volumes=volumes)
    if kind == "image":
        if not artifact_id:
            raise ValueError("loading an image requires an id")
        images = dict(session.display_images)
        images[artifact_id] = path
        return replace(session, display_images=images)
    if kind == "map":
        map3d = read_map3d(path)
        if map3d.dim != session.dim:
            raise DimMismatch(f"map dim {map3d.dim} vs session dim {session.dim}")
        return replace(session, map3d=map3d)
    if kind == "bank":
        bank = load_embedding_bank(path)
        if bank.dim != session.dim:
            raise DimMismatch(f"bank dim {bank.dim} vs session dim {session.dim}")
        return replace(session, bank=bank)
    if kind == "mean-refs":
        refs = load_embedding_bank(path)
        if refs.dim != session.dim:
            raise DimMismatch(f"mean-refs dim {refs.dim} vs session dim {session.dim}")
        return replace(session, mean_refs=refs)
    if kind == "probe":
        probe = load_probe(path)
        if probe.dim != session.dim:
            raise DimMismatch(f"probe dim {probe.dim} vs session dim {session.dim}")
        return replace(session, probe=probe)
    raise ValueError(f"unknown load kind {kind!r}")


# ---------------------------------------------------------------------------
# Prompt embedding


def embed_prompt(prompt: str, cfg: EmbedderConfig, bank: EmbeddingBank) -> list[np.ndarray]:
    """Resolve a prompt to one or more embedding vectors.

    Exact-name bank hits return every matching entry (callers aggregate
    by max similarity). On a miss, external mode posts {"prompt": ...}
    and expects {"dim": int, "vector": [...]}.
    """
    if not prompt:
        raise ValueError("prompt must be nonempty")
    hits = bank.vectors_for(prompt)
    if hits:
        return hits
    if cfg.mode != "external":
        raise NoEmbedderConfigured(f"prompt {prompt!r} not in bank and no external embedder")
    payload = json.dumps({"prompt": prompt}).encode("utf-8")
    request = urllib.request.Request(
        cfg.endpoint, data=payload, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(request, timeout=cfg.timeout_ms / 1000.0) as resp:
            doc = json.loads(resp.read().decode("utf-8"))
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, (socket.timeout, TimeoutError)):
            raise ProviderTimeout(f"embedder at {cfg.endpoint} timed out") from exc
        raise ProviderUnreachable(f"embedder at {cfg.endpoint}: {exc.reason}") from exc
    except (TimeoutError, socket.timeout) as exc:
        raise ProviderTimeout(f"embedder at {cfg.endpoint} timed out") from exc
    except OSError as exc:
        raise ProviderUnreachable(f"embedder at {cfg.endpoint}: {exc}") from exc
    if not isinstance(doc, dict) or "dim" not in doc or "vector" not in doc:
        raise ProviderUnreachable(f"embedder at {cfg.endpoint} returned a malformed reply")
    if doc["dim"] != bank.dim:
        raise DimMismatch(f"provider dim {doc['dim']} vs session dim {bank.dim}")
    vec = np.asarray(doc["vector"], dtype=np.float64)
    if vec.shape != (bank.dim,):
        raise DimMismatch(f"provider vector length {vec.shape} vs dim {bank.dim}")
    return [vec]


# ---------------------------------------------------------------------------
# Query handling


@dataclass(frozen=True)
class ImageQueryResult:
    similarity: np.ndarray  # (H, W) float64
    stats: dict  # {"min", "max", "mean"}
    pgm: bytes


@dataclass(frozen=True)
class MapQueryResult:
    entries: list[tuple[VoxelKey, float]]  # descending similarity


def _pixel_similarity(volume: np.ndarray, vectors: list[np.ndarray]) -> np.ndarray:
    """Per-pixel max cosine over the prompt vectors; 0 at zero-norm pixels."""
    rows = np.stack([l2_normalize(v) for v in vectors])
    sims, _ = similarity_matrix(volume, rows)
    h, w = volume.shape[:2]
    return sims.max(axis=1).reshape(h, w)


def map_query_multi(map3d: EmbeddingMap3D, vectors: list[np.ndarray],
                    top_k: Optional[int] = None) -> list[tuple[VoxelKey, float]]:
    """Top-k map cells by max similarity over one or more query vectors."""
    best: dict[VoxelKey, float] = {}
    for vec in vectors:
        for key, sim in map_query(map3d, vec):
            if key not in best or sim > best[key]:
                best[key] = sim
    ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
    k = DEFAULT_TOP_K if top_k is None else top_k
    return ranked[:k]


def handle_query(session: SessionState, target: str, prompt: str,
                 top_k: Optional[int] = None):
    """Similarity of a prompt against one image volume or the 3D map.

    ``target`` is a loaded image id or the literal "map". Image targets
    yield an ImageQueryResult (similarity raster, stats, PGM bytes); the
    map target yields a MapQueryResult with the top-k cells.
    """
    vectors = embed_prompt(prompt, session.embedder, session.bank)
    if target == "map":
        if session.map3d is None:
            raise NoMapLoaded("no 3D map loaded in this session")
        return MapQueryResult(entries=map_query_multi(session.map3d, vectors, top_k))
    volume = session.volumes.get(target)
    if volume is None:
        raise UnknownImage(f"image {target!r} is not loaded")
    sim = _pixel_similarity(volume, vectors)
    stats = {"min": float(sim.min()), "max": float(sim.max()), "mean": float(sim.mean())}
    return ImageQueryResult(similarity=sim, stats=stats, pgm=similarity_to_pgm(sim))


# ---------------------------------------------------------------------------
# Closed-set segmentation


@dataclass(frozen=True)
class SegmentationResult:
    labels: np.ndarray  # (H, W) uint16
    legend: list[str]
    lmap: bytes


def classify_with_bank(volume: np.ndarray, bank: EmbeddingBank) -> tuple[np.ndarray, list[str]]:
    """Argmax classification where same-name entries vote by max similarity.

    With unique names this is exactly cosine argmax against the bank rows.
    """
    if not bank.entries:
        raise MissingReferences("reference bank has no entries")
    names = bank.unique_names()
    rows = np.stack([l2_normalize(vec) for _, vec in bank.entries])
    sims, zero = similarity_matrix(volume, rows)
    groups = [
        [i for i, (entry_name, _) in enumerate(bank.entries) if entry_name == name]
        for name in names
    ]
    per_class = np.stack([sims[:, idx].max(axis=1) for idx in groups], axis=1)
    labels = np.argmax(per_class, axis=1).astype(np.uint16)
    labels[zero] = IGNORE_LABEL
    h, w = volume.shape[:2]
    return labels.reshape(h, w), names


def handle_segment(session: SessionState, image_id: str, mode: str) -> SegmentationResult:
    """Closed-set labels for a loaded volume via text refs, visual means,
    or the linear probe."""
    volume = session.volumes.get(image_id)
    if volume is None:
        raise UnknownImage(f"image {image_id!r} is not loaded")
    if mode == "probe":
        if session.probe is None:
            raise MissingProbe("no probe weights loaded")
        labels = probe_predict(volume, session.probe)
        legend = session.probe.class_names or [
            f"class_{i}" for i in range(session.probe.num_classes)
        ]
    elif mode == "text":
        labels, legend = classify_with_bank(volume, session.bank)
    elif mode == "mean":
        if session.mean_refs is None:
            raise MissingReferences("no visual-mean reference bank loaded")
        labels, legend = classify_with_bank(volume, session.mean_refs)
    else:
        raise ValueError(f"unknown segmentation mode {mode!r}")
    return SegmentationResult(labels=labels, legend=list(legend), lmap=label_map_bytes(labels))
