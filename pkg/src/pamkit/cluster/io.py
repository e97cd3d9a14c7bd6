"""Embedding containers and cluster-assignment records.

Embeddings arrive from external encoders either as a binary container
(magic "PFGE") or as comma-separated text; assignments leave as
newline-delimited JSON records.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import EmptyInputError, ModelMismatchError, ParamError, ValidationError

EMBEDDING_MAGIC = b"PFGE"
EMBEDDING_VERSION = 1

SOURCE_KINDS = ("candidate", "reference", "background")


@dataclass
class Embedding:
    segment_id: str
    model_id: str
    vector: np.ndarray
    source_kind: str = "candidate"

    def __post_init__(self) -> None:
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.vector.ndim != 1:
            raise ParamError(f"{self.segment_id}: vector must be 1-D")
        if not np.all(np.isfinite(self.vector)):
            raise ParamError(f"{self.segment_id}: vector has non-finite values")
        if self.source_kind not in SOURCE_KINDS:
            raise ParamError(f"{self.segment_id}: unknown source_kind {self.source_kind!r}")


def check_same_model(embeddings: list[Embedding]) -> tuple[str, int]:
    """All embeddings must share one model_id and dimension; returns both."""
    if not embeddings:
        raise EmptyInputError("no embeddings given")
    model_id = embeddings[0].model_id
    dim = embeddings[0].vector.shape[0]
    for e in embeddings:
        if e.model_id != model_id:
            raise ModelMismatchError(f"{e.segment_id}: model {e.model_id!r} != {model_id!r}")
        if e.vector.shape[0] != dim:
            raise ModelMismatchError(f"{e.segment_id}: dimension {e.vector.shape[0]} != {dim}")
    return model_id, dim


def write_embeddings(path: str | Path, embeddings: list[Embedding]) -> None:
    model_id, dim = check_same_model(embeddings)
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<I", EMBEDDING_VERSION))
        mid = model_id.encode()
        fh.write(struct.pack("<H", len(mid)))
        fh.write(mid)
        fh.write(struct.pack("<II", dim, len(embeddings)))
        for e in embeddings:
            sid = e.segment_id.encode()
            fh.write(struct.pack("<H", len(sid)))
            fh.write(sid)
            fh.write(e.vector.astype("<f4").tobytes())


def read_embeddings(path: str | Path, source_kind: str = "candidate") -> list[Embedding]:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != EMBEDDING_MAGIC:
            raise ValidationError(f"{path}: not an embedding container")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != EMBEDDING_VERSION:
            raise ValidationError(f"{path}: unsupported version {version}")
        (mid_len,) = struct.unpack("<H", fh.read(2))
        model_id = fh.read(mid_len).decode()
        dim, count = struct.unpack("<II", fh.read(8))
        out = []
        for _ in range(count):
            (sid_len,) = struct.unpack("<H", fh.read(2))
            sid = fh.read(sid_len).decode()
            vec = np.frombuffer(fh.read(dim * 4), dtype="<f4").astype(np.float64)
            if vec.shape[0] != dim:
                raise ValidationError(f"{path}: truncated record for {sid}")
            out.append(Embedding(segment_id=sid, model_id=model_id, vector=vec,
                                 source_kind=source_kind))
    return out


def read_embeddings_text(path: str | Path, model_id: str = "text") -> list[Embedding]:
    """Plain text form: segment_id, source_kind, v1..vd per line."""
    out = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) < 3:
                raise ValidationError(f"{path}:{ln}: need segment_id, source_kind, values")
            sid, kind = parts[0], parts[1]
            try:
                vec = np.array([float(v) for v in parts[2:]])
            except ValueError as exc:
                raise ValidationError(f"{path}:{ln}: bad value ({exc})") from exc
            out.append(Embedding(segment_id=sid, model_id=model_id, vector=vec,
                                 source_kind=kind))
    return out
