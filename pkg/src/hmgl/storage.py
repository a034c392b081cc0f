"""File formats: JSON-lines manifests, binary embeddings, checkpoints.

Readers validate aggressively and fail with positional diagnostics;
writers produce canonical bytes so identical inputs give identical files.
Floats are 32-bit on disk and 64-bit in memory.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import Config, GroupSample, MemberBox, ModelParams

EMBEDDING_MAGIC = b"GEMB"
CHECKPOINT_MAGIC = b"HMGL"
FORMAT_VERSION = 1

_REQUIRED_MANIFEST_KEYS = ("group_id", "view_id", "embedding_file", "members")
_REQUIRED_MEMBER_KEYS = ("member_id", "bbox", "num_keypoints")


@dataclass
class ManifestEntry:
    """One manifest line; unknown keys ride along for round-trips."""

    group_id: int
    view_id: int
    embedding_file: str
    members: list[dict]
    extras: dict = field(default_factory=dict)


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise ValueError(f"{path}:{lineno}: record must be an object")
            for key in _REQUIRED_MANIFEST_KEYS:
                if key not in record:
                    raise ValueError(f"{path}:{lineno}: missing key '{key}'")
            members = record["members"]
            if not isinstance(members, list) or not members:
                raise ValueError(f"{path}:{lineno}: 'members' must be a non-empty array")
            for m in members:
                for key in _REQUIRED_MEMBER_KEYS:
                    if key not in m:
                        raise ValueError(f"{path}:{lineno}: member missing key '{key}'")
                bbox = m["bbox"]
                if len(bbox) != 4:
                    raise ValueError(f"{path}:{lineno}: bbox must have 4 entries")
                if not (bbox[0] < bbox[2] and bbox[1] < bbox[3]):
                    raise ValueError(f"{path}:{lineno}: bbox {bbox} violates x_lt < x_rb, y_lt < y_rb")
                if m["num_keypoints"] < 0:
                    raise ValueError(f"{path}:{lineno}: num_keypoints must be >= 0")
            extras = {k: v for k, v in record.items() if k not in _REQUIRED_MANIFEST_KEYS}
            entries.append(
                ManifestEntry(
                    group_id=int(record["group_id"]),
                    view_id=int(record["view_id"]),
                    embedding_file=str(record["embedding_file"]),
                    members=members,
                    extras=extras,
                )
            )
    return entries


def write_manifest(entries: list[ManifestEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            record = {
                "group_id": entry.group_id,
                "view_id": entry.view_id,
                "embedding_file": entry.embedding_file,
                "members": entry.members,
            }
            record.update(entry.extras)
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def write_embeddings(matrix: np.ndarray, path: str | Path) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError("embeddings must be 2-D")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("embeddings contain non-finite values")
    n, d = matrix.shape
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, n, d))
        fh.write(matrix.astype("<f4").tobytes(order="C"))


def read_embeddings(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated header, expected >= 16 bytes, got {len(raw)}")
    if raw[:4] != EMBEDDING_MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}, expected {EMBEDDING_MAGIC!r}")
    version, n, d = struct.unpack("<III", raw[4:16])
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expected = 16 + 4 * n * d
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(raw)}")
    matrix = np.frombuffer(raw[16:], dtype="<f4").reshape(n, d).astype(np.float64)
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"{path}: payload contains NaN or Inf")
    return matrix


def _config_to_json(config: Config) -> str:
    payload = dataclasses.asdict(config)
    payload["active_graphs"] = list(config.active_graphs)
    payload["active_losses"] = list(config.active_losses)
    return json.dumps(payload, sort_keys=True)


def _config_from_json(text: str) -> Config:
    payload = json.loads(text)
    payload["active_graphs"] = tuple(payload["active_graphs"])
    payload["active_losses"] = tuple(payload["active_losses"])
    return Config(**payload)


def write_checkpoint(params: ModelParams, config: Config, path: str | Path) -> None:
    tensors = list(params.tensors())
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(tensors)))
        for name, arr in tensors:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.asarray(arr, dtype="<f4").tobytes(order="C"))
        config_blob = _config_to_json(config).encode("utf-8")
        fh.write(struct.pack("<I", len(config_blob)))
        fh.write(config_blob)


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw = raw
        self.path = path
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.raw):
            raise ValueError(
                f"{self.path}: truncated, expected {self.pos + count} bytes, got {len(self.raw)}"
            )
        chunk = self.raw[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def read_checkpoint(path: str | Path) -> tuple[ModelParams, Config]:
    reader = _Reader(Path(path).read_bytes(), path)
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad magic, expected {CHECKPOINT_MAGIC!r}")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise ValueError(
            f"{path}: unsupported checkpoint version {version}; upgrade this package to read it"
        )
    count = reader.u32()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = reader.take(reader.u32()).decode("utf-8")
        rank = reader.u32()
        shape = tuple(reader.u32() for _ in range(rank))
        size = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(shape)
        tensors[name] = data.astype(np.float64)
    config = _config_from_json(reader.take(reader.u32()).decode("utf-8"))
    if reader.pos != len(reader.raw):
        raise ValueError(f"{path}: {len(reader.raw) - reader.pos} trailing bytes")

    expected_names = {"w0", "w_ap", "w_oc", "w_fo", "w_rs", "w_re",
                      "classifier_weight", "classifier_bias"}
    expected_names |= {f"w_dim_{s}" for s in range(config.num_layers)}
    expected_names |= {f"w_out_{s}" for s in range(config.num_layers + 1)}
    missing = expected_names - set(tensors)
    if missing:
        raise ValueError(f"{path}: checkpoint missing tensor '{sorted(missing)[0]}'")
    unknown = set(tensors) - expected_names
    if unknown:
        raise ValueError(f"{path}: unknown tensor '{sorted(unknown)[0]}'")

    params = ModelParams(
        w0=tensors["w0"],
        w_ap=tensors["w_ap"],
        w_oc=tensors["w_oc"],
        w_fo=tensors["w_fo"],
        w_rs=tensors["w_rs"],
        w_re=tensors["w_re"],
        w_dim=[tensors[f"w_dim_{s}"] for s in range(config.num_layers)],
        w_out=[tensors[f"w_out_{s}"] for s in range(config.num_layers + 1)],
        classifier_weight=tensors["classifier_weight"],
        classifier_bias=tensors["classifier_bias"],
    )
    params.validate(config)
    return params, config


def write_dataset(samples: list[GroupSample], out_dir: str | Path) -> None:
    """Manifest plus one embedding file per sample."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for sample in samples:
        name = f"emb_g{sample.group_id:04d}_v{sample.view_id:02d}.gemb"
        write_embeddings(sample.embeddings, out_dir / name)
        entries.append(
            ManifestEntry(
                group_id=sample.group_id,
                view_id=sample.view_id,
                embedding_file=name,
                members=[
                    {
                        "member_id": m.member_id,
                        "bbox": [int(b) for b in m.bbox],
                        "num_keypoints": m.num_keypoints,
                    }
                    for m in sample.members
                ],
            )
        )
    write_manifest(entries, out_dir / "manifest.jsonl")


def load_dataset(data_dir: str | Path) -> list[GroupSample]:
    """Manifest plus embedding files back into group samples."""
    data_dir = Path(data_dir)
    samples = []
    for entry in read_manifest(data_dir / "manifest.jsonl"):
        emb = read_embeddings(data_dir / entry.embedding_file)
        members = tuple(
            MemberBox(
                member_id=int(m["member_id"]),
                bbox=tuple(m["bbox"]),
                num_keypoints=int(m["num_keypoints"]),
            )
            for m in entry.members
        )
        samples.append(
            GroupSample(
                group_id=entry.group_id,
                view_id=entry.view_id,
                members=members,
                embeddings=emb,
            )
        )
    return samples
