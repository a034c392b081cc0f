"""Core value types shared across the pipeline.

Everything here is immutable after construction: numpy payloads are
copied and marked read-only, so instances are safe to share across
threads.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

DEFAULT_MAX_MEMBERS = 6
GRAPH_NAMES = ("ap", "oc", "fo", "rs")
LOSS_NAMES = ("id", "trip", "re")


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MemberBox:
    """One group member: identity, bounding box, visible-keypoint count.

    The box is [x_lt, y_lt, x_rb, y_rb] in pixels with the left-top
    corner strictly above-left of the right-bottom corner.
    """

    member_id: int
    bbox: tuple[float, float, float, float]
    num_keypoints: int

    def __post_init__(self):
        object.__setattr__(self, "bbox", tuple(self.bbox))
        if len(self.bbox) != 4:
            raise ValueError("bbox must have four coordinates")
        x_lt, y_lt, x_rb, y_rb = self.bbox
        if not (x_lt < x_rb and y_lt < y_rb):
            raise ValueError(f"degenerate bbox {self.bbox}: need x_lt < x_rb and y_lt < y_rb")
        if self.num_keypoints < 0:
            raise ValueError("num_keypoints must be non-negative")


def canonical_order(members: list[MemberBox] | tuple[MemberBox, ...]) -> list[MemberBox]:
    """Sort members ascending by (x_lt, y_lt, member_id); stable and idempotent."""
    if len(members) == 0:
        raise ValueError("empty group")
    return sorted(members, key=lambda m: (m.bbox[0], m.bbox[1], m.member_id))


@dataclass(frozen=True, eq=False)
class GroupSample:
    """One group image: members plus their embedding rows.

    Members are stored in canonical order; the embedding matrix is
    permuted alongside so row i always belongs to members[i].
    """

    group_id: int
    view_id: int
    members: tuple[MemberBox, ...]
    embeddings: np.ndarray

    def __post_init__(self):
        if len(self.members) == 0:
            raise ValueError("empty group")
        emb = np.array(self.embeddings, dtype=np.float64)
        if emb.ndim != 2:
            raise ValueError("embeddings must be a 2-D matrix")
        if emb.shape[0] != len(self.members):
            raise ValueError(
                f"embedding rows ({emb.shape[0]}) must match member count ({len(self.members)})"
            )
        if not np.all(np.isfinite(emb)):
            raise ValueError("embeddings contain non-finite values")

        order = sorted(range(len(self.members)),
                       key=lambda i: (self.members[i].bbox[0],
                                      self.members[i].bbox[1],
                                      self.members[i].member_id))
        members = tuple(self.members[i] for i in order)
        emb = emb[order]
        emb.setflags(write=False)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "embeddings", emb)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def member_ids(self) -> list[int]:
        return [m.member_id for m in self.members]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroupSample):
            return NotImplemented
        return (
            self.group_id == other.group_id
            and self.view_id == other.view_id
            and self.members == other.members
            and np.array_equal(self.embeddings, other.embeddings)
        )


def _check_binary(name: str, m: np.ndarray) -> None:
    if not np.all((m == 0) | (m == 1)):
        raise ValueError(f"{name} must be a 0/1 matrix")


@dataclass(frozen=True, eq=False)
class RelationMasks:
    """Binary relation masks: appearance, occlusion and its transpose."""

    m_ap: np.ndarray
    m_oc: np.ndarray
    m_fo: np.ndarray

    def __post_init__(self):
        m_ap = _frozen_array(self.m_ap)
        m_oc = _frozen_array(self.m_oc)
        m_fo = _frozen_array(self.m_fo)
        for name, m in (("m_ap", m_ap), ("m_oc", m_oc), ("m_fo", m_fo)):
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"{name} must be square")
            _check_binary(name, m)
            if np.any(np.diag(m) != 0):
                raise ValueError(f"{name} must have a zero diagonal")
        if not np.array_equal(m_oc, m_fo.T):
            raise ValueError("m_oc must equal transpose(m_fo)")
        if not np.array_equal(m_ap, m_ap.T):
            raise ValueError("m_ap must be symmetric")
        object.__setattr__(self, "m_ap", m_ap)
        object.__setattr__(self, "m_oc", m_oc)
        object.__setattr__(self, "m_fo", m_fo)


@dataclass(frozen=True, eq=False)
class AffinitySet:
    """The unnormalized global affinity plus the five row-processed graphs.

    The kernel-derived matrices are positive with exactly normalized rows;
    the four remixed graphs are only required to be finite, because their
    signed mixing weights can push individual entries slightly negative.
    """

    a_tilde0: np.ndarray
    a0: np.ndarray
    a_ap: np.ndarray
    a_oc: np.ndarray
    a_fo: np.ndarray
    a_rs: np.ndarray

    def __post_init__(self):
        arrays = {name: _frozen_array(getattr(self, name))
                  for name in ("a_tilde0", "a0", "a_ap", "a_oc", "a_fo", "a_rs")}
        n = arrays["a0"].shape[0]
        for name, a in arrays.items():
            if a.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite values")
        if np.any(arrays["a_tilde0"] <= 0) or np.any(arrays["a_tilde0"] > 1):
            raise ValueError("a_tilde0 entries must lie in (0, 1]")
        if np.any(arrays["a0"] < 0):
            raise ValueError("a0 must be non-negative")
        row_sums = arrays["a0"].sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > 1e-9):
            raise ValueError("a0 rows must sum to 1")
        for name, a in arrays.items():
            object.__setattr__(self, name, a)


@dataclass(frozen=True)
class MatchScore:
    """Fused multi-scale similarity with its per-scale components."""

    p_nod: float
    p_sub: float
    p_glo: float
    p: float
    sub_skipped: bool


@dataclass(frozen=True)
class Config:
    """Model, training and matching hyperparameters.

    `embed_dim` and `num_classes` may be left as None and resolved from
    the dataset when training starts.
    """

    embed_dim: int | None = None
    out_dim: int = 32
    num_layers: int = 2
    max_members: int = DEFAULT_MAX_MEMBERS
    num_classes: int | None = None
    tau: float = 0.0
    margin: float = 0.3
    delta: float = 0.2
    alpha: float = 0.6
    beta: float = 0.3
    gamma: float = 0.1
    clusters: int = 3
    cluster_mode: str = "fixed"
    lr: float = 0.0003
    epochs: int = 200
    batch_size: int = 16
    momentum: float = 0.0
    seed: int = 0
    sigma_floor: float = 1e-6
    eig_zero_tol: float = 1e-8
    active_graphs: tuple[str, ...] = GRAPH_NAMES
    active_losses: tuple[str, ...] = LOSS_NAMES

    def __post_init__(self):
        object.__setattr__(self, "active_graphs", tuple(self.active_graphs))
        object.__setattr__(self, "active_losses", tuple(self.active_losses))
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")
        if self.max_members < 1:
            raise ValueError("max_members must be >= 1")
        if min(self.alpha, self.beta, self.gamma) < 0 or self.alpha + self.beta + self.gamma <= 0:
            raise ValueError("scale weights must be non-negative with a positive sum")
        if self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be positive")
        if self.cluster_mode not in ("fixed", "auto"):
            raise ValueError("cluster_mode must be 'fixed' or 'auto'")
        if self.clusters < 2:
            raise ValueError("clusters must be >= 2")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid training schedule")
        unknown = set(self.active_graphs) - set(GRAPH_NAMES)
        if unknown:
            raise ValueError(f"unknown relation graphs: {sorted(unknown)}")
        unknown = set(self.active_losses) - set(LOSS_NAMES)
        if unknown:
            raise ValueError(f"unknown losses: {sorted(unknown)}")

    def resolved(self, embed_dim: int, num_classes: int) -> "Config":
        """Fill data-dependent fields, checking any pinned values agree."""
        if self.embed_dim is not None and self.embed_dim != embed_dim:
            raise ValueError(
                f"config embed_dim={self.embed_dim} does not match data dim {embed_dim}"
            )
        if self.num_classes is not None and self.num_classes != num_classes:
            raise ValueError(
                f"config num_classes={self.num_classes} does not match data ({num_classes})"
            )
        return dataclasses.replace(self, embed_dim=embed_dim, num_classes=num_classes)


@dataclass(eq=False)
class ModelParams:
    """All learnable tensors, kept as float64 numpy arrays."""

    w0: np.ndarray
    w_ap: np.ndarray
    w_oc: np.ndarray
    w_fo: np.ndarray
    w_rs: np.ndarray
    w_re: np.ndarray
    w_dim: list[np.ndarray] = field(default_factory=list)
    w_out: list[np.ndarray] = field(default_factory=list)
    classifier_weight: np.ndarray = None
    classifier_bias: np.ndarray = None

    def tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        """Stable (name, array) iteration used by storage and the optimizer."""
        yield "w0", self.w0
        yield "w_ap", self.w_ap
        yield "w_oc", self.w_oc
        yield "w_fo", self.w_fo
        yield "w_rs", self.w_rs
        yield "w_re", self.w_re
        for s, w in enumerate(self.w_dim):
            yield f"w_dim_{s}", w
        for s, w in enumerate(self.w_out):
            yield f"w_out_{s}", w
        yield "classifier_weight", self.classifier_weight
        yield "classifier_bias", self.classifier_bias

    def copy(self) -> "ModelParams":
        return ModelParams(
            w0=self.w0.copy(),
            w_ap=self.w_ap.copy(),
            w_oc=self.w_oc.copy(),
            w_fo=self.w_fo.copy(),
            w_rs=self.w_rs.copy(),
            w_re=self.w_re.copy(),
            w_dim=[w.copy() for w in self.w_dim],
            w_out=[w.copy() for w in self.w_out],
            classifier_weight=self.classifier_weight.copy(),
            classifier_bias=self.classifier_bias.copy(),
        )

    def set_tensor(self, name: str, value: np.ndarray) -> None:
        if name.startswith("w_dim_"):
            self.w_dim[int(name[len("w_dim_"):])] = value
        elif name.startswith("w_out_"):
            self.w_out[int(name[len("w_out_"):])] = value
        elif hasattr(self, name):
            setattr(self, name, value)
        else:
            raise KeyError(name)

    def validate(self, config: Config) -> None:
        d, out = config.embed_dim, config.out_dim
        n_max, n_cls = config.max_members, config.num_classes
        expected = {
            "w0": (d, d),
            "w_ap": (n_max, n_max),
            "w_oc": (n_max, n_max),
            "w_fo": (n_max, n_max),
            "w_rs": (n_max, n_max),
            "w_re": (n_max, n_max),
            "classifier_weight": (out, n_cls),
            "classifier_bias": (n_cls,),
        }
        for s in range(config.num_layers):
            expected[f"w_dim_{s}"] = (6 * d, d)
        for s in range(config.num_layers + 1):
            expected[f"w_out_{s}"] = (d, out)
        seen = {}
        for name, arr in self.tensors():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name} contains non-finite values")
            seen[name] = arr.shape
        for name, shape in expected.items():
            if name not in seen:
                raise ValueError(f"missing parameter {name}")
            if seen[name] != shape:
                raise ValueError(f"parameter {name} has shape {seen[name]}, expected {shape}")
        if len(self.w_dim) != config.num_layers or len(self.w_out) != config.num_layers + 1:
            raise ValueError("layer count does not match config")
