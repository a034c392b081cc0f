"""Multi-graphs convolution network: forward pass, losses, gradients.

Each convolution layer concatenates the initial features with the five
per-graph propagations and projects back down; the output embedding is a
weighted sum of all layer features. Training combines a node identity
loss, a batch-hard triplet loss and the graph reconstruction loss.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat_cols, concat_rows, log_softmax_rows
from .domain import AffinitySet, Config, GroupSample, ModelParams
from .graphs import _reconstruction_loss_t, build_affinity_tensors
from .relations import euclidean_matrix, relation_masks


@dataclass(frozen=True)
class ForwardTrace:
    """Per-layer features, output embedding and classifier logits."""

    features: list[np.ndarray]
    f_out: np.ndarray
    logits: np.ndarray


@dataclass(frozen=True)
class LossParts:
    id_loss: float
    triplet_loss: float
    recon_loss: float
    total: float
    valid_anchors: int


def params_to_tensors(params: ModelParams, requires_grad: bool = False) -> dict[str, Tensor]:
    return {name: Tensor(arr, requires_grad=requires_grad) for name, arr in params.tensors()}


def _forward_t(
    f0: Tensor, affs: dict[str, Tensor], params_t: dict[str, Tensor], config: Config
) -> dict[str, Tensor]:
    features = [f0]
    for s in range(config.num_layers):
        prev = features[-1]
        stacked = concat_cols(
            [
                f0,
                affs["a0"] @ prev,
                affs["ap"] @ prev,
                affs["oc"] @ prev,
                affs["fo"] @ prev,
                affs["rs"] @ prev,
            ]
        )
        features.append(stacked @ params_t[f"w_dim_{s}"])
    f_out = features[0] @ params_t["w_out_0"]
    for s in range(1, config.num_layers + 1):
        f_out = f_out + features[s] @ params_t[f"w_out_{s}"]
    logits = f_out @ params_t["classifier_weight"] + params_t["classifier_bias"]
    return {"features": features, "f_out": f_out, "logits": logits}


def forward(f0: np.ndarray, affinities: AffinitySet, params: ModelParams, config: Config) -> ForwardTrace:
    """Run the convolution stack over prebuilt affinities (no gradients)."""
    affs = {
        "a0": Tensor(affinities.a0),
        "ap": Tensor(affinities.a_ap),
        "oc": Tensor(affinities.a_oc),
        "fo": Tensor(affinities.a_fo),
        "rs": Tensor(affinities.a_rs),
    }
    out = _forward_t(Tensor(f0), affs, params_to_tensors(params), config)
    return ForwardTrace(
        features=[t.data for t in out["features"]],
        f_out=out["f_out"].data,
        logits=out["logits"].data,
    )


def embed_group(
    sample: GroupSample, params: ModelParams, config: Config
) -> tuple[np.ndarray, np.ndarray]:
    """Output features and global affinity for one sample, end to end."""
    masks = relation_masks(sample, config.tau, config.sigma_floor)
    params_t = params_to_tensors(params)
    affs, _ = build_affinity_tensors(Tensor(sample.embeddings), masks, params_t, config)
    out = _forward_t(Tensor(sample.embeddings), affs, params_t, config)
    return out["f_out"].data, affs["a0"].data


def _id_loss_t(logits: Tensor, labels: np.ndarray) -> Tensor:
    n, c = logits.data.shape
    if np.any(labels < 0) or np.any(labels >= c):
        raise ValueError(f"label out of range [0, {c})")
    picked = log_softmax_rows(logits)[np.arange(n), labels]
    return -picked.sum() * (1.0 / n)


def id_loss(logits: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of the true member identity per node."""
    return _id_loss_t(Tensor(logits), np.asarray(labels, dtype=np.int64)).item()


def _hard_pairs(features: np.ndarray, labels: np.ndarray) -> list[tuple[int, int, int]]:
    """(anchor, hardest positive, hardest negative) for each valid anchor."""
    dist = euclidean_matrix(features, features)
    triples = []
    for i in range(len(labels)):
        same = labels == labels[i]
        pos = np.flatnonzero(same)
        pos = pos[pos != i]
        neg = np.flatnonzero(~same)
        if len(pos) == 0 or len(neg) == 0:
            continue
        hardest_pos = pos[np.argmax(dist[i, pos])]
        hardest_neg = neg[np.argmin(dist[i, neg])]
        triples.append((i, int(hardest_pos), int(hardest_neg)))
    return triples


def _row_distance_t(features: Tensor, i: int, j: int) -> Tensor:
    diff = features[i] - features[j]
    return (diff * diff).sum().sqrt()


def _triplet_loss_t(features: Tensor, labels: np.ndarray, margin: float) -> tuple[Tensor | None, int]:
    triples = _hard_pairs(features.data, labels)
    if not triples:
        return None, 0
    total = None
    for i, p, n in triples:
        hinge = (
            _row_distance_t(features, i, p) - _row_distance_t(features, i, n) + margin
        ).relu()
        total = hinge if total is None else total + hinge
    return total * (1.0 / len(triples)), len(triples)


def triplet_loss(features: np.ndarray, labels, margin: float) -> float:
    """Batch-hard triplet loss, averaged over anchors that have both a
    positive and a negative in the batch. Returns 0 (with a warning) when
    no anchor qualifies."""
    if len(features) < 2:
        raise ValueError("triplet loss needs a batch of at least 2 rows")
    loss_t, n_valid = _triplet_loss_t(Tensor(features), np.asarray(labels, dtype=np.int64), margin)
    if n_valid == 0:
        warnings.warn("no valid triplet anchors in batch", RuntimeWarning, stacklevel=2)
        return 0.0
    return loss_t.item()


def total_loss(id_value: float, trip_value: float, recon_value: float, delta: float) -> float:
    for v in (id_value, trip_value, recon_value):
        if not np.isfinite(v):
            raise ValueError("loss components must be finite")
    return id_value + trip_value + delta * recon_value


def _batch_loss_t(
    batch: list[GroupSample],
    params_t: dict[str, Tensor],
    config: Config,
    label_map: dict[int, int],
    frozen_sigmas: list[float] | None = None,
    masks_cache: list[RelationMasks] | None = None,
) -> tuple[Tensor, LossParts, list[float]]:
    """Total training loss for a batch of groups, on the autodiff graph.

    `frozen_sigmas` pins each group's kernel bandwidth; finite-difference
    checks pass the bandwidths of the unperturbed parameters so both
    gradient routes share the stop-gradient convention. Masks depend only
    on the inputs, so callers evaluating repeatedly may precompute them.
    """
    per_group_logits = []
    per_group_fout = []
    per_group_recon = []
    labels = []
    sigmas = []
    for g, sample in enumerate(batch):
        f0 = Tensor(sample.embeddings)
        if masks_cache is None:
            masks = relation_masks(sample, config.tau, config.sigma_floor)
        else:
            masks = masks_cache[g]
        affs, sigma = build_affinity_tensors(
            f0, masks, params_t, config,
            sigma_override=None if frozen_sigmas is None else frozen_sigmas[g],
        )
        sigmas.append(sigma)
        out = _forward_t(f0, affs, params_t, config)
        per_group_logits.append(out["logits"])
        per_group_fout.append(out["f_out"])
        recon = _reconstruction_loss_t(
            affs["a0"], [affs["ap"], affs["oc"], affs["fo"], affs["rs"]], params_t["w_re"]
        )
        per_group_recon.append(recon)
        labels.extend(label_map[m.member_id] for m in sample.members)

    labels = np.asarray(labels, dtype=np.int64)
    logits = concat_rows(per_group_logits)
    pool = concat_rows(per_group_fout)

    zero = Tensor(0.0)
    id_t = _id_loss_t(logits, labels) if "id" in config.active_losses else zero
    trip_t, n_valid = (None, 0)
    if "trip" in config.active_losses:
        trip_t, n_valid = _triplet_loss_t(pool, labels, config.margin)
    if trip_t is None:
        trip_t = zero
    recon_t = zero
    if "re" in config.active_losses:
        recon_t = per_group_recon[0]
        for r in per_group_recon[1:]:
            recon_t = recon_t + r
        recon_t = recon_t * (1.0 / len(batch))

    total_t = id_t + trip_t + recon_t * config.delta
    parts = LossParts(
        id_loss=id_t.item(),
        triplet_loss=trip_t.item(),
        recon_loss=recon_t.item(),
        total=total_t.item(),
        valid_anchors=n_valid,
    )
    return total_t, parts, sigmas


def loss_value(
    batch: list[GroupSample],
    params: ModelParams,
    config: Config,
    label_map: dict[int, int],
    frozen_sigmas: list[float] | None = None,
    masks_cache: list[RelationMasks] | None = None,
) -> LossParts:
    """Loss components without building gradients."""
    _, parts, _ = _batch_loss_t(
        batch, params_to_tensors(params), config, label_map, frozen_sigmas, masks_cache
    )
    return parts


def gradients(
    batch: list[GroupSample], params: ModelParams, config: Config, label_map: dict[int, int]
) -> tuple[dict[str, np.ndarray], LossParts]:
    """Exact gradients of the total loss for every parameter tensor."""
    params_t = params_to_tensors(params, requires_grad=True)
    total_t, parts, _ = _batch_loss_t(batch, params_t, config, label_map)
    if not np.isfinite(parts.total):
        raise FloatingPointError("non-finite training loss")
    total_t.backward()
    grads = {}
    for name, t in params_t.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name}")
        grads[name] = g
    return grads, parts


def finite_difference_gradients(
    batch: list[GroupSample],
    params: ModelParams,
    config: Config,
    label_map: dict[int, int],
    h: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central-difference gradients, entry by entry, for every tensor.

    Each group's kernel bandwidth is frozen at its value under the
    unperturbed parameters, matching the analytic stop-gradient rule.
    """
    masks = [relation_masks(s, config.tau, config.sigma_floor) for s in batch]
    _, _, sigmas = _batch_loss_t(
        batch, params_to_tensors(params), config, label_map, masks_cache=masks
    )
    out: dict[str, np.ndarray] = {}
    work = params.copy()
    for name, arr in work.tensors():
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + h
            up = loss_value(batch, work, config, label_map, sigmas, masks).total
            flat[idx] = original - h
            down = loss_value(batch, work, config, label_map, sigmas, masks).total
            flat[idx] = original
            grad.reshape(-1)[idx] = (up - down) / (2.0 * h)
        out[name] = grad
    return out


def gradient_check(
    batch: list[GroupSample],
    params: ModelParams,
    config: Config,
    label_map: dict[int, int],
    h: float = 1e-5,
) -> dict[str, float]:
    """Max relative error between analytic and numeric gradients per tensor.

    The denominator is floored at 1e-3 so near-zero entries are compared
    on an absolute scale instead of amplifying finite-difference noise.
    """
    analytic, _ = gradients(batch, params, config, label_map)
    numeric = finite_difference_gradients(batch, params, config, label_map, h)
    report = {}
    for name in analytic:
        a, n = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-3)
        report[name] = float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
    return report
