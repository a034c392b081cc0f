"""Affinity graph construction and the graph reconstruction loss.

The global affinity comes from a Gaussian kernel over a learned bilinear
score; relation-specific affinities remix its unnormalized form with a
learned matrix, row-normalize, and only then apply the relation mask.
That ordering (normalize, then mask) is load-bearing: masked rows sum
below one by design, and tests pin that behavior.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .domain import AffinitySet, Config, GroupSample, ModelParams, RelationMasks

_GRAPH_MASKS = {"ap": "m_ap", "oc": "m_oc", "fo": "m_fo", "rs": None}


def _global_affinity_t(
    f0: Tensor, w0: Tensor, sigma_floor: float, sigma_override: float | None = None
) -> tuple[Tensor, Tensor, float]:
    """Kernelized global affinity; returns (unnormalized, row-normalized, bandwidth).

    The kernel bandwidth is the population std of the bilinear scores,
    treated as a per-batch constant (no gradient through it). When the
    scores are constant (std below `sigma_floor`, e.g. a single member)
    there is no spread to measure against, so the kernel degenerates to
    all ones; the sentinel bandwidth 0.0 marks that case. Otherwise the
    bandwidth is floored at `sigma_floor`. `sigma_override` pins the
    bandwidth so finite-difference checks can evaluate the loss under
    the same frozen-bandwidth convention.
    """
    w_sym = (w0 + w0.T) * 0.5
    scores = f0 @ w_sym @ f0.T
    if sigma_override is None:
        raw = float(scores.data.std())
        sigma = 0.0 if raw < sigma_floor else max(raw, sigma_floor)
    else:
        sigma = sigma_override
    scale = 0.0 if sigma == 0.0 else -1.0 / (2.0 * sigma * sigma)
    # Exponents below -350 are pure underflow territory (entries under
    # 1e-152); clamping keeps the kernel strictly positive and all
    # backward intermediates representable. Clamped entries carry zero
    # gradient, which finite differences agree with.
    args = (scores * scores * scale).clip_min(-350.0)
    a_tilde = args.exp()
    # Kernel entries are positive by construction, so the row sums only
    # need an underflow guard; anything larger would break the exact
    # row-normalization of the global graph.
    row_sums = a_tilde.sum(axis=1, keepdims=True).clip_min(np.finfo(np.float64).tiny)
    return a_tilde, a_tilde / row_sums, sigma


def _relational_affinity_t(
    a_tilde0: Tensor,
    w_rel: Tensor,
    mask: np.ndarray | None,
    sigma_floor: float,
) -> Tensor:
    n = a_tilde0.data.shape[0]
    if n > w_rel.data.shape[0]:
        raise ValueError(f"group size {n} exceeds learned matrix size {w_rel.data.shape[0]}")
    mixed = w_rel[:n, :n] @ a_tilde0
    row_sums = mixed.sum(axis=1, keepdims=True).clip_min(sigma_floor)
    normalized = mixed / row_sums
    if mask is not None:
        normalized = normalized * Tensor(np.asarray(mask, dtype=np.float64))
    return normalized


def _reconstruction_loss_t(a0: Tensor, parts: list[Tensor], w_re: Tensor) -> Tensor:
    n = a0.data.shape[0]
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    approx = total @ w_re[:n, :n]
    diff = a0 - approx
    return (diff * diff).sum().sqrt()


def global_affinity(
    f0: np.ndarray, w0: np.ndarray, sigma_floor: float = 1e-6
) -> tuple[np.ndarray, np.ndarray]:
    """Build the global affinity pair (unnormalized, row-normalized)."""
    a_tilde, a0, _ = _global_affinity_t(Tensor(f0), Tensor(w0), sigma_floor)
    if not (np.all(np.isfinite(a_tilde.data)) and np.all(np.isfinite(a0.data))):
        raise FloatingPointError("affinity overflow")
    return a_tilde.data, a0.data


def relational_affinity(
    a_tilde0: np.ndarray,
    w_rel: np.ndarray,
    mask: np.ndarray | None = None,
    sigma_floor: float = 1e-6,
) -> np.ndarray:
    """Remixed affinity: learned mixing, row normalization, then masking."""
    return _relational_affinity_t(Tensor(a_tilde0), Tensor(w_rel), mask, sigma_floor).data


def reconstruction_loss(
    a0: np.ndarray,
    a_ap: np.ndarray,
    a_oc: np.ndarray,
    a_fo: np.ndarray,
    a_rs: np.ndarray,
    w_re: np.ndarray,
) -> float:
    """Frobenius distance between a0 and its remixed relational sum."""
    parts = [Tensor(a) for a in (a_ap, a_oc, a_fo, a_rs)]
    return _reconstruction_loss_t(Tensor(a0), parts, Tensor(w_re)).item()


def build_affinity_tensors(
    f0: Tensor,
    masks: RelationMasks,
    params_t: dict[str, Tensor],
    config: Config,
    sigma_override: float | None = None,
) -> tuple[dict[str, Tensor], float]:
    """All five affinity tensors for one group, on the autodiff graph.

    Relation graphs absent from `config.active_graphs` are replaced by
    zero matrices, which removes them from both the convolution and the
    reconstruction sum without changing any shapes. Returns the tensors
    along with the bandwidth actually used.
    """
    n = f0.data.shape[0]
    a_tilde, a0, sigma = _global_affinity_t(
        f0, params_t["w0"], config.sigma_floor, sigma_override
    )
    if not np.all(np.isfinite(a_tilde.data)):
        raise FloatingPointError("affinity overflow")
    affs: dict[str, Tensor] = {"a_tilde0": a_tilde, "a0": a0}
    for name, mask_field in _GRAPH_MASKS.items():
        if name not in config.active_graphs:
            affs[name] = Tensor(np.zeros((n, n)))
            continue
        mask = getattr(masks, mask_field) if mask_field else None
        affs[name] = _relational_affinity_t(
            a_tilde, params_t[f"w_{name}"], mask, config.sigma_floor
        )
    return affs, sigma


def affinity_set(
    sample: GroupSample,
    masks: RelationMasks,
    params: ModelParams,
    config: Config,
) -> AffinitySet:
    """Validated affinity container for one sample (no gradients)."""
    params_t = {name: Tensor(arr) for name, arr in params.tensors()}
    affs, _ = build_affinity_tensors(Tensor(sample.embeddings), masks, params_t, config)
    return AffinitySet(
        a_tilde0=affs["a_tilde0"].data,
        a0=affs["a0"].data,
        a_ap=affs["ap"].data,
        a_oc=affs["oc"].data,
        a_fo=affs["fo"].data,
        a_rs=affs["rs"].data,
    )
