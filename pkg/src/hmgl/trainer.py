"""SGD training loop over group batches with hard-triplet sampling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import Config, GroupSample, ModelParams
from .mgnn import gradients
from .validation import check_groups


@dataclass(frozen=True)
class EpochLosses:
    epoch: int
    id_loss: float
    triplet_loss: float
    recon_loss: float
    total: float


def label_mapping(dataset: list[GroupSample]) -> dict[int, int]:
    """Member identity -> contiguous class index, sorted for stability."""
    ids = sorted({m.member_id for sample in dataset for m in sample.members})
    return {mid: idx for idx, mid in enumerate(ids)}


def resolve_config(config: Config, dataset: list[GroupSample]) -> Config:
    if not dataset:
        raise ValueError("empty dataset")
    check_groups(dataset, config.max_members)
    embed_dim = dataset[0].embeddings.shape[1]
    return config.resolved(embed_dim=embed_dim, num_classes=len(label_mapping(dataset)))


def init_params(config: Config, seed: int, relation_noise: float = 0.01) -> ModelParams:
    """Identity-plus-noise relation matrices, Glorot-uniform projections.

    Starting the mixing matrices near identity keeps early relational
    affinities close to the global affinity, a stable warm start.
    """
    if config.embed_dim is None or config.num_classes is None:
        raise ValueError("config must be resolved before initialization")
    rng = np.random.default_rng(seed)
    d, out = config.embed_dim, config.out_dim
    n_max, n_cls = config.max_members, config.num_classes

    def identity_noise(n: int) -> np.ndarray:
        return np.eye(n) + rng.uniform(-relation_noise, relation_noise, size=(n, n))

    def glorot(fan_in: int, fan_out: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    return ModelParams(
        w0=identity_noise(d),
        w_ap=identity_noise(n_max),
        w_oc=identity_noise(n_max),
        w_fo=identity_noise(n_max),
        w_rs=identity_noise(n_max),
        w_re=identity_noise(n_max),
        w_dim=[glorot(6 * d, d) for _ in range(config.num_layers)],
        w_out=[glorot(d, out) for _ in range(config.num_layers + 1)],
        classifier_weight=glorot(out, n_cls),
        classifier_bias=np.zeros(n_cls),
    )


def make_batches(
    dataset: list[GroupSample], batch_size: int, seed: int, epoch: int = 0
):
    """Seeded shuffle for the given epoch, then consecutive slices."""
    if not dataset:
        raise ValueError("empty dataset")
    order = np.random.default_rng([seed, epoch]).permutation(len(dataset))
    for start in range(0, len(dataset), batch_size):
        yield [dataset[i] for i in order[start : start + batch_size]]


def train(
    dataset: list[GroupSample],
    config: Config,
    checkpoint_path: str | Path | None = None,
    checkpoint_every: int = 0,
) -> tuple[ModelParams, list[EpochLosses]]:
    """Plain SGD (optional momentum) over the full loss; deterministic
    given (dataset, config, seed)."""
    config = resolve_config(config, dataset)
    labels = label_mapping(dataset)
    params = init_params(config, config.seed)
    velocity = {name: np.zeros_like(arr) for name, arr in params.tensors()}

    log: list[EpochLosses] = []
    for epoch in range(config.epochs):
        sums = np.zeros(4)
        batches = 0
        for batch_idx, batch in enumerate(
            make_batches(dataset, config.batch_size, config.seed, epoch)
        ):
            try:
                grads, parts = gradients(batch, params, config, labels)
            except FloatingPointError as exc:
                raise FloatingPointError(
                    f"training aborted at epoch {epoch}, batch {batch_idx}: {exc}"
                ) from exc
            for name, arr in params.tensors():
                step = grads[name]
                if config.momentum > 0.0:
                    velocity[name] = config.momentum * velocity[name] + step
                    step = velocity[name]
                params.set_tensor(name, arr - config.lr * step)
            sums += (parts.id_loss, parts.triplet_loss, parts.recon_loss, parts.total)
            batches += 1
        means = sums / max(batches, 1)
        log.append(EpochLosses(epoch, means[0], means[1], means[2], means[3]))
        if checkpoint_path and checkpoint_every > 0 and (epoch + 1) % checkpoint_every == 0:
            from .storage import write_checkpoint

            write_checkpoint(params, config, checkpoint_path)

    return params, log
