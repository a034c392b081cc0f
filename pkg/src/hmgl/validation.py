"""Input validation helpers shared by the estimator, trainer and CLI."""

from __future__ import annotations

from .domain import GroupSample


def check_groups(samples: list[GroupSample], max_members: int) -> list[GroupSample]:
    """Validate a dataset of group samples.

    Rejects oversize groups outright rather than truncating them, and
    requires one consistent embedding dimension across the dataset.
    """
    if not samples:
        raise ValueError("empty dataset")
    dim = None
    for idx, sample in enumerate(samples):
        if not isinstance(sample, GroupSample):
            raise TypeError(f"item {idx} is not a GroupSample")
        if sample.size > max_members:
            raise ValueError(
                f"group {sample.group_id} view {sample.view_id} has {sample.size} members, "
                f"limit is {max_members}"
            )
        d = sample.embeddings.shape[1]
        if dim is None:
            dim = d
        elif d != dim:
            raise ValueError(f"inconsistent embedding dims: {dim} vs {d} at item {idx}")
    return samples
