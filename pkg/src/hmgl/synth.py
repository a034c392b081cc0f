"""Seeded synthetic group re-identification data for desk-scale runs.

Each member identity gets a unit-norm prototype; each view observes a
renormalized noisy copy. Prototypes are drawn around a small pool of
shared appearance archetypes, so different groups have colliding feature
centroids while individual members stay separable: whole-group averaging
loses information that member-level correspondence retains, which is the
regime the matcher is built for. Boxes sit on a horizontal line and
overlap in adjacent pairs with the requested probability; the member
planted behind loses 4 to 12 of its 17 keypoints, so occlusion
extraction from geometry plus keypoint counts can recover the planted
relations exactly. Overlaps never chain (a member takes part in at most
one), which keeps keypoint counts consistent with every planted pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DEFAULT_MAX_MEMBERS, GroupSample, MemberBox

FULL_KEYPOINTS = 17
BOX_WIDTH = 40
BOX_HEIGHT = 80
BOX_GAP = 8
MAX_OVERLAP = 12


@dataclass(frozen=True)
class SynthSpec:
    num_group_ids: int
    members_range: tuple[int, int] = (2, DEFAULT_MAX_MEMBERS)
    d: int = 32
    views: int = 2
    noise_scale: float = 0.45
    occlusion_rate: float = 0.5
    seed: int = 0
    archetypes: int = 4
    archetype_spread: float = 0.6

    def __post_init__(self):
        lo, hi = self.members_range
        if not (1 <= lo <= hi <= DEFAULT_MAX_MEMBERS):
            raise ValueError(f"members_range must lie within [1, {DEFAULT_MAX_MEMBERS}]")
        if self.views < 2:
            raise ValueError("views must be >= 2")
        if self.num_group_ids < 1:
            raise ValueError("num_group_ids must be >= 1")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not 0.0 <= self.occlusion_rate <= 1.0:
            raise ValueError("occlusion_rate must be in [0, 1]")
        if self.noise_scale < 0.0:
            raise ValueError("noise_scale must be >= 0")
        if self.archetypes < 0 or self.archetype_spread < 0.0:
            raise ValueError("archetype settings must be non-negative")


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def _layout(n: int, occlusion_rate: float, rng: np.random.Generator) -> tuple[list[tuple[int, int, int, int]], np.ndarray]:
    """Boxes along a line plus the planted occlusion matrix.

    After an overlapping pair the next adjacency is forced apart, so
    overlap components stay pairwise and keypoint assignments cannot
    conflict.
    """
    boxes = [(0, 0, BOX_WIDTH, BOX_HEIGHT)]
    planted = np.zeros((n, n), dtype=np.int64)
    prev_overlapped = False
    for i in range(1, n):
        x_prev = boxes[-1][0]
        overlap_here = (not prev_overlapped) and rng.random() < occlusion_rate
        if overlap_here:
            shift = BOX_WIDTH - int(rng.integers(4, MAX_OVERLAP + 1))
            front = i - 1 if rng.random() < 0.5 else i
            back = i if front == i - 1 else i - 1
            planted[front, back] = 1
        else:
            shift = BOX_WIDTH + BOX_GAP
        x = x_prev + shift
        boxes.append((x, 0, x + BOX_WIDTH, BOX_HEIGHT))
        prev_overlapped = overlap_here
    return boxes, planted


def _keypoints(planted: np.ndarray, rng: np.random.Generator) -> list[int]:
    n = planted.shape[0]
    counts = [FULL_KEYPOINTS] * n
    for j in range(n):
        if planted[:, j].any():
            counts[j] = FULL_KEYPOINTS - int(rng.integers(4, 13))
    return counts


def generate_with_truth(spec: SynthSpec) -> tuple[list[GroupSample], list[np.ndarray]]:
    """Samples plus, per sample, the planted occlusion matrix (in the
    same canonical member order the sample uses)."""
    rng = np.random.default_rng(spec.seed)
    pool = None
    if spec.archetypes > 0:
        pool = [_unit(rng.normal(size=spec.d)) for _ in range(spec.archetypes)]

    def draw_prototype() -> np.ndarray:
        if pool is None:
            return _unit(rng.normal(size=spec.d))
        base = pool[int(rng.integers(spec.archetypes))]
        return _unit(base + spec.archetype_spread * _unit(rng.normal(size=spec.d)))

    prototypes: dict[int, np.ndarray] = {}
    rosters: list[list[int]] = []
    next_member = 0
    for _ in range(spec.num_group_ids):
        n = int(rng.integers(spec.members_range[0], spec.members_range[1] + 1))
        roster = list(range(next_member, next_member + n))
        next_member += n
        for mid in roster:
            prototypes[mid] = draw_prototype()
        rosters.append(roster)

    samples: list[GroupSample] = []
    truths: list[np.ndarray] = []
    for gid, roster in enumerate(rosters):
        for view in range(spec.views):
            n = len(roster)
            boxes, planted = _layout(n, spec.occlusion_rate, rng)
            counts = _keypoints(planted, rng)
            members = tuple(
                MemberBox(member_id=mid, bbox=boxes[i], num_keypoints=counts[i])
                for i, mid in enumerate(roster)
            )
            # Per-coordinate std of noise_scale/sqrt(d) puts the expected
            # noise norm at noise_scale, i.e. the noise-to-signal ratio.
            sigma = spec.noise_scale / np.sqrt(spec.d)
            emb = np.stack(
                [
                    _unit(prototypes[mid] + sigma * rng.normal(size=spec.d))
                    for mid in roster
                ]
            )
            # Layout positions ascend left to right, so construction
            # keeps the generator's member order and `planted` aligns.
            samples.append(GroupSample(group_id=gid, view_id=view, members=members, embeddings=emb))
            truths.append(planted)
    return samples, truths


def generate(spec: SynthSpec) -> list[GroupSample]:
    """Deterministic synthetic dataset for the given spec."""
    samples, _ = generate_with_truth(spec)
    return samples
