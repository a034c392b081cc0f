"""Multi-relational graph learning and multi-scale matching for group
re-identification."""

from .domain import (
    AffinitySet,
    Config,
    GroupSample,
    MatchScore,
    MemberBox,
    ModelParams,
    RelationMasks,
    canonical_order,
)
from .estimator import MultiGraphMatcher
from .synth import SynthSpec, generate

__all__ = [
    "AffinitySet",
    "Config",
    "GroupSample",
    "MatchScore",
    "MemberBox",
    "ModelParams",
    "MultiGraphMatcher",
    "RelationMasks",
    "SynthSpec",
    "canonical_order",
    "generate",
]

__version__ = "0.1.0"
