"""Attention-bartering equilibria, agent-based validation, and follower-graph analytics."""

from .core import (
    AttentionSpec,
    Club,
    HomogeneousEquilibrium,
    ModelParams,
    OutcomeCurve,
    OutcomePoint,
    attention,
    attention_derivative,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionSpec",
    "Club",
    "HomogeneousEquilibrium",
    "ModelParams",
    "OutcomeCurve",
    "OutcomePoint",
    "attention",
    "attention_derivative",
    "__version__",
]
