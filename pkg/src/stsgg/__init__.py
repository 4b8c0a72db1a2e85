"""Spatio-temporal scene graph generation with cue-driven queries."""
from .geometry import BoundingBox, LossWeights, giou, iou
from .matcher import MatchResult, hungarian, total_loss
from .model import ModelConfig, SceneGraphModel

__version__ = "0.1.0"
__all__ = [
    "BoundingBox", "LossWeights", "MatchResult", "ModelConfig", "SceneGraphModel",
    "giou", "hungarian", "iou", "total_loss",
]
