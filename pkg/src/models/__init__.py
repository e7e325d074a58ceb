"""
Network modules: backbone, TAFE, CMD, fusion and checkpoints.
"""

from src.models.backbone import Backbone, FeaturePyramid, SegOutput
from src.models.checkpoint import LoadReport, load_checkpoint, save_checkpoint
from src.models.network import IdhMultiTaskNet, build_network, predict_proba

__all__ = [
    "Backbone",
    "FeaturePyramid",
    "SegOutput",
    "LoadReport",
    "load_checkpoint",
    "save_checkpoint",
    "IdhMultiTaskNet",
    "build_network",
    "predict_proba",
]
