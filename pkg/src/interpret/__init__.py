"""
Occlusion saliency and overlay export.
"""

from src.interpret.occlusion import grid_starts, occlusion_postprocess, occlusion_raw
from src.interpret.overlay import export_overlay

__all__ = ["grid_starts", "occlusion_postprocess", "occlusion_raw", "export_overlay"]
