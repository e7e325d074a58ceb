"""
Multi-task glioma network for IDH genotype classification.

This package provides the case bundle format and phantom generator, the
segmentation backbone with tumor-aware and cross-modality classification
streams, the training and cross-validation harness, evaluation statistics and
occlusion saliency.
"""

__version__ = "0.1.0"
