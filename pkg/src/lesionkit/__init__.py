"""Toolkit for multiclass skin-lesion classification from mobile photos.

Covers the full workflow: ingesting labeled image folders into manifests,
stratified splitting, building transfer-learning classifiers on frozen
backbones, training with plateau/early-stop callbacks, confusion-matrix
metrics, LIME and Grad-CAM explanations, and an HTTP inference service.
"""

__version__ = "0.1.0"
