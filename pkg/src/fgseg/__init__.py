"""Foreground object segmentation toolkit.

Trains and runs a fully convolutional two-class (object vs background)
segmentation network, and applies its foreground maps to content-aware
image retargeting and object-aware image retrieval.

Submodules are imported explicitly (``from fgseg import metrics``) so
that the CLI can configure BLAS threading before numpy loads.
"""

__version__ = "0.1.0"
