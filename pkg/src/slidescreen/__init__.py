"""Slide-level cancer screening from patch-level malignancy predictions.

The pipeline turns per-patch malignancy probabilities of a whole-slide
image into an 18-dimensional feature vector (malignant tissue ratio,
10-bin probability histogram, regression line of the histogram, and
connected-component dispersion at five radii), classifies each slide
with a wide-and-deep network, and evaluates classifiers under
stratified K-fold cross-validation.
"""

__version__ = "0.1.0"
