"""Tooling for semi-supervised code-switched speech recognition experiments.

Language modelling, code-switch-aware perplexity, WER scoring with bootstrap
significance, and confidence-thresholded self-training data selection.
"""

__version__ = "0.1.0"
