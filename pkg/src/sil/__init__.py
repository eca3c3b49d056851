"""Scalar inference-strength prediction: biLSTM-attention regressor,
corpus handling, training harness, and model-behavior probes."""

__version__ = "0.1.0"
