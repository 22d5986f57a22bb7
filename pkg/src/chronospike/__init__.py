"""Spiking dynamic-graph encoder with attentive spatial aggregation and a Transformer readout."""

__version__ = "0.1.0"
