"""Multimodal glucose forecasting with cross-attention, multi-scale attention
and continual-learning retention, on a small numpy autodiff engine."""

__version__ = "0.1.0"
