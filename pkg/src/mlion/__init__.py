"""Crypto market analytics engine: dual-track forecasting with adaptive
fusion, a four-agent report pipeline, news knowledge-graph
recommendations, and an online feedback policy."""

__version__ = "0.1.0"
