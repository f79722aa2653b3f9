"""plotbench: benchmark how multimodal models read time series as plots vs text."""

__version__ = "0.1.0"
