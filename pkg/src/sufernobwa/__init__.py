"""Satellite-image dehazing: Swin-hybrid U-Net, composite structural loss and metrics."""

__version__ = "0.1.0"
