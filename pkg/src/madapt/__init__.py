"""Multi-adaptation style transfer on a small reverse-mode autodiff core."""

__version__ = "0.1.0"
