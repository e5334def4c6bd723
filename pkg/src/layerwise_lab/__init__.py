"""Layer-wise versus global training with accelerated downsampling hierarchies."""

__version__ = "0.1.0"
