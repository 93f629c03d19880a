"""Reference localizers compared against the attention model."""

from .wknn import WknnLocalizer, wknn_localize

__all__ = ["WknnLocalizer", "wknn_localize"]
