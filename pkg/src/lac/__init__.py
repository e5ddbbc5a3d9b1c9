"""Spectral graph augmentation for contrastive node representation learning.

The package is layered: ``tensor`` (reverse-mode autodiff) and ``graphio``
sit at the bottom, ``spectral`` eigendecomposes graphs, ``mta`` and ``cfa``
learn the augmented eigenvalues and feature coefficients, ``encoder`` and
``objective`` define the contrastive model, and ``trainer`` / ``cli`` drive it.
"""
from .graphio import Graph, GraphFormatError, load_graph, save_graph
from .spectral import SpectralView, to_spectral_view
from .trainer import TrainConfig, TrainingDiverged, train

__all__ = [
    "Graph",
    "GraphFormatError",
    "SpectralView",
    "TrainConfig",
    "TrainingDiverged",
    "load_graph",
    "save_graph",
    "to_spectral_view",
    "train",
]
__version__ = "0.1.0"
