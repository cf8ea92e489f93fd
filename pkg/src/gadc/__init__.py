"""Adversarial graph diffusion: modified transition matrices, truncated
diffusion series, decoupled classification heads and experiment harnesses."""
from .diffusion import DiffusionConfig, DiffusionReport, diffuse_features, build_for_config
from .errors import CapacityError, DomainError, GadcError, InputError, NumericError
from .graph import Graph, LabeledDataset, load_graph, normalize
from .model import HeadConfig, train_head, evaluate
from .transition import TransitionOption

__version__ = "0.1.0"

__all__ = [
    "CapacityError", "DiffusionConfig", "DiffusionReport", "DomainError", "GadcError", "Graph", "HeadConfig",
    "InputError", "LabeledDataset", "NumericError", "TransitionOption", "build_for_config", "diffuse_features",
    "evaluate", "load_graph", "normalize", "train_head",
]
