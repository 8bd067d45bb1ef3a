"""Numerical substrate: reverse-mode tensors, graph attention, GRU."""

from .gat import DualGat, GatLayer, MlpExtractor, attention_weights, transfer_matrix
from .graph import LocalGraph, WorldView, build_local_graph, random_graph
from .gru import GRUCell, gru_step
from .nn import MLP, Adam, Linear, Module, load_checkpoint, save_checkpoint
from .tensor import NonFiniteError, Tensor, backward

__all__ = ["Adam", "DualGat", "GRUCell", "GatLayer", "Linear", "LocalGraph", "MLP", "MlpExtractor",
           "Module", "NonFiniteError", "Tensor", "WorldView", "attention_weights", "backward",
           "build_local_graph", "gru_step", "load_checkpoint", "random_graph", "save_checkpoint",
           "transfer_matrix"]
