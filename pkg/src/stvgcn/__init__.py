"""Spatial-temporal variable-graph convolution for skeleton + object action recognition."""

from .attributes import ClassAttributeDictionary, ObjectAttributes, encode_object_node, hash_embed, lookup_class_attribute
from .augment import AttackConfig, StreamKind, derive_stream, random_node_attack
from .graph import VariableGraph, adjacency_from_masks, build_edge_sets, edge_count, order_nodes, validity_masks
from .model import ModelConfig, STVGCN
from .padding import PaddedBatch, PaddedInstance, PaddedLayout, pad_batch, pad_frames
from .train import TrainConfig, evaluate, train

__version__ = "0.1.0"
