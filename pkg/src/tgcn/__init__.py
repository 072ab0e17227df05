"""Tucker-decomposed relational graph convolution for knowledge graph completion."""

from .decoder import Decoder
from .encoder import EdgeIndex, EncoderLayer, build_edge_index, layer_forward
from .evaluation import RankingReport, evaluate, filtered_rank
from .kgdata import KnowledgeGraph, Subgraph, add_reciprocals, load_dataset, sample_subgraph
from .model import ModelConfig, TgcnModel, count_parameters, load_checkpoint, save_checkpoint
from .tensorcore import CoreTensor, cp_reconstruct, n_mode_product, relation_transform
from .training import TrainConfig, bce_1n_loss, fit, lr_at, nt_xent_1b_loss, train_step

__version__ = "0.1.0"

__all__ = [
    "CoreTensor", "Decoder", "EdgeIndex", "EncoderLayer", "KnowledgeGraph", "ModelConfig", "RankingReport",
    "Subgraph", "TgcnModel", "TrainConfig", "add_reciprocals", "bce_1n_loss", "build_edge_index",
    "count_parameters", "cp_reconstruct", "evaluate", "filtered_rank", "fit", "layer_forward", "load_checkpoint",
    "load_dataset", "lr_at", "n_mode_product", "nt_xent_1b_loss", "relation_transform", "sample_subgraph",
    "save_checkpoint", "train_step",
]
