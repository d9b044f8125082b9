"""Political-actor representation learning on typed heterogeneous graphs.

A gated relational GCN encodes a heterogeneous information network of
legislators, governors, presidents, justices and their social context.
It is trained jointly on expert stance labels, liberal/conservative stance
consistency and an echo-chamber structural objective.
"""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor, backward, grad_check
from .data_io import (SynthConfig, default_features, export_embeddings, gen_synthetic,
                      load_dataset, parse_dataset, read_embeddings, write_dataset)
from .errors import (ConfigError, DataError, EnumerationError, NumericalError, SchemaError,
                     TapeError, UnknownEntityError)
from .hin import Edge, Hin, Node, NodeKind, RelationKind, validate_edge
from .model import (ModelParams, embed, forward, init_params, load_checkpoint, rgcn_layer,
                    save_checkpoint, stance_heads, ungated_layer)
from .objectives import (ExpertLabels, LabelEntry, bin_score, consistency_loss,
                         echo_chamber_loss, expert_loss, total_loss)
from .training import (Adam, EvalReport, TrainConfig, dbi, evaluate, make_splits,
                       majority_baseline, train)

__all__ = [
    "Adam", "ConfigError", "DataError", "Edge", "EnumerationError", "EvalReport",
    "ExpertLabels", "Hin", "LabelEntry", "ModelParams", "Node", "NodeKind", "NumericalError",
    "RelationKind", "SchemaError", "SynthConfig", "Tape", "TapeError", "Tensor", "TrainConfig",
    "UnknownEntityError", "backward", "bin_score", "consistency_loss", "dbi", "default_features",
    "echo_chamber_loss", "embed", "evaluate", "expert_loss", "export_embeddings", "forward",
    "gen_synthetic", "grad_check", "init_params", "load_checkpoint", "load_dataset",
    "majority_baseline", "make_splits", "parse_dataset", "read_embeddings", "rgcn_layer",
    "save_checkpoint", "stance_heads", "total_loss", "train", "ungated_layer", "validate_edge",
    "write_dataset",
]
