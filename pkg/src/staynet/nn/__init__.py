"""Neural network layers, cells, and model assembly."""

from .attention import SelfAttention, softmax_rows
from .layers import Activation, Conv1d, Dense, StaleCacheError, activation_names, conv1d_pad, sigmoid
from .model import (
    Flatten,
    HeadSpec,
    LayerSpec,
    Model,
    ModelSpec,
    SeqConv,
    TakeLast,
    ToSequence,
    build_model,
    model_spec_from_json,
    model_spec_to_json,
    with_stack_depth,
)
from .recurrent import (
    BiLstmLayer,
    BiLstmStack,
    GruCell,
    GruStack,
    LstmCell,
    LstmStack,
    bilstm_forward,
    gru_run,
    lstm_run,
)

__all__ = [
    "Activation", "BiLstmLayer", "BiLstmStack", "Conv1d", "Dense", "Flatten",
    "GruCell", "GruStack", "HeadSpec", "LayerSpec", "LstmCell", "LstmStack",
    "Model", "ModelSpec", "SelfAttention", "SeqConv", "StaleCacheError",
    "TakeLast", "ToSequence", "activation_names", "bilstm_forward", "build_model",
    "conv1d_pad", "gru_run", "lstm_run", "model_spec_from_json",
    "model_spec_to_json", "sigmoid", "softmax_rows", "with_stack_depth",
]
