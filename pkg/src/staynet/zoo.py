"""The twelve benchmark architectures, smallest to largest.

Simple models feed the feature sequence straight into one recurrent or
convolutional body and regress with a single linear unit.  Stacked (s-)
variants deepen the recurrent body, hybrids put a two-layer CNN in front
of (or behind) the stacked body, and the proposed hybrid adds a dense
head; its -s variant appends self-attention after the recurrent body.
"""

from __future__ import annotations

from .nn import HeadSpec, LayerSpec, ModelSpec

MODEL_NAMES = ("lstm", "bilstm", "gru", "cnn", "s-lstm", "s-bilstm", "s-gru",
               "cnn-lstm", "cnn-bilstm", "gru-cnn", "cnn-gru-dnn", "cnn-gru-dnn-s")
PROPOSED_MODEL = "cnn-gru-dnn"


def _conv_pair(filters):
    if len(filters) != 2:
        raise ValueError(f"conv models take two filter counts, got {tuple(filters)}")
    f1, f2 = filters
    return (LayerSpec(kind="conv", filters=f1, kernel=3),
            LayerSpec(kind="conv", filters=f2, kernel=3))


def zoo_spec(name, input_features, hidden=64, filters=(32, 64), head=(64, 32), stack=2):
    """ModelSpec for one zoo entry; sizes are tunable, shapes are fixed."""
    scalar = (HeadSpec(1, "linear"),)
    dense_head = tuple(HeadSpec(u, "relu") for u in head) + scalar

    def rec(kind, depth, direction="forward"):
        return LayerSpec(kind=kind, hidden=hidden, stack=depth, direction=direction)

    builders = {
        "lstm": lambda: ModelSpec(input_features, (rec("lstm", 1),), head=scalar),
        "bilstm": lambda: ModelSpec(input_features, (rec("lstm", 1, "bidirectional"),),
                                    head=scalar),
        "gru": lambda: ModelSpec(input_features, (rec("gru", 1),), head=scalar),
        "cnn": lambda: ModelSpec(input_features, _conv_pair(filters), head=scalar),
        "s-lstm": lambda: ModelSpec(input_features, (rec("lstm", stack),), head=scalar),
        "s-bilstm": lambda: ModelSpec(input_features, (rec("lstm", stack, "bidirectional"),),
                                      head=scalar),
        "s-gru": lambda: ModelSpec(input_features, (rec("gru", stack),), head=scalar),
        "cnn-lstm": lambda: ModelSpec(input_features, _conv_pair(filters) + (rec("lstm", stack),),
                                      head=scalar),
        "cnn-bilstm": lambda: ModelSpec(
            input_features, _conv_pair(filters) + (rec("lstm", stack, "bidirectional"),),
            head=scalar),
        "gru-cnn": lambda: ModelSpec(input_features, (rec("gru", stack),) + _conv_pair(filters),
                                     head=scalar),
        "cnn-gru-dnn": lambda: ModelSpec(
            input_features, _conv_pair(filters) + (rec("gru", stack),), head=dense_head),
        "cnn-gru-dnn-s": lambda: ModelSpec(
            input_features, _conv_pair(filters) + (rec("gru", stack),), attention=True,
            head=dense_head),
    }
    if name not in builders:
        raise ValueError(f"unknown model {name!r}, expected one of {list(MODEL_NAMES)}")
    return builders[name]().validate()


def default_zoo(input_features, names=MODEL_NAMES, **sizes):
    """Ordered (name, spec) pairs for the requested zoo members."""
    return [(name, zoo_spec(name, input_features, **sizes)) for name in names]
