"""Model descriptions and assembly.

A ModelSpec names an architecture abstractly: an ordered list of body
layers (conv / gru / lstm), an optional self-attention layer after the
body, and a dense head that must end in a single linear unit.

Assembly turns a tabular row of F features into a sequence of F steps
with one channel, threads it through the body in [batch, steps, channels]
layout, collapses the sequence axis (last step if the body ends in a
recurrent layer, flatten otherwise), and applies the head.  All weights
come from the caller's Rng, so a (spec, seed) pair pins the model bit
for bit.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from ..tensor import Rng, ShapeError
from .attention import SelfAttention
from .layers import Activation, Conv1d, Dense, StaleCacheError, activation_names, conv1d_pad
from .recurrent import BiLstmStack, GruStack, LstmStack

_LAYER_KINDS = ("conv", "gru", "lstm")
_DIRECTIONS = ("forward", "bidirectional")


@dataclass(frozen=True)
class LayerSpec:
    """One body layer: conv wants filters/kernel, recurrent wants hidden/stack."""

    kind: str
    filters: int = 0
    kernel: int = 0
    padding: str = "same"
    activation: str = "relu"
    hidden: int = 0
    stack: int = 1
    direction: str = "forward"

    def validate(self, where):
        if self.kind not in _LAYER_KINDS:
            raise ValueError(f"{where}: unknown layer kind {self.kind!r}")
        if self.kind == "conv":
            if self.filters < 1 or self.kernel < 1:
                raise ValueError(f"{where}: conv needs filters >= 1 and kernel >= 1")
            if self.padding not in ("valid", "same"):
                raise ValueError(f"{where}: unknown padding {self.padding!r}")
            if self.activation not in activation_names():
                raise ValueError(f"{where}: unknown activation {self.activation!r}")
        else:
            if self.hidden < 1 or self.stack < 1:
                raise ValueError(f"{where}: recurrent needs hidden >= 1 and stack >= 1")
            if self.direction not in _DIRECTIONS:
                raise ValueError(f"{where}: unknown direction {self.direction!r}")
            if self.direction == "bidirectional" and self.kind != "lstm":
                raise ValueError(f"{where}: bidirectional is only supported for lstm")


@dataclass(frozen=True)
class HeadSpec:
    """One dense head layer."""

    units: int
    activation: str = "relu"

    def validate(self, where):
        if self.units < 1:
            raise ValueError(f"{where}: units must be >= 1")
        if self.activation not in activation_names():
            raise ValueError(f"{where}: unknown activation {self.activation!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description; immutable and JSON round-trippable."""

    input_features: int
    layers: tuple = ()
    attention: bool = False
    head: tuple = (HeadSpec(1, "linear"),)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "head", tuple(self.head))

    def validate(self):
        if self.input_features < 1:
            raise ValueError("input_features must be >= 1")
        for i, layer in enumerate(self.layers):
            layer.validate(f"layers[{i}]")
        if not self.head:
            raise ValueError("head must contain at least one dense layer")
        for i, h in enumerate(self.head):
            h.validate(f"head[{i}]")
        if self.head[-1].units != 1:
            raise ValueError(f"final head layer must have 1 unit, got {self.head[-1].units}")
        return self


def _layer_to_dict(layer):
    if layer.kind == "conv":
        out = {"kind": "conv", "filters": layer.filters, "kernel": layer.kernel}
        if layer.padding != "same":
            out["padding"] = layer.padding
        if layer.activation != "relu":
            out["activation"] = layer.activation
        return out
    return {"kind": layer.kind, "hidden": layer.hidden,
            "stack": layer.stack, "direction": layer.direction}


def _layer_from_dict(d, where):
    if not isinstance(d, dict) or "kind" not in d:
        raise ValueError(f"{where}: layer entry must be an object with a 'kind' field")
    kind = d["kind"]
    allowed = {"conv": {"kind", "filters", "kernel", "padding", "activation"},
               "gru": {"kind", "hidden", "stack", "direction"},
               "lstm": {"kind", "hidden", "stack", "direction"}}
    if kind not in allowed:
        raise ValueError(f"{where}: unknown layer kind {kind!r}")
    extra = set(d) - allowed[kind]
    if extra:
        raise ValueError(f"{where}: unexpected fields {sorted(extra)} for kind {kind!r}")
    if kind == "conv":
        return LayerSpec(kind="conv", filters=int(d.get("filters", 0)),
                         kernel=int(d.get("kernel", 0)),
                         padding=d.get("padding", "same"),
                         activation=d.get("activation", "relu"))
    return LayerSpec(kind=kind, hidden=int(d.get("hidden", 0)),
                     stack=int(d.get("stack", 1)),
                     direction=d.get("direction", "forward"))


def model_spec_to_json(spec):
    """Serialize a ModelSpec to a stable JSON string."""
    doc = {
        "input_features": spec.input_features,
        "layers": [_layer_to_dict(l) for l in spec.layers],
        "attention": spec.attention,
        "head": [{"units": h.units, "activation": h.activation} for h in spec.head],
    }
    return json.dumps(doc, indent=2)


def model_spec_from_json(text):
    """Parse a ModelSpec from JSON, validating as it goes."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"model spec is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ValueError("model spec must be a JSON object")
    extra = set(doc) - {"input_features", "layers", "attention", "head"}
    if extra:
        raise ValueError(f"model spec has unexpected fields {sorted(extra)}")
    if "input_features" not in doc:
        raise ValueError("model spec is missing 'input_features'")
    layers = tuple(_layer_from_dict(l, f"layers[{i}]")
                   for i, l in enumerate(doc.get("layers", [])))
    head_doc = doc.get("head", [])
    head = []
    for i, h in enumerate(head_doc):
        extra = set(h) - {"units", "activation"}
        if extra:
            raise ValueError(f"head[{i}]: unexpected fields {sorted(extra)}")
        head.append(HeadSpec(units=int(h["units"]), activation=h.get("activation", "linear")))
    spec = ModelSpec(input_features=int(doc["input_features"]), layers=layers,
                     attention=bool(doc.get("attention", False)), head=tuple(head))
    return spec.validate()


class ToSequence:
    """[batch, features] -> [batch, features, 1]: one step per feature."""

    def __init__(self, n_features):
        self.n_features = n_features

    def params(self):
        return []

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ShapeError(f"model input {x.shape}, expected [batch, {self.n_features}]")
        return x[:, :, None], (self, x.shape)

    def backward(self, cache, g):
        _check_owner(self, cache)
        return g[:, :, 0], []


class SeqConv:
    """Adapts Conv1d's [batch, channels, length] contract to sequence layout."""

    def __init__(self, conv):
        self.conv = conv

    def params(self):
        return self.conv.params()

    def forward(self, x):
        y, conv_cache = self.conv.forward(np.ascontiguousarray(x.transpose(0, 2, 1)))
        return np.ascontiguousarray(y.transpose(0, 2, 1)), (self, conv_cache)

    def backward(self, cache, g):
        _check_owner(self, cache)
        dx, grads = self.conv.backward(cache[1], np.ascontiguousarray(g.transpose(0, 2, 1)))
        return np.ascontiguousarray(dx.transpose(0, 2, 1)), grads


class TakeLast:
    """[batch, steps, width] -> [batch, width], keeping the final step."""

    def params(self):
        return []

    def forward(self, x):
        if x.ndim != 3:
            raise ShapeError(f"take-last input must be rank 3, got {x.shape}")
        return x[:, -1, :], (self, x.shape)

    def backward(self, cache, g):
        _check_owner(self, cache)
        _, shape = cache
        dx = np.zeros(shape)
        dx[:, -1, :] = g
        return dx, []


class Flatten:
    """[batch, steps, width] -> [batch, steps * width]."""

    def params(self):
        return []

    def forward(self, x):
        if x.ndim != 3:
            raise ShapeError(f"flatten input must be rank 3, got {x.shape}")
        n = x.shape[0]
        return x.reshape(n, -1), (self, x.shape)

    def backward(self, cache, g):
        _check_owner(self, cache)
        _, shape = cache
        return g.reshape(shape), []


def _check_owner(owner, cache):
    if cache[0] is not owner:
        raise StaleCacheError(
            f"cache belongs to {type(cache[0]).__name__}, not this {type(owner).__name__}"
        )


class Model:
    """An assembled network: ordered blocks from input row to scalar output."""

    def __init__(self, spec, blocks):
        self.spec = spec
        self.blocks = blocks

    def params(self):
        return [p for block in self.blocks for p in block.params()]

    def param_count(self):
        return sum(p.size for p in self.params())

    def snapshot(self):
        """Deep copy of all parameters, for best-epoch restore."""
        return [p.copy() for p in self.params()]

    def restore(self, snapshot):
        params = self.params()
        if len(snapshot) != len(params):
            raise ValueError(f"snapshot has {len(snapshot)} arrays, model has {len(params)}")
        for p, s in zip(params, snapshot):
            if p.shape != s.shape:
                raise ShapeError(f"snapshot shape {s.shape} vs parameter {p.shape}")
            p[...] = s

    def forward(self, x):
        """x[batch, features] -> (yhat[batch], caches)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.spec.input_features:
            raise ShapeError(
                f"model input {x.shape}, expected [batch, {self.spec.input_features}]"
            )
        if x.shape[0] == 0:
            raise ShapeError("model input has empty batch")
        caches = []
        cur = x
        for block in self.blocks:
            cur, cache = block.forward(cur)
            caches.append(cache)
        return cur[:, 0], caches

    def predict(self, x):
        return self.forward(x)[0]

    def backward(self, caches, gy):
        """gy[batch] -> (dx[batch, features], grads aligned with params())."""
        if len(caches) != len(self.blocks):
            raise ValueError(f"{len(caches)} caches for {len(self.blocks)} blocks")
        g = np.asarray(gy, dtype=np.float64)[:, None]
        grads_per_block = []
        for block, cache in zip(reversed(self.blocks), reversed(caches)):
            g, grads = block.backward(cache, g)
            grads_per_block.append(grads)
        flat = [gr for grads in reversed(grads_per_block) for gr in grads]
        return g, flat


def build_model(spec, rng_or_seed):
    """Assemble a Model from a spec, drawing weights from the given stream."""
    spec.validate()
    rng = rng_or_seed if isinstance(rng_or_seed, Rng) else Rng(rng_or_seed)

    blocks = []
    has_sequence = bool(spec.layers) or spec.attention
    steps = spec.input_features
    dim = 1 if has_sequence else spec.input_features
    if has_sequence:
        blocks.append(ToSequence(spec.input_features))

    last_kind = None
    for i, layer in enumerate(spec.layers):
        if layer.kind == "conv":
            try:
                _, _, out_len = conv1d_pad(steps, layer.kernel, layer.padding)
            except ShapeError as e:
                raise ShapeError(f"layers[{i}] (conv after {last_kind or 'input'}): {e}") from None
            conv = Conv1d.init(rng, dim, layer.filters, layer.kernel, layer.padding)
            blocks.append(SeqConv(conv))
            blocks.append(Activation(layer.activation))
            dim, steps = layer.filters, out_len
        elif layer.kind == "gru":
            blocks.append(GruStack.init(rng, dim, layer.hidden, layer.stack))
            dim = layer.hidden
        elif layer.kind == "lstm" and layer.direction == "bidirectional":
            blocks.append(BiLstmStack.init(rng, dim, layer.hidden, layer.stack))
            dim = 2 * layer.hidden
        else:
            blocks.append(LstmStack.init(rng, dim, layer.hidden, layer.stack))
            dim = layer.hidden
        last_kind = layer.kind

    if spec.attention:
        blocks.append(SelfAttention.init(rng, dim))

    if has_sequence:
        if last_kind in ("gru", "lstm") and not spec.attention:
            blocks.append(TakeLast())
        else:
            blocks.append(Flatten())
            dim = dim * steps

    for i, h in enumerate(spec.head):
        blocks.append(Dense.init(rng, dim, h.units))
        blocks.append(Activation(h.activation))
        dim = h.units

    return Model(spec, blocks)


def with_stack_depth(spec, depth):
    """Copy of spec with the first recurrent layer's stack set to depth."""
    layers = list(spec.layers)
    for i, layer in enumerate(layers):
        if layer.kind in ("gru", "lstm"):
            layers[i] = dataclasses.replace(layer, stack=depth)
            return dataclasses.replace(spec, layers=tuple(layers))
    raise ValueError("spec has no recurrent layer to deepen")
