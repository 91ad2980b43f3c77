"""Finite-difference checks of every backward pass (fast sweep).

The acceptance suite reruns these cases with 20 seeds per layer kind; here a
handful of seeds keeps the signal without the wait.
"""

import numpy as np
import pytest

from helpers import GRAD_KINDS, check_layer, fd_grad, rel_err, run_grad_case
from staynet.nn import HeadSpec, LayerSpec, ModelSpec, build_model
from staynet.tensor import Rng

RTOL = 1e-4


@pytest.mark.parametrize("kind", GRAD_KINDS)
@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("shape_idx", [0, 1, 2])
def test_layer_gradients(kind, seed, shape_idx):
    assert run_grad_case(kind, seed, shape_idx) <= RTOL


def test_full_model_gradients():
    spec = ModelSpec(
        input_features=5,
        layers=(LayerSpec(kind="conv", filters=3, kernel=2),
                LayerSpec(kind="gru", hidden=3, stack=1)),
        attention=False,
        head=(HeadSpec(units=4, activation="tanh"), HeadSpec(units=1, activation="linear")),
    )
    model = build_model(spec, Rng(0))
    x = Rng(1).uniform((4, 5), low=0.05, high=0.95)

    yhat, caches = model.forward(x)
    _, grads = model.backward(caches, np.ones_like(yhat))
    params = model.params()
    assert len(grads) == len(params)

    worst = 0.0
    for p, g in zip(params, grads):
        base = p.copy()

        def f(pv, p=p, base=base):
            p[...] = pv
            out = float(model.predict(x).sum())
            p[...] = base
            return out

        worst = max(worst, rel_err(g, fd_grad(f, base)))
    assert worst <= RTOL


def test_attention_model_gradients():
    spec = ModelSpec(
        input_features=4,
        layers=(LayerSpec(kind="gru", hidden=3, stack=1),),
        attention=True,
        head=(HeadSpec(units=1, activation="linear"),),
    )
    model = build_model(spec, Rng(5))
    x = Rng(6).uniform((3, 4), low=0.05, high=0.95)
    yhat, caches = model.forward(x)
    _, grads = model.backward(caches, np.ones_like(yhat))

    worst = 0.0
    for p, g in zip(model.params(), grads):
        base = p.copy()

        def f(pv, p=p, base=base):
            p[...] = pv
            out = float(model.predict(x).sum())
            p[...] = base
            return out

        worst = max(worst, rel_err(g, fd_grad(f, base)))
    assert worst <= RTOL


def test_gradcheck_rejects_wrong_gradient():
    # the harness itself must flag a corrupted backward pass
    class Broken:
        def __init__(self):
            self.w = np.array([[2.0, 1.0]])

        def params(self):
            return [self.w]

        def forward(self, x):
            return x @ self.w.T, (self, x)

        def backward(self, cache, g):
            _, x = cache
            return g @ self.w * 1.01, [g.T @ x * 1.01]

    with pytest.raises(AssertionError):
        assert check_layer(Broken(), np.array([[1.0, 2.0], [3.0, 4.0]])) <= RTOL
