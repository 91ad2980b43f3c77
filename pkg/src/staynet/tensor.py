"""Dense float64 tensors plus the seeded randomness used everywhere else.

All numeric state in this package flows through two types defined here:

* Tensor: an immutable row-major array of 64-bit floats.  Construction and
  every exported op reject NaN or infinity instead of letting them spread.
* Rng: a counter-based generator (Philox) that can be split into independent
  child streams, so distinct (model, fold) cells draw from disjoint streams
  no matter what order they run in.
"""

from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not line up."""


class NonFiniteError(ArithmeticError):
    """Raised when a NaN or infinity shows up in tensor data."""


def _check_finite(arr, context):
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))
        raise NonFiniteError(f"{context}: non-finite value at index {tuple(bad[0])}")


class Tensor:
    """Immutable n-dimensional array of float64, row-major layout."""

    __slots__ = ("_arr",)

    def __init__(self, values, shape=None):
        # always copy so freezing the buffer can't freeze a caller's array
        arr = np.array(values, dtype=np.float64, order="C")
        if shape is not None:
            try:
                arr = arr.reshape(shape)
            except ValueError:
                raise ShapeError(
                    f"cannot view {arr.size} elements as shape {tuple(shape)}"
                ) from None
        arr = np.ascontiguousarray(arr)
        _check_finite(arr, "Tensor")
        if not arr.flags.owndata:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "_arr", arr)

    @property
    def shape(self):
        return self._arr.shape

    @property
    def ndim(self):
        return self._arr.ndim

    @property
    def size(self):
        return self._arr.size

    @property
    def array(self):
        """Read-only numpy view of the underlying buffer."""
        return self._arr

    def item(self):
        return float(self._arr.reshape(-1)[0]) if self._arr.size == 1 else self._raise_item()

    def _raise_item(self):
        raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")

    def tolist(self):
        return self._arr.tolist()

    def reshape(self, shape):
        try:
            return Tensor(self._arr.reshape(shape))
        except ValueError:
            raise ShapeError(
                f"cannot view {self._arr.size} elements as shape {tuple(shape)}"
            ) from None

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._arr, other._arr))

    def __hash__(self):
        return hash((self.shape, self._arr.tobytes()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, data={np.array2string(self._arr, threshold=8)})"


def tensor(values, shape=None):
    return Tensor(values, shape)


def zeros(shape):
    return Tensor(np.zeros(shape, dtype=np.float64))


def ones(shape):
    return Tensor(np.ones(shape, dtype=np.float64))


def full(shape, value):
    return Tensor(np.full(shape, float(value), dtype=np.float64))


def _as_array(x, context):
    if isinstance(x, Tensor):
        return x.array
    arr = np.asarray(x, dtype=np.float64)
    _check_finite(arr, context)
    return arr


def matmul(a, b):
    """Matrix product of two rank-2 tensors, [n,k] @ [k,m] -> [n,m]."""
    aa = _as_array(a, "matmul lhs")
    bb = _as_array(b, "matmul rhs")
    if aa.ndim != 2 or bb.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {aa.shape} and {bb.shape}")
    if aa.shape[1] != bb.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {aa.shape} vs {bb.shape}")
    out = aa @ bb
    _check_finite(out, "matmul result")
    return Tensor(out)


def zip_map(f, a, b):
    """Elementwise f(a_i, b_i) over two same-shape tensors."""
    aa = _as_array(a, "zip_map lhs")
    bb = _as_array(b, "zip_map rhs")
    if aa.shape != bb.shape:
        raise ShapeError(f"zip_map shapes differ: {aa.shape} vs {bb.shape}")
    out = np.asarray(f(aa, bb), dtype=np.float64)
    _check_finite(out, "zip_map result")
    return Tensor(out)


def map_elems(f, a):
    """Elementwise f over one tensor."""
    aa = _as_array(a, "map_elems input")
    out = np.asarray(f(aa), dtype=np.float64)
    _check_finite(out, "map_elems result")
    return Tensor(out)


_REDUCERS = {
    "sum": np.sum,
    "mean": np.mean,
    "max": np.max,
    "min": np.min,
}


def reduce(a, kind="sum", axis=None):
    """Reduce a tensor with one of sum|mean|max|min, over all elements or one axis."""
    if kind not in _REDUCERS:
        raise ValueError(f"unknown reduction {kind!r}, expected one of {sorted(_REDUCERS)}")
    aa = _as_array(a, "reduce input")
    if aa.size == 0:
        raise ShapeError("reduce over empty tensor")
    if axis is not None and not (-aa.ndim <= axis < aa.ndim):
        raise ShapeError(f"reduce axis {axis} out of range for shape {aa.shape}")
    out = _REDUCERS[kind](aa, axis=axis)
    _check_finite(out, "reduce result")
    return Tensor(out)


_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(state):
    state = (state + _SPLITMIX_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, (z ^ (z >> 31)) & _MASK64


def derive_seed(master, *indices):
    """Mix a master seed with integer indices into a fresh 64-bit seed.

    Pure function of its arguments: derive_seed(s, i, j) is the stream key
    for cell (i, j) and never collides with sibling cells in practice.
    """
    state = int(master) & _MASK64
    state, out = _splitmix64(state)
    for ix in indices:
        state = (state ^ ((int(ix) & _MASK64) * 0xD6E8FEB86659FD93)) & _MASK64
        state, out = _splitmix64(state)
    return out


class Rng:
    """Counter-based random stream with cheap splitting.

    Backed by Philox: the seed keys the stream, so child streams made by
    split() are statistically independent of the parent and of each other,
    and draws do not depend on how many siblings were split off before.
    """

    def __init__(self, seed):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def split(self, index):
        """Child stream for a stable integer index."""
        return Rng(derive_seed(self.seed, int(index)))

    def normal(self, shape=None, mean=0.0, std=1.0):
        return self._gen.normal(mean, std, size=shape)

    def uniform(self, shape=None, low=0.0, high=1.0):
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low, high=None, shape=None):
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, options, shape=None, p=None):
        return self._gen.choice(options, size=shape, p=p)


def rng_normal(rng, shape, mean=0.0, std=1.0):
    """Seeded normal draws as a Tensor."""
    if std < 0:
        raise ValueError(f"std must be non-negative, got {std}")
    return Tensor(rng.normal(shape, mean, std))


def rng_uniform(rng, shape, low=0.0, high=1.0):
    """Seeded uniform draws as a Tensor."""
    if not (low <= high):
        raise ValueError(f"uniform needs low <= high, got [{low}, {high}]")
    return Tensor(rng.uniform(shape, low, high))


def glorot_uniform(rng, fan_in, fan_out, shape):
    """Glorot/Xavier uniform init on +-sqrt(6/(fan_in+fan_out))."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(shape, -limit, limit)
