"""Dense float64 tensors with tape-based reverse-mode differentiation.

A :class:`Tape` is built fresh for every forward pass.  Leaves are registered
with :meth:`Tape.leaf`; every primitive applied to a tracked tensor appends a
node holding its parents and a vector-Jacobian product closure.  Tensors with
``tape is None`` are constants: operations on them compute eagerly and record
nothing, which is how evaluation-mode forward passes run.

Broadcasting is limited to tensor-scalar operations with a Python number.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DomainError, ShapeError

__all__ = [
    "Tensor", "Tape", "backward", "emit", "matmul", "add", "sub", "mul", "neg", "scale",
    "tanh", "sigmoid", "exp", "log", "dropout", "pointwise", "log_softmax",
    "softmax", "total", "concat", "stack", "take_rows", "pick", "transpose",
    "check_gradients",
]


class Tensor:
    """Real-valued array, optionally attached to a tape node."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data, tape: Tape | None = None, node_id: int | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        flag = f", node={self.node_id}" if self.tracked else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return _index(self, index)


class Tape:
    """Append-only record of primitive applications.

    ``nodes[i]`` is ``(parents, vjp)`` where ``parents`` holds the node ids of
    the inputs (``None`` for constant inputs) and ``vjp`` maps the output
    adjoint to a tuple of input adjoints.  Leaves have ``vjp is None``.
    Parents always precede their children.
    """

    def __init__(self):
        self.nodes: list[tuple[tuple, Callable | None]] = []

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value) -> Tensor:
        self.nodes.append(((), None))
        return Tensor(value, self, len(self.nodes) - 1)

    def record(self, data, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
        ids = tuple(p.node_id if p.tape is self else None for p in parents)
        self.nodes.append((ids, vjp))
        return Tensor(data, self, len(self.nodes) - 1)

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        return backward(self, loss)


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Gradient of the scalar ``loss`` with respect to every reached leaf.

    Adjoints of nodes used several times are summed.  Leaves the loss does
    not depend on are absent from the result.
    """
    if loss.tape is not tape:
        raise ContractError("loss tensor was not recorded on this tape")
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: list = [None] * (loss.node_id + 1)
    grads[loss.node_id] = np.ones_like(loss.data)
    leaves = {}
    for i in range(loss.node_id, -1, -1):
        g = grads[i]
        if g is None:
            continue
        parents, vjp = tape.nodes[i]
        if vjp is None:
            leaves[i] = g
            continue
        for pid, pg in zip(parents, vjp(g)):
            if pid is None or pg is None:
                continue
            if grads[pid] is None:
                grads[pid] = pg
            else:
                grads[pid] = grads[pid] + pg
        grads[i] = None
    return leaves


def _tape_of(*tensors) -> Tape | None:
    tape = None
    for t in tensors:
        if isinstance(t, Tensor) and t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ContractError("operands belong to different tapes")
            tape = t.tape
    return tape


def emit(data, parents, vjp) -> Tensor:
    """Wrap ``data`` as the output of a primitive; record it if any parent is tracked."""
    tape = _tape_of(*parents)
    if tape is None:
        return Tensor(data)
    return tape.record(data, parents, vjp)


def _same_shape(op, a: Tensor, b: Tensor):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no broadcasting)")


def _is_number(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


# -- arithmetic ---------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    if _is_number(b):
        return emit(a.data + b, (a,), lambda g: (g,))
    _same_shape("add", a, b)
    return emit(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b) -> Tensor:
    if _is_number(b):
        return emit(a.data - b, (a,), lambda g: (g,))
    _same_shape("sub", a, b)
    return emit(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b) -> Tensor:
    if _is_number(b):
        return scale(a, b)
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return emit(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return emit(a.data * s, (a,), lambda g: (g * s,))


def neg(a: Tensor) -> Tensor:
    return emit(-a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of 2-D operands; a 1-D operand acts as a row or column vector."""
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2) or ad.shape[-1] != bd.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    out = ad @ bd
    if ad.ndim == 2 and bd.ndim == 2:
        vjp = lambda g: (g @ bd.T, ad.T @ g)
    elif ad.ndim == 1 and bd.ndim == 2:
        vjp = lambda g: (bd @ g, np.outer(ad, g))
    elif ad.ndim == 2:
        vjp = lambda g: (np.outer(g, bd), ad.T @ g)
    else:
        vjp = lambda g: (g * bd, g * ad)
    return emit(out, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return emit(a.data.T, (a,), lambda g: (g.T,))


# -- elementwise nonlinearities ---------------------------------------------------

def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return emit(y, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)
    return emit(y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return emit(y, (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    x = a.data
    if np.any(x <= 0):
        raise DomainError("log of a non-positive value")
    return emit(np.log(x), (a,), lambda g: (g / x,))


def dropout(a: Tensor, p: float, rng: np.random.Generator | None = None,
            training: bool = True) -> Tensor:
    """Inverted dropout: zero with probability ``p``, scale survivors by 1/(1-p)."""
    if not training or p == 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise DomainError(f"dropout rate must lie in [0, 1), got {p}")
    if rng is None:
        raise ContractError("training-mode dropout needs a random generator")
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)
    return emit(a.data * mask, (a,), lambda g: (g * mask,))


_POINTWISE = {
    "add": add, "sub": sub, "mul": mul, "tanh": tanh, "sigmoid": sigmoid,
    "exp": exp, "log": log, "dropout_mask": dropout,
}


def pointwise(op: str, *args, **kwargs) -> Tensor:
    """Dispatch an elementwise primitive by name."""
    try:
        fn = _POINTWISE[op]
    except KeyError:
        raise ContractError(f"unknown pointwise op {op!r}") from None
    return fn(*args, **kwargs)


# -- reductions and normalizers -----------------------------------------------------

def log_softmax(a: Tensor) -> Tensor:
    """Log-normalize along the last axis (vector or row-wise for a matrix)."""
    x = a.data
    if x.ndim not in (1, 2) or x.shape[-1] == 0:
        raise ShapeError(f"log_softmax expects a non-empty vector or matrix, got {a.shape}")
    shifted = x - x.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    probs = np.exp(out)
    return emit(out, (a,), lambda g: (g - probs * g.sum(axis=-1, keepdims=True),))


def softmax(a: Tensor) -> Tensor:
    x = a.data
    if x.ndim not in (1, 2) or x.shape[-1] == 0:
        raise ShapeError(f"softmax expects a non-empty vector or matrix, got {a.shape}")
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)
    return emit(s, (a,), lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),))


def total(a: Tensor) -> Tensor:
    """Sum of all elements, as a 0-d tensor."""
    shape = a.data.shape
    return emit(np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))


# -- structural ------------------------------------------------------------------

def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    datas = [t.data for t in tensors]
    try:
        out = np.concatenate(datas, axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {[t.shape for t in tensors]}: {exc}") from None
    cuts = np.cumsum([d.shape[axis] for d in datas])[:-1]
    return emit(out, tuple(tensors), lambda g: tuple(np.split(g, cuts, axis=axis)))


def stack(tensors: Sequence[Tensor]) -> Tensor:
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: mismatched shapes {sorted(shapes)}")
    out = np.stack([t.data for t in tensors])
    return emit(out, tuple(tensors), lambda g: tuple(g))


def _index(a: Tensor, index) -> Tensor:
    shape = a.data.shape

    def vjp(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return emit(a.data[index], (a,), vjp)


def take_rows(a: Tensor, ids) -> Tensor:
    """Gather rows of a matrix; repeated ids accumulate gradient."""
    ids = np.asarray(ids, dtype=np.int64)
    shape = a.data.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, ids, g)
        return (full,)

    return emit(a.data[ids], (a,), vjp)


def pick(a: Tensor, cols) -> Tensor:
    """``out[n] = a[n, cols[n]]`` for a matrix ``a``."""
    cols = np.asarray(cols, dtype=np.int64)
    rows = np.arange(len(cols))
    shape = a.data.shape
    if a.data.ndim != 2 or len(cols) != shape[0]:
        raise ShapeError(f"pick: {len(cols)} indices for matrix of shape {a.shape}")

    def vjp(g):
        full = np.zeros(shape)
        full[rows, cols] = g
        return (full,)

    return emit(a.data[rows, cols], (a,), vjp)


# -- verification -----------------------------------------------------------------

def check_gradients(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray],
                    eps: float = 1e-4, seed: int = 0, floor: float = 1e-6) -> float:
    """Largest relative error between tape gradients and central differences.

    ``fn`` maps tensors to a tensor of any shape; it is reduced to a scalar
    by a fixed random projection.  ``fn`` must be deterministic.  The relative
    error of an element is ``|a - n| / max(|a|, |n|, floor)``.
    """
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    probe_rng = np.random.default_rng(seed)
    tape = Tape()
    leaves = [tape.leaf(x) for x in inputs]
    out = fn(*leaves)
    weights = probe_rng.standard_normal(out.shape)
    loss = total(mul(out, Tensor(weights)))
    grads = backward(tape, loss)

    def value(xs):
        return float(np.sum(fn(*[Tensor(x) for x in xs]).data * weights))

    worst = 0.0
    for k, x in enumerate(inputs):
        analytic = grads.get(leaves[k].node_id, np.zeros_like(x))
        flat = x.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = value(inputs)
            flat[j] = orig - eps
            down = value(inputs)
            flat[j] = orig
            numeric = (up - down) / (2 * eps)
            a = analytic.reshape(-1)[j]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst
