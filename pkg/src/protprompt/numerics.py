"""Dense float64 tensors with tape-based reverse-mode differentiation.

Tensors wrap row-major numpy float64 arrays (0-d scalars, 1-d vectors,
2-d matrices). Primitives compute forward values eagerly and, when a Tape
is active and an input tracks gradients, record a backward closure on the
tape. backward() replays the tape in reverse execution order, which is a
valid topological order, visiting each node exactly once.

Every primitive validates that its output is finite; NaN/Inf is raised as
NumericsError instead of propagating silently. All computations are
deterministic: identical inputs give bit-identical outputs and gradients.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ContractError, NumericsError, OracleError, ShapeError

LAYERNORM_EPS = 1e-5

# Additive attention-mask penalty. Finite so the no-NaN invariant holds,
# yet large enough that exp() underflows to exactly 0.0 after the row-max
# subtraction inside softmax_rows.
MASK_NEG = -1.0e9

_SQRT2 = float(np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))

_STATE = threading.local()


def _tape_stack() -> list:
    stack = getattr(_STATE, "stack", None)
    if stack is None:
        stack = []
        _STATE.stack = stack
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Execution-ordered record of primitive applications.

    Use as a context manager around a forward pass; backward(tape, loss)
    then propagates gradients. Tapes may nest; primitives record on the
    innermost active tape only.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise ContractError("tape context exited out of order")
        stack.pop()


class Tensor:
    """A float64 array plus gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backprop")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64, order="C")
        if not np.all(np.isfinite(arr)):
            raise NumericsError("tensor constructed with non-finite values")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._backprop: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Light operator sugar; everything routes through the primitives so
    # recording stays uniform.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values produced by {op}")
    return arr


def _node(parents: tuple, out_data: np.ndarray, backprop, op: str) -> Tensor:
    """Build the output tensor and record it when gradients are tracked."""
    _check_finite(out_data, op)
    out = Tensor.__new__(Tensor)
    # asarray keeps 0-d shapes (ascontiguousarray would promote them to 1-d)
    out.data = np.asarray(out_data, dtype=np.float64, order="C")
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out._parents = ()
    out._backprop = None
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        out._parents = parents
        out._backprop = backprop
        tape.nodes.append(out)
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def backward(tape: Tape, loss: Tensor) -> None:
    """Reverse sweep from a scalar loss recorded on the tape.

    Gradients accumulate into .grad of every tensor reachable from loss;
    leaves keep their gradients across calls (callers zero them), while
    intermediate node gradients are cleared at the start of each sweep.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    on_tape = any(loss is node for node in tape.nodes)
    if not on_tape:
        raise ContractError("loss was not recorded on this tape")
    for node in tape.nodes:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node.grad is None or node._backprop is None:
            continue
        node._backprop(node.grad)


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise a + b; shapes must match exactly."""
    if a.shape != b.shape:
        raise ShapeError(f"add shapes {a.shape} and {b.shape} differ")
    out_data = a.data + b.data

    def backprop(g):
        _accum(a, g)
        _accum(b, g)

    return _node((a, b), out_data, backprop, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise a - b; shapes must match exactly."""
    if a.shape != b.shape:
        raise ShapeError(f"sub shapes {a.shape} and {b.shape} differ")
    out_data = a.data - b.data

    def backprop(g):
        _accum(a, g)
        _accum(b, -g)

    return _node((a, b), out_data, backprop, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product; shapes must match exactly."""
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes {a.shape} and {b.shape} differ")
    out_data = a.data * b.data

    def backprop(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _node((a, b), out_data, backprop, "mul")


def scale(x: Tensor, c: float) -> Tensor:
    """x * c for a python scalar c."""
    c = float(c)
    out_data = x.data * c

    def backprop(g):
        _accum(x, g * c)

    return _node((x,), out_data, backprop, "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product, (n,k) @ (k,m) -> (n,m)."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")
    out_data = a.data @ b.data

    def backprop(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _node((a, b), out_data, backprop, "matmul")


def transpose(x: Tensor) -> Tensor:
    """2-d transpose."""
    if x.data.ndim != 2:
        raise ShapeError(f"transpose needs a 2-d tensor, got {x.shape}")
    out_data = x.data.T.copy()

    def backprop(g):
        _accum(x, g.T)

    return _node((x,), out_data, backprop, "transpose")


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Row-major reshape; element count must be preserved."""
    out_data = x.data.reshape(shape).copy()

    def backprop(g):
        _accum(x, g.reshape(x.shape))

    return _node((x,), out_data, backprop, "reshape")


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack 2-d tensors along axis 0; column counts must agree."""
    if not parts:
        raise ContractError("concat_rows needs at least one tensor")
    cols = {p.shape[1] for p in parts if p.data.ndim == 2}
    if any(p.data.ndim != 2 for p in parts) or len(cols) != 1:
        raise ShapeError(f"concat_rows got shapes {[p.shape for p in parts]}")
    out_data = np.concatenate([p.data for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.shape[0] for p in parts])

    def backprop(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[lo:hi])

    return _node(tuple(parts), out_data, backprop, "concat_rows")


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Stack 2-d tensors along axis 1; row counts must agree."""
    if not parts:
        raise ContractError("concat_cols needs at least one tensor")
    rows = {p.shape[0] for p in parts if p.data.ndim == 2}
    if any(p.data.ndim != 2 for p in parts) or len(rows) != 1:
        raise ShapeError(f"concat_cols got shapes {[p.shape for p in parts]}")
    out_data = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + [p.shape[1] for p in parts])

    def backprop(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[:, lo:hi])

    return _node(tuple(parts), out_data, backprop, "concat_cols")


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row slice x[start:stop] of a 2-d tensor."""
    if x.data.ndim != 2:
        raise ShapeError(f"slice_rows needs a 2-d tensor, got {x.shape}")
    if not (0 <= start <= stop <= x.shape[0]):
        raise ShapeError(f"slice_rows [{start}:{stop}] out of range for {x.shape}")
    out_data = x.data[start:stop].copy()

    def backprop(g):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        _accum(x, full)

    return _node((x,), out_data, backprop, "slice_rows")


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous column slice x[:, start:stop] of a 2-d tensor."""
    if x.data.ndim != 2:
        raise ShapeError(f"slice_cols needs a 2-d tensor, got {x.shape}")
    if not (0 <= start <= stop <= x.shape[1]):
        raise ShapeError(f"slice_cols [{start}:{stop}] out of range for {x.shape}")
    out_data = x.data[:, start:stop].copy()

    def backprop(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        _accum(x, full)

    return _node((x,), out_data, backprop, "slice_cols")


def select_rows(x: Tensor, indices) -> Tensor:
    """Gather rows x[indices]; duplicate indices accumulate gradient."""
    if x.data.ndim != 2:
        raise ShapeError(f"select_rows needs a 2-d tensor, got {x.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("select_rows indices must be 1-d")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError(f"select_rows index out of range for {x.shape[0]} rows")
    out_data = x.data[idx]

    def backprop(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        _accum(x, full)

    return _node((x,), out_data, backprop, "select_rows")


def pick(x: Tensor, rows, cols) -> Tensor:
    """Gather scalar entries x[rows[k], cols[k]] into a vector."""
    if x.data.ndim != 2:
        raise ShapeError(f"pick needs a 2-d tensor, got {x.shape}")
    r = np.asarray(rows, dtype=np.intp)
    c = np.asarray(cols, dtype=np.intp)
    if r.shape != c.shape or r.ndim != 1:
        raise ShapeError("pick needs matching 1-d row/col index vectors")
    if r.size and not (
        0 <= r.min() and r.max() < x.shape[0] and 0 <= c.min() and c.max() < x.shape[1]
    ):
        raise ShapeError(f"pick index out of range for shape {x.shape}")
    out_data = x.data[r, c]

    def backprop(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (r, c), g)
        _accum(x, full)

    return _node((x,), out_data, backprop, "pick")


def sum_all(x: Tensor) -> Tensor:
    """Sum of all elements as a 0-d scalar."""
    out_data = np.asarray(x.data.sum())

    def backprop(g):
        _accum(x, np.full(x.shape, float(g)))

    return _node((x,), out_data, backprop, "sum_all")


def mean_over_rows(x: Tensor) -> Tensor:
    """Column means of a 2-d tensor, (n,d) -> (d,). n must be >= 1."""
    if x.data.ndim != 2:
        raise ShapeError(f"mean_over_rows needs a 2-d tensor, got {x.shape}")
    n = x.shape[0]
    if n == 0:
        raise ContractError("mean_over_rows over zero rows")
    out_data = x.data.mean(axis=0)

    def backprop(g):
        _accum(x, np.broadcast_to(g / n, x.shape).copy())

    return _node((x,), out_data, backprop, "mean_over_rows")


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of a 2-d tensor, stabilised by row-max subtraction."""
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows needs a 2-d tensor, got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backprop(g):
        inner = (g * y).sum(axis=1, keepdims=True)
        _accum(x, y * (g - inner))

    return _node((x,), y, backprop, "softmax_rows")


def log_softmax_rows(x: Tensor) -> Tensor:
    """Row-wise log softmax, stabilised by row-max subtraction."""
    if x.data.ndim != 2:
        raise ShapeError(f"log_softmax_rows needs a 2-d tensor, got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    y = shifted - lse
    p = np.exp(y)

    def backprop(g):
        _accum(x, g - p * g.sum(axis=1, keepdims=True))

    return _node((x,), y, backprop, "log_softmax_rows")


def layernorm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYERNORM_EPS) -> Tensor:
    """Row-wise layer normalisation with learnable gain/bias, eps=1e-5.

    x (n,d), gain (d,), bias (d,) -> (n,d).
    """
    if x.data.ndim != 2:
        raise ShapeError(f"layernorm needs a 2-d tensor, got {x.shape}")
    d = x.shape[1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layernorm gain/bias shapes {gain.shape}/{bias.shape} do not match width {d}"
        )
    mu = x.data.mean(axis=1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=1, keepdims=True)
    invstd = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * invstd
    out_data = xhat * gain.data + bias.data

    def backprop(g):
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
        _accum(x, invstd * (dxhat - m1 - xhat * m2))
        _accum(gain, (g * xhat).sum(axis=0))
        _accum(bias, g.sum(axis=0))

    return _node((x, gain, bias), out_data, backprop, "layernorm")


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU, applied elementwise."""
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    out_data = x.data * cdf

    def backprop(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        _accum(x, g * (cdf + x.data * pdf))

    return _node((x,), out_data, backprop, "gelu")


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b. x (n,k) or (k,), w (k,m), b (m,)."""
    vector_in = x.data.ndim == 1
    xd = x.data[None, :] if vector_in else x.data
    if xd.ndim != 2 or w.data.ndim != 2 or xd.shape[1] != w.shape[0]:
        raise ShapeError(f"affine shapes {x.shape} and {w.shape} do not align")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"affine bias shape {b.shape} does not match {w.shape}")
    out_data = xd @ w.data + b.data
    if vector_in:
        out_data = out_data[0]

    def backprop(g):
        g2 = g[None, :] if vector_in else g
        gx = g2 @ w.data.T
        _accum(x, gx[0] if vector_in else gx)
        _accum(w, xd.T @ g2)
        _accum(b, g2.sum(axis=0))

    return _node((x, w, b), out_data, backprop, "affine")


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather table rows by integer id; duplicate ids accumulate gradient."""
    if table.data.ndim != 2:
        raise ShapeError(f"embedding table must be 2-d, got {table.shape}")
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("embedding ids must be a 1-d integer sequence")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding id out of range: table has {table.shape[0]} rows, "
            f"ids span [{idx.min()}, {idx.max()}]"
        )
    out_data = table.data[idx]

    def backprop(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        _accum(table, full)

    return _node((table,), out_data, backprop, "embedding_lookup")


def absval(x: Tensor) -> Tensor:
    """Elementwise absolute value (subgradient 0 at 0)."""
    out_data = np.abs(x.data)

    def backprop(g):
        _accum(x, g * np.sign(x.data))

    return _node((x,), out_data, backprop, "absval")


def bce_with_logits_mean(logits: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy on raw logits, log-sum-exp stabilised.

    labels is a constant array of 0/1 floats with the same shape as logits.
    """
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != logits.shape:
        raise ShapeError(f"labels shape {y.shape} does not match logits {logits.shape}")
    if y.size == 0:
        raise ContractError("bce_with_logits_mean on empty logits")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ContractError("bce labels must be 0 or 1")
    z = logits.data
    # max(z,0) - z*y + log(1+exp(-|z|)) is exact and never overflows
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out_data = np.asarray(per.mean())
    n = y.size

    def backprop(g):
        sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))
        _accum(logits, float(g) * (sig - y) / n)

    return _node((logits,), out_data, backprop, "bce_with_logits_mean")


# ---------------------------------------------------------------------------
# gradient oracle


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Compare the tape gradient of scalar f(x) against central differences.

    f is evaluated twice up front; any bitwise mismatch means f is not
    deterministic and raises OracleError. x.data is perturbed in place one
    element at a time (and restored), so f may either use its argument or
    close over x. Returns the worst relative error, with the denominator
    floored at 1e-8.
    """
    if eps <= 0:
        raise ContractError("finite_diff_check needs eps > 0")
    x.requires_grad = True
    tape = Tape()
    with tape:
        y = f(x)
    if y.data.size != 1:
        raise ContractError(f"f must return a scalar, got shape {y.shape}")
    y2 = f(x)
    if not np.array_equal(y.data, y2.data):
        raise OracleError("f is not deterministic: double evaluation mismatch")
    x.grad = None
    backward(tape, y)
    g = x.grad if x.grad is not None else np.zeros_like(x.data)

    flat = x.data.reshape(-1)
    fd = np.zeros(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fa = float(f(x).data.reshape(()))
        flat[i] = orig - eps
        fb = float(f(x).data.reshape(()))
        flat[i] = orig
        fd[i] = (fa - fb) / (2.0 * eps)
    fd = fd.reshape(x.shape)

    denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-8)
    return float((np.abs(g - fd) / denom).max())
