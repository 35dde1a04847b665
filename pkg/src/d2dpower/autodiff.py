"""Tape-based reverse-mode differentiation over float64 numpy arrays.

Forward computation runs eagerly; while a Tape is active (used as a context
manager) every primitive whose inputs require gradients records an adjoint
rule on it. ``backward(tape, output)`` then walks the records in reverse and
accumulates d(output)/d(tensor) into ``Tensor.grad`` for every tensor the
output depends on. A tape can be differentiated once; a second backward on
the same tape is rejected.

The primitive set is deliberately small. Elementwise binaries broadcast only
when one operand's shape is a trailing suffix of the other's (bias rows,
scalars); gather_rows / scatter_add_rows are the only graph-aware ops, so
message passing of any topology reduces to them.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import NumericalDomainError

_STATE = threading.local()


def _tape_stack():
    stack = getattr(_STATE, "stack", None)
    if stack is None:
        stack = []
        _STATE.stack = stack
    return stack


def active_tape():
    """Innermost active Tape in this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Float64 array plus gradient slot."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of primitive applications, usable as a context manager."""

    def __init__(self):
        self.ops = []  # (out, inputs, vjp) in execution order
        self.consumed = False

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        if popped is not self:  # pragma: no cover - misuse guard
            raise RuntimeError("tape context exited out of order")
        return False

    def record(self, out: Tensor, inputs, vjp):
        self.ops.append((out, tuple(inputs), vjp))


def backward(tape: Tape, output: Tensor) -> None:
    """Populate grads of everything ``output`` depends on through ``tape``.

    Grads of all tensors touched by the tape are reset first, so each
    backward call yields fresh gradients rather than accumulating across
    calls.
    """
    if tape.consumed:
        raise RuntimeError("backward was already called on this tape")
    if output.data.shape != ():
        raise ValueError(f"backward needs a scalar output, got shape {output.data.shape}")
    tape.consumed = True
    for out, inputs, _ in tape.ops:
        out.grad = None
        for t in inputs:
            t.grad = None
    output.grad = np.ones(())
    for out, inputs, vjp in reversed(tape.ops):
        if out.grad is None:
            continue
        for t, contribution in zip(inputs, vjp(out.grad)):
            if contribution is None or not t.requires_grad:
                continue
            t.grad = contribution if t.grad is None else t.grad + contribution


def _emit(out_data, inputs, vjp) -> Tensor:
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    tape = active_tape()
    if requires and tape is not None:
        tape.record(out, inputs, vjp)
    return out


def _check_suffix_broadcast(a: Tensor, b: Tensor) -> None:
    sa, sb = a.data.shape, b.data.shape
    small, big = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    if big[len(big) - len(small):] != small:
        raise ValueError(f"shapes {sa} and {sb} do not suffix-broadcast")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_suffix_broadcast(a, b)
    return _emit(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_suffix_broadcast(a, b)
    return _emit(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_suffix_broadcast(a, b)
    return _emit(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-d operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.data.shape} @ {b.data.shape}")
    return _emit(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def sum_reduce(a: Tensor) -> Tensor:
    return _emit(
        np.sum(a.data),
        (a,),
        lambda g: (np.broadcast_to(g, a.data.shape).copy(),),
    )


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise NumericalDomainError("log requires strictly positive inputs")
    return _emit(np.log(a.data), (a,), lambda g: (g / a.data,))


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)
    return _emit(out_data, (a,), lambda g: (g * out_data,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    return _emit(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)
    return _emit(out_data, (a,), lambda g: (g * (1.0 - out_data * out_data),))


def symlog(a: Tensor) -> Tensor:
    """Signed log compression sign(x) * log1p(|x|).

    Bijective and odd, with slope 1 at the origin, so small values pass
    through almost unchanged while large magnitudes grow only
    logarithmically. Used to keep degree-dependent aggregation sums inside
    the range the downstream networks were trained on.
    """
    x = a.data
    return _emit(np.sign(x) * np.log1p(np.abs(x)), (a,), lambda g: (g / (1.0 + np.abs(x)),))


def sigmoid(a: Tensor) -> Tensor:
    # stable piecewise form, no overflow for large |x|
    x = a.data
    out_data = np.where(x >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _emit(out_data, (a,), lambda g: (g * out_data * (1.0 - out_data),))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    if not lo <= hi:
        raise ValueError(f"clamp needs lo <= hi, got {lo} > {hi}")
    mask = (a.data > lo) & (a.data < hi)
    return _emit(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def _check_row_index(index: np.ndarray, n_rows: int) -> np.ndarray:
    index = np.asarray(index)
    if index.ndim != 1 or not np.issubdtype(index.dtype, np.integer):
        raise ValueError("row index must be a 1-d integer array")
    if index.size and (index.min() < 0 or index.max() >= n_rows):
        raise ValueError(f"row index out of range for {n_rows} rows")
    return index.astype(np.int64)


def _segment_sum(rows: np.ndarray, index: np.ndarray, out_rows: int) -> np.ndarray:
    # grouped row sum without np.add.at: sort by destination, reduce runs
    out = np.zeros((out_rows, rows.shape[1]))
    if index.size == 0:
        return out
    order = np.argsort(index, kind="stable")
    sorted_index = index[order]
    sorted_rows = rows[order]
    starts = np.flatnonzero(np.r_[True, sorted_index[1:] != sorted_index[:-1]])
    out[sorted_index[starts]] = np.add.reduceat(sorted_rows, starts, axis=0)
    return out


def gather_rows(a: Tensor, index) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError("gather_rows expects a 2-d tensor")
    index = _check_row_index(index, a.data.shape[0])
    n_rows = a.data.shape[0]
    return _emit(
        a.data[index],
        (a,),
        lambda g: (_segment_sum(g, index, n_rows),),
    )


def scatter_add_rows(a: Tensor, index, out_rows: int) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError("scatter_add_rows expects a 2-d tensor")
    index = _check_row_index(index, out_rows)
    if index.shape[0] != a.data.shape[0]:
        raise ValueError("one index per input row required")
    return _emit(
        _segment_sum(a.data, index, out_rows),
        (a,),
        lambda g: (g[index],),
    )


def concat_cols(tensors) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ValueError("concat_cols needs at least one tensor")
    rows = tensors[0].data.shape[0]
    for t in tensors:
        if t.data.ndim != 2 or t.data.shape[0] != rows:
            raise ValueError("concat_cols expects 2-d tensors with equal row counts")
    widths = [t.data.shape[1] for t in tensors]
    bounds = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return _emit(np.concatenate([t.data for t in tensors], axis=1), tensors, vjp)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError("slice_cols expects a 2-d tensor")
    if not 0 <= start <= stop <= a.data.shape[1]:
        raise ValueError(f"bad column range [{start}:{stop}] for width {a.data.shape[1]}")

    def vjp(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return _emit(a.data[:, start:stop].copy(), (a,), vjp)
