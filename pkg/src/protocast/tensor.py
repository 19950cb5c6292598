"""Dense float64 tensors with a reverse-mode gradient tape.

The engine is deliberately small: row-major numpy arrays for storage, a
flat tape of recorded operations, and closures for the backward transforms.
Everything the encoder, prototype layer, and loss need is covered; nothing
else is.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, ShapeError, VocabularyError

LOG_CLAMP = 1e-12


class Tensor:
    """Dense float64 array with an optional gradient slot.

    Tensors with ``requires_grad=True`` (parameters, or intermediates that
    depend on one) receive gradients when :func:`backward` replays the tape.
    Tensors without a gradient slot are immutable by convention and safe to
    share read-only.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        # ascontiguousarray would promote 0-d scalars to shape (1,)
        self.data = np.ascontiguousarray(arr) if arr.ndim > 0 else arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def detached_copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


class Tape:
    """Ordered record of one forward pass.

    Operations are appended as they execute, so the list is topologically
    ordered by construction; :func:`backward` walks it once, in reverse.
    Use a tape as a context manager to make it the active recording target.
    """

    def __init__(self):
        self.records: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        _SCOPES.append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _SCOPES.pop()
        return False


class no_grad:
    """Context that suppresses taping entirely (evaluation passes)."""

    def __enter__(self):
        _SCOPES.append(None)
        return self

    def __exit__(self, *exc) -> bool:
        _SCOPES.pop()
        return False


_SCOPES: list[Tape | None] = []


def _active_tape() -> Tape | None:
    return _SCOPES[-1] if _SCOPES else None


def _trace(out: Tensor, inputs: Sequence[Tensor], back: Callable[[np.ndarray], None]) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.records.append((out, back))
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    Gradients accumulate additively across fan-out; the caller is expected to
    zero parameter grads between optimization steps.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    loss.accumulate_grad(np.ones_like(loss.data))
    for out, back in reversed(tape.records):
        if out.grad is None:
            continue
        back(out.grad)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shapes {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data)

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    return _trace(out, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub shapes {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data - b.data)

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(-g)

    return _trace(out, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shapes {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data * b.data)

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(g * b.data)
        if b.requires_grad:
            b.accumulate_grad(g * a.data)

    return _trace(out, (a, b), back)


def smul(a: Tensor, c: float) -> Tensor:
    """Multiply by a non-learnable python scalar."""
    out = Tensor(a.data * c)

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(g * c)

    return _trace(out, (a,), back)


def scale(a: Tensor, s: Tensor) -> Tensor:
    """Multiply tensor ``a`` by a scalar tensor ``s`` (both sides learnable)."""
    if s.data.size != 1:
        raise ShapeError(f"scale factor must be scalar, got shape {s.data.shape}")
    out = Tensor(a.data * s.data)

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(g * s.data)
        if s.requires_grad:
            s.accumulate_grad(np.asarray((g * a.data).sum()).reshape(s.data.shape))

    return _trace(out, (a, s), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes {a.data.shape} x {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    return _trace(out, (a, b), back)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a matrix, got shape {a.data.shape}")
    out = Tensor(a.data.T.copy())

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(g.T)

    return _trace(out, (a,), back)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(a.data.reshape(shape).copy())

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(a.data.shape))

    return _trace(out, (a,), back)


def vstack(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate matrices along axis 0."""
    out = Tensor(np.concatenate([p.data for p in parts], axis=0))
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

    def back(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate_grad(g[lo:hi])

    return _trace(out, tuple(parts), back)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(g * (a.data > 0.0))

    return _trace(out, (a,), back)


def add_rowvec(a: Tensor, b: Tensor) -> Tensor:
    """Add a length-n vector to every row of an m-by-n matrix."""
    if a.data.ndim != 2 or b.data.shape != (a.data.shape[1],):
        raise ShapeError(f"add_rowvec shapes {a.data.shape} + {b.data.shape}")
    out = Tensor(a.data + b.data[None, :])

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=0))

    return _trace(out, (a, b), back)


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum())

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g, a.data.shape))

    return _trace(out, (a,), back)


def gather_rows(table: Tensor, index) -> Tensor:
    """Take row(s) of a V-by-d table; backward scatter-adds into those rows only.

    ``index`` may be a single integer or a 1-D integer array (repeats allowed).
    """
    idx = np.asarray(index, dtype=np.int64)
    vocab = table.data.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= vocab):
        raise VocabularyError(f"row index out of range [0, {vocab}): {index}")
    out = Tensor(np.array(table.data[idx]))

    def back(g):
        if table.requires_grad:
            gg = np.zeros_like(table.data)
            np.add.at(gg, idx, g)
            table.accumulate_grad(gg)

    return _trace(out, (table,), back)


def take(v: Tensor, index) -> Tensor:
    """Element gather from a vector; scalar index yields a scalar tensor."""
    if v.data.ndim != 1:
        raise ShapeError(f"take needs a vector, got shape {v.data.shape}")
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= v.data.shape[0]):
        raise ShapeError(f"take index out of range for length {v.data.shape[0]}")
    out = Tensor(np.array(v.data[idx]))

    def back(g):
        if v.requires_grad:
            gg = np.zeros_like(v.data)
            np.add.at(gg, idx, g)
            v.accumulate_grad(gg)

    return _trace(out, (v,), back)


def softmax_neg(d: Tensor) -> Tensor:
    """Probability vector exp(-d_i) / sum_j exp(-d_j), max-shifted for stability."""
    if d.data.ndim != 1 or d.data.size < 1:
        raise ShapeError(f"softmax_neg needs a non-empty vector, got shape {d.data.shape}")
    x = -d.data
    e = np.exp(x - x.max())
    s = e / e.sum()
    out = Tensor(s)

    def back(g):
        if d.requires_grad:
            d.accumulate_grad(-(s * (g - float(np.dot(g, s)))))

    return _trace(out, (d,), back)


def sqdist_to(z: Tensor, mus: Sequence[Tensor]) -> Tensor:
    """Squared Euclidean distance from ``z`` to each vector in ``mus``."""
    diffs = [z.data - m.data for m in mus]
    out = Tensor(np.array([float(np.dot(df, df)) for df in diffs]))

    def back(g):
        for gi, df, m in zip(g, diffs, mus):
            if z.requires_grad:
                z.accumulate_grad(2.0 * gi * df)
            if m.requires_grad:
                m.accumulate_grad(-2.0 * gi * df)

    return _trace(out, (z, *mus), back)


def l1_diff(a: Tensor, b: Tensor) -> Tensor:
    """Sum of absolute differences; subgradient 0 exactly at the kink."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"l1_diff shapes {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    sign = np.sign(diff)
    out = Tensor(np.abs(diff).sum())

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(g * sign)
        if b.requires_grad:
            b.accumulate_grad(-g * sign)

    return _trace(out, (a, b), back)


def l2_diff(a: Tensor, b: Tensor) -> Tensor:
    """Sum of squared differences."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"l2_diff shapes {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    out = Tensor((diff * diff).sum())

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(2.0 * g * diff)
        if b.requires_grad:
            b.accumulate_grad(-2.0 * g * diff)

    return _trace(out, (a, b), back)


def plogp_sum(f: Tensor) -> Tensor:
    """sum_i f_i * log(f_i), with the log argument clamped at 1e-12.

    For a probability vector this is the negated Shannon entropy, so
    subtracting lambda times this term from a loss penalizes high entropy.
    """
    c = np.maximum(f.data, LOG_CLAMP)
    logc = np.log(c)
    out = Tensor((f.data * logc).sum())

    def back(g):
        if f.requires_grad:
            f.accumulate_grad(g * (logc + (f.data > LOG_CLAMP)))

    return _trace(out, (f,), back)
