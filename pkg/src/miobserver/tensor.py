"""Dense float64 tensors with reverse-mode automatic differentiation.

A forward pass runs under an active ``Tape`` (a ``with`` block). Every
primitive op records a backward closure onto the tape in execution order,
so the tape itself is a topological order of the graph and the backward
pass is a single reverse sweep that visits each recorded node once.
Outside a tape the same ops run without any recording overhead, which is
the evaluation path.

All arrays are float64. Gradients accumulate by summation when a tensor
fans out to several consumers.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, ShapeError, TapeError

_next_id = itertools.count()
_TAPES: list["Tape"] = []


def _active() -> "Tape | None":
    return _TAPES[-1] if _TAPES else None


class Tensor:
    """A dense float64 array, tracked by the active tape when one exists."""

    __slots__ = ("data", "grad", "tid")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.tid: int = next(_next_id)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis, keepdims)

    def max(self, axis: int) -> "Tensor":
        return reduce_max(self, axis)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        return swapaxes(self, a, b)


class Tape:
    """Ordered record of one forward pass; replayed in reverse exactly once."""

    def __init__(self):
        self._steps: list[tuple[Tensor | None, Callable]] = []
        self._tracked: list[Tensor] = []
        self._seen: set[int] = set()
        self._spent = False

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _TAPES.pop()
        return False

    def _track(self, t: Tensor) -> None:
        if t.tid not in self._seen:
            self._seen.add(t.tid)
            self._tracked.append(t)

    def _record(self, out: Tensor, fn: Callable, inputs: Sequence[Tensor]) -> None:
        self._steps.append((out, fn))
        for t in inputs:
            self._track(t)
        self._track(out)

    def _record_raw(self, fn: Callable) -> None:
        # Always-run step; used by fused multi-output ops to flush buffers.
        self._steps.append((None, fn))

    def backward(self, loss: Tensor) -> dict[int, Tensor]:
        """Reverse sweep from ``loss``; returns gradients keyed by tensor id.

        Tensor ``.grad`` slots are cleared afterwards, so parameter tensors
        come out clean for the next forward pass. A tape cannot be replayed:
        a second call raises ``TapeError``.
        """
        if self._spent:
            raise TapeError("tape already consumed by a previous backward pass")
        if loss.data.size != 1:
            raise ContractError("backward requires a scalar loss tensor")
        self._spent = True
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(self._steps):
            if out is None:
                fn(None)
            elif out.grad is not None:
                fn(out.grad)
        grads: dict[int, Tensor] = {}
        for t in self._tracked:
            if t.grad is not None:
                grads[t.tid] = Tensor(t.grad)
                t.grad = None
        return grads


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _acc(t: Tensor, g: np.ndarray) -> None:
    # First contribution may alias g; accumulation always allocates fresh.
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape``, inverting numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    A, B = _data(a), _data(b)
    out = Tensor(A + B)
    tape = _active()
    if tape is not None:
        ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
        ins = [x for x in (a, b) if isinstance(x, Tensor)]
        if ins:
            ash, bsh = A.shape, B.shape

            def fn(g):
                if ta:
                    _acc(a, _unbroadcast(g, ash))
                if tb:
                    _acc(b, _unbroadcast(g, bsh))

            tape._record(out, fn, ins)
    return out


def sub(a, b) -> Tensor:
    A, B = _data(a), _data(b)
    out = Tensor(A - B)
    tape = _active()
    if tape is not None:
        ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
        ins = [x for x in (a, b) if isinstance(x, Tensor)]
        if ins:
            ash, bsh = A.shape, B.shape

            def fn(g):
                if ta:
                    _acc(a, _unbroadcast(g, ash))
                if tb:
                    _acc(b, _unbroadcast(-g, bsh))

            tape._record(out, fn, ins)
    return out


def mul(a, b) -> Tensor:
    A, B = _data(a), _data(b)
    out = Tensor(A * B)
    tape = _active()
    if tape is not None:
        ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
        ins = [x for x in (a, b) if isinstance(x, Tensor)]
        if ins:
            ash, bsh = A.shape, B.shape

            def fn(g):
                if ta:
                    _acc(a, _unbroadcast(g * B, ash))
                if tb:
                    _acc(b, _unbroadcast(g * A, bsh))

            tape._record(out, fn, ins)
    return out


def neg(a) -> Tensor:
    A = _data(a)
    out = Tensor(-A)
    tape = _active()
    if tape is not None and isinstance(a, Tensor):
        def fn(g):
            _acc(a, -g)

        tape._record(out, fn, [a])
    return out


def matmul(a, b) -> Tensor:
    """Matrix product with leading batch dimensions, numpy ``@`` semantics.

    1-D operands are treated as a row vector (left) or column vector
    (right), mirroring ``np.matmul``. Inner dimensions must agree.
    """
    A, B = _data(a), _data(b)
    if A.ndim == 0 or B.ndim == 0:
        raise ShapeError("matmul requires tensors of rank >= 1")
    A2 = A[None, :] if A.ndim == 1 else A
    B2 = B[:, None] if B.ndim == 1 else B
    if A2.shape[-1] != B2.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions differ: {A.shape} @ {B.shape}"
        )
    try:
        O2 = A2 @ B2
    except ValueError as e:  # mismatched batch dims
        raise ShapeError(f"matmul batch dimensions differ: {A.shape} @ {B.shape}") from e
    out_data = O2
    if A.ndim == 1:
        out_data = out_data[..., 0, :]
    if B.ndim == 1:
        out_data = out_data[..., 0]
    out = Tensor(out_data)
    tape = _active()
    if tape is not None:
        ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
        ins = [x for x in (a, b) if isinstance(x, Tensor)]
        if ins:
            def fn(g):
                g2 = g.reshape(O2.shape)
                if ta:
                    ga = _unbroadcast(g2 @ np.swapaxes(B2, -1, -2), A2.shape)
                    _acc(a, ga.reshape(A.shape))
                if tb:
                    gb = _unbroadcast(np.swapaxes(A2, -1, -2) @ g2, B2.shape)
                    _acc(b, gb.reshape(B.shape))

            tape._record(out, fn, ins)
    return out


def _elementwise(a, out_data, dfn) -> Tensor:
    out = Tensor(out_data)
    tape = _active()
    if tape is not None and isinstance(a, Tensor):
        def fn(g):
            _acc(a, g * dfn())

        tape._record(out, fn, [a])
    return out


def sigmoid(a) -> Tensor:
    A = _data(a)
    # Stable in both tails.
    y = np.empty_like(A)
    pos = A >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-A[pos]))
    ez = np.exp(A[~pos])
    y[~pos] = ez / (1.0 + ez)
    return _elementwise(a, y, lambda: y * (1.0 - y))


def tanh(a) -> Tensor:
    y = np.tanh(_data(a))
    return _elementwise(a, y, lambda: 1.0 - y * y)


def relu(a) -> Tensor:
    A = _data(a)
    y = np.maximum(A, 0.0)
    return _elementwise(a, y, lambda: (A > 0.0).astype(np.float64))


def exp(a) -> Tensor:
    y = np.exp(_data(a))
    return _elementwise(a, y, lambda: y)


def log(a) -> Tensor:
    A = _data(a)
    return _elementwise(a, np.log(A), lambda: 1.0 / A)


def power(a, p: float) -> Tensor:
    """Elementwise ``a ** p`` for a constant exponent ``p > 0``."""
    A = _data(a)
    if p == 0.0:
        raise ContractError("power with exponent 0 is a constant; drop the op")
    y = np.power(A, p)
    return _elementwise(a, y, lambda: p * np.power(A, p - 1.0))


def clamp_min(a, floor: float) -> Tensor:
    """max(a, floor); gradient passes only where a > floor."""
    A = _data(a)
    y = np.maximum(A, floor)
    return _elementwise(a, y, lambda: (A > floor).astype(np.float64))


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax over ``axis`` (max subtraction inside)."""
    A = _data(a)
    if A.ndim == 0:
        raise ShapeError("softmax requires at least one axis")
    if A.shape[axis] == 0:
        raise ShapeError("softmax over an empty axis")
    shifted = A - A.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)
    tape = _active()
    if tape is not None and isinstance(a, Tensor):
        def fn(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            _acc(a, y * (g - dot))

        tape._record(out, fn, [a])
    return out


def concat(parts: Sequence, axis: int = -1) -> Tensor:
    if not parts:
        raise ShapeError("concat of an empty sequence")
    datas = [_data(p) for p in parts]
    try:
        out_data = np.concatenate(datas, axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat shapes incompatible: {[d.shape for d in datas]}") from e
    out = Tensor(out_data)
    tape = _active()
    if tape is not None:
        ins = [p for p in parts if isinstance(p, Tensor)]
        if ins:
            widths = [d.shape[axis] for d in datas]
            bounds = np.cumsum(widths)[:-1]

            def fn(g):
                pieces = np.split(g, bounds, axis=axis)
                for p, piece in zip(parts, pieces):
                    if isinstance(p, Tensor):
                        _acc(p, piece)

            tape._record(out, fn, ins)
    return out


def stack(parts: Sequence, axis: int = 0) -> Tensor:
    if not parts:
        raise ShapeError("stack of an empty sequence")
    datas = [_data(p) for p in parts]
    try:
        out_data = np.stack(datas, axis=axis)
    except ValueError as e:
        raise ShapeError(f"stack shapes differ: {[d.shape for d in datas]}") from e
    out = Tensor(out_data)
    tape = _active()
    if tape is not None:
        ins = [p for p in parts if isinstance(p, Tensor)]
        if ins:
            def fn(g):
                gm = np.moveaxis(g, axis, 0)
                for i, p in enumerate(parts):
                    if isinstance(p, Tensor):
                        _acc(p, gm[i])

            tape._record(out, fn, ins)
    return out


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice ``[start, start+length)`` along ``axis``."""
    A = _data(a)
    n = A.shape[axis]
    if start < 0 or length < 0 or start + length > n:
        raise ShapeError(f"narrow [{start}:{start + length}] outside axis of size {n}")
    idx = [slice(None)] * A.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = Tensor(A[idx])
    tape = _active()
    if tape is not None and isinstance(a, Tensor):
        def fn(g):
            gz = np.zeros_like(A)
            gz[idx] = g
            _acc(a, gz)

        tape._record(out, fn, [a])
    return out


def split(a: Tensor, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    """Partition ``a`` along ``axis`` into pieces of the given sizes."""
    A = _data(a)
    if sum(sizes) != A.shape[axis]:
        raise ShapeError(f"split sizes {list(sizes)} do not cover axis of size {A.shape[axis]}")
    outs = []
    start = 0
    bufs: dict[int, np.ndarray] = {}
    tape = _active()
    tracked = tape is not None and isinstance(a, Tensor)
    if tracked:
        def flush(_):
            if bufs:
                total = np.zeros_like(A)
                for s, piece in bufs.items():
                    idx = [slice(None)] * A.ndim
                    idx[axis] = slice(s, s + piece.shape[axis])
                    total[tuple(idx)] = piece
                _acc(a, total)

        tape._record_raw(flush)
    for size in sizes:
        idx = [slice(None)] * A.ndim
        idx[axis] = slice(start, start + size)
        out = Tensor(A[tuple(idx)])
        if tracked:
            def fn(g, s=start):
                bufs[s] = bufs[s] + g if s in bufs else g

            tape._record(out, fn, [a])
        outs.append(out)
        start += size
    return outs


def unstack(a: Tensor, axis: int = 0) -> list[Tensor]:
    """Split ``a`` into per-index slices along ``axis`` (axis removed).

    Fused backward: slice gradients land in one shared buffer flushed to
    ``a`` in a single accumulation, so a T-step loop costs O(T), not O(T^2).
    """
    A = _data(a)
    n = A.shape[axis]
    moved = np.moveaxis(A, axis, 0)
    outs = [Tensor(moved[i]) for i in range(n)]
    tape = _active()
    if tape is not None and isinstance(a, Tensor):
        buf: list[np.ndarray | None] = [None]

        def flush(_):
            if buf[0] is not None:
                _acc(a, np.moveaxis(buf[0], 0, axis))

        tape._record_raw(flush)
        for i, out in enumerate(outs):
            def fn(g, i=i):
                if buf[0] is None:
                    buf[0] = np.zeros_like(moved)
                buf[0][i] += g

            tape._record(out, fn, [a])
    return outs


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    A = _data(a)
    try:
        out_data = A.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"cannot reshape {A.shape} to {shape}") from e
    out = Tensor(out_data)
    tape = _active()
    if tape is not None and isinstance(a, Tensor):
        def fn(g):
            _acc(a, g.reshape(A.shape))

        tape._record(out, fn, [a])
    return out


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    A = _data(a)
    out = Tensor(np.swapaxes(A, ax1, ax2))
    tape = _active()
    if tape is not None and isinstance(a, Tensor):
        def fn(g):
            _acc(a, np.swapaxes(g, ax1, ax2))

        tape._record(out, fn, [a])
    return out


def broadcast_to(a, shape: tuple[int, ...]) -> Tensor:
    A = _data(a)
    try:
        out_data = np.broadcast_to(A, shape)
    except ValueError as e:
        raise ShapeError(f"cannot broadcast {A.shape} to {shape}") from e
    out = Tensor(out_data)
    tape = _active()
    if tape is not None and isinstance(a, Tensor):
        def fn(g):
            _acc(a, _unbroadcast(g, A.shape))

        tape._record(out, fn, [a])
    return out


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    A = _data(a)
    out = Tensor(A.sum(axis=axis, keepdims=keepdims))
    tape = _active()
    if tape is not None and isinstance(a, Tensor):
        def fn(g):
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            _acc(a, np.broadcast_to(gg, A.shape).copy())

        tape._record(out, fn, [a])
    return out


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    A = _data(a)
    if axis is None:
        n = A.size
    elif isinstance(axis, tuple):
        n = int(np.prod([A.shape[i] for i in axis]))
    else:
        n = A.shape[axis]
    if n == 0:
        raise ShapeError("mean over an empty axis")
    out = Tensor(A.mean(axis=axis, keepdims=keepdims))
    tape = _active()
    if tape is not None and isinstance(a, Tensor):
        def fn(g):
            gg = g / n
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            _acc(a, np.broadcast_to(gg, A.shape).copy())

        tape._record(out, fn, [a])
    return out


def reduce_max(a, axis: int) -> Tensor:
    """Max over one axis; gradient routes to the first argmax position."""
    A = _data(a)
    if A.shape[axis] == 0:
        raise ShapeError("max over an empty axis")
    out_data = A.max(axis=axis)
    out = Tensor(out_data)
    tape = _active()
    if tape is not None and isinstance(a, Tensor):
        idx = np.expand_dims(A.argmax(axis=axis), axis)

        def fn(g):
            gz = np.zeros_like(A)
            np.put_along_axis(gz, idx, np.expand_dims(g, axis), axis=axis)
            _acc(a, gz)

        tape._record(out, fn, [a])
    return out


def take_rows(a: Tensor, idx) -> Tensor:
    """Gather rows of ``a`` (axis 0) at integer indices, scatter-add backward."""
    indices = np.asarray(idx, dtype=np.intp)
    A = _data(a)
    if indices.size and (indices.min() < 0 or indices.max() >= A.shape[0]):
        raise ShapeError(
            f"row index out of range for axis of size {A.shape[0]}"
        )
    out = Tensor(A[indices])
    tape = _active()
    if tape is not None and isinstance(a, Tensor):
        def fn(g):
            buf = np.zeros_like(A)
            np.add.at(buf, indices, g)
            _acc(a, buf)

        tape._record(out, fn, [a])
    return out


def dropout(a, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-p) so eval is identity.

    In eval mode (or p == 0) the input tensor is returned unchanged,
    bit for bit.
    """
    if not (0.0 <= p < 1.0):
        raise ConfigError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return a if isinstance(a, Tensor) else Tensor(a)
    if rng is None:
        raise ContractError("dropout in training mode requires an rng")
    A = _data(a)
    mask = (rng.random(A.shape) >= p) / (1.0 - p)
    return mul(a, mask)


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    eps: float = 1e-5,
    coords=None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic gradients of ``f`` w.r.t. ``x`` to central differences.

    ``f`` must map ``x`` to a scalar Tensor and must be deterministic
    (no dropout). ``coords`` selects which coordinates to probe: ``None``
    for all of them, an int for a seeded random sample, or an explicit
    sequence of flat indices. Returns the worst relative error
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    """
    with Tape() as tape:
        y = f(x)
        if not isinstance(y, Tensor) or y.data.size != 1:
            raise ContractError("grad_check requires f to return a scalar Tensor")
    grads = tape.backward(y)
    g = grads.get(x.tid)
    analytic = g.data if g is not None else np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    aflat = analytic.reshape(-1)
    if coords is None:
        probe = range(flat.size)
    elif isinstance(coords, int):
        r = rng if rng is not None else np.random.default_rng(0)
        k = min(coords, flat.size)
        probe = r.choice(flat.size, size=k, replace=False)
    else:
        probe = coords
    worst = 0.0
    for i in probe:
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x).data)
        flat[i] = orig - eps
        fm = float(f(x).data)
        flat[i] = orig
        numeric = (fp - fm) / (2.0 * eps)
        err = abs(aflat[i] - numeric) / max(1.0, abs(aflat[i]), abs(numeric))
        worst = max(worst, err)
    return worst


def global_norm(arrays: Sequence[np.ndarray]) -> float:
    """L2 norm of the concatenation of all arrays."""
    total = 0.0
    for a in arrays:
        total += float(np.sum(a * a))
    return math.sqrt(total)
