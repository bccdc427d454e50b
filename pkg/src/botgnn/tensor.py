"""Dense 2-D tensors with a reverse-mode tape, plus a finite-difference checker.

Everything is float64 and strictly two-dimensional: scalars are 1x1, row
vectors 1xd, column vectors nx1. Operations record themselves on the active
:class:`Tape` (entered via ``with Tape() as tape:``) whenever any operand
requires gradients; outside a tape every op is a plain forward computation.

The tape is a Wengert list: ops are stored in creation order, which is a
topological order, and ``Tape.backward`` replays it once in reverse,
accumulating (``+=``) into ``Tensor.grad`` so shared parameters receive summed
gradients.

Checkpoint serialization (``save_checkpoint``/``load_checkpoint``) uses the
``BRGP`` binary format: magic ``BRGP``, u32 tensor count, then per tensor a
u16 name length, UTF-8 name, u32 rows, u32 cols and a float32
little-endian row-major payload.
"""

from __future__ import annotations

import struct
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, NonFiniteError, NumericalError

CHECKPOINT_MAGIC = b"BRGP"
LOG_CLAMP = 1e-12

_ACTIVE_TAPE: "Tape | None" = None


class Tensor:
    """A 2-D float64 array with an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise DataError(f"tensors are strictly 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise NonFiniteError("tensor", "non-finite values in constructor")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    def item(self) -> float:
        if self.data.size != 1:
            raise DataError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)


class Tape:
    """Ordered record of operations; replayed in reverse for gradients."""

    def __init__(self):
        self._ops: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []
        self._prev: "Tape | None" = None

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev
        self._prev = None

    def __len__(self) -> int:
        return len(self._ops)

    def record(self, out: Tensor, backward: Callable[[np.ndarray], None]) -> None:
        self._ops.append((out, backward))

    def backward(self, root: Tensor) -> None:
        """Seed d(root)/d(root) = 1 and propagate through the tape once."""
        if root.data.shape != (1, 1):
            raise DataError("backward() expects a scalar (1x1) root tensor")
        root.accumulate_grad(np.ones((1, 1)))
        for out, backward in reversed(self._ops):
            if out.grad is not None:
                backward(out.grad)


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE


def _finalize(op: str, data: np.ndarray, parents: Sequence[Tensor],
              backward: Callable[[np.ndarray], None]) -> Tensor:
    """Wrap an op result: finite check, grad flag, tape recording."""
    if not np.isfinite(data).all():
        raise NonFiniteError(op)
    requires = _ACTIVE_TAPE is not None and any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = requires
    if requires:
        _ACTIVE_TAPE.record(out, backward)
    return out


# ---------------------------------------------------------------------------
# primitive operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[1] != b.data.shape[0]:
        raise DataError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    return _finalize("matmul", a.data @ b.data, (a, b), backward)


def transpose(x: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g.T)

    return _finalize("transpose", x.data.T.copy(), (x,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DataError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    return _finalize("add", a.data + b.data, (a, b), backward)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Row-broadcast bias: (n, d) + (1, d). The only broadcasting we support."""
    if b.data.shape != (1, x.data.shape[1]):
        raise DataError(f"bias shape {b.shape} does not broadcast over {x.shape}")

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=0, keepdims=True))

    return _finalize("add_bias", x.data + b.data, (x, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(c * g)

    return _finalize("scale", c * x.data, (x,), backward)


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise DataError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    # derivative at exactly 0 is defined as 1 (the x >= 0 branch)
    mask = np.where(x.data >= 0.0, 1.0, slope)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * mask)

    return _finalize("leaky_relu", x.data * mask, (x,), backward)


def softmax_rows(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            inner = (g * y).sum(axis=1, keepdims=True)
            x.accumulate_grad(y * (g - inner))

    return _finalize("softmax_rows", y, (x,), backward)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise DataError("concat_cols of zero parts")
    rows = parts[0].data.shape[0]
    for p in parts:
        if p.data.shape[0] != rows:
            raise DataError("concat_cols row-count mismatch")
    widths = [p.data.shape[1] for p in parts]
    bounds = np.cumsum([0] + widths)

    def backward(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                p.accumulate_grad(g[:, lo:hi])

    return _finalize("concat_cols", np.concatenate([p.data for p in parts], axis=1),
                     tuple(parts), backward)


def mean_rows(x: Tensor) -> Tensor:
    m = x.data.shape[0]
    if m == 0:
        raise DataError("mean_rows over zero rows; substitute a zero vector upstream")

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(np.repeat(g / m, m, axis=0))

    return _finalize("mean_rows", x.data.mean(axis=0, keepdims=True), (x,), backward)


def column(x: Tensor, j: int) -> Tensor:
    """Select one column as an (n, 1) tensor."""

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[:, j : j + 1] = g
            x.accumulate_grad(full)

    return _finalize("column", x.data[:, j : j + 1].copy(), (x,), backward)


def slice_rows(x: Tensor, lo: int, hi: int) -> Tensor:
    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[lo:hi] = g
            x.accumulate_grad(full)

    return _finalize("slice_rows", x.data[lo:hi].copy(), (x,), backward)


def one_minus(x: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(-g)

    return _finalize("one_minus", 1.0 - x.data, (x,), backward)


def log_clamped(x: Tensor, floor: float = LOG_CLAMP) -> Tensor:
    """log(max(x, floor)); gradient is zero on the clamped region."""
    clamped = np.maximum(x.data, floor)
    inside = x.data >= floor

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(np.where(inside, g / clamped, 0.0))

    return _finalize("log_clamped", np.log(clamped), (x,), backward)


def weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar sum(weights * x) with constant weights."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != x.data.shape:
        raise DataError(f"weighted_sum weight shape {w.shape} != {x.shape}")

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(w * g[0, 0])

    return _finalize("weighted_sum", np.array([[float((w * x.data).sum())]]), (x,), backward)


def sum_squares(x: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(2.0 * x.data * g[0, 0])

    return _finalize("sum_squares", np.array([[float((x.data * x.data).sum())]]), (x,), backward)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` must rebuild its computation from the current ``params`` values on
    every call and return a scalar tensor. The numeric side perturbs each
    coordinate in place and reruns ``f`` outside any tape, so it never touches
    the reverse-mode machinery it is checking.
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        out = f()
    if out.data.shape != (1, 1):
        raise DataError("grad_check target must be scalar")
    if not np.isfinite(out.data).all():
        raise NumericalError("grad_check: non-finite objective")
    tape.backward(out)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        for k in range(p.data.size):
            orig = p.data.flat[k]
            p.data.flat[k] = orig + eps
            f_plus = f().item()
            p.data.flat[k] = orig - eps
            f_minus = f().item()
            p.data.flat[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            approx = a.ravel()[k]
            err = abs(approx - numeric) / max(1.0, abs(approx), abs(numeric))
            if err > worst:
                worst = err
    return worst


# ---------------------------------------------------------------------------
# BRGP checkpoint format


def save_checkpoint(path, named: Mapping[str, Tensor] | Iterable[tuple[str, Tensor]]) -> None:
    items = list(named.items()) if isinstance(named, Mapping) else list(named)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(items)))
        for name, tensor in items:
            raw = name.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise DataError(f"tensor name too long: {name!r}")
            rows, cols = tensor.data.shape
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", rows, cols))
            fh.write(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError(f"truncated checkpoint: expected {n} bytes for {what}, got {len(buf)}")
    return buf


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a BRGP file into an ordered name -> float64 array mapping."""
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"bad checkpoint magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "tensor name").decode("utf-8")
            rows, cols = struct.unpack("<II", _read_exact(fh, 8, "tensor shape"))
            payload = _read_exact(fh, 4 * rows * cols, f"payload of {name!r}")
            arr = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(rows, cols)
            if name in out:
                raise DataError(f"duplicate tensor name in checkpoint: {name!r}")
            out[name] = arr
        if fh.read(1):
            raise DataError("trailing bytes after checkpoint payload")
    return out
