"""Dense float64 tensors with a recording tape and reverse-mode differentiation.

Every primitive takes an optional :class:`Tape` as its first argument. With a
tape the op records a backward rule; with ``tape=None`` it is a plain forward
evaluation (used for inference and finite-difference probing). Binary
elementwise ops require identical shapes; there is no broadcasting. The only
shape-coupled ops beyond elementwise are ``matmul``, ``conv1d``, ``maxpool1d``
and the row-stacking helpers needed to batch per-sample graphs.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, ShapeError

Array = np.ndarray


class Tensor:
    """A dense n-d array of 64-bit reals with an optional gradient buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data) -> None:
        # asarray keeps 0-d scalars 0-d (ascontiguousarray would promote them)
        self.data: Array = np.asarray(data, dtype=np.float64, order="C")
        self.grad: Optional[Array] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(shape={self.shape}, grad={'set' if self.grad is not None else 'none'})"


class TapeEntry:
    """One recorded primitive: inputs, output, and the rule mapping d(output)
    to per-input gradient contributions."""

    __slots__ = ("inputs", "output", "backward")

    def __init__(
        self,
        inputs: tuple[Tensor, ...],
        output: Tensor,
        backward: Callable[[Array], Sequence[Optional[Array]]],
    ) -> None:
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of primitive ops; replayed in reverse by :func:`backward`."""

    __slots__ = ("entries",)

    def __init__(self) -> None:
        self.entries: list[TapeEntry] = []

    def record(self, inputs, output, backward_rule) -> None:
        self.entries.append(TapeEntry(tuple(inputs), output, backward_rule))

    def __len__(self) -> int:
        return len(self.entries)


def backward(tape: Tape, loss: Tensor, wrt: Optional[Sequence[Tensor]] = None) -> None:
    """Populate gradients of ``loss`` by replaying the tape in reverse.

    With ``wrt`` given, only those tensors receive a ``.grad`` buffer (tensors
    not touched by the loss get zeros); everything else on the tape is left
    untouched, so attacks can differentiate w.r.t. inputs without mutating
    shared model parameters. With ``wrt=None`` every tensor on the tape gets
    its ``.grad`` accumulated, which is what the training loop wants.
    """
    if loss.data.shape != ():
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, Array] = {id(loss): np.ones((), dtype=np.float64)}
    seen: dict[int, Tensor] = {id(loss): loss}
    for entry in reversed(tape.entries):
        g_out = grads.get(id(entry.output))
        if g_out is None:
            continue
        contribs = entry.backward(g_out)
        for t, g in zip(entry.inputs, contribs):
            if g is None:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = np.array(g, dtype=np.float64, copy=True)
                seen[key] = t
    if wrt is None:
        targets = seen.values()
    else:
        targets = wrt
    for t in targets:
        g = grads.get(id(t))
        if g is None:
            g = np.zeros(t.data.shape, dtype=np.float64)
        g = g.reshape(t.data.shape)
        t.grad = g if t.grad is None else t.grad + g


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no broadcasting)")


# ---------------------------------------------------------------------------
# elementwise primitives

def add(tape: Optional[Tape], a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)
    if tape is not None:
        tape.record((a, b), out, lambda g: (g, g))
    return out


def sub(tape: Optional[Tape], a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)
    if tape is not None:
        tape.record((a, b), out, lambda g: (g, -g))
    return out


def mul(tape: Optional[Tape], a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)
    if tape is not None:
        ad, bd = a.data, b.data
        tape.record((a, b), out, lambda g: (g * bd, g * ad))
    return out


def relu(tape: Optional[Tape], a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    if tape is not None:
        mask = a.data > 0.0  # subgradient at 0 is 0
        tape.record((a,), out, lambda g: (g * mask,))
    return out


def sign(tape: Optional[Tape], a: Tensor) -> Tensor:
    out = Tensor(np.sign(a.data))
    if tape is not None:
        tape.record((a,), out, lambda g: (np.zeros_like(g),))
    return out


def clip(tape: Optional[Tape], a: Tensor, lo: float, hi: float) -> Tensor:
    out = Tensor(np.clip(a.data, lo, hi))
    if tape is not None:
        mask = (a.data >= lo) & (a.data <= hi)
        tape.record((a,), out, lambda g: (g * mask,))
    return out


def scale(tape: Optional[Tape], a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c)
    if tape is not None:
        tape.record((a,), out, lambda g: (g * c,))
    return out


# ---------------------------------------------------------------------------
# shape plumbing

def reshape(tape: Optional[Tape], a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    if tape is not None:
        orig = a.data.shape
        tape.record((a,), out, lambda g: (g.reshape(orig),))
    return out


def transpose2d(tape: Optional[Tape], a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose2d needs a matrix, got shape {a.shape}")
    out = Tensor(a.data.T)
    if tape is not None:
        tape.record((a,), out, lambda g: (g.T,))
    return out


def concat_rows(tape: Optional[Tape], parts: Sequence[Tensor]) -> Tensor:
    """Stack [1 x d] (or [k x d]) blocks along axis 0."""
    if not parts:
        raise ShapeError("concat_rows needs at least one block")
    widths = {p.data.shape[1:] for p in parts}
    if len(widths) != 1:
        raise ShapeError(f"concat_rows: trailing shapes differ: {sorted(map(str, widths))}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=0))
    if tape is not None:
        sizes = [p.data.shape[0] for p in parts]
        bounds = np.cumsum([0] + sizes)

        def rule(g, bounds=bounds):
            return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(sizes)))

        tape.record(tuple(parts), out, rule)
    return out


def add_rowvec(tape: Optional[Tape], a: Tensor, b: Tensor) -> Tensor:
    """Add a length-d vector to every row of a [B x d] matrix."""
    if a.data.ndim != 2 or b.data.shape != (a.data.shape[1],):
        raise ShapeError(f"add_rowvec: got {a.shape} and {b.shape}")
    out = Tensor(a.data + b.data[None, :])
    if tape is not None:
        tape.record((a, b), out, lambda g: (g, g.sum(axis=0)))
    return out


# ---------------------------------------------------------------------------
# linear algebra and the Char-CNN kernels

def matmul(tape: Optional[Tape], a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner dims disagree: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)
    if tape is not None:
        ad, bd = a.data, b.data
        tape.record((a, b), out, lambda g: (g @ bd.T, ad.T @ g))
    return out


def _conv_windows(x: Array, kernel: int, stride: int) -> Array:
    # [Cin, L', K] view of every window entering the convolution
    win = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=1)
    return win[:, ::stride, :]


def conv1d(
    tape: Optional[Tape],
    x: Tensor,
    k: Tensor,
    stride: int = 1,
    bias: Optional[Tensor] = None,
) -> Tensor:
    """Valid cross-correlation of x[Cin x L] with k[Cout x Cin x K]."""
    if x.data.ndim != 2 or k.data.ndim != 3:
        raise ShapeError(f"conv1d: expected x[Cin x L], k[Cout x Cin x K]; got {x.shape}, {k.shape}")
    cin, length = x.data.shape
    cout, kcin, ksize = k.data.shape
    if kcin != cin:
        raise ShapeError(f"conv1d: channel mismatch: x has {cin}, kernel expects {kcin}")
    if length < ksize:
        raise ShapeError(f"conv1d: input length {length} shorter than kernel {ksize}")
    if stride < 1:
        raise ShapeError(f"conv1d: stride must be >= 1, got {stride}")
    win = _conv_windows(x.data, ksize, stride)  # [Cin, L', K]
    out_data = np.einsum("clk,ock->ol", win, k.data, optimize=True)
    if bias is not None:
        if bias.data.shape != (cout,):
            raise ShapeError(f"conv1d: bias shape {bias.shape}, expected ({cout},)")
        out_data = out_data + bias.data[:, None]
    out = Tensor(out_data)
    if tape is not None:
        lp = out_data.shape[1]
        positions = stride * np.arange(lp)
        kdata = k.data

        def input_and_kernel_grads(g):
            dk = np.einsum("ol,clk->ock", g, win, optimize=True)
            per_tap = np.einsum("ol,ock->clk", g, kdata, optimize=True)
            dx = np.zeros((cin, length), dtype=np.float64)
            for t in range(ksize):
                # positions + t are distinct for fixed t, so plain += is safe
                dx[:, positions + t] += per_tap[:, :, t]
            return dx, dk

        if bias is not None:
            tape.record(
                (x, k, bias), out,
                lambda g: (*input_and_kernel_grads(g), g.sum(axis=1)),
            )
        else:
            tape.record((x, k), out, lambda g: input_and_kernel_grads(g))
    return out


def maxpool1d(tape: Optional[Tape], x: Tensor, size: int, stride: int) -> Tensor:
    """Per-window maximum over x[C x L]; gradient goes to the first argmax."""
    if x.data.ndim != 2:
        raise ShapeError(f"maxpool1d: expected x[C x L], got {x.shape}")
    channels, length = x.data.shape
    if size > length:
        raise ShapeError(f"maxpool1d: window {size} larger than input length {length}")
    if stride < 1:
        raise ShapeError(f"maxpool1d: stride must be >= 1, got {stride}")
    win = np.lib.stride_tricks.sliding_window_view(x.data, size, axis=1)[:, ::stride, :]
    argmax = win.argmax(axis=2)  # np.argmax takes the first index on ties
    out = Tensor(np.take_along_axis(win, argmax[:, :, None], axis=2)[:, :, 0])
    if tape is not None:
        lp = argmax.shape[1]
        cols = stride * np.arange(lp)[None, :] + argmax
        rows = np.repeat(np.arange(channels)[:, None], lp, axis=1)

        def rule(g):
            dx = np.zeros((channels, length), dtype=np.float64)
            np.add.at(dx, (rows.ravel(), cols.ravel()), g.ravel())
            return (dx,)

        tape.record((x,), out, rule)
    return out


# ---------------------------------------------------------------------------
# reductions and regularization

def sum_all(tape: Optional[Tape], a: Tensor) -> Tensor:
    out = Tensor(a.data.sum())
    if tape is not None:
        shp = a.data.shape
        tape.record((a,), out, lambda g: (np.broadcast_to(g, shp).copy(),))
    return out


def mean_all(tape: Optional[Tape], a: Tensor) -> Tensor:
    out = Tensor(a.data.mean())
    if tape is not None:
        shp, n = a.data.shape, a.data.size
        tape.record((a,), out, lambda g: (np.broadcast_to(g / n, shp).copy(),))
    return out


def dropout(tape: Optional[Tape], a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate == 0."""
    if rate <= 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    mask = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    out = Tensor(a.data * mask)
    if tape is not None:
        tape.record((a,), out, lambda g: (g * mask,))
    return out
