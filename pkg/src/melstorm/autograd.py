"""Dense float64 tensors with tape-based reverse-mode differentiation.

Implements exactly the operations the spectrogram classifier and the
gradient attacks need (conv2d, batchnorm2d, relu, global average pooling,
an affine head, cross-entropy) plus the elementwise helpers the CW attack
objective is built from. Everything is float64 internally so gradients can
be checked tightly against finite differences.

conv2d accumulates its reduction in (in_channel, kernel_row, kernel_col)
order; per-sample results are bitwise independent of batch composition,
which the attack layer relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

Scalar = Union[int, float]


@dataclass
class TapeNode:
    """One recorded operation: op tag, input tensors, and the backward rule.

    ``backward`` maps the output gradient to one gradient array per input
    (None for inputs that need no gradient).
    """

    op: str
    inputs: tuple["Tensor", ...]
    backward: Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]]


class Tensor:
    """A dense float64 array with an optional gradient slot.

    Tensors created by recorded operations carry a ``node`` linking them
    into the tape; ``backprop`` walks the tape in reverse topological order
    and accumulates gradients additively into ``grad``.
    """

    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False, node: TapeNode | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- elementwise arithmetic (same shape, or one 0-d operand) -----------

    def __add__(self, other: "Tensor | Scalar") -> "Tensor":
        return add(self, _as_tensor(other))

    def __radd__(self, other: Scalar) -> "Tensor":
        return add(_as_tensor(other), self)

    def __sub__(self, other: "Tensor | Scalar") -> "Tensor":
        return sub(self, _as_tensor(other))

    def __rsub__(self, other: Scalar) -> "Tensor":
        return sub(_as_tensor(other), self)

    def __mul__(self, other: "Tensor | Scalar") -> "Tensor":
        return mul(self, _as_tensor(other))

    def __rmul__(self, other: Scalar) -> "Tensor":
        return mul(_as_tensor(other), self)

    def sum(self) -> "Tensor":
        return tensor_sum(self)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def reshape(self, shape: Sequence[int]) -> "Tensor":
        return reshape(self, shape)


def _as_tensor(value: "Tensor | Scalar") -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(float(value))


def _record(
    op: str,
    inputs: Sequence[Tensor],
    out_data: np.ndarray,
    backward: Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]],
) -> Tensor:
    if any(t.requires_grad for t in inputs):
        return Tensor(out_data, requires_grad=True, node=TapeNode(op, tuple(inputs), backward))
    return Tensor(out_data)


def backprop(loss: Tensor) -> None:
    """Accumulate gradients of a recorded scalar into every reachable tensor.

    The seed gradient is 1.0. Repeated calls on the same tape accumulate
    additively. Raises if the tensor was not produced by recorded
    operations (a detached tensor has nothing to differentiate through).
    """
    if not loss.requires_grad or loss.node is None:
        raise ValueError(
            "backprop: tensor is detached from the tape "
            "(requires_grad tensors produced by recorded operations only)"
        )
    if loss.size != 1:
        raise ValueError(f"backprop: expected a scalar loss, got shape {loss.shape}")

    # Post-order DFS so inputs precede their consumers, then walk reversed.
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            topo.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for inp in t.node.inputs:
                if inp.requires_grad and id(inp) not in seen:
                    stack.append((inp, False))

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(topo):
        g = pending.pop(id(t), None)
        if g is None:
            continue
        if t.grad is None:
            t.grad = g.copy()
        else:
            t.grad += g
        if t.node is None:
            continue
        input_grads = t.node.backward(g)
        for inp, gi in zip(t.node.inputs, input_grads):
            if gi is None or not inp.requires_grad:
                continue
            acc = pending.get(id(inp))
            if acc is None:
                # Copy: a backward rule may hand the same array to two inputs.
                pending[id(inp)] = gi.copy()
            else:
                acc += gi


def zero_grads(params) -> None:
    """Clear gradient slots on an iterable or mapping of tensors."""
    values = params.values() if hasattr(params, "values") else params
    for p in values:
        p.zero_grad()


# ---------------------------------------------------------------------------
# elementwise / shape ops
# ---------------------------------------------------------------------------


def _binary_shapes(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and a.data.ndim != 0 and b.data.ndim != 0:
        raise ValueError(f"{op}: operand shapes {a.shape} and {b.shape} differ (broadcasting is limited to scalars)")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return g if g.shape == shape else np.asarray(g.sum(), dtype=np.float64).reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes("add", a, b)
    out = a.data + b.data

    def backward(g: np.ndarray):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _record("add", (a, b), out, backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes("sub", a, b)
    out = a.data - b.data

    def backward(g: np.ndarray):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _record("sub", (a, b), out, backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes("mul", a, b)
    out = a.data * b.data

    def backward(g: np.ndarray):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return _record("mul", (a, b), out, backward)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(g: np.ndarray):
        return (g * (1.0 - out * out),)

    return _record("tanh", (x,), out, backward)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at exactly 0 is 0."""
    out = np.maximum(x.data, 0.0)

    def backward(g: np.ndarray):
        return (g * (x.data > 0.0),)

    return _record("relu", (x,), out, backward)


def tensor_sum(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum())

    def backward(g: np.ndarray):
        return (np.full(x.shape, float(g), dtype=np.float64),)

    return _record("sum", (x,), out, backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = x.data.reshape(tuple(shape))

    def backward(g: np.ndarray):
        return (g.reshape(x.shape),)

    return _record("reshape", (x,), out, backward)


# ---------------------------------------------------------------------------
# network layers
# ---------------------------------------------------------------------------


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: tuple[int, int] = (1, 1),
    padding: tuple[int, int] = (0, 0),
) -> Tensor:
    """Strided cross-correlation with zero padding.

    x: [N, Cin, H, W], weight: [Cout, Cin, kh, kw], bias: [Cout].
    Output spatial extent is floor((H + 2*ph - kh)/sh) + 1 (likewise W).
    """
    if x.data.ndim != 4:
        raise ValueError(f"conv2d: input must be [N, Cin, H, W], got ndim={x.data.ndim}")
    if weight.data.ndim != 4:
        raise ValueError(f"conv2d: weight must be [Cout, Cin, kh, kw], got ndim={weight.data.ndim}")
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise ValueError(f"conv2d: input channels (Cin={cin}) do not match weight channels (Cin={cin_w})")
    if bias.shape != (cout,):
        raise ValueError(f"conv2d: bias shape {bias.shape} must be (Cout,) = ({cout},)")
    sh, sw = stride
    ph, pw = padding
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise ValueError(
            f"conv2d: kernel ({kh}, {kw}) with stride {stride} and padding {padding} "
            f"does not fit input H={h}, W={w} (output would be {ho}x{wo})"
        )

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    wd = weight.data
    acc = np.zeros((n, cout, ho, wo), dtype=np.float64)
    for ci in range(cin):
        for ki in range(kh):
            for kj in range(kw):
                patch = xp[:, ci, ki : ki + sh * ho : sh, kj : kj + sw * wo : sw]
                acc += patch[:, None, :, :] * wd[None, :, ci, ki, kj, None, None]
    out = acc + bias.data[None, :, None, None]

    def backward(g: np.ndarray):
        need_x = x.requires_grad
        need_w = weight.requires_grad
        gx_p = np.zeros_like(xp) if need_x else None
        gw = np.zeros_like(wd) if need_w else None
        for ci in range(cin):
            for ki in range(kh):
                for kj in range(kw):
                    if need_w:
                        patch = xp[:, ci, ki : ki + sh * ho : sh, kj : kj + sw * wo : sw]
                        gw[:, ci, ki, kj] = np.einsum("nohw,nhw->o", g, patch)
                    if need_x:
                        gx_p[:, ci, ki : ki + sh * ho : sh, kj : kj + sw * wo : sw] += (
                            g * wd[None, :, ci, ki, kj, None, None]
                        ).sum(axis=1)
        gx = None
        if need_x:
            gx = gx_p[:, :, ph : ph + h, pw : pw + w]
        gb = g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        return gx, gw, gb

    return _record("conv2d", (x, weight, bias), out, backward)


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over [N, C, H, W].

    Train mode normalizes by batch statistics (population variance) and
    updates the running statistics in place by exponential moving average.
    Eval mode normalizes by the running statistics, which the backward rule
    treats as constants.
    """
    if x.data.ndim != 4:
        raise ValueError(f"batchnorm2d: input must be [N, C, H, W], got ndim={x.data.ndim}")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"batchnorm2d: gamma/beta must have shape ({c},)")

    if train:
        if n * h * w < 2:
            raise ValueError(f"batchnorm2d: train mode needs at least 2 values per channel, got {n * h * w}")
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean[:] = (1.0 - momentum) * running_mean + momentum * mu
        running_var[:] = (1.0 - momentum) * running_var + momentum * var
    else:
        mu = running_mean
        var = running_var

    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def backward(g: np.ndarray):
        ggamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        gbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data[None, :, None, None]
            if train:
                m1 = dxhat.mean(axis=(0, 2, 3))
                m2 = (dxhat * xhat).mean(axis=(0, 2, 3))
                gx = inv[None, :, None, None] * (dxhat - m1[None, :, None, None] - xhat * m2[None, :, None, None])
            else:
                gx = dxhat * inv[None, :, None, None]
        return gx, ggamma, gbeta

    return _record("batchnorm2d", (x, gamma, beta), out, backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean: [N, C, H, W] -> [N, C]."""
    if x.data.ndim != 4:
        raise ValueError(f"global_avg_pool: input must be [N, C, H, W], got ndim={x.data.ndim}")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))

    def backward(g: np.ndarray):
        per_cell = g / (h * w)
        return (np.broadcast_to(per_cell[:, :, None, None], (n, c, h, w)).copy(),)

    return _record("global_avg_pool", (x,), out, backward)


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight.T + bias with x: [N, F], weight: [O, F], bias: [O].

    The contraction is an explicit product-then-reduce so the result for
    each row never depends on the rest of the batch.
    """
    if x.data.ndim != 2:
        raise ValueError(f"affine: input must be [N, F], got ndim={x.data.ndim}")
    if weight.data.ndim != 2:
        raise ValueError(f"affine: weight must be [O, F], got ndim={weight.data.ndim}")
    n, f = x.shape
    o, f_w = weight.shape
    if f != f_w:
        raise ValueError(f"affine: input features (F={f}) do not match weight features (F={f_w})")
    if bias.shape != (o,):
        raise ValueError(f"affine: bias shape {bias.shape} must be (O,) = ({o},)")

    out = (x.data[:, None, :] * weight.data[None, :, :]).sum(axis=2) + bias.data[None, :]

    def backward(g: np.ndarray):
        gx = (g[:, :, None] * weight.data[None, :, :]).sum(axis=1) if x.requires_grad else None
        gw = (g[:, :, None] * x.data[:, None, :]).sum(axis=0) if weight.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return _record("affine", (x, weight, bias), out, backward)


def cross_entropy_loss(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean cross-entropy of [N, K] logits against integer class labels.

    Stabilized by max-subtraction; the backward rule is
    (softmax(logits) - onehot) / N.
    """
    if logits.data.ndim != 2:
        raise ValueError(f"cross_entropy_loss: logits must be [N, K], got ndim={logits.data.ndim}")
    n, k = logits.shape
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (n,):
        raise ValueError(f"cross_entropy_loss: expected {n} labels, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= k):
        bad = y[(y < 0) | (y >= k)][0]
        raise ValueError(f"cross_entropy_loss: label {bad} out of range [0, {k})")

    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    sez = ez.sum(axis=1, keepdims=True)
    logsumexp = zmax[:, 0] + np.log(sez[:, 0])
    rows = np.arange(n)
    out = np.asarray((logsumexp - z[rows, y]).mean())
    softmax = ez / sez

    def backward(g: np.ndarray):
        gz = softmax.copy()
        gz[rows, y] -= 1.0
        gz *= float(g) / n
        return (gz,)

    return _record("cross_entropy_loss", (logits,), out, backward)


def logit_margin(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Per-row margin z[label] - max_{j != label} z[j] for [N, K] logits.

    Negative once the row is misclassified; the CW objective penalizes
    its positive part.
    """
    n, k = logits.shape
    if k < 2:
        raise ValueError("logit_margin: needs at least 2 classes")
    y = np.asarray(labels, dtype=np.int64)
    z = logits.data
    rows = np.arange(n)
    masked = z.copy()
    masked[rows, y] = -np.inf
    jstar = masked.argmax(axis=1)
    out = z[rows, y] - z[rows, jstar]

    def backward(g: np.ndarray):
        gz = np.zeros_like(z)
        gz[rows, y] += g
        gz[rows, jstar] -= g
        return (gz,)

    return _record("logit_margin", (logits,), out, backward)
