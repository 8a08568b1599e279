"""Dense float tensors with reverse-mode autodiff, 1-D convolutions, and Adam.

Everything the networks need lives here: a Tensor that records the
operations applied to it, the handful of differentiable ops used by the
encoder/decoder stacks (causal and non-causal dilated conv, stride-2
transposed conv, matmul, column softmax, sigmoid/relu/softplus, channel
concat), a bias-corrected Adam step, and a seedable Gaussian initializer.

Tensors default to float32; pass float64 arrays (or dtype=np.float64) for
gradient checking. Gradients accumulate across backward() calls until
explicitly zeroed, which is what lets a training step sum per-item
gradients before a single optimizer update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


class TensorError(Exception):
    """Base class for tensor-engine failures."""


class ShapeError(TensorError):
    """Operands have incompatible shapes; the message names the offending dimension."""


class NumericError(TensorError):
    """A NaN or Inf value was produced where finiteness is required."""


_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """A dense float array plus an optional same-shaped gradient.

    ``requires_grad`` marks leaves (parameters) whose gradient should be
    populated by ``backward``; results of ops inherit it from their inputs.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not (isinstance(data, np.ndarray) and arr.dtype in _FLOAT_DTYPES):
            arr = arr.astype(np.float32, copy=False)
        if arr.dtype not in _FLOAT_DTYPES:
            raise TypeError(f"tensors hold float32/float64 data, got {arr.dtype}")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._grad_fn = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A view of the same data outside the autodiff graph."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # operator sugar; all arithmetic goes through the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported; divide by a scalar")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)


def _as_constant(x, like: Tensor) -> np.ndarray:
    """Coerce a constant operand to an ndarray compatible with ``like``."""
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=like.dtype)


def _node(data: np.ndarray, parents: tuple, grad_fn) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents), dtype=data.dtype)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(np.asarray(g), t.data.shape)
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    Gradients accumulate on top of whatever is already stored; call
    ``zero_grads`` between optimizer steps.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is not finite")
    if not loss.requires_grad:
        raise TensorError("loss does not depend on any tensor with requires_grad")

    # iterative topological order (graphs can be deep for long utterances)
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    _accumulate(loss, np.ones_like(loss.data))
    for node in reversed(topo):
        if node._grad_fn is not None:
            node._grad_fn(node.grad)


def zero_grads(params) -> None:
    """Clear gradients on a dict or iterable of tensors."""
    values = params.values() if isinstance(params, dict) else params
    for p in values:
        p.grad = None


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        out_data = a.data + b.data

        def grad_fn(g):
            _accumulate(a, g)
            _accumulate(b, g)

        return _node(out_data, (a, b), grad_fn)

    const = _as_constant(b, a)
    out_data = a.data + const

    def grad_fn(g):
        _accumulate(a, g)

    return _node(out_data, (a,), grad_fn)


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        out_data = a.data * b.data

        def grad_fn(g):
            _accumulate(a, g * b.data)
            _accumulate(b, g * a.data)

        return _node(out_data, (a, b), grad_fn)

    const = _as_constant(b, a)
    out_data = a.data * const

    def grad_fn(g):
        _accumulate(a, g * const)

    return _node(out_data, (a,), grad_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.data.ndim}-D and {b.data.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions differ: left has {a.shape[1]} columns, right has {b.shape[0]} rows"
        )
    out_data = a.data @ b.data

    def grad_fn(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _node(out_data, (a, b), grad_fn)


def transpose(a: Tensor) -> Tensor:
    def grad_fn(g):
        _accumulate(a, g.T)

    return _node(a.data.T.copy(), (a,), grad_fn)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack two (channels x T) tensors along the channel axis: [a; b]."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("concat_channels needs 2-D operands")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(
            f"concat_channels time extents differ: {a.shape[1]} vs {b.shape[1]}"
        )
    c1 = a.shape[0]
    out_data = np.concatenate([a.data, b.data], axis=0)

    def grad_fn(g):
        _accumulate(a, g[:c1])
        _accumulate(b, g[c1:])

    return _node(out_data, (a, b), grad_fn)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("slice_rows needs a 2-D tensor")
    out_data = a.data[start:stop].copy()

    def grad_fn(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        _accumulate(a, full)

    return _node(out_data, (a,), grad_fn)


def tensor_sum(a: Tensor) -> Tensor:
    out_data = np.asarray(a.data.sum(), dtype=a.dtype)

    def grad_fn(g):
        _accumulate(a, g * np.ones_like(a.data))

    return _node(out_data, (a,), grad_fn)


def tensor_mean(a: Tensor) -> Tensor:
    n = a.data.size
    out_data = np.asarray(a.data.mean(), dtype=a.dtype)

    def grad_fn(g):
        _accumulate(a, (g / n) * np.ones_like(a.data))

    return _node(out_data, (a,), grad_fn)


def tensor_abs(a: Tensor) -> Tensor:
    out_data = np.abs(a.data)

    def grad_fn(g):
        _accumulate(a, g * np.sign(a.data))

    return _node(out_data, (a,), grad_fn)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0)

    def grad_fn(g):
        _accumulate(a, g * (a.data > 0))

    return _node(out_data, (a,), grad_fn)


def sigmoid(a: Tensor) -> Tensor:
    s = expit(a.data)

    def grad_fn(g):
        _accumulate(a, g * s * (1.0 - s))

    return _node(s, (a,), grad_fn)


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x) computed as max(x, 0) + log1p(e^-|x|) to avoid overflow."""
    out_data = np.maximum(a.data, 0) + np.log1p(np.exp(-np.abs(a.data)))

    def grad_fn(g):
        _accumulate(a, g * expit(a.data))

    return _node(out_data, (a,), grad_fn)


def softmax_columns(a: Tensor) -> Tensor:
    """Column-wise softmax of an (N x T) tensor; each column sums to 1."""
    if a.data.ndim != 2:
        raise ShapeError("softmax_columns needs a 2-D tensor")
    if not np.isfinite(a.data).all():
        raise NumericError("softmax_columns input is not finite")
    z = a.data - a.data.max(axis=0, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=0, keepdims=True)

    def grad_fn(g):
        _accumulate(a, s * (g - (g * s).sum(axis=0, keepdims=True)))

    return _node(s, (a,), grad_fn)


def embedding_lookup(ids: np.ndarray, table: Tensor) -> Tensor:
    """Select rows of ``table`` (vocab x dim) and return them as columns (dim x N)."""
    ids = np.asarray(ids)
    if ids.ndim != 1:
        raise ShapeError("embedding_lookup needs a 1-D id sequence")
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = int(ids[(ids < 0) | (ids >= vocab)][0])
        raise ValueError(f"character id {bad} outside vocabulary of size {vocab}")
    out_data = table.data[ids].T.copy()

    def grad_fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g.T)
        _accumulate(table, full)

    return _node(out_data, (table,), grad_fn)


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvLayerSpec:
    """Static description of one 1-D conv layer.

    ``causal`` layers left-pad so output at time t never sees input beyond t;
    non-causal layers pad symmetrically (kernel must be odd). ``residual``
    and ``transposed`` extend the base fields for use in network layer plans.
    """

    in_channels: int
    out_channels: int
    kernel_size: int
    dilation: int = 1
    causal: bool = False
    has_nonlinearity: bool = False
    residual: bool = False
    transposed: bool = False

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.kernel_size < 1 or self.dilation < 1:
            raise ValueError("kernel_size and dilation must be positive")


def conv1d(x: Tensor, spec: ConvLayerSpec, weights: Tensor, bias: Tensor) -> Tensor:
    """Same-length 1-D convolution of (C_in x T) with weights (C_out x C_in x K)."""
    if x.data.ndim != 2:
        raise ShapeError(f"conv1d input must be 2-D (channels x time), got {x.data.ndim}-D")
    c_in, t_len = x.shape
    if c_in != spec.in_channels:
        raise ShapeError(
            f"conv1d input channel dimension is {c_in}, spec expects {spec.in_channels}"
        )
    expected_w = (spec.out_channels, spec.in_channels, spec.kernel_size)
    if weights.shape != expected_w:
        for axis, (got, want) in enumerate(zip(weights.shape, expected_w)):
            if got != want:
                raise ShapeError(
                    f"conv1d weight dimension {axis} is {got}, expected {want} "
                    f"(full expected shape {expected_w})"
                )
        raise ShapeError(f"conv1d weights must be 3-D {expected_w}, got {weights.shape}")
    if bias.shape != (spec.out_channels,):
        raise ShapeError(
            f"conv1d bias dimension 0 is {bias.shape[0] if bias.data.ndim else '?'}, "
            f"expected {spec.out_channels}"
        )
    k, dil = spec.kernel_size, spec.dilation
    if not spec.causal and k % 2 == 0:
        raise ValueError(f"non-causal conv1d needs an odd kernel, got {k} (center undefined)")

    anchor = k - 1 if spec.causal else (k - 1) // 2
    pad_left = anchor * dil
    pad_right = (k - 1 - anchor) * dil
    xp = np.pad(x.data, ((0, 0), (pad_left, pad_right)))

    cols = np.empty((c_in, k, t_len), dtype=x.dtype)
    for tap in range(k):
        cols[:, tap, :] = xp[:, tap * dil:tap * dil + t_len]
    cols_flat = cols.reshape(c_in * k, t_len)
    w_flat = weights.data.reshape(spec.out_channels, c_in * k)
    out_data = w_flat @ cols_flat + bias.data[:, None]

    def grad_fn(g):
        if weights.requires_grad:
            _accumulate(weights, (g @ cols_flat.T).reshape(weights.shape))
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=1))
        if x.requires_grad:
            gcols = (w_flat.T @ g).reshape(c_in, k, t_len)
            gxp = np.zeros_like(xp)
            for tap in range(k):
                gxp[:, tap * dil:tap * dil + t_len] += gcols[:, tap, :]
            _accumulate(x, gxp[:, pad_left:pad_left + t_len])

    return _node(out_data, (x, weights, bias), grad_fn)


def conv1d_transposed(x: Tensor, weights: Tensor) -> Tensor:
    """Stride-2, kernel-2 transposed convolution: (C_in x T) -> (C_out x 2T).

    y[o, 2t + k] = sum_i x[i, t] * w[i, o, k]; exact 2x upsampling with no
    cropping ambiguity.
    """
    if x.data.ndim != 2:
        raise ShapeError("conv1d_transposed input must be 2-D (channels x time)")
    c_in, t_len = x.shape
    if t_len == 0:
        raise ValueError("conv1d_transposed needs at least one input frame")
    if weights.data.ndim != 3 or weights.shape[2] != 2:
        raise ShapeError(
            f"conv1d_transposed weights must be (C_in x C_out x 2), got {weights.shape}"
        )
    if weights.shape[0] != c_in:
        raise ShapeError(
            f"conv1d_transposed weight dimension 0 is {weights.shape[0]}, expected {c_in}"
        )
    w0 = weights.data[:, :, 0]
    w1 = weights.data[:, :, 1]
    c_out = weights.shape[1]
    out_data = np.empty((c_out, 2 * t_len), dtype=x.dtype)
    out_data[:, 0::2] = w0.T @ x.data
    out_data[:, 1::2] = w1.T @ x.data

    def grad_fn(g):
        g_even = g[:, 0::2]
        g_odd = g[:, 1::2]
        if x.requires_grad:
            _accumulate(x, w0 @ g_even + w1 @ g_odd)
        if weights.requires_grad:
            gw = np.empty_like(weights.data)
            gw[:, :, 0] = x.data @ g_even.T
            gw[:, :, 1] = x.data @ g_odd.T
            _accumulate(weights, gw)

    return _node(out_data, (x, weights), grad_fn)


# ---------------------------------------------------------------------------
# initialization and optimization
# ---------------------------------------------------------------------------

def gaussian_init(shape, std: float, rng: np.random.Generator | None = None,
                  dtype=np.float32, requires_grad: bool = True) -> Tensor:
    """I.i.d. zero-mean normal samples; same seed gives the identical tensor."""
    if std <= 0:
        raise ValueError(f"gaussian_init std must be positive, got {std}")
    if rng is None:
        rng = np.random.default_rng()
    data = rng.standard_normal(size=tuple(shape), dtype=np.dtype(dtype)) * float(std)
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


@dataclass
class AdamState:
    """Optimizer state: per-parameter moments keyed by parameter name."""

    alpha: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.9
    epsilon: float = 1e-6
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params: dict, state: AdamState) -> None:
    """One bias-corrected Adam update: theta <- theta - alpha * m^ / (sqrt(v^) + eps)."""
    state.step_count += 1
    t = state.step_count
    b1_corr = 1.0 - state.beta1 ** t
    b2_corr = 1.0 - state.beta2 ** t
    for name, p in params.items():
        if p.grad is None:
            raise TensorError(f"adam_step: parameter '{name}' has no gradient")
        g = p.grad
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
            state.first_moment[name] = m
            state.second_moment[name] = v
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / b1_corr
        v_hat = v / b2_corr
        p.data -= state.alpha * m_hat / (np.sqrt(v_hat) + state.epsilon)
