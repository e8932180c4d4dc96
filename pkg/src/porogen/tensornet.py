"""A small reverse-mode autodiff engine over float64 numpy arrays.

Only what the generator and discriminator need: broadcasting arithmetic,
reductions, 2D (transposed) convolution, instance normalization, a few
activations, channel concatenation and noise replication. Plus Adam with a
hold-then-linear-decay learning rate and a flat checkpoint container.
"""
from __future__ import annotations

import contextlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import as_strided

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


_branch_log: list | None = None


@contextlib.contextmanager
def record_branches():
    """Collect the branch taken at every piecewise op (relu, abs, clip, ...).

    Yields a list that fills with boolean arrays as ops run; two evaluations
    lie on the same smooth piece when their lists are equal.
    """
    global _branch_log
    prev, _branch_log = _branch_log, []
    try:
        yield _branch_log
    finally:
        _branch_log = prev


def _branch(*masks) -> None:
    if _branch_log is not None:
        _branch_log.extend(m.copy() for m in masks)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

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
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf requiring grad."""
        if grad is None:
            if self.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        order = _topological(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def _topological(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    order.reverse()
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _result(data, parents, backward) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and reductions


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape),
                              _unbroadcast(g * a.data, b.shape)))


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.data ** exponent
    return _result(out, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),))


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(out, (a,), backward)


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def log(a: Tensor) -> Tensor:
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def tabs(a: Tensor) -> Tensor:
    # subgradient 0 at ties
    _branch(a.data > 0, a.data < 0)
    return _result(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    _branch(a.data < lo, a.data > hi)
    return _result(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    _branch(pos)
    return _result(a.data * pos, (a,), lambda g: (g * pos,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    _branch(a.data > 0)
    scale = np.where(a.data > 0, 1.0, slope)
    return _result(a.data * scale, (a,), lambda g: (g * scale,))


def sigmoid(a: Tensor) -> Tensor:
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    e = np.exp(a.data[~pos])
    out[~pos] = e / (1.0 + e)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        idx = [slice(None)] * g.ndim
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx[axis] = slice(lo, hi)
            out.append(g[tuple(idx)])
        return out

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def replicate_and_concat(features: Tensor, noise) -> Tensor:
    """Tile a per-sample noise vector over H x W and append it as channels.

    ``features`` is (B, C, H, W) and ``noise`` is (B, n_z) or (n_z,); the
    result is (B, C + n_z, H, W).
    """
    noise = as_tensor(noise)
    b, _, h, w = features.shape
    z = noise.data
    squeeze = z.ndim == 1
    if squeeze:
        z = np.broadcast_to(z, (b, z.shape[0]))
    tiled = np.broadcast_to(z[:, :, None, None], (b, z.shape[1], h, w))
    c = features.shape[1]
    out = np.concatenate([features.data, tiled], axis=1)

    def backward(g):
        gz = g[:, c:].sum(axis=(2, 3))
        if squeeze:
            gz = gz.sum(axis=0)
        return g[:, :c], gz

    return _result(out, (features, noise), backward)


# ---------------------------------------------------------------------------
# convolution


def _windows(xp: np.ndarray, k: int, s: int, ho: int, wo: int) -> np.ndarray:
    """Strided (B, C, ho, wo, k, k) view of a padded input."""
    b, c = xp.shape[:2]
    sb, sc, sh, sw = xp.strides
    return as_strided(xp, (b, c, ho, wo, k, k), (sb, sc, sh * s, sw * s, sh, sw),
                      writeable=False)


def _scatter_windows(cols: np.ndarray, out_shape, k: int, s: int) -> np.ndarray:
    """Adjoint of :func:`_windows`: sum (B, ho, wo, C, k, k) patches into an image."""
    out = np.zeros(out_shape)
    ho, wo = cols.shape[1:3]
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += \
                cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return out


def conv_output_size(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation; ``weight`` is (C_out, C_in, k, k)."""
    b, c, h, w = x.shape
    co, ci, k, k2 = weight.shape
    if ci != c or k != k2:
        raise ValueError(f"input has {c} channels, kernel expects {ci} (kernel {k}x{k2})")
    ho, wo = conv_output_size(h, k, stride, padding), conv_output_size(w, k, stride, padding)
    if ho <= 0 or wo <= 0:
        raise ValueError(f"conv output would be {ho}x{wo} for input {h}x{w}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = _windows(xp, k, stride, ho, wo)
    out = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3]))  # (B, ho, wo, co)
    if bias is not None:
        out = out + bias.data
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(g):
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        gcols = np.tensordot(g, weight.data, axes=([1], [0]))  # (B, ho, wo, ci, k, k)
        gxp = _scatter_windows(gcols, xp.shape, k, stride)
        gx = gxp[:, :, padding:padding + h, padding:padding + w]
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, backward)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 1, padding: int = 0) -> Tensor:
    """Adjoint of :func:`conv2d`; ``weight`` is (C_in, C_out, k, k)."""
    b, c, h, w = x.shape
    ci, co, k, k2 = weight.shape
    if ci != c or k != k2:
        raise ValueError(f"input has {c} channels, kernel expects {ci} (kernel {k}x{k2})")
    full_h, full_w = (h - 1) * stride + k, (w - 1) * stride + k
    ho, wo = full_h - 2 * padding, full_w - 2 * padding
    if ho <= 0 or wo <= 0:
        raise ValueError(f"transposed conv output would be {ho}x{wo}")
    cols = np.tensordot(x.data, weight.data, axes=([1], [0]))  # (B, h, w, co, k, k)
    full = _scatter_windows(cols, (b, co, full_h, full_w), k, stride)
    out = full[:, :, padding:padding + ho, padding:padding + wo]
    if bias is not None:
        out = out + bias.data[:, None, None]
    out = np.ascontiguousarray(out)

    def backward(g):
        gp = np.pad(g, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        win = _windows(gp, k, stride, h, w)  # (B, co, h, w, k, k)
        gx = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        gw = np.tensordot(x.data, win, axes=([0, 2, 3], [0, 2, 3]))
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, backward)


def instance_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None,
                  eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel standardization over H x W, then channel affine."""
    n = x.shape[2] * x.shape[3]
    mean = x.data.mean(axis=(2, 3), keepdims=True)
    centered = x.data - mean
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=(2, 3), keepdims=True) + eps)
    xhat = centered * inv_std
    g_scale = gamma.data[None, :, None, None] if gamma is not None else 1.0
    out = xhat * g_scale
    if beta is not None:
        out = out + beta.data[None, :, None, None]

    def backward(g):
        dxhat = g * g_scale
        dx = inv_std / n * (n * dxhat - dxhat.sum(axis=(2, 3), keepdims=True)
                            - xhat * (dxhat * xhat).sum(axis=(2, 3), keepdims=True))
        dgamma = (g * xhat).sum(axis=(0, 2, 3)) if gamma is not None else None
        dbeta = g.sum(axis=(0, 2, 3)) if beta is not None else None
        return dx, dgamma, dbeta

    parents = [x]
    if gamma is not None:
        parents.append(gamma)
    if beta is not None:
        parents.append(beta)

    def routed(g):
        dx, dgamma, dbeta = backward(g)
        out = [dx]
        if gamma is not None:
            out.append(dgamma)
        if beta is not None:
            out.append(dbeta)
        return out

    return _result(out, parents, routed)


# ---------------------------------------------------------------------------
# optimization


@dataclass(frozen=True)
class LRSchedule:
    """Constant ``base_lr`` for ``hold_steps``, then linear decay to 0 at ``total_steps``."""

    base_lr: float = 2e-4
    hold_steps: int = 0
    total_steps: int = 1

    def __post_init__(self):
        if self.total_steps <= self.hold_steps:
            raise ValueError("total_steps must exceed hold_steps")


def lr_at(step: int, schedule: LRSchedule) -> float:
    if step < 0:
        raise ValueError("step must be nonnegative")
    if step < schedule.hold_steps:
        return schedule.base_lr
    span = schedule.total_steps - schedule.hold_steps
    frac = (step - schedule.hold_steps) / span
    return schedule.base_lr * max(0.0, 1.0 - frac)


@dataclass
class AdamState:
    schedule: LRSchedule = field(default_factory=LRSchedule)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState):
    """In-place bias-corrected Adam update of numpy arrays ``params``."""
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    lr = lr_at(state.step, state.schedule)
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        # in place to avoid temporaries on the multi-million-entry tensors
        tmp = np.multiply(g, 1.0 - state.beta1)
        m *= state.beta1
        m += tmp
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - state.beta2
        v *= state.beta2
        v += tmp
        np.divide(v, c2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += state.eps
        np.divide(m, tmp, out=tmp)
        tmp *= lr / c1
        p -= tmp
    return params


class Adam:
    """Adam over a list of parameter tensors; missing grads count as zero."""

    def __init__(self, params, schedule: LRSchedule | None = None,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(schedule or LRSchedule(), betas[0], betas[1], eps)

    @property
    def lr(self) -> float:
        return lr_at(self.state.step, self.state.schedule)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state)


# ---------------------------------------------------------------------------
# checkpoint container

MAGIC = b"POROGEN1"


def save_checkpoint(path, tensors: dict, meta: dict | None = None) -> None:
    """Write ``MAGIC | u64 manifest length | JSON manifest | float64 LE blobs``.

    Offsets in the manifest are relative to the start of the blob section.
    """
    entries, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    manifest = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True,
                          separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    (length,) = struct.unpack("<Q", buf[8:16])
    manifest = json.loads(buf[16:16 + length].decode("utf-8"))
    base = 16 + length
    tensors = {}
    for e in manifest["tensors"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        start = base + e["offset"]
        if start + 8 * count > len(buf):
            raise ValueError(f"{path}: tensor {e['name']!r} runs past end of file")
        tensors[e["name"]] = np.frombuffer(buf, dtype="<f8", count=count,
                                           offset=start).reshape(e["shape"]).copy()
    return tensors, manifest["meta"]
