"""Generator and discriminator objectives.

All losses take the generator output as a :class:`~porogen.tensornet.Tensor`
of shape (B, 1, H, W) (or (H, W) for a single image) and return a scalar
tensor averaged over the batch.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from porogen import tensornet as tn
from porogen.grid import BinaryImage, ConditionalInput
from porogen.morph import pattern_distribution

PROB_EPS = 1e-7
MAX_SOFT_TEMPLATE_BITS = 16


@dataclass(frozen=True)
class LossWeights:
    lambda_l1: float = 10.0
    lambda_pattern: float = 5.0e5
    lambda_porosity: float = 1.0e3

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"{name} must be nonnegative, got {v}")


@dataclass(frozen=True)
class LossReport:
    g_adv: float
    l1: float
    pattern: float
    porosity: float
    total: float
    d_loss: float

    FIELDS = ("d_loss", "g_adv", "l1", "pattern", "porosity", "total")


def _as_batch(output: tn.Tensor) -> tn.Tensor:
    """View (H, W) or (B, 1, H, W) output as (B, H, W)."""
    if output.ndim == 2:
        return output.reshape((1,) + output.shape)
    if output.ndim == 4 and output.shape[1] == 1:
        return output.reshape((output.shape[0],) + output.shape[2:])
    if output.ndim == 3:
        return output
    raise ValueError(f"expected (H, W) or (B, 1, H, W) output, got {output.shape}")


def cond_arrays(conds) -> tuple[np.ndarray, np.ndarray]:
    """Stack conditional inputs into (B, H, W) value and mask arrays."""
    if isinstance(conds, ConditionalInput):
        conds = [conds]
    values = np.stack([c.values.data for c in conds])
    mask = np.stack([c.mask.data for c in conds])
    return values, mask


def masked_l1(output: tn.Tensor, values, mask=None, reduction: str = "mean") -> tn.Tensor:
    """Absolute deviation from the hard data over informed pixels.

    ``reduction`` is "mean" (per informed pixel) or "sum". Either way the
    result is averaged over the batch. ``values`` may be a ConditionalInput
    (or list of them), in which case ``mask`` is taken from it.
    """
    if reduction not in ("mean", "sum"):
        raise ValueError(f"reduction must be 'mean' or 'sum', got {reduction!r}")
    if mask is None:
        values, mask = cond_arrays(values)
    out = _as_batch(output)
    values = np.asarray(values, dtype=np.float64).reshape(out.shape)
    mask = np.asarray(mask, dtype=bool).reshape(out.shape)
    counts = mask.sum(axis=(1, 2))
    if np.any(counts == 0):
        raise ValueError("masked L1 needs at least one informed pixel per sample")
    weights = mask / out.shape[0]
    if reduction == "mean":
        weights = weights / counts[:, None, None]
    return (tn.tabs(out - values) * weights).sum()


# ---------------------------------------------------------------------------
# soft pattern histogram


def _window_factors(p: np.ndarray, n: int) -> list[np.ndarray]:
    """Pixel value at each of the n*n template offsets, for every window.

    Returns n*n arrays of shape (B, windows) in row-major template order.
    """
    b, h, w = p.shape
    hw, ww = h - n + 1, w - n + 1
    return [p[:, i:i + hw, j:j + ww].reshape(b, hw * ww) for i in range(n) for j in range(n)]


def _joint(factors: list[np.ndarray], b: int, w: int) -> list[np.ndarray]:
    """Prefix joint distributions of independent bits, first bit most significant.

    ``factors`` are (B, W) pore probabilities; element j of the result is the
    (B, W, 2**j) distribution of the first j bits.
    """
    prefix = [np.ones((b, w, 1))]
    for f in factors:
        t = prefix[-1]
        f = f[:, :, None]
        prefix.append(np.stack([t * (1.0 - f), t * f], axis=-1).reshape(b, w, -1))
    return prefix


def _joint_backward(prefix: list[np.ndarray], factors: list[np.ndarray],
                    g: np.ndarray) -> list[np.ndarray]:
    """Gradient of sum(g * prefix[-1]) with respect to each factor, (B, W) each."""
    grads = [None] * len(factors)
    suffix = g
    for j in range(len(factors) - 1, -1, -1):
        pair = suffix.reshape(suffix.shape[0], suffix.shape[1], -1, 2)
        grads[j] = np.einsum("bwc,bwc->bw", prefix[j], pair[..., 1] - pair[..., 0])
        f = factors[j][:, :, None]
        suffix = pair[..., 0] * (1.0 - f) + pair[..., 1] * f
    return grads


def soft_pattern_distribution(output: tn.Tensor, n: int) -> tn.Tensor:
    """Expected pattern histogram when each pixel is an independent Bernoulli.

    Window w contributes prod_i (p_i if bit_i(c) else 1 - p_i) to code c,
    with the first (top-left) template pixel as the most significant bit.
    On 0/1 input this equals :func:`porogen.morph.pattern_distribution`.
    Returns a (B, 2**(n*n)) tensor.
    """
    out = _as_batch(output)
    b, h, w = out.shape
    k = n * n
    if n < 1 or n > min(h, w):
        raise ValueError(f"template size {n} does not fit a {h}x{w} image")
    if k > MAX_SOFT_TEMPLATE_BITS:
        raise ValueError(f"template size {n} exceeds the soft code-space bound")
    hw, ww = h - n + 1, w - n + 1
    n_windows = hw * ww
    factors = _window_factors(out.data, n)
    # high and low halves of the code are independent given the window, so
    # the histogram is a (2**hi x W) @ (W x 2**lo) product
    split = (k + 1) // 2
    hi = _joint(factors[:split], b, n_windows)
    lo = _joint(factors[split:], b, n_windows)
    joint = np.matmul(hi[-1].transpose(0, 2, 1), lo[-1]) / n_windows
    dist = joint.reshape(b, -1)

    def backward(g):
        g = g.reshape(joint.shape) / n_windows
        g_hi = np.matmul(lo[-1], g.transpose(0, 2, 1))  # (B, W, 2**split)
        g_lo = np.matmul(hi[-1], g)  # (B, W, 2**(k - split))
        per_factor = (_joint_backward(hi, factors[:split], g_hi)
                      + _joint_backward(lo, factors[split:], g_lo))
        grad = np.zeros((b, h, w))
        for j, r in enumerate(per_factor):
            oi, oj = divmod(j, n)
            grad[:, oi:oi + hw, oj:oj + ww] += r.reshape(b, hw, ww)
        return (grad.reshape(out.shape),)

    return tn._result(dist, (out,), backward)


def target_pattern_vectors(targets, n: int) -> np.ndarray:
    """Dense (B, 2**(n*n)) histograms of binary target images."""
    if isinstance(targets, BinaryImage):
        targets = [targets]
    return np.stack([pattern_distribution(t, n).dense() for t in targets])


def pattern_loss(output: tn.Tensor, target, n: int = 3) -> tn.Tensor:
    """Squared L2 distance between soft output and target pattern histograms.

    ``target`` is a BinaryImage, a list of them, or precomputed dense
    histograms from :func:`target_pattern_vectors`.
    """
    if isinstance(target, np.ndarray):
        t = np.atleast_2d(target)
    else:
        imgs = [target] if isinstance(target, BinaryImage) else list(target)
        if imgs[0].shape != _as_batch(output).shape[1:]:
            raise ValueError(f"target {imgs[0].shape} and output differ in shape")
        t = target_pattern_vectors(imgs, n)
    dist = soft_pattern_distribution(output, n)
    if t.shape != dist.shape:
        raise ValueError(f"target histograms {t.shape} do not match output {dist.shape}")
    return ((dist - t) ** 2).sum() * (1.0 / dist.shape[0])


def porosity_loss(output: tn.Tensor, target_phi) -> tn.Tensor:
    """Squared difference between target porosity and mean pore probability."""
    out = _as_batch(output)
    phi = np.asarray(target_phi, dtype=np.float64).reshape(-1)
    mean = out.mean(axis=(1, 2))
    return ((mean - phi) ** 2).mean()


def _clamped(p: tn.Tensor) -> tn.Tensor:
    return tn.clip(tn.as_tensor(p), PROB_EPS, 1.0 - PROB_EPS)


def d_loss(d_real, d_fake) -> tn.Tensor:
    """-[log D(x, y) + log(1 - D(x, G(x, z)))], batch mean."""
    real = _clamped(d_real)
    fake = _clamped(d_fake)
    return -(tn.log(real) + tn.log(1.0 - fake)).mean()


def g_adv_loss(d_fake, non_saturating: bool = False) -> tn.Tensor:
    """log(1 - D(x, G(x, z))) minimized by the generator (or -log D if non-saturating)."""
    fake = _clamped(d_fake)
    if non_saturating:
        return -tn.log(fake).mean()
    return tn.log(1.0 - fake).mean()


def total_g_loss(g_adv, l1, pattern, porosity, weights: LossWeights = LossWeights()):
    """g_adv + lambda_l1 * l1 + lambda_pattern * pattern + lambda_porosity * porosity.

    Works on floats or tensors alike.
    """
    return (g_adv + weights.lambda_l1 * l1 + weights.lambda_pattern * pattern
            + weights.lambda_porosity * porosity)
