"""Central finite-difference checks for the autodiff engine."""
from __future__ import annotations

import numpy as np

from porogen import tensornet as tn


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a||, ||b||), 0 when both vanish."""
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def numeric_grad(fn, x: np.ndarray, h: float = 1e-3, indices=None) -> np.ndarray:
    """Central differences of scalar ``fn(x)`` at the flat ``indices`` of ``x``.

    ``x`` is perturbed in place and restored.
    """
    flat = x.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    out = []
    for i in indices:
        orig = flat[i]
        flat[i] = orig + h
        up = float(fn())
        flat[i] = orig - h
        down = float(fn())
        flat[i] = orig
        out.append((up - down) / (2 * h))
    return np.array(out)


def check(build, tensors, h: float = 1e-3, max_coords: int | None = None, rng=None,
          joint: bool = False, avoid_kinks: bool = False):
    """Compare autodiff and finite-difference gradients of ``build()``.

    ``build`` recomputes a scalar tensor from the current contents of
    ``tensors``. Returns the worst relative error over all tensors, each
    checked on at most ``max_coords`` randomly chosen coordinates.

    With ``joint`` the coordinates are drawn from all tensors together and a
    single relative error is taken over the concatenated gradient. Use this
    for whole networks, where some tensors (a bias feeding a normalization)
    have gradients that vanish up to rounding and no meaningful ratio.

    With ``avoid_kinks`` (joint mode only) a coordinate is used only if both
    the +h and -h evaluations stay on the same branch of every piecewise op
    as the unperturbed point; a central difference across a kink does not
    estimate the derivative.
    """
    if joint:
        return _check_joint(build, tensors, h, max_coords, rng, avoid_kinks)
    if avoid_kinks:
        raise ValueError("avoid_kinks needs joint=True")
    for t in tensors:
        t.grad = None
    build().backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for t, g in zip(tensors, analytic):
        n = t.data.size
        if max_coords is None or max_coords >= n:
            idx = np.arange(n)
        else:
            idx = np.sort(rng.choice(n, size=max_coords, replace=False))
        with tn.no_grad():
            num = numeric_grad(lambda: build().item(), t.data, h, idx)
        worst = max(worst, relative_error(g.reshape(-1)[idx], num))
    return worst


def _branches(build):
    with tn.no_grad(), tn.record_branches() as log:
        value = build().item()
    return value, log


def _same_branches(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def _check_joint(build, tensors, h, max_coords, rng, avoid_kinks):
    for t in tensors:
        t.grad = None
    build().backward()
    grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    sizes = [t.data.size for t in tensors]
    bounds = np.cumsum([0] + sizes)
    total = int(bounds[-1])
    rng = rng or np.random.default_rng(0)
    want = total if max_coords is None else min(max_coords, total)
    base = _branches(build)[1] if avoid_kinks else None
    analytic, numeric = [], []
    for flat_index in rng.permutation(total):
        if len(analytic) == want:
            break
        k = int(np.searchsorted(bounds, flat_index, side="right") - 1)
        i = int(flat_index - bounds[k])
        x = tensors[k].data.reshape(-1)
        orig = x[i]
        x[i] = orig + h
        up, up_log = _branches(build)
        x[i] = orig - h
        down, down_log = _branches(build)
        x[i] = orig
        if avoid_kinks and not (_same_branches(base, up_log) and _same_branches(base, down_log)):
            continue
        analytic.append(grads[k].reshape(-1)[i])
        numeric.append((up - down) / (2 * h))
    if len(analytic) < want:
        raise RuntimeError(f"only {len(analytic)} of {want} coordinates avoid every kink")
    return relative_error(np.array(analytic), np.array(numeric))
