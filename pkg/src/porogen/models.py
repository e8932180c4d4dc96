"""U-Net generator with per-level noise injection, and a five-layer
convolutional discriminator.

Every resampling layer is a 4x4 kernel with stride 2 and padding 1, so each
encoder level halves the spatial size and each decoder level doubles it.
"""
from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from porogen import tensornet as tn
from porogen.grid import ConditionalInput, SoftImage

ORDERS = ("act_then_norm", "norm_then_act")
COND_CHANNELS = 2  # hard-data values + mask
INIT_STD = 0.02


@dataclass(frozen=True)
class NetConfig:
    image_size: int = 128
    base_channels: int = 64
    n_z: int = 8
    max_channels: int = 512
    leaky_slope: float = 0.2
    norm_activation_order: str = "act_then_norm"
    # encoder levels; None means down to a 1x1 bottleneck
    depth: int | None = None

    def __post_init__(self):
        s = self.image_size
        if s < 16 or s > 128 or s & (s - 1):
            raise ValueError(f"image_size must be a power of two in [16, 128], got {s}")
        if self.n_z < 1:
            raise ValueError("n_z must be at least 1")
        if self.base_channels < 1 or self.max_channels < self.base_channels:
            raise ValueError("need 1 <= base_channels <= max_channels")
        if self.norm_activation_order not in ORDERS:
            raise ValueError(f"norm_activation_order must be one of {ORDERS}")
        if self.depth is not None and not 1 <= self.depth <= self.levels_to_bottleneck:
            raise ValueError(f"depth must lie in [1, {self.levels_to_bottleneck}]")

    @property
    def levels_to_bottleneck(self) -> int:
        return int(math.log2(self.image_size))

    @property
    def levels(self) -> int:
        return self.depth if self.depth is not None else self.levels_to_bottleneck

    def channels(self, level: int) -> int:
        """Feature channels produced by encoder ``level`` (1-based)."""
        return min(self.base_channels * 2 ** (level - 1), self.max_channels)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> NetConfig:
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def _conv_params(rng, c_out, c_in, k=4, transpose=False):
    shape = (c_in, c_out, k, k) if transpose else (c_out, c_in, k, k)
    return tn.parameter(rng.normal(0.0, INIT_STD, size=shape)), tn.parameter(np.zeros(c_out))


def _norm_params(c):
    return tn.parameter(np.ones(c)), tn.parameter(np.zeros(c))


class _Net:
    params: OrderedDict

    def parameters(self) -> list[tn.Tensor]:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def state_dict(self, prefix: str = "") -> dict:
        return {prefix + k: v.data for k, v in self.params.items()}

    def load_state_dict(self, state: dict, prefix: str = "") -> None:
        for k, p in self.params.items():
            arr = state[prefix + k]
            if arr.shape != p.shape:
                raise ValueError(f"{prefix + k}: shape {arr.shape} != {p.shape}")
            p.data = np.array(arr, dtype=np.float64)

    def _post(self, x: tn.Tensor, name: str, act) -> tn.Tensor:
        """Activation and instance norm in the configured order.

        Normalization is skipped on 1x1 maps, where it would zero every channel.
        """
        norm = x.shape[2] * x.shape[3] > 1

        def normalize(t):
            return tn.instance_norm(t, self.params[name + ".gamma"], self.params[name + ".beta"])

        if self.cfg.norm_activation_order == "act_then_norm":
            x = act(x)
            return normalize(x) if norm else x
        x = normalize(x) if norm else x
        return act(x)


class Generator(_Net):
    def __init__(self, cfg: NetConfig, rng: np.random.Generator):
        self.cfg = cfg
        p = OrderedDict()
        c_prev = COND_CHANNELS
        for i in range(1, cfg.levels + 1):
            c = cfg.channels(i)
            p[f"enc{i}.weight"], p[f"enc{i}.bias"] = _conv_params(rng, c, c_prev + cfg.n_z)
            p[f"enc{i}.gamma"], p[f"enc{i}.beta"] = _norm_params(c)
            c_prev = c
        for j in range(cfg.levels, 0, -1):
            c_in = cfg.channels(j) * (1 if j == cfg.levels else 2)
            c_out = 1 if j == 1 else cfg.channels(j - 1)
            p[f"dec{j}.weight"], p[f"dec{j}.bias"] = _conv_params(
                rng, c_out, c_in, transpose=True)
            if j > 1:
                p[f"dec{j}.gamma"], p[f"dec{j}.beta"] = _norm_params(c_out)
        self.params = p

    def forward(self, cond: np.ndarray, z: np.ndarray) -> tn.Tensor:
        """``cond`` is (B, 2, S, S), ``z`` is (B, n_z); returns (B, 1, S, S) in (0, 1)."""
        cfg = self.cfg
        if cond.ndim != 4 or cond.shape[1:] != (COND_CHANNELS, cfg.image_size, cfg.image_size):
            raise ValueError(
                f"conditional batch shape {cond.shape} does not match image size {cfg.image_size}")
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (cond.shape[0], cfg.n_z):
            raise ValueError(f"noise shape {z.shape} != {(cond.shape[0], cfg.n_z)}")
        p = self.params
        slope = cfg.leaky_slope
        h = tn.Tensor(cond)
        skips = []
        for i in range(1, cfg.levels + 1):
            h = tn.replicate_and_concat(h, z)
            h = tn.conv2d(h, p[f"enc{i}.weight"], p[f"enc{i}.bias"], stride=2, padding=1)
            h = self._post(h, f"enc{i}", lambda t: tn.leaky_relu(t, slope))
            skips.append(h)
        d = skips[-1]
        for j in range(cfg.levels, 1, -1):
            d = tn.conv_transpose2d(d, p[f"dec{j}.weight"], p[f"dec{j}.bias"], stride=2, padding=1)
            d = self._post(d, f"dec{j}", tn.relu)
            skip = skips[j - 2]
            if d.shape != skip.shape:
                raise AssertionError(f"skip mismatch at level {j}: {d.shape} vs {skip.shape}")
            d = tn.concat([d, skip], axis=1)
        d = tn.conv_transpose2d(d, p["dec1.weight"], p["dec1.bias"], stride=2, padding=1)
        return tn.sigmoid(d)

    __call__ = forward


class Discriminator(_Net):
    STRIDES = (2, 2, 2, 2, 1)

    def __init__(self, cfg: NetConfig, rng: np.random.Generator):
        self.cfg = cfg
        b = cfg.base_channels
        widths = [b, 2 * b, 4 * b, 8 * b, 1]
        p = OrderedDict()
        c_prev = COND_CHANNELS + 1
        for i, c in enumerate(widths, start=1):
            p[f"conv{i}.weight"], p[f"conv{i}.bias"] = _conv_params(rng, c, c_prev)
            if i < len(widths):
                p[f"conv{i}.gamma"], p[f"conv{i}.beta"] = _norm_params(c)
            c_prev = c
        self.params = p

    def forward(self, cond: np.ndarray, img) -> tn.Tensor:
        """Probability (B,) that ``img`` (B, 1, S, S) is a real completion of ``cond``."""
        img = tn.as_tensor(img)
        if cond.shape[0] != img.shape[0] or cond.shape[2:] != img.shape[2:]:
            raise ValueError(f"cond {cond.shape} and image {img.shape} do not pair up")
        p = self.params
        h = tn.concat([tn.Tensor(cond), img], axis=1)
        last = len(self.STRIDES)
        for i, s in enumerate(self.STRIDES, start=1):
            # final stride-1 layer pads by 2 so that even a 1x1 map yields output
            pad = 1 if i < last else 2
            h = tn.conv2d(h, p[f"conv{i}.weight"], p[f"conv{i}.bias"], stride=s, padding=pad)
            if i < last:
                h = self._post(h, f"conv{i}", lambda t: tn.leaky_relu(t, self.cfg.leaky_slope))
        return tn.sigmoid(h).mean(axis=(1, 2, 3))

    __call__ = forward


def build_generator(cfg: NetConfig, seed: int = 0) -> Generator:
    return Generator(cfg, np.random.default_rng(np.random.PCG64(seed)))


def build_discriminator(cfg: NetConfig, seed: int = 0) -> Discriminator:
    return Discriminator(cfg, np.random.default_rng(np.random.PCG64(seed)))


def generator_forward(g: Generator, cond: ConditionalInput, z) -> SoftImage:
    with tn.no_grad():
        out = g.forward(cond.stacked()[None], np.asarray(z, dtype=np.float64)[None])
    return SoftImage(out.data[0, 0])


def discriminator_forward(d: Discriminator, cond: ConditionalInput, img) -> float:
    """``img`` is a BinaryImage or SoftImage of the same size as ``cond``."""
    if img.shape != cond.shape:
        raise ValueError(f"image {img.shape} and cond {cond.shape} differ in shape")
    with tn.no_grad():
        out = d.forward(cond.stacked()[None], np.asarray(img.data, dtype=np.float64)[None, None])
    return out.item()
