"""Alternating discriminator / generator optimization and inference."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from porogen import objective as ob
from porogen import tensornet as tn
from porogen.grid import (
    BinaryImage,
    ConditionalInput,
    SoftImage,
    binarize,
    enforce_hard_data,
    hard_data_fidelity,
    porosity,
)
from porogen.models import (
    Discriminator,
    Generator,
    NetConfig,
    build_discriminator,
    build_generator,
)
from porogen.synthdata import make_rng

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "d_loss", "g_adv", "l1", "pattern", "porosity", "total", "lr")
DECOMPOSITION_RTOL = 1e-9


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 2
    weights: ob.LossWeights = field(default_factory=ob.LossWeights)
    template: int = 3
    seed: int = 0
    checkpoint_every: int = 0  # epochs; 0 writes only the final checkpoint
    base_lr: float = 2e-4
    # fraction of all steps at base_lr before the linear decay starts
    decay_start: float = 0.5
    non_saturating: bool = False
    l1_reduction: str = "mean"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.template < 1 or self.template ** 2 > ob.MAX_SOFT_TEMPLATE_BITS:
            raise ValueError("template size N must satisfy 1 <= N*N <= 16")
        if not 0.0 <= self.decay_start < 1.0:
            raise ValueError("decay_start must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        d = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if isinstance(d.get("weights"), dict):
            d["weights"] = ob.LossWeights(**d["weights"])
        return cls(**d)


@dataclass
class TrainResult:
    generator: Generator
    discriminator: Discriminator
    log: list[dict]
    steps: int


def _stack_conds(conds) -> np.ndarray:
    return np.stack([c.stacked() for c in conds])


def _set_trainable(params, flag: bool) -> None:
    for p in params:
        p.requires_grad = flag


def _finite_or_raise(step: int, values: dict) -> None:
    bad = {k: v for k, v in values.items() if not math.isfinite(v)}
    if bad:
        raise NumericalError(f"non-finite loss at step {step}: {bad}")


def train(conds, targets, netcfg: NetConfig, cfg: TrainConfig,
          out_dir=None, generator: Generator | None = None,
          discriminator: Discriminator | None = None) -> TrainResult:
    """Optimize D on the CGAN loss and G on the weighted four-term loss, alternately.

    With ``out_dir`` the loss log is appended to ``out_dir/loss_log.csv`` and
    checkpoints are written as ``out_dir/checkpoint.pgn``.
    """
    conds, targets = list(conds), list(targets)
    if not conds or len(conds) != len(targets):
        raise ValueError("need a nonempty dataset with one target per input")
    size = netcfg.image_size
    for c, t in zip(conds, targets):
        if c.shape != (size, size) or t.shape != (size, size):
            raise ValueError(f"sample shape {c.shape}/{t.shape} != configured {size}x{size}")

    seeds = np.random.SeedSequence(cfg.seed).generate_state(3, dtype=np.uint64)
    g = generator or build_generator(netcfg, int(seeds[0]))
    d = discriminator or build_discriminator(netcfg, int(seeds[1]))
    rng = make_rng(int(seeds[2]))

    n = len(conds)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    schedule = tn.LRSchedule(cfg.base_lr, int(cfg.decay_start * total_steps),
                             max(total_steps, 1))
    opt_g = tn.Adam(g.parameters(), schedule)
    opt_d = tn.Adam(d.parameters(), schedule)

    cond_all = _stack_conds(conds)
    target_all = np.stack([t.data for t in targets]).astype(np.float64)[:, None]
    pattern_all = ob.target_pattern_vectors(targets, cfg.template)
    phi_all = np.array([porosity(t) for t in targets])
    values_all, mask_all = ob.cond_arrays(conds)

    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = writer = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "loss_log.csv", "w", newline="")
        writer = csv.writer(log_fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)

    log: list[dict] = []
    step = 0
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                row = _train_step(g, d, opt_g, opt_d, cfg, rng, step,
                                  cond_all[idx], target_all[idx], pattern_all[idx],
                                  phi_all[idx], values_all[idx], mask_all[idx])
                log.append(row)
                if writer is not None:
                    writer.writerow([row[k] if k == "step" else repr(row[k]) for k in LOG_COLUMNS])
                step += 1
            logger.info("epoch %d/%d: %s", epoch + 1, cfg.epochs, log[-1])
            if out_dir is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                save_training_checkpoint(out_dir / f"checkpoint_e{epoch + 1:03d}.pgn",
                                         g, d, netcfg, cfg, step)
    finally:
        if log_fh is not None:
            log_fh.close()
    if out_dir is not None:
        save_training_checkpoint(out_dir / "checkpoint.pgn", g, d, netcfg, cfg, step)
    return TrainResult(g, d, log, step)


def _train_step(g, d, opt_g, opt_d, cfg: TrainConfig, rng, step,
                cond, target, pattern_t, phi_t, values, mask) -> dict:
    b = cond.shape[0]
    z = rng.standard_normal((b, g.cfg.n_z))
    lr = opt_g.lr

    fake = g(cond, z)

    # discriminator step, generator output treated as a constant
    opt_d.zero_grad()
    loss_d = ob.d_loss(d(cond, target), d(cond, fake.detach()))
    loss_d.backward()
    opt_d.step()

    # generator step against the updated, frozen discriminator
    opt_g.zero_grad()
    _set_trainable(d.parameters(), False)
    try:
        g_adv = ob.g_adv_loss(d(cond, fake), cfg.non_saturating)
    finally:
        _set_trainable(d.parameters(), True)
    l1 = ob.masked_l1(fake, values, mask, cfg.l1_reduction)
    pat = ob.pattern_loss(fake, pattern_t, cfg.template)
    por = ob.porosity_loss(fake, phi_t)
    total = ob.total_g_loss(g_adv, l1, pat, por, cfg.weights)
    total.backward()
    opt_g.step()

    parts = {"g_adv": g_adv.item(), "l1": l1.item(), "pattern": pat.item(),
             "porosity": por.item()}
    row = {"step": step, "d_loss": loss_d.item(), **parts, "total": total.item(), "lr": lr}
    _finite_or_raise(step, row)
    recomposed = ob.total_g_loss(**parts, weights=cfg.weights)
    if abs(recomposed - row["total"]) > DECOMPOSITION_RTOL * max(1.0, abs(row["total"])):
        raise NumericalError(f"step {step}: total loss {row['total']} != sum of parts {recomposed}")
    return row


# ---------------------------------------------------------------------------
# checkpoints and inference


def save_training_checkpoint(path, g: Generator, d: Discriminator | None,
                             netcfg: NetConfig, cfg: TrainConfig | None, step: int) -> None:
    tensors = g.state_dict("G.")
    if d is not None:
        tensors.update(d.state_dict("D."))
    meta = {"netcfg": asdict(netcfg), "step": step,
            "traincfg": cfg.to_dict() if cfg is not None else None}
    tn.save_checkpoint(path, tensors, meta)


def load_generator(path) -> Generator:
    tensors, meta = tn.load_checkpoint(path)
    g = build_generator(NetConfig.from_dict(meta["netcfg"]))
    g.load_state_dict(tensors, "G.")
    return g


def load_discriminator(path) -> Discriminator:
    tensors, meta = tn.load_checkpoint(path)
    d = build_discriminator(NetConfig.from_dict(meta["netcfg"]))
    d.load_state_dict(tensors, "D.")
    return d


@dataclass
class Reconstruction:
    images: list[BinaryImage]
    soft: list[SoftImage]
    fidelity_pre: list[float]  # hard-data agreement before the overwrite
    seconds: list[float]


def reconstruct(generator, cond: ConditionalInput, k: int, seed: int,
                threshold: float = 0.5) -> Reconstruction:
    """Draw ``k`` realizations; binarize, then overwrite informed pixels with hard data."""
    g = load_generator(generator) if not isinstance(generator, Generator) else generator
    size = g.cfg.image_size
    if cond.shape != (size, size):
        raise ValueError(f"conditional input {cond.shape} does not match model size {size}")
    if k < 1:
        raise ValueError("k must be at least 1")
    zs = make_rng(seed).standard_normal((k, g.cfg.n_z))
    stacked = cond.stacked()[None]
    result = Reconstruction([], [], [], [])
    for z in zs:
        t0 = time.perf_counter()
        with tn.no_grad():
            out = g(stacked, z[None]).data[0, 0]
        soft = SoftImage(out)
        raw = binarize(soft, threshold)
        img = enforce_hard_data(raw, cond)
        result.seconds.append(time.perf_counter() - t0)
        result.soft.append(soft)
        result.images.append(img)
        result.fidelity_pre.append(hard_data_fidelity(raw, cond))
    return result
