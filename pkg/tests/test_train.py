import csv
import math

import numpy as np
import pytest

from porogen import objective as ob
from porogen.grid import Mask
from porogen.models import NetConfig, build_generator, generator_forward
from porogen.report import porosity_line
from porogen.synthdata import MaskSpec, MediumSpec, make_sample
from porogen.train import (
    LOG_COLUMNS,
    NumericalError,
    TrainConfig,
    load_discriminator,
    load_generator,
    reconstruct,
    train,
)

TINY = NetConfig(image_size=16, base_channels=4, max_channels=16)


@pytest.fixture(scope="module")
def toy():
    fixed = Mask(np.pad(np.ones((4, 4), bool), ((0, 12), (0, 12))))
    pairs = [make_sample(i, MediumSpec("blob", 0.3, 1.5), MaskSpec("corner-square", 4), 16, 3,
                         fixed) for i in range(8)]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def test_zero_epochs_returns_init(toy):
    res = train(*toy, TINY, TrainConfig(epochs=0, seed=4))
    ref = build_generator(TINY, int(np.random.SeedSequence(4).generate_state(3, np.uint64)[0]))
    assert res.steps == 0 and res.log == []
    for k, v in ref.state_dict().items():
        assert res.generator.state_dict()[k].tobytes() == v.tobytes()


def test_losses_finite_and_bounded(toy):
    res = train(*toy, TINY, TrainConfig(epochs=50, seed=1))
    assert res.steps == 200
    for row in res.log:
        assert all(math.isfinite(row[k]) for k in LOG_COLUMNS)
        assert 0 < row["d_loss"] < 4
        parts = ob.total_g_loss(row["g_adv"], row["l1"], row["pattern"], row["porosity"])
        assert row["total"] == pytest.approx(parts, rel=1e-9)
    assert res.log[0]["lr"] == 2e-4
    assert res.log[-1]["lr"] < 1e-5


def test_training_is_deterministic(toy, tmp_path):
    cfg = TrainConfig(epochs=2, seed=7)
    train(*toy, TINY, cfg, out_dir=tmp_path / "a")
    train(*toy, TINY, cfg, out_dir=tmp_path / "b")
    for name in ("loss_log.csv", "checkpoint.pgn"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = list(csv.reader(open(tmp_path / "a" / "loss_log.csv")))
    assert tuple(rows[0]) == LOG_COLUMNS
    steps = [int(r[0]) for r in rows[1:]]
    assert steps == list(range(len(steps)))


def test_checkpoint_cadence_and_reload(toy, tmp_path):
    res = train(*toy, TINY, TrainConfig(epochs=2, seed=2, checkpoint_every=1), out_dir=tmp_path)
    assert (tmp_path / "checkpoint_e001.pgn").exists()
    assert (tmp_path / "checkpoint_e002.pgn").exists()
    g = load_generator(tmp_path / "checkpoint.pgn")
    z = np.ones(8)
    assert generator_forward(g, toy[0][0], z) == generator_forward(res.generator, toy[0][0], z)
    d = load_discriminator(tmp_path / "checkpoint.pgn")
    assert d.state_dict().keys() == res.discriminator.state_dict().keys()


def test_training_reduces_generator_loss(toy):
    res = train(*toy, TINY, TrainConfig(epochs=30, seed=0))
    first = np.mean([r["pattern"] for r in res.log[:8]])
    last = np.mean([r["pattern"] for r in res.log[-8:]])
    assert last < first


def test_train_rejects_bad_input(toy):
    conds, targets = toy
    with pytest.raises(ValueError):
        train(conds, targets[:-1], TINY, TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        train(conds, targets, NetConfig(image_size=32, base_channels=4), TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        TrainConfig(template=5)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_non_finite_loss_aborts(toy):
    g = build_generator(TINY, 0)
    g.params["dec1.bias"].data[:] = np.nan
    with pytest.raises(NumericalError):
        train(*toy, TINY, TrainConfig(epochs=1), generator=g)


def test_config_round_trip():
    cfg = TrainConfig(epochs=3, weights=ob.LossWeights(1, 2, 3), non_saturating=True)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_reconstruct(toy):
    g = build_generator(TINY, 1)
    cond = toy[0][0]
    a = reconstruct(g, cond, 1, seed=5)
    b = reconstruct(g, cond, 1, seed=5)
    assert a.images[0] == b.images[0]
    rec = reconstruct(g, cond, 20, seed=6)
    m = cond.mask.data
    for img in rec.images:
        np.testing.assert_array_equal(img.data[m], cond.values.data[m])
    assert len(rec.fidelity_pre) == len(rec.seconds) == 20
    assert all(0 <= f <= 1 for f in rec.fidelity_pre)
    line = porosity_line([img.data.mean() for img in rec.images])
    assert " ± " in line and len(line.split(" ± ")[0]) == 5


def test_reconstruct_errors(toy):
    g = build_generator(TINY, 1)
    with pytest.raises(ValueError):
        reconstruct(g, toy[0][0], 0, seed=1)
    other = make_sample(0, MediumSpec(), MaskSpec("corner-square", 4), 32, 0)[0]
    with pytest.raises(ValueError):
        reconstruct(g, other, 1, seed=1)
