import numpy as np
import pytest

from porogen import objective as ob
from porogen import tensornet as tn
from porogen.gradcheck import check
from porogen.grid import BinaryImage, Mask, SoftImage, make_conditional_input
from porogen.models import (
    Discriminator,
    NetConfig,
    build_discriminator,
    build_generator,
    discriminator_forward,
    generator_forward,
)
from conftest import he_scaled, random_image

SMALL = NetConfig(image_size=32, base_channels=16, max_channels=128)


def cond_for(rng, size):
    target = random_image(rng, (size, size))
    m = np.zeros((size, size), bool)
    m[: size // 4, : size // 4] = True
    return make_conditional_input(target, Mask(m)), target


def test_levels_and_bottleneck():
    cfg = NetConfig()
    assert cfg.levels == 7
    g = build_generator(NetConfig(image_size=128, base_channels=2, max_channels=8))
    h = tn.Tensor(np.zeros((1, 2, 128, 128)))
    for i in range(1, 8):
        h = tn.conv2d(tn.replicate_and_concat(h, np.zeros((1, 8))), g.params[f"enc{i}.weight"],
                      stride=2, padding=1)
    assert h.shape[2:] == (1, 1)


def test_noise_enters_every_encoder_level():
    cfg = NetConfig(image_size=32, base_channels=4, max_channels=16, n_z=8)
    g = build_generator(cfg)
    c_prev = 2
    for i in range(1, cfg.levels + 1):
        assert g.params[f"enc{i}.weight"].shape[1] == c_prev + cfg.n_z
        c_prev = cfg.channels(i)


def test_generator_output(rng):
    g = build_generator(SMALL, 3)
    cond, _ = cond_for(rng, 32)
    z = rng.standard_normal(8)
    out = generator_forward(g, cond, z)
    assert isinstance(out, SoftImage) and out.shape == (32, 32)
    assert np.all((out.data >= 0) & (out.data <= 1))
    assert generator_forward(g, cond, z) == out
    other = generator_forward(g, cond, rng.standard_normal(8))
    assert np.max(np.abs(other.data - out.data)) > 0


def test_generator_rejects_wrong_size(rng):
    g = build_generator(SMALL)
    cond, _ = cond_for(rng, 16)
    with pytest.raises(ValueError):
        generator_forward(g, cond, np.zeros(8))
    with pytest.raises(ValueError):
        g(np.zeros((1, 2, 32, 32)), np.zeros((1, 4)))


@pytest.mark.parametrize("kw", [{"image_size": 48}, {"image_size": 256}, {"n_z": 0},
                                {"norm_activation_order": "sideways"}, {"depth": 9}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        NetConfig(**kw)


def test_norm_orders_differ(rng):
    cond, _ = cond_for(rng, 16)
    z = rng.standard_normal(8)
    a = generator_forward(build_generator(NetConfig(16, 4, max_channels=16)), cond, z)
    b = generator_forward(build_generator(
        NetConfig(16, 4, max_channels=16, norm_activation_order="norm_then_act")), cond, z)
    assert a.shape == b.shape and not np.array_equal(a.data, b.data)


def test_discriminator_layout():
    d = build_discriminator(SMALL)
    widths = [d.params[f"conv{i}.weight"].shape[0] for i in range(1, 6)]
    assert widths == [16, 32, 64, 128, 1]
    assert d.params["conv1.weight"].shape[1] == 3  # values, mask, candidate
    assert Discriminator.STRIDES == (2, 2, 2, 2, 1)
    assert "conv5.gamma" not in d.params


def test_discriminator_output(rng):
    d = build_discriminator(SMALL, 5)
    cond, target = cond_for(rng, 32)
    p = discriminator_forward(d, cond, target)
    assert 0.2 <= p <= 0.8
    assert discriminator_forward(d, cond, target) == p
    with pytest.raises(ValueError):
        discriminator_forward(d, cond, random_image(rng, (16, 16)))


def test_discriminator_learns_real_from_fake(rng):
    cfg = NetConfig(image_size=16, base_channels=4, max_channels=32)
    d = build_discriminator(cfg, 1)
    cond, target = cond_for(rng, 16)
    fake = BinaryImage(1 - target.data)
    c = cond.stacked()[None]
    real_x = target.data.astype(float)[None, None]
    fake_x = fake.data.astype(float)[None, None]
    opt = tn.Adam(d.parameters(), tn.LRSchedule(2e-3, 100, 101))
    for _ in range(30):
        opt.zero_grad()
        ob.d_loss(d(c, real_x), d(c, fake_x)).backward()
        opt.step()
    assert discriminator_forward(d, cond, target) > 0.9
    assert discriminator_forward(d, cond, fake) < 0.1


def test_state_dict_round_trip(rng):
    g = build_generator(SMALL, 1)
    h = build_generator(SMALL, 2)
    h.load_state_dict(g.state_dict())
    cond, _ = cond_for(rng, 32)
    z = rng.standard_normal(8)
    assert generator_forward(g, cond, z) == generator_forward(h, cond, z)
    bad = {k: v[..., :1] if v.ndim else v for k, v in g.state_dict().items()}
    with pytest.raises(ValueError):
        h.load_state_dict(bad)


def test_seeded_init_is_reproducible():
    a = build_generator(SMALL, 7).state_dict()
    b = build_generator(SMALL, 7).state_dict()
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)


@pytest.mark.parametrize("order", ["act_then_norm", "norm_then_act"])
def test_two_level_generator_loss_gradient(rng, order):
    cfg = NetConfig(image_size=16, base_channels=2, max_channels=4, n_z=2, depth=2,
                    norm_activation_order=order)
    g = he_scaled(build_generator(cfg, 0), rng)
    cond, target = cond_for(rng, 16)
    c = cond.stacked()[None]
    z = rng.standard_normal((1, 2))
    values, mask = ob.cond_arrays(cond)

    def loss():
        out = g(c, z)
        return ob.total_g_loss(ob.g_adv_loss(0.3), ob.masked_l1(out, values, mask),
                               ob.pattern_loss(out, target, 2), ob.porosity_loss(out, 0.5))

    err = check(loss, g.parameters(), max_coords=10, rng=np.random.default_rng(1),
                joint=True, avoid_kinks=True)
    assert err < 1e-4


def test_discriminator_gradient(rng):
    cfg = NetConfig(image_size=16, base_channels=2, max_channels=16)
    d = he_scaled(build_discriminator(cfg, 0), rng)
    c = rng.random((1, 2, 16, 16))
    img = tn.parameter(rng.random((1, 1, 16, 16)))
    err = check(lambda: ob.d_loss(d(c, img), 0.4), d.parameters() + [img], max_coords=10,
                rng=np.random.default_rng(2), joint=True, avoid_kinks=True)
    assert err < 1e-4
