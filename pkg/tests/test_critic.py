import pytest
import torch
import torch.nn as nn

from bokehgan.critic import (
    CriticConfig,
    MultiCritic,
    PatchCritic,
    build_critics,
    critic_loss,
    critic_scores,
    gradient_penalty,
    min_input_size,
    output_size,
    receptive_field,
)
from bokehgan.exceptions import ConfigError, ShapeError


def rf_oracle(layers):
    # walk the layers output-to-input: r <- r*s + (k - s)
    r = 1
    for k, s in reversed(layers):
        r = r * s + (k - s)
    return r


def critic_layers(depth):
    return [(4, 2)] * depth + [(4, 1), (4, 1)]


@pytest.mark.parametrize("depth,rf", [(2, 34), (3, 70), (4, 142)])
def test_receptive_fields(depth, rf):
    assert receptive_field(depth) == rf == rf_oracle(critic_layers(depth))


def test_receptive_field_probe_depth3():
    # empirical RF: which input pixels influence the centre score
    torch.manual_seed(0)
    c = PatchCritic(3, base_channels=4, norm_mode="direct")
    # instance norm couples all pixels of a plane; drop it to see the conv footprint
    for i, m in enumerate(c.model):
        if not isinstance(m, (nn.Conv2d, nn.LeakyReLU)):
            c.model[i] = nn.Identity()
    nn.init.constant_(c.model[0].weight, 0.1)
    x = torch.randn(1, 3, 160, 160, requires_grad=True)
    out = c(x)
    i = out.shape[-1] // 2
    out[0, 0, i, i].backward()
    touched = (x.grad.abs().sum(dim=(0, 1)) > 0).nonzero()
    extent = int(touched[:, 0].max() - touched[:, 0].min() + 1)
    assert extent == 70


def test_receptive_field_increases():
    rfs = [receptive_field(d) for d in range(1, 7)]
    assert rfs == sorted(set(rfs))


def test_score_map_size_128():
    mc = build_critics(CriticConfig(depths=(3,), base_channels=8), 0)
    (scores,) = critic_scores(mc, torch.randn(1, 3, 128, 128))
    assert scores.shape == (1, 1, 14, 14) == (1, 1, output_size(3, 128), output_size(3, 128))
    assert torch.isfinite(scores).all()


def test_channel_schedule_and_cap():
    c = PatchCritic(4, base_channels=64)
    convs = [m for m in c.modules() if isinstance(m, nn.Conv2d)]
    assert [m.out_channels for m in convs] == [64, 128, 256, 512, 512, 1]
    assert [m.stride[0] for m in convs] == [2, 2, 2, 2, 1, 1]
    leaky = [m for m in c.modules() if isinstance(m, nn.LeakyReLU)]
    assert all(m.negative_slope == 0.2 for m in leaky)
    assert not isinstance(c.model[-1], (nn.Sigmoid, nn.Tanh, nn.LeakyReLU))


def test_undersized_input():
    c = PatchCritic(4, base_channels=4)
    with pytest.raises(ShapeError, match=str(min_input_size(4))):
        c(torch.randn(1, 3, 32, 32))
    with pytest.raises(ConfigError, match="minimum input size"):
        build_critics(CriticConfig(input_size=(16, 16)), 0)


def test_config_validation():
    with pytest.raises(ConfigError):
        CriticConfig(depths=())
    with pytest.raises(ConfigError):
        CriticConfig(depths=(0, 2))
    with pytest.raises(ConfigError):
        CriticConfig(gp_lambda=-1)


class ConstCritic(nn.Module):
    def __init__(self, c):
        super().__init__()
        self.c = c

    def forward(self, x):
        return self.c + 0 * x[:, :1, :4, :4]


class LinearCritic(nn.Module):
    def __init__(self, w):
        super().__init__()
        self.w = w

    def forward(self, x):
        return (x * self.w).flatten(1).sum(dim=1).view(-1, 1, 1, 1)


class SignCritic(nn.Module):
    """Scores 1 on an all +1 image and 0 on an all -1 image."""

    def forward(self, x):
        return (x[:, :1] + 1) / 2


def test_constant_stub_scores():
    mc = MultiCritic([ConstCritic(2.5)])
    (s,) = critic_scores(mc, torch.zeros(2, 3, 8, 8))
    assert torch.all(s == 2.5)


def test_gp_linear_critic():
    g = torch.Generator().manual_seed(0)
    for _ in range(5):
        w = torch.randn(3, 6, 6, generator=g, dtype=torch.float64) * 0.3
        mc = MultiCritic([LinearCritic(w)])
        real = torch.randn(4, 3, 6, 6, generator=g, dtype=torch.float64)
        fake = torch.randn(4, 3, 6, 6, generator=g, dtype=torch.float64)
        gp = gradient_penalty(mc, real, fake, torch.Generator().manual_seed(1))
        assert float(gp) == pytest.approx(float((w.norm() - 1) ** 2), abs=1e-4)


def test_gp_zero_for_unit_gradient():
    w = torch.randn(3, 5, 5, dtype=torch.float64)
    mc = MultiCritic([LinearCritic(w / w.norm())])
    gp = gradient_penalty(mc, torch.randn(2, 3, 5, 5, dtype=torch.float64),
                          torch.randn(2, 3, 5, 5, dtype=torch.float64))
    assert abs(float(gp)) < 1e-12


def test_gp_nonnegative_random_critics():
    for seed in range(50):
        mc = build_critics(CriticConfig(depths=(1 + seed % 2,), base_channels=2), seed)
        g = torch.Generator().manual_seed(seed)
        real, fake = torch.randn(2, 3, 24, 24, generator=g), torch.randn(2, 3, 24, 24, generator=g)
        assert float(gradient_penalty(mc, real, fake, g).detach()) >= 0


def test_gp_shape_mismatch():
    mc = MultiCritic([ConstCritic(0.0)])
    with pytest.raises(ShapeError):
        gradient_penalty(mc, torch.zeros(1, 3, 8, 8), torch.zeros(1, 3, 8, 16))


def test_critic_loss_stubs():
    real, fake = torch.ones(2, 3, 8, 8), -torch.ones(2, 3, 8, 8)
    report = critic_loss(MultiCritic([SignCritic()]), real, fake, gp_lambda=0.0)
    assert report.value == pytest.approx(-1.0)
    same = critic_loss(MultiCritic([ConstCritic(0.7)]), real, fake, gp_lambda=0.0)
    assert same.value == 0.0


def test_critic_loss_composition():
    mc = build_critics(CriticConfig(base_channels=4), 3)
    g = torch.Generator().manual_seed(0)
    real, fake = torch.randn(2, 3, 48, 48, generator=g), torch.randn(2, 3, 48, 48, generator=g)
    report = critic_loss(mc, real, fake, torch.Generator().manual_seed(9), gp_lambda=10.0)
    gaps = [f.mean() - r.mean() for r, f in zip(critic_scores(mc, real), critic_scores(mc, fake))]
    gp = gradient_penalty(mc, real, fake, torch.Generator().manual_seed(9))
    expected = sum(gaps) / len(gaps) + 10.0 * gp
    assert report.value == pytest.approx(float(expected.detach()), abs=1e-5)
    assert report.per_term["gp"] == pytest.approx(float(gp.detach()), abs=1e-6)
    assert report.value == pytest.approx(
        report.per_term["wasserstein"] + 10.0 * report.per_term["gp"], abs=1e-6)


@pytest.mark.parametrize("a", [2.0, 3.0, 0.25])
def test_last_layer_scaling_is_linear(a):
    mc = build_critics(CriticConfig(depths=(2,), base_channels=4), 0)
    with torch.no_grad():
        mc.critics[0].model[-1].bias.normal_(0, 0.1)
        x = torch.randn(1, 3, 32, 32)
        (before,) = critic_scores(mc, x)
        last = mc.critics[0].model[-1]
        last.weight.mul_(a)
        last.bias.mul_(a)
        (after,) = critic_scores(mc, x)
    if a in (2.0, 0.25):  # power-of-two scaling is exact in binary floating point
        assert torch.equal(after, a * before)
    else:
        assert torch.allclose(after, a * before, rtol=1e-5, atol=1e-6)


def test_critic_training_reduces_loss():
    torch.manual_seed(0)
    mc = build_critics(CriticConfig(base_channels=4), 0)
    opt = torch.optim.Adam(mc.parameters(), lr=1e-4, betas=(0.0, 0.9))
    g = torch.Generator().manual_seed(1)
    real = torch.rand(2, 3, 48, 48, generator=g) * 2 - 1
    fake = torch.tanh(torch.randn(2, 3, 48, 48, generator=g))  # frozen "generator" output
    losses = []
    for step in range(50):
        report = critic_loss(mc, real, fake, torch.Generator().manual_seed(step))
        opt.zero_grad()
        report.total.backward()
        opt.step()
        losses.append(report.value)
    assert sum(losses[-5:]) / 5 < sum(losses[:5]) / 5
