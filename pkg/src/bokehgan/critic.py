"""Multi-receptive-field PatchGAN critic for WGAN-GP training.

Each critic is a PatchGAN of a different depth, so each score in its output
map judges a patch of a different size.  Scores are raw (no sigmoid).
"""

from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn

from .exceptions import ConfigError, ShapeError
from .innorm import InstanceNorm2d
from .report import LossReport
from .validation import check_same_shape

KERNEL = 4
MAX_CHANNELS = 512


@dataclass(frozen=True)
class CriticConfig:
    depths: tuple = (2, 3, 4)
    base_channels: int = 64
    gp_lambda: float = 10.0
    norm_mode: str = "direct"
    init_std: float = 0.02
    input_size: tuple = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(self.depths))
        if not self.depths or any(d < 1 for d in self.depths):
            raise ConfigError(f"depths must be a non-empty list of ints >= 1, got {self.depths}")
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}")
        if not self.gp_lambda >= 0:
            raise ConfigError(f"gp_lambda must be >= 0, got {self.gp_lambda}")

    def to_dict(self):
        d = asdict(self)
        d["depths"] = list(self.depths)
        return d


def _layer_specs(depth):
    """(kernel, stride) for every conv of a depth-``depth`` critic, input to output."""
    return [(KERNEL, 2)] * depth + [(KERNEL, 1), (KERNEL, 1)]


def receptive_field(depth):
    r = 1
    for k, s in reversed(_layer_specs(depth)):
        r = r * s + (k - s)
    return r


def output_size(depth, n):
    for k, s in _layer_specs(depth):
        n = (n + 2 - k) // s + 1
    return n


def min_input_size(depth):
    n = 1
    while output_size(depth, n) < 1:
        n += 1
    return n


class PatchCritic(nn.Module):
    def __init__(self, depth, base_channels=64, norm_mode="direct", in_channels=3):
        super().__init__()
        self.depth = depth
        layers = []
        cin = in_channels
        for k in range(depth + 1):
            cout = min(base_channels * 2 ** k, MAX_CHANNELS)
            stride = 2 if k < depth else 1
            layers.append(nn.Conv2d(cin, cout, KERNEL, stride=stride, padding=1))
            if k > 0:
                layers.append(InstanceNorm2d(mode=norm_mode))
            layers.append(nn.LeakyReLU(0.2))
            cin = cout
        layers.append(nn.Conv2d(cin, 1, KERNEL, stride=1, padding=1))
        self.model = nn.Sequential(*layers)

    @property
    def receptive_field(self):
        return receptive_field(self.depth)

    @property
    def min_input_size(self):
        return min_input_size(self.depth)

    def forward(self, x):
        need = self.min_input_size
        if min(x.shape[-2:]) < need:
            raise ShapeError(
                f"depth-{self.depth} critic needs inputs of at least {need}x{need}, "
                f"got {tuple(x.shape[-2:])}"
            )
        return self.model(x)


class MultiCritic(nn.Module):
    """A list of critics sharing one score contract: image in, score map out."""

    def __init__(self, critics, config=None):
        super().__init__()
        self.critics = nn.ModuleList(critics)
        self.config = config

    def forward(self, x):
        return [c(x) for c in self.critics]


def build_critics(cfg=None, seed=0):
    cfg = cfg or CriticConfig()
    if cfg.input_size is not None:
        need = max(min_input_size(d) for d in cfg.depths)
        if min(cfg.input_size) < need:
            raise ConfigError(
                f"depths {cfg.depths} collapse inputs of size {tuple(cfg.input_size)}; "
                f"minimum input size is {need}x{need}"
            )
    mc = MultiCritic([PatchCritic(d, cfg.base_channels, cfg.norm_mode) for d in cfg.depths], cfg)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in mc.modules():
            if isinstance(m, nn.Conv2d):
                m.weight.normal_(0.0, cfg.init_std, generator=gen)
                m.bias.zero_()
    return mc


def critic_scores(mc, img):
    return [c(img) for c in mc.critics]


def gradient_penalty(mc, real, fake, rng=None):
    """Unscaled WGAN-GP penalty averaged over critics and samples.

    Each critic's scalar value for a sample is the mean of its score map, the
    same reduction the Wasserstein term uses.  ``rng`` is a ``torch.Generator``
    for the per-sample interpolation weights.
    """
    check_same_shape(real, fake, ("real", "fake"))
    n = real.shape[0]
    u = torch.rand(n, 1, 1, 1, generator=rng, dtype=real.dtype)
    x_hat = (u * real.detach() + (1 - u) * fake.detach()).requires_grad_(True)
    penalties = []
    for critic in mc.critics:
        score = critic(x_hat).flatten(1).mean(dim=1).sum()
        (grad,) = torch.autograd.grad(score, x_hat, create_graph=True)
        norms = grad.flatten(1).norm(2, dim=1)
        penalties.append(((norms - 1) ** 2).mean())
    return torch.stack(penalties).mean()


def critic_loss(mc, real, fake, rng=None, gp_lambda=None):
    """Wasserstein critic objective plus the weighted gradient penalty."""
    check_same_shape(real, fake, ("real", "fake"))
    if gp_lambda is None:
        gp_lambda = mc.config.gp_lambda if mc.config is not None else 10.0
    fake = fake.detach()
    gaps = [f.mean() - r.mean() for r, f in zip(critic_scores(mc, real), critic_scores(mc, fake))]
    wasserstein = torch.stack(gaps).mean()
    gp = gradient_penalty(mc, real, fake, rng)
    return LossReport.weighted({"wasserstein": wasserstein, "gp": gp},
                               {"wasserstein": 1.0, "gp": gp_lambda})
