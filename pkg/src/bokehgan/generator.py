"""Two-stage encoder/decoder generator.

Stage 1 maps a sharp image ``I`` to the residual ``R = I - O`` between it and
the bokeh target ``O``.  ``I - R`` is the rough bokeh estimate, which stage 2
refines into the final image.  Both stages share one U-shaped layout: a
stride-1 stem, ``n_scales`` stride-2 convolutions, a stack of residual
blocks, ``n_scales`` stride-2 transposed convolutions with concatenated
encoder skips, and a stride-1 output convolution with tanh.
"""

from dataclasses import asdict, dataclass
import math
from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .exceptions import ConfigError
from .innorm import InstanceNorm2d
from .validation import check_image_tensor

NORM_MODES = ("direct", "avgpool", "none", "batch")


@dataclass(frozen=True)
class GeneratorConfig:
    stage1_base_channels: int = 16
    stage1_max_channels: int = 128
    stage2_base_channels: int = 32
    stage2_max_channels: int = 256
    n_resblocks: int = 9
    n_scales: int = 3
    norm_mode: str = "avgpool"
    # None: fan-in scaled uniform init; a float: zero-mean Gaussian with that std.
    init_std: float = None

    def __post_init__(self):
        if self.n_scales < 1:
            raise ConfigError(f"n_scales must be >= 1, got {self.n_scales}")
        if self.n_resblocks < 1:
            raise ConfigError(f"n_resblocks must be >= 1, got {self.n_resblocks}")
        if self.norm_mode not in NORM_MODES:
            raise ConfigError(f"norm_mode must be one of {NORM_MODES}, got {self.norm_mode!r}")
        for stage in (1, 2):
            base = getattr(self, f"stage{stage}_base_channels")
            top = getattr(self, f"stage{stage}_max_channels")
            if base < 1 or top < base:
                raise ConfigError(f"stage {stage}: need 1 <= base ({base}) <= max ({top})")
            if top != base * 2 ** self.n_scales:
                raise ConfigError(
                    f"stage {stage}: max channels {top} != base {base} * 2**{self.n_scales} "
                    "under the doubling schedule"
                )

    @property
    def multiple(self):
        return 2 ** self.n_scales

    def widths(self, stage):
        base = getattr(self, f"stage{stage}_base_channels")
        top = getattr(self, f"stage{stage}_max_channels")
        return [min(base * 2 ** k, top) for k in range(self.n_scales + 1)]

    def to_dict(self):
        return asdict(self)


def _make_norm(mode, channels):
    if mode in ("direct", "avgpool"):
        return InstanceNorm2d(mode=mode)
    if mode == "batch":
        return nn.BatchNorm2d(channels, affine=False)
    return nn.Identity()


class ResidualBlock(nn.Module):
    """conv / ReLU / norm / conv / ReLU with an identity skip."""

    def __init__(self, channels, norm_mode):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.ReLU(),
            _make_norm(norm_mode, channels),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.ReLU(),
        )

    def forward(self, x):
        return x + self.body(x)


class EncoderDecoder(nn.Module):
    def __init__(self, widths, n_resblocks, norm_mode, in_channels=3, out_channels=3):
        super().__init__()
        self.widths = list(widths)
        self.stem = nn.Sequential(nn.Conv2d(in_channels, widths[0], 3, padding=1), nn.ReLU())
        self.down = nn.ModuleList(
            nn.Sequential(nn.Conv2d(cin, cout, 3, stride=2, padding=1), nn.ReLU())
            for cin, cout in zip(widths[:-1], widths[1:])
        )
        self.res = nn.Sequential(*(ResidualBlock(widths[-1], norm_mode) for _ in range(n_resblocks)))
        # Decoder level k upsamples to the resolution of encoder output k and
        # receives that output by concatenation.
        up = []
        for k in reversed(range(len(widths) - 1)):
            cin = widths[-1] if k == len(widths) - 2 else 2 * widths[k + 1]
            up.append(nn.Sequential(nn.ConvTranspose2d(cin, widths[k], 4, stride=2, padding=1), nn.ReLU()))
        self.up = nn.ModuleList(up)
        self.head = nn.Conv2d(2 * widths[0], out_channels, 3, padding=1)

    def forward(self, x):
        skips = [self.stem(x)]
        for block in self.down:
            skips.append(block(skips[-1]))
        h = self.res(skips.pop())
        for block in self.up:
            h = torch.cat([block(h), skips.pop()], dim=1)
        return torch.tanh(self.head(h))


class GeneratorOutput(NamedTuple):
    final: torch.Tensor
    residual: torch.Tensor
    rough: torch.Tensor


class TwoStageGenerator(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.config = config
        self.stage1 = EncoderDecoder(config.widths(1), config.n_resblocks, config.norm_mode)
        self.stage2 = EncoderDecoder(config.widths(2), config.n_resblocks, config.norm_mode)

    def _check(self, x):
        return check_image_tensor(x, divisible_by=self.config.multiple)

    def stage1_forward(self, image):
        return self.stage1(self._check(image))

    def stage2_forward(self, rough):
        return self.stage2(self._check(rough))

    def forward(self, image):
        residual = self.stage1_forward(image)
        rough = torch.clamp(image - residual, -1.0, 1.0)
        return GeneratorOutput(self.stage2_forward(rough), residual, rough)

    def render(self, image):
        """Final output only."""
        return self.forward(image).final


def init_weights(module, std, generator):
    """Seeded init of every conv; biases start at zero."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            with torch.no_grad():
                if std is None:
                    fan_in, _ = nn.init._calculate_fan_in_and_fan_out(m.weight)
                    bound = 1.0 / math.sqrt(fan_in)
                    m.weight.uniform_(-bound, bound, generator=generator)
                else:
                    m.weight.normal_(0.0, std, generator=generator)
                if m.bias is not None:
                    m.bias.zero_()


def build_generator(cfg=None, seed=0):
    cfg = cfg or GeneratorConfig()
    gen = TwoStageGenerator(cfg)
    init_weights(gen, cfg.init_std, torch.Generator().manual_seed(seed))
    return gen


def count_parameters(module):
    return sum(p.numel() for p in module.parameters())


class CropSpec(NamedTuple):
    height: int
    width: int

    def crop(self, x):
        return x[..., : self.height, : self.width]


def pad_reflect_to_multiple(image, m):
    """Pad bottom/right by reflection so H and W become multiples of ``m``."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    check_image_tensor(image, name="image")
    h, w = image.shape[-2:]
    ph, pw = -h % m, -w % m
    spec = CropSpec(h, w)
    if ph == 0 and pw == 0:
        return image, spec
    # Reflection needs pad < size; tiny images fall back to edge replication.
    mode = "reflect" if ph < h and pw < w else "replicate"
    return F.pad(image, (0, pw, 0, ph), mode=mode), spec

