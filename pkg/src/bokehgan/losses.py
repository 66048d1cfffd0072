"""Training objectives: L1, SSIM, perceptual, adversarial and their weighted mixes."""

from dataclasses import asdict, dataclass
from functools import lru_cache
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .critic import critic_scores
from .exceptions import ShapeError
from .report import LossReport
from .validation import check_same_shape

PARTS = ("l1", "ssim", "vgg", "adv")


@dataclass(frozen=True)
class LossWeights:
    w_l1: float = 0.5
    w_ssim: float = 0.05
    w_vgg: float = 0.1
    w_adv: float = 1.0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")

    def as_map(self, with_adv=True):
        out = {"l1": self.w_l1, "ssim": self.w_ssim, "vgg": self.w_vgg}
        if with_adv:
            out["adv"] = self.w_adv
        return out


def l1_loss(a, b):
    check_same_shape(a, b)
    return (a - b).abs().mean()


@dataclass(frozen=True)
class SSIMParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 2.0


@lru_cache(maxsize=None)
def _gaussian_1d(size, sigma):
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    g = torch.exp(-(coords ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def ssim_map(a, b, params=SSIMParams()):
    """Per-position SSIM over 'valid' Gaussian windows, shape (N, C, H-w+1, W-w+1)."""
    check_same_shape(a, b)
    w = params.window
    if a.shape[-2] < w or a.shape[-1] < w:
        raise ShapeError(f"image {tuple(a.shape[-2:])} smaller than SSIM window {w}")
    c = a.shape[1]
    g = _gaussian_1d(w, params.sigma).to(a.dtype)
    gh = g.view(1, 1, 1, w).repeat(c, 1, 1, 1)
    gv = g.view(1, 1, w, 1).repeat(c, 1, 1, 1)

    def blur(x):
        return F.conv2d(F.conv2d(x, gh, groups=c), gv, groups=c)

    c1 = (params.k1 * params.data_range) ** 2
    c2 = (params.k2 * params.data_range) ** 2
    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, params=SSIMParams()):
    return ssim_map(a, b, params).mean()


def neg_ssim_loss(a, b, params=SSIMParams()):
    # 1 - SSIM: same gradient as -SSIM, but zero at equality.
    return 1.0 - ssim(a, b, params)


_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)

# Index of relu5_4 in torchvision's vgg19().features.
VGG19_RELU5_4 = 35


class FeatureExtractor(nn.Module):
    """Frozen convolutional feature network used by the perceptual loss.

    Build with :meth:`desk` (small, seeded, no downloads), :meth:`vgg19`
    (pretrained weights from a checkpoint-format file, tapped at relu5_4)
    or :meth:`identity` (features are the image itself).
    """

    def __init__(self, layers, tap_point, weights_source, min_size=1, imagenet_input=False):
        super().__init__()
        self.layers = layers
        self.tap_point = tap_point
        self.weights_source = weights_source
        self.min_size = min_size
        self.imagenet_input = imagenet_input
        if imagenet_input:
            self.register_buffer("mean", torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1))
            self.register_buffer("std", torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1))
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def train(self, mode=True):
        # Always frozen.
        return super().train(False)

    @classmethod
    def desk(cls, seed=0, width=16):
        layers = nn.Sequential(
            nn.Conv2d(3, width, 3, padding=1), nn.ReLU(),
            nn.Conv2d(width, 2 * width, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(2 * width, 2 * width, 3, padding=1), nn.ReLU(),
        )
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for m in layers:
                if isinstance(m, nn.Conv2d):
                    fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
                    m.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=gen)
                    m.bias.zero_()
        return cls(layers, "relu3", "seeded_random", min_size=2)

    @classmethod
    def identity(cls):
        return cls(nn.Identity(), "input", "identity")

    @classmethod
    def vgg19(cls, weights_path):
        from torchvision.models import vgg19

        from .checkpoint import read_arrays

        features = vgg19(weights=None).features[: VGG19_RELU5_4 + 1]
        arrays = read_arrays(weights_path)
        state = {k.removeprefix("features."): torch.from_numpy(v) for k, v in arrays.items()
                 if k.removeprefix("features.") in features.state_dict()}
        features.load_state_dict(state, strict=True)
        return cls(features, "relu5_4", "pretrained_file", min_size=16, imagenet_input=True)

    def forward(self, x):
        if min(x.shape[-2:]) < self.min_size:
            raise ShapeError(
                f"input {tuple(x.shape[-2:])} smaller than extractor minimum {self.min_size}"
            )
        if self.imagenet_input:
            x = ((x + 1) / 2 - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        return self.layers(x)


def perceptual_loss(fx, gen, gt):
    check_same_shape(gen, gt, ("gen", "gt"))
    with torch.no_grad():
        target = fx(gt)
    return (fx(gen) - target).abs().mean()


def adversarial_gen_loss(mc, fake):
    maps = critic_scores(mc, fake)
    return -sum(m.mean() for m in maps) / len(maps)


def _require(parts, names):
    missing = [n for n in names if n not in parts]
    if missing:
        raise KeyError(f"missing loss parts: {missing}")


def hybrid_loss(w, parts):
    _require(parts, PARTS)
    return LossReport.weighted(parts, w.as_map(with_adv=True))


def hybrid_loss_no_adv(w, parts):
    _require(parts, PARTS[:3])
    return LossReport.weighted(parts, w.as_map(with_adv=False))


def stage1_loss(gen, gt, w=LossWeights()):
    parts = {"l1": l1_loss(gen, gt), "ssim": neg_ssim_loss(gen, gt)}
    return LossReport.weighted(parts, {"l1": w.w_l1, "ssim": w.w_ssim})
