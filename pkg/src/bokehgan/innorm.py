"""Instance normalization, two ways.

``direct`` computes per-(sample, channel) moments with axis reductions.
``avgpool`` gets the same moments from a full-extent spatial average pool
plus elementwise arithmetic only, so it can run on runtimes whose GPU
delegates reject reductions with an ``axis`` argument.  ``audit_ops`` checks
that restriction on the aten ops that actually execute.
"""

from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.utils._python_dispatch import TorchDispatchMode

from .exceptions import ConfigError, ShapeError

MODES = ("direct", "avgpool")


@dataclass(frozen=True)
class InConfig:
    epsilon: float = 1e-5
    mode: str = "avgpool"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")


class ChannelStats(NamedTuple):
    mean: torch.Tensor  # (N, C)
    variance: torch.Tensor  # (N, C), population variance


def _check_input(x):
    if x.dim() != 4:
        raise ShapeError(f"expected (N, C, H, W) tensor, got shape {tuple(x.shape)}")
    if x.shape[-1] * x.shape[-2] < 1:
        raise ShapeError(f"empty spatial extent in tensor of shape {tuple(x.shape)}")


def channel_stats_direct(x):
    _check_input(x)
    mean = x.mean(dim=(2, 3))
    mean = mean + (x - mean[:, :, None, None]).mean(dim=(2, 3))
    variance = ((x - mean[:, :, None, None]) ** 2).mean(dim=(2, 3))
    return ChannelStats(mean, variance)


def _spatial_mean(x):
    # Full-extent average as a column pass then a row pass; shorter float32
    # accumulations than a single (H, W) window.
    x = F.avg_pool2d(x, kernel_size=(x.shape[-2], 1))
    return F.avg_pool2d(x, kernel_size=(1, x.shape[-1]))


def _pooled_moments(x):
    mean = _spatial_mean(x)
    # One correction pass removes most of the rounding error of the first mean
    # when the channel offset is large relative to its spread.
    mean = mean + _spatial_mean(x - mean)
    centered = x - mean
    variance = _spatial_mean(centered * centered)
    return mean, centered, variance


def channel_stats_avgpool(x):
    _check_input(x)
    mean, _, variance = _pooled_moments(x)
    n, c = x.shape[:2]
    return ChannelStats(mean.view(n, c), variance.view(n, c))


def _normalize_direct(x, epsilon):
    mean, var = channel_stats_direct(x)
    return (x - mean[:, :, None, None]) / torch.sqrt(var[:, :, None, None] + epsilon)


def _normalize_avgpool(x, epsilon):
    _, centered, variance = _pooled_moments(x)
    return centered / torch.sqrt(variance + epsilon)


def instance_norm(x, cfg=None):
    """Normalize each (sample, channel) plane to zero mean and unit variance."""
    cfg = cfg or InConfig()
    _check_input(x)
    if cfg.mode == "direct":
        return _normalize_direct(x, cfg.epsilon)
    return _normalize_avgpool(x, cfg.epsilon)


class InstanceNorm2d(nn.Module):
    """Parameter-free instance norm layer.

    In ``avgpool`` mode the pooling window must equal the feature map size.
    Pass ``spatial_size`` to pin it at build time; inputs of another size are
    then rejected instead of silently changing the window.
    """

    def __init__(self, epsilon=1e-5, mode="avgpool", spatial_size=None):
        super().__init__()
        self.cfg = InConfig(epsilon, mode)
        self.spatial_size = None if spatial_size is None else tuple(spatial_size)

    def forward(self, x):
        if self.spatial_size is not None and tuple(x.shape[-2:]) != self.spatial_size:
            raise ShapeError(
                f"layer built for spatial size {self.spatial_size}, got {tuple(x.shape[-2:])}"
            )
        return instance_norm(x, self.cfg)

    def extra_repr(self):
        return f"epsilon={self.cfg.epsilon}, mode={self.cfg.mode}"


# Op categories allowed in the restricted path.  Keys are aten overload packet names.
ALLOWED_OPS = {
    "avg_pool2d": "pooling",
    "add": "elementwise",
    "sub": "elementwise",
    "rsub": "elementwise",
    "mul": "elementwise",
    "div": "elementwise",
    "pow": "elementwise",
    "sqrt": "elementwise",
    "rsqrt": "elementwise",
    "neg": "elementwise",
    "reciprocal": "elementwise",
    "expand": "broadcast",
    "view": "broadcast",
    "_unsafe_view": "broadcast",
    "reshape": "broadcast",
    "squeeze": "broadcast",
    "unsqueeze": "broadcast",
    "alias": "broadcast",
    "detach": "broadcast",
    "lift_fresh": "broadcast",
}

REDUCTION_OPS = frozenset({
    "mean", "sum", "nansum", "var", "var_mean", "std", "std_mean", "amax", "amin",
    "max", "min", "prod", "norm", "linalg_vector_norm", "logsumexp", "cumsum",
    "native_batch_norm", "_native_batch_norm_legit", "_native_batch_norm_legit_no_training",
    "instance_norm", "native_group_norm", "native_layer_norm", "adaptive_avg_pool2d",
    "_adaptive_avg_pool2d", "argmax", "argmin", "aminmax", "any", "all",
})


class _OpRecorder(TorchDispatchMode):
    def __init__(self):
        super().__init__()
        self.ops = []

    def __torch_dispatch__(self, func, types, args=(), kwargs=None):
        self.ops.append(func.overloadpacket.__name__)
        return func(*args, **(kwargs or {}))


@dataclass
class OpAudit:
    ops: list
    reductions: list
    unknown: list

    @property
    def ok(self):
        return not self.reductions and not self.unknown

    def categories(self):
        return sorted({ALLOWED_OPS[o] for o in self.ops if o in ALLOWED_OPS})


def audit_ops(fn, *args, **kwargs):
    """Run ``fn`` and classify every aten op it dispatches."""
    rec = _OpRecorder()
    with torch.no_grad(), rec:
        fn(*args, **kwargs)
    reductions = [o for o in rec.ops if o in REDUCTION_OPS]
    unknown = [o for o in rec.ops if o not in ALLOWED_OPS and o not in REDUCTION_OPS]
    return OpAudit(rec.ops, reductions, unknown)


def assert_restricted(fn, *args, **kwargs):
    audit = audit_ops(fn, *args, **kwargs)
    if not audit.ok:
        raise AssertionError(
            f"restricted path used forbidden ops: reductions={audit.reductions}, "
            f"unlisted={audit.unknown}"
        )
    return audit
