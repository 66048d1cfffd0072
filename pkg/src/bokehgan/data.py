"""Paired sharp/bokeh image data.

Directory layout::

    <root>/<split>/source/<id>.png|jpg    narrow-aperture (all in focus)
    <root>/<split>/target/<id>.png|jpg    wide-aperture (bokeh)

Pairs are matched by file stem.  A cleaning list (UTF-8, one id per line,
``#`` starts a comment) names ids to drop.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
import logging
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter
import torch

from .exceptions import ConfigError, ShapeError
from .validation import check_uint8_image

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class PairedSample:
    source: np.ndarray  # (H, W, 3) uint8
    target: np.ndarray
    id: str
    mask: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        check_uint8_image(self.source, f"{self.id}.source")
        check_uint8_image(self.target, f"{self.id}.target")
        if self.source.shape != self.target.shape:
            raise ShapeError(
                f"{self.id}: source {self.source.shape} and target {self.target.shape} differ"
            )


@dataclass(frozen=True)
class DatasetSpec:
    root: Path
    split: str = "train"
    cleaning_list: frozenset = None
    crop: tuple = (192, 128)

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.crop is not None:
            h, w = self.crop
            if h < 8 or w < 8 or h % 8 or w % 8:
                raise ConfigError(f"crop {self.crop} must be positive multiples of 8")
        if self.cleaning_list is not None:
            object.__setattr__(self, "cleaning_list", frozenset(self.cleaning_list))


@dataclass
class LoadReport:
    n_files: int = 0
    loaded: list = field(default_factory=list)
    cleaned: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # (id, reason)
    unknown_cleaning_ids: list = field(default_factory=list)


class PairedDataset(Sequence):
    """Immutable id-sorted list of samples plus the report of how it was loaded."""

    def __init__(self, samples, report=None):
        self.samples = tuple(sorted(samples, key=lambda s: s.id))
        self.report = report

    def __getitem__(self, i):
        return self.samples[i]

    def __len__(self):
        return len(self.samples)

    @property
    def ids(self):
        return [s.id for s in self.samples]


def read_cleaning_list(path):
    ids = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            ids.add(line)
    return frozenset(ids)


def read_image(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_image(path, img):
    Image.fromarray(check_uint8_image(img)).save(path)


def _index(folder):
    out = {}
    if folder.is_dir():
        for p in sorted(folder.iterdir()):
            if p.suffix.lower() in IMAGE_SUFFIXES:
                out.setdefault(p.stem, p)
    return out


def load_pairs(spec):
    """Load the pairs under ``spec``; problems are recorded on ``dataset.report``."""
    base = spec.root / spec.split
    sources, targets = _index(base / "source"), _index(base / "target")
    report = LoadReport(n_files=len(sources.keys() | targets.keys()))
    cleaning = spec.cleaning_list or frozenset()
    report.unknown_cleaning_ids = sorted(cleaning - (sources.keys() | targets.keys()))
    samples = []
    for sid in sorted(sources.keys() | targets.keys()):
        if sid in cleaning:
            report.cleaned.append(sid)
            continue
        if sid not in sources or sid not in targets:
            side = "source" if sid not in sources else "target"
            report.skipped.append((sid, f"missing {side} file"))
            continue
        try:
            src, tgt = read_image(sources[sid]), read_image(targets[sid])
        except (OSError, ValueError) as exc:
            report.skipped.append((sid, f"unreadable: {exc}"))
            continue
        if src.shape != tgt.shape:
            report.skipped.append((sid, f"size mismatch {src.shape} vs {tgt.shape}"))
            continue
        samples.append(PairedSample(src, tgt, sid))
        report.loaded.append(sid)
    for sid, reason in report.skipped:
        log.warning("skipping pair %s: %s", sid, reason)
    if not samples:
        raise ValueError(f"no usable pairs under {base}")
    return PairedDataset(samples, report)


def random_crop_pair(p, h, w, rng):
    """Crop the same window from source and target.  ``rng`` is a numpy Generator."""
    H, W = p.source.shape[:2]
    if h > H or w > W:
        raise ShapeError(f"crop {h}x{w} larger than image {H}x{W}")
    top = int(rng.integers(0, H - h + 1))
    left = int(rng.integers(0, W - w + 1))
    window = np.s_[top:top + h, left:left + w]
    mask = None if p.mask is None else p.mask[window]
    return PairedSample(p.source[window].copy(), p.target[window].copy(), p.id, mask)


def to_model_range(img):
    """uint8 (H, W, 3) or (N, H, W, 3) -> float32 (N, 3, H, W) in [-1, 1]."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise TypeError(f"expected uint8 image, got {arr.dtype}")
    if arr.ndim == 3:
        arr = arr[None]
    t = torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2))).float()
    return t / 127.5 - 1.0


def from_model_range(t):
    """float (N, 3, H, W) in [-1, 1] -> uint8 (N, H, W, 3), rounded and clamped."""
    arr = t.detach().cpu().double().numpy()
    arr = np.clip(np.rint((arr + 1.0) * 127.5), 0, 255).astype(np.uint8)
    return arr.transpose(0, 2, 3, 1)


def _smooth_texture(rng, h, w, sigma):
    noise = rng.random((h, w, 3))
    tex = gaussian_filter(noise, sigma=(sigma, sigma, 0))
    lo, hi = tex.min(), tex.max()
    return (tex - lo) / max(hi - lo, 1e-12)


def _shape_mask(rng, h, w, count, scale):
    yy, xx = np.mgrid[0:h, 0:w]
    mask = np.zeros((h, w), dtype=bool)
    for _ in range(count):
        cy, cx = rng.uniform(0.15, 0.85) * h, rng.uniform(0.15, 0.85) * w
        ry, rx = rng.uniform(0.5, 1.0, size=2) * scale * min(h, w)
        if rng.random() < 0.5:
            mask |= ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            mask |= (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    return mask


def _to_uint8(x):
    return np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8)


def _render(rng, h, w):
    """Return (source, target, foreground mask) for one synthetic scene."""
    n_layers = int(rng.integers(2, 4))
    # Layer 0 is the far background; the last layer is the in-focus foreground.
    background = _smooth_texture(rng, h, w, sigma=2.0) * 0.6 + rng.random(3) * 0.4
    sharp = background.copy()
    blurred = gaussian_filter(background, sigma=(3.0 * n_layers, 3.0 * n_layers, 0))
    for depth in range(1, n_layers):
        m = _shape_mask(rng, h, w, count=int(rng.integers(1, 4)), scale=0.25)
        color = rng.random(3) * 0.7 + _smooth_texture(rng, h, w, sigma=1.0) * 0.3
        alpha = m.astype(np.float64)[..., None]
        sharp = alpha * color + (1 - alpha) * sharp
        if depth < n_layers - 1:
            sigma = 3.0 * (n_layers - depth)
            a_blur = gaussian_filter(alpha, sigma=(sigma, sigma, 0))
            c_blur = gaussian_filter(alpha * color, sigma=(sigma, sigma, 0))
            blurred = c_blur + (1 - a_blur) * blurred
        else:
            fg = m
    source, target = _to_uint8(sharp), _to_uint8(blurred)
    target[fg] = source[fg]
    return source, target, fg


def synth_bokeh_dataset(n, size=(64, 96), seed=0):
    """Synthetic pairs: sharp layered scene vs. the same scene with depth-graded blur.

    The foreground layer stays sharp in the target, so source and target agree
    exactly on ``sample.mask``.
    """
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    h, w = size
    samples = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        src, tgt, mask = _render(rng, h, w)
        samples.append(PairedSample(src, tgt, f"synth_{i:05d}", mask))
    return PairedDataset(samples)


def write_dataset(dataset, root, split="train"):
    """Write samples in the on-disk pair layout, returning the split directory."""
    base = Path(root) / split
    for side in ("source", "target"):
        (base / side).mkdir(parents=True, exist_ok=True)
    for s in dataset:
        write_image(base / "source" / f"{s.id}.png", s.source)
        write_image(base / "target" / f"{s.id}.png", s.target)
    return base
