"""Image-quality metrics, directory evaluation and single-image inference."""

from dataclasses import dataclass, field
import json
import math
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, load_checkpoint
from .data import from_model_range, load_pairs, read_image, to_model_range, write_image
from .exceptions import ShapeError
from .generator import pad_reflect_to_multiple
from .losses import SSIMParams, ssim
from .trainer import generator_from_checkpoint
from .validation import check_uint8_image

PEAK = 255.0
SSIM_8BIT = SSIMParams(data_range=PEAK)


def psnr(a, b):
    """PSNR in dB between two 8-bit images; ``inf`` when identical."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(PEAK ** 2 / mse)


def ssim_8bit(a, b):
    """SSIM between two 8-bit (H, W, 3) images, via the training SSIM."""
    ta = torch.from_numpy(np.asarray(a, dtype=np.float64).transpose(2, 0, 1)[None].copy())
    tb = torch.from_numpy(np.asarray(b, dtype=np.float64).transpose(2, 0, 1)[None].copy())
    return float(ssim(ta, tb, SSIM_8BIT))


def _fmt(v):
    return "inf" if math.isinf(v) else v


@dataclass
class EvalReport:
    records: list  # dicts with id, psnr, ssim
    skipped: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def count(self):
        return len(self.records)

    @property
    def mean_psnr(self):
        return float(np.mean([r["psnr"] for r in self.records]))

    @property
    def mean_ssim(self):
        return float(np.mean([r["ssim"] for r in self.records]))

    def to_json(self):
        doc = {
            "images": [{"id": r["id"], "psnr": _fmt(r["psnr"]), "ssim": r["ssim"]}
                       for r in self.records],
            "skipped": [{"id": i, "reason": why} for i, why in self.skipped],
            "aggregate": {"count": self.count, "psnr": _fmt(self.mean_psnr),
                          "ssim": self.mean_ssim},
            "config": self.config,
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _as_renderer(model):
    """Accept a Checkpoint, a checkpoint path, a generator, or any tensor -> tensor callable."""
    if isinstance(model, (str, Path)):
        model = load_checkpoint(model)
    if isinstance(model, Checkpoint):
        model = generator_from_checkpoint(model)
    if isinstance(model, torch.nn.Module):
        model.eval()
    return model


def render_image(model, img):
    """Render one 8-bit (H, W, 3) image to an 8-bit image of the same size."""
    img = check_uint8_image(img)
    model = _as_renderer(model)
    multiple = getattr(getattr(model, "config", None), "multiple", 1)
    x = to_model_range(img)
    padded, crop = pad_reflect_to_multiple(x, multiple)
    with torch.no_grad():
        out = model(padded)
    if isinstance(out, tuple):
        out = out[0]
    return from_model_range(crop.crop(out))[0]


def evaluate_dir(model, spec):
    """PSNR/SSIM of rendered sources against targets for every pair under ``spec``."""
    dataset = load_pairs(spec)
    model = _as_renderer(model)
    records, skipped = [], list(dataset.report.skipped)
    for sample in dataset:
        try:
            out = render_image(model, sample.source)
        except (ShapeError, RuntimeError) as exc:
            skipped.append((sample.id, str(exc)))
            continue
        records.append({"id": sample.id, "psnr": psnr(out, sample.target),
                        "ssim": ssim_8bit(out, sample.target)})
    if not records:
        raise RuntimeError("every image was skipped")
    config = dict(getattr(getattr(model, "config", None), "__dict__", {}))
    config.update({"root": str(spec.root), "split": spec.split})
    return EvalReport(records, skipped, config)


def infer(model, input_path, output_path):
    try:
        img = read_image(input_path)
    except OSError as exc:
        raise OSError(f"cannot read input image {input_path}: {exc}") from None
    out = render_image(model, img)
    try:
        write_image(output_path, out)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot write output image {output_path}: {exc}") from None
    return out
