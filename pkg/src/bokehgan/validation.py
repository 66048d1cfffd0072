"""Input validation helpers shared by the modules and the estimator."""

import numpy as np
import torch

from .exceptions import ShapeError


def check_image_tensor(x, divisible_by=1, name="x"):
    """Check a (batch, channel, height, width) float tensor and return it."""
    if not isinstance(x, torch.Tensor):
        raise TypeError(f"{name} must be a torch.Tensor, got {type(x).__name__}")
    if x.dim() != 4:
        raise ShapeError(f"{name} must be rank 4 (N, C, H, W), got shape {tuple(x.shape)}")
    h, w = x.shape[-2:]
    if h < 1 or w < 1:
        raise ShapeError(f"{name} has empty spatial extent {tuple(x.shape)}")
    if divisible_by > 1 and (h % divisible_by or w % divisible_by):
        raise ShapeError(
            f"{name} spatial size {h}x{w} is not divisible by {divisible_by}; "
            "pad with pad_reflect_to_multiple first"
        )
    return x


def check_same_shape(a, b, names=("a", "b")):
    if tuple(a.shape) != tuple(b.shape):
        raise ShapeError(
            f"{names[0]} and {names[1]} shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}"
        )


def check_uint8_image(img, name="image"):
    """Return ``img`` as a contiguous (H, W, 3) uint8 array."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise TypeError(f"{name} must be uint8, got {arr.dtype}")
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} is empty")
    return np.ascontiguousarray(arr)


def check_image_batch(images, name="X"):
    """Validate a sequence of 8-bit RGB images, as accepted by the estimator."""
    if isinstance(images, np.ndarray) and images.ndim == 3:
        images = [images]
    out = [check_uint8_image(im, f"{name}[{i}]") for i, im in enumerate(images)]
    if not out:
        raise ValueError(f"{name} is empty")
    return out
