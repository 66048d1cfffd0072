"""Built-in sanity checks run by ``bokehgan selftest``."""

import time

import numpy as np
import torch

from .data import synth_bokeh_dataset
from .generator import GeneratorConfig, build_generator
from .innorm import InConfig, assert_restricted, instance_norm
from .losses import (
    FeatureExtractor,
    LossWeights,
    hybrid_loss,
    hybrid_loss_no_adv,
    l1_loss,
    neg_ssim_loss,
    perceptual_loss,
)
from .trainer import TrainSchedule, train_stage1

DESK_GENERATOR = GeneratorConfig(8, 64, 16, 128, 4, 3)


def central_difference_grad(f, x, h=1e-6):
    """Gradient of scalar ``f`` at ``x`` by central differences, element by element."""
    x = x.detach().clone()
    grad = torch.zeros_like(x)
    flat, gflat = x.view(-1), grad.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + h
            up = float(f(x))
            flat[i] = orig - h
            down = float(f(x))
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
    return grad


def autograd_grad(f, x):
    x = x.detach().clone().requires_grad_(True)
    (g,) = torch.autograd.grad(f(x), x)
    return g


def relative_error(a, b):
    return float((a - b).norm() / b.norm().clamp_min(1e-30))


def random_in_inputs(n=100, seed=0, max_shape=(4, 8, 32, 32)):
    """Seeded float32 tensors: N(offset, scale^2) with scale in [0.5, 5], offset in [-2, 2]."""
    g = torch.Generator().manual_seed(seed)
    for _ in range(n):
        shape = [int(torch.randint(1, hi + 1, (1,), generator=g)) for hi in max_shape]
        scale = 0.5 + 4.5 * float(torch.rand(1, generator=g))
        offset = 4.0 * float(torch.rand(1, generator=g)) - 2.0
        yield torch.randn(*shape, generator=g) * scale + offset


def in_equivalence(n=100, seed=0):
    worst = 0.0
    for x in random_in_inputs(n, seed):
        a = instance_norm(x, InConfig(mode="avgpool"))
        b = instance_norm(x, InConfig(mode="direct"))
        worst = max(worst, float((a - b).abs().max()))
    return worst


def loss_pairs(seed=0, shape=(2, 3, 16, 16)):
    """A double-precision (gen, gt) pair whose elementwise differences stay away from 0."""
    g = torch.Generator().manual_seed(seed)
    gen = torch.rand(*shape, generator=g, dtype=torch.float64) * 1.6 - 0.8
    sign = torch.where(torch.rand(*shape, generator=g, dtype=torch.float64) < 0.5, -1.0, 1.0)
    gt = gen + sign * (0.05 + 0.15 * torch.rand(*shape, generator=g, dtype=torch.float64))
    return gen, gt


def desk_extractor():
    return FeatureExtractor.desk(seed=0).double()


def gradient_checks(seed=0):
    gen, gt = loss_pairs(seed)
    fx = desk_extractor()
    w = LossWeights()
    fns = {
        "l1": lambda x: l1_loss(x, gt),
        "neg_ssim": lambda x: neg_ssim_loss(x, gt),
        "perceptual": lambda x: perceptual_loss(fx, x, gt),
        "hybrid_no_adv": lambda x: hybrid_loss_no_adv(w, {
            "l1": l1_loss(x, gt), "ssim": neg_ssim_loss(x, gt),
            "vgg": perceptual_loss(fx, x, gt)}).total,
    }
    return {name: relative_error(autograd_grad(f, gen), central_difference_grad(f, gen))
            for name, f in fns.items()}


def coefficient_probe(delta=0.37):
    w = LossWeights()
    base = {"l1": 1.1, "ssim": 0.4, "vgg": 2.3, "adv": -0.7}
    t0 = hybrid_loss(w, base).value
    out = {}
    for name in base:
        parts = dict(base)
        parts[name] += delta
        out[name] = (hybrid_loss(w, parts).value - t0) / delta
    return out


def run(verbose=print):
    """Run every check; return True when all pass."""
    results = []

    def record(name, ok, detail):
        results.append(ok)
        verbose(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")

    t = time.perf_counter()
    worst = in_equivalence()
    record("instance-norm equivalence", worst <= 1e-5,
           f"max |avgpool - direct| = {worst:.2e} ({time.perf_counter() - t:.1f}s)")
    try:
        audit = assert_restricted(instance_norm, torch.randn(2, 3, 8, 8), InConfig(mode="avgpool"))
        record("instance-norm op audit", True, f"categories {audit.categories()}")
    except AssertionError as exc:
        record("instance-norm op audit", False, str(exc))

    for name, err in gradient_checks().items():
        record(f"gradient check {name}", err <= 1e-3, f"relative error {err:.2e}")

    expected = {"l1": 0.5, "ssim": 0.05, "vgg": 0.1, "adv": 1.0}
    for name, slope in coefficient_probe().items():
        record(f"hybrid coefficient {name}", abs(slope - expected[name]) <= 1e-9, f"{slope:.12f}")

    ds = synth_bokeh_dataset(4, (32, 48), seed=0)
    gen = build_generator(DESK_GENERATOR, seed=0)
    hist = train_stage1(gen, ds, TrainSchedule(seed=0, stage1_steps=50)).history
    finite = all(np.isfinite(h["total"]) for h in hist)
    record("training smoke (50 steps)", finite and len(hist) == 50,
           f"loss {hist[0]['total']:.4f} -> {hist[-1]['total']:.4f}")
    return all(results)
