"""Two-stage training: a reconstruction stage, then adversarial finetuning.

All randomness is derived from ``(seed, stage, step)`` rather than from a
running generator, so a resumed run replays exactly what an uninterrupted
run would have done.
"""

from dataclasses import asdict, dataclass
import logging
import math
from typing import NamedTuple

import numpy as np
import torch

from . import checkpoint as ck
from .critic import CriticConfig, build_critics, critic_loss, critic_scores
from .data import random_crop_pair, to_model_range
from .exceptions import ConfigError, TrainingDiverged
from .generator import GeneratorConfig, build_generator, pad_reflect_to_multiple
from .losses import (
    LossWeights,
    adversarial_gen_loss,
    hybrid_loss,
    hybrid_loss_no_adv,
    l1_loss,
    neg_ssim_loss,
    perceptual_loss,
    stage1_loss,
)

log = logging.getLogger(__name__)

SCORE_WARN_LIMIT = 1e6


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ConfigError(f"{name} must be in [0, 1), got {v}")

    def make(self, params):
        return torch.optim.Adam(params, lr=self.lr, betas=(self.beta1, self.beta2), eps=self.eps)


@dataclass(frozen=True)
class TrainSchedule:
    stage1_epochs: int = 60
    stage2_epochs: int = 60
    batch_size: int = 1
    critic_steps_per_gen_step: int = 5
    seed: int = 0
    checkpoint_every: int = 0
    crop: tuple = None
    # Explicit step counts override the epoch-derived ones (desk-scale runs).
    stage1_steps: int = None
    stage2_steps: int = None

    def __post_init__(self):
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.critic_steps_per_gen_step < 1:
            raise ConfigError("critic_steps_per_gen_step must be >= 1")
        if self.crop is not None:
            object.__setattr__(self, "crop", tuple(self.crop))

    def steps_per_epoch(self, n_samples):
        return math.ceil(n_samples / self.batch_size)

    def total_steps(self, stage, n_samples):
        explicit = self.stage1_steps if stage == 1 else self.stage2_steps
        if explicit is not None:
            return explicit
        epochs = self.stage1_epochs if stage == 1 else self.stage2_epochs
        return epochs * self.steps_per_epoch(n_samples)

    def to_dict(self):
        d = asdict(self)
        d["crop"] = None if self.crop is None else list(self.crop)
        return d


class TrainResult(NamedTuple):
    checkpoint: ck.Checkpoint
    history: list


def _seed_int(*key):
    return int(np.random.SeedSequence(list(key)).generate_state(1, dtype=np.uint64)[0] >> 1)


def make_batch(dataset, sched, stage, step, substep=0):
    """Return (source, target) tensors for one optimizer step."""
    n = len(dataset)
    rng = np.random.default_rng([sched.seed, stage, step, substep])
    picks = [dataset[(step * sched.batch_size + j) % n] for j in range(sched.batch_size)]
    if sched.crop is not None:
        picks = [random_crop_pair(p, *sched.crop, rng) for p in picks]
    src = to_model_range(np.stack([p.source for p in picks]))
    tgt = to_model_range(np.stack([p.target for p in picks]))
    return src, tgt


def _render(gen, src):
    padded, crop = pad_reflect_to_multiple(src, gen.config.multiple)
    out = gen(padded)
    return type(out)(*(crop.crop(t) for t in out))


def _check_finite(value, what, make_ckpt, diag_path):
    if math.isfinite(value):
        return
    ckpt = make_ckpt(aborted=f"non-finite {what}: {value}")
    if diag_path is not None:
        ck.save_checkpoint(diag_path, ckpt)
    raise TrainingDiverged(f"non-finite {what} ({value}); diagnostic checkpoint attached", ckpt)


def make_checkpoint(stage, step, steps_per_epoch, gen, history, sched, opt_g=None,
                    mc=None, opt_d=None, adam=None, weights=None, extra=None):
    arrays = ck.module_arrays("generator", gen)
    meta = {
        "stage": stage,
        "step": step,
        "epoch": step // max(steps_per_epoch, 1),
        "generator_config": gen.config.to_dict(),
        "schedule": sched.to_dict(),
        "history": history,
    }
    if adam is not None:
        meta["adam"] = asdict(adam)
    if weights is not None:
        meta["loss_weights"] = asdict(weights)
    if opt_g is not None:
        opt_arrays, meta["opt_g_groups"] = ck.optimizer_arrays("opt_g", opt_g)
        arrays.update(opt_arrays)
    if mc is not None:
        arrays.update(ck.module_arrays("critic", mc))
        meta["critic_config"] = mc.config.to_dict() if mc.config is not None else None
    if opt_d is not None:
        opt_arrays, meta["opt_d_groups"] = ck.optimizer_arrays("opt_d", opt_d)
        arrays.update(opt_arrays)
    if extra:
        meta.update(extra)
    return ck.Checkpoint(arrays, meta)


def generator_from_checkpoint(ckpt):
    gen = build_generator(GeneratorConfig(**ckpt.meta["generator_config"]))
    ck.load_module_arrays("generator", gen, ckpt.arrays)
    return gen


def critics_from_checkpoint(ckpt):
    cfg = dict(ckpt.meta["critic_config"])
    cfg["depths"] = tuple(cfg["depths"])
    if cfg.get("input_size") is not None:
        cfg["input_size"] = tuple(cfg["input_size"])
    mc = build_critics(CriticConfig(**cfg))
    ck.load_module_arrays("critic", mc, ckpt.arrays)
    return mc


def _resume_point(resume, stage):
    """Step and history to continue from; only a same-stage checkpoint resumes optimizers."""
    if resume is None or resume.meta.get("stage") != stage:
        return 0, [], False
    return int(resume.meta["step"]), list(resume.meta.get("history", [])), True


def train_stage1(gen, dataset, sched, adam=AdamConfig(), weights=LossWeights(), resume=None,
                 checkpoint_path=None, diag_path=None):
    """Train both generator stages end to end on L1 + (1 - SSIM) of the final output."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    opt = adam.make(gen.parameters())
    start, history, same_stage = _resume_point(resume, 1)
    if resume is not None:
        ck.load_module_arrays("generator", gen, resume.arrays)
        if same_stage:
            ck.load_optimizer_arrays("opt_g", opt, resume.arrays, resume.meta["opt_g_groups"])
    spe = sched.steps_per_epoch(len(dataset))
    total = sched.total_steps(1, len(dataset))

    def snapshot(step, **extra):
        return make_checkpoint(1, step, spe, gen, history, sched, opt_g=opt, adam=adam,
                               weights=weights, extra=extra)

    gen.train()
    for step in range(start, total):
        src, tgt = make_batch(dataset, sched, 1, step)
        out = _render(gen, src)
        report = stage1_loss(out.final, tgt, weights)
        _check_finite(report.value, "stage-1 loss", lambda **kw: snapshot(step, **kw), diag_path)
        opt.zero_grad(set_to_none=True)
        report.total.backward()
        opt.step()
        history.append({"step": step, "epoch": step // spe, **report.as_dict()})
        if checkpoint_path and sched.checkpoint_every and (step + 1) % sched.checkpoint_every == 0:
            ck.save_checkpoint(checkpoint_path, snapshot(step + 1))
    return TrainResult(snapshot(total if total > start else start), history)


def _set_requires_grad(module, flag):
    for p in module.parameters():
        p.requires_grad_(flag)


def train_stage2(gen, mc, dataset, sched, adam_g=AdamConfig(), adam_d=AdamConfig(), fx=None,
                 weights=LossWeights(), adversarial=True, resume=None, checkpoint_path=None,
                 diag_path=None):
    """Adversarial finetuning with the hybrid loss.

    Each cycle runs ``critic_steps_per_gen_step`` critic updates followed by
    one generator update.  With ``adversarial=False`` the critics are skipped
    and the generator minimizes the hybrid loss without its adversarial term.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if fx is None:
        raise ValueError("a FeatureExtractor is required for the perceptual term")
    if adversarial and mc is None:
        raise ValueError("adversarial training needs critics")
    opt_g = adam_g.make(gen.parameters())
    opt_d = adam_d.make(mc.parameters()) if adversarial else None
    start, history, same_stage = _resume_point(resume, 2)
    if resume is not None:
        ck.load_module_arrays("generator", gen, resume.arrays)
        if same_stage:
            ck.load_optimizer_arrays("opt_g", opt_g, resume.arrays, resume.meta["opt_g_groups"])
            if adversarial:
                ck.load_module_arrays("critic", mc, resume.arrays)
                ck.load_optimizer_arrays("opt_d", opt_d, resume.arrays, resume.meta["opt_d_groups"])
    spe = sched.steps_per_epoch(len(dataset))
    total = sched.total_steps(2, len(dataset))
    n_critic = sched.critic_steps_per_gen_step
    gp_lambda = mc.config.gp_lambda if (mc is not None and mc.config is not None) else 10.0

    def snapshot(step, **extra):
        return make_checkpoint(2, step, spe, gen, history, sched, opt_g=opt_g,
                               mc=mc if adversarial else None, opt_d=opt_d, adam=adam_g,
                               weights=weights, extra=extra)

    gen.train()
    for step in range(start, total):
        record = {"step": step, "epoch": step // spe}
        if adversarial:
            mc.train()
            d_terms = []
            for k in range(n_critic):
                src, tgt = make_batch(dataset, sched, 2, step, k + 1)
                with torch.no_grad():
                    fake = _render(gen, src).final
                rng = torch.Generator().manual_seed(_seed_int(sched.seed, 2, step, k))
                rep = critic_loss(mc, tgt, fake, rng, gp_lambda)
                _check_finite(rep.value, "critic loss", lambda **kw: snapshot(step, **kw), diag_path)
                opt_d.zero_grad(set_to_none=True)
                rep.total.backward()
                opt_d.step()
                d_terms.append(rep.as_dict())
            record.update({f"d_{key}": float(np.mean([t[key] for t in d_terms]))
                           for key in d_terms[0]})

        src, tgt = make_batch(dataset, sched, 2, step, 0)
        out = _render(gen, src)
        parts = {
            "l1": l1_loss(out.final, tgt),
            "ssim": neg_ssim_loss(out.final, tgt),
            "vgg": perceptual_loss(fx, out.final, tgt),
        }
        if adversarial:
            _set_requires_grad(mc, False)
            parts["adv"] = adversarial_gen_loss(mc, out.final)
            report = hybrid_loss(weights, parts)
        else:
            report = hybrid_loss_no_adv(weights, parts)
        _check_finite(report.value, "generator loss", lambda **kw: snapshot(step, **kw), diag_path)
        opt_g.zero_grad(set_to_none=True)
        report.total.backward()
        opt_g.step()
        if adversarial:
            _set_requires_grad(mc, True)
            with torch.no_grad():
                peak = max(float(s.abs().max()) for s in critic_scores(mc, tgt))
            if peak > SCORE_WARN_LIMIT:
                record["warning"] = f"critic score magnitude {peak:.3g} exceeds {SCORE_WARN_LIMIT:g}"
                log.warning("step %d: %s", step, record["warning"])
        record.update(report.as_dict())
        history.append(record)
        if checkpoint_path and sched.checkpoint_every and (step + 1) % sched.checkpoint_every == 0:
            ck.save_checkpoint(checkpoint_path, snapshot(step + 1))
    return TrainResult(snapshot(max(total, start)), history)
