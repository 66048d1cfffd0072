"""scikit-learn style wrapper around the generator, critics and trainer."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .critic import CriticConfig, build_critics
from .data import PairedDataset, PairedSample
from .evaluate import psnr, render_image
from .generator import GeneratorConfig, build_generator
from .losses import FeatureExtractor, LossWeights
from .trainer import AdamConfig, TrainSchedule, train_stage1, train_stage2
from .validation import check_image_batch


class BokehRenderer(TransformerMixin, BaseEstimator):
    """Learn a sharp-to-bokeh image mapping from paired 8-bit RGB images.

    ``fit(X, y)`` takes sequences of (H, W, 3) uint8 arrays, sharp inputs in
    ``X`` and bokeh targets in ``y``, and runs stage 1 then (if
    ``stage2_steps`` is non-zero) adversarial stage 2.  ``predict`` and
    ``transform`` render new images; ``score`` is the mean PSNR in dB.

    Step counts default to the full 60-epoch schedule when left as None.
    """

    def __init__(self, stage1_base_channels=16, stage2_base_channels=32, n_resblocks=9,
                 n_scales=3, norm_mode="avgpool", critic_depths=(2, 3, 4),
                 critic_base_channels=64, gp_lambda=10.0, w_l1=0.5, w_ssim=0.05, w_vgg=0.1,
                 w_adv=1.0, lr=1e-4, beta1=0.0, beta2=0.9, stage1_epochs=60, stage2_epochs=60,
                 stage1_steps=None, stage2_steps=None, batch_size=1, critic_steps=5, crop=None,
                 extractor=None, random_state=0):
        self.stage1_base_channels = stage1_base_channels
        self.stage2_base_channels = stage2_base_channels
        self.n_resblocks = n_resblocks
        self.n_scales = n_scales
        self.norm_mode = norm_mode
        self.critic_depths = critic_depths
        self.critic_base_channels = critic_base_channels
        self.gp_lambda = gp_lambda
        self.w_l1 = w_l1
        self.w_ssim = w_ssim
        self.w_vgg = w_vgg
        self.w_adv = w_adv
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.stage1_epochs = stage1_epochs
        self.stage2_epochs = stage2_epochs
        self.stage1_steps = stage1_steps
        self.stage2_steps = stage2_steps
        self.batch_size = batch_size
        self.critic_steps = critic_steps
        self.crop = crop
        self.extractor = extractor
        self.random_state = random_state

    def _configs(self):
        scale = 2 ** self.n_scales
        gen = GeneratorConfig(
            self.stage1_base_channels, self.stage1_base_channels * scale,
            self.stage2_base_channels, self.stage2_base_channels * scale,
            self.n_resblocks, self.n_scales, self.norm_mode,
        )
        critic = CriticConfig(tuple(self.critic_depths), self.critic_base_channels, self.gp_lambda)
        sched = TrainSchedule(self.stage1_epochs, self.stage2_epochs, self.batch_size,
                              self.critic_steps, self.random_state, crop=self.crop,
                              stage1_steps=self.stage1_steps, stage2_steps=self.stage2_steps)
        adam = AdamConfig(self.lr, self.beta1, self.beta2)
        weights = LossWeights(self.w_l1, self.w_ssim, self.w_vgg, self.w_adv)
        return gen, critic, sched, adam, weights

    def fit(self, X, y):
        X = check_image_batch(X, "X")
        y = check_image_batch(y, "y")
        if len(X) != len(y):
            raise ValueError(f"X and y lengths differ: {len(X)} vs {len(y)}")
        dataset = PairedDataset(PairedSample(s, t, f"{i:06d}") for i, (s, t) in enumerate(zip(X, y)))
        gen_cfg, critic_cfg, sched, adam, weights = self._configs()
        seed = self.random_state
        gen = build_generator(gen_cfg, seed)
        result = train_stage1(gen, dataset, sched, adam, weights)
        self.history_ = {"stage1": result.history, "stage2": []}
        self.critics_ = None
        if sched.total_steps(2, len(dataset)) > 0:
            self.critics_ = build_critics(critic_cfg, seed)
            fx = self.extractor if self.extractor is not None else FeatureExtractor.desk(seed)
            result = train_stage2(gen, self.critics_, dataset, sched, adam, adam, fx, weights)
            self.history_["stage2"] = result.history
        self.checkpoint_ = result.checkpoint
        self.generator_ = gen.eval()
        return self

    def predict(self, X):
        check_is_fitted(self, "generator_")
        return [render_image(self.generator_, img) for img in check_image_batch(X, "X")]

    def transform(self, X):
        return self.predict(X)

    def score(self, X, y):
        preds = self.predict(X)
        targets = check_image_batch(y, "y")
        return float(np.mean([psnr(p, t) for p, t in zip(preds, targets)]))
