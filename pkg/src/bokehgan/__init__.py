"""Two-stage GAN bokeh rendering with a multi-receptive-field patch critic."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .critic import CriticConfig, MultiCritic, build_critics, critic_loss, critic_scores, gradient_penalty
from .data import DatasetSpec, PairedSample, load_pairs, synth_bokeh_dataset
from .estimator import BokehRenderer
from .evaluate import evaluate_dir, infer, psnr
from .exceptions import CheckpointError, ConfigError, ShapeError, TrainingDiverged
from .generator import GeneratorConfig, TwoStageGenerator, build_generator, pad_reflect_to_multiple
from .innorm import InConfig, InstanceNorm2d, instance_norm
from .losses import FeatureExtractor, LossWeights, hybrid_loss, hybrid_loss_no_adv, ssim
from .trainer import AdamConfig, TrainSchedule, train_stage1, train_stage2

__version__ = "0.1.0"
