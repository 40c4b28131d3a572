"""
ε-prediction training with conditioning dropout.
"""
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import torch
import torch.nn.functional as F

from gestdiff.core.pipeline_config import DiffusionSettings
from gestdiff.csmp.windows import window_starts
from gestdiff.diffusion.denoiser import DenoiserModel, DiffusionError
from gestdiff.diffusion.schedule import forward_sample_batch, make_schedule
from gestdiff.domain.checkpoint_models import ModelCheckpoint
from gestdiff.domain.diffusion_models import GuidanceParams, NoiseSchedule
from gestdiff.neural.checkpoint import capture_state, restore_state
from gestdiff.neural.checks import assert_finite
from gestdiff.neural.optim import AdamOptimizer
from gestdiff.neural.seeding import derive_seed, step_generator, step_rng


logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "diffusion"
INIT_STREAM = 1
BATCH_STREAM = 2
NOISE_STREAM = 3
SPLIT_STREAM = 4
VALIDATION_STREAM = 5

# (step, training loss, validation loss or None)
StepCallback = Callable[[int, float, Optional[float]], None]


@dataclass(frozen=True)
class DiffusionExample:
    """One training clip: pose features and the matching conditioning, both T frames long."""
    clip_id: str
    poses: np.ndarray  # T x D
    conditioning: np.ndarray  # T x conditioning_dim


def training_step(
    model: DenoiserModel,
    schedule: NoiseSchedule,
    x0: torch.Tensor,
    conditioning: torch.Tensor,
    guidance: GuidanceParams,
    generator: torch.Generator,
    optimizer: Optional[AdamOptimizer] = None,
) -> float:
    """
    One ε-prediction step on a batch of equal-length windows.

    Draws n uniformly from [1, N] and standard-normal noise per item, replaces
    the conditioning of each item by the null token with probability
    guidance.dropout, and takes one optimizer step on the mean squared error
    (uniform weights). Without an optimizer only the loss is computed.

    Raises:
        NonFiniteError: If the loss is NaN or infinite (no step is taken)
    """
    batch = x0.shape[0]
    steps = torch.randint(1, schedule.num_steps + 1, (batch,), generator=generator)
    noise = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    drop = torch.rand(batch, generator=generator) < guidance.dropout
    noisy = forward_sample_batch(x0, steps, schedule, noise)

    if optimizer is not None:
        optimizer.zero_grad()
    prediction = model(noisy, steps, conditioning, drop)
    loss = assert_finite(F.mse_loss(prediction, noise), "diffusion loss")
    if optimizer is not None:
        loss.backward()
        optimizer.step()
    return loss.item()


def feature_statistics(examples: Sequence[DiffusionExample]) -> Tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and std over all frames."""
    frames = np.concatenate([example.poses for example in examples], axis=0)
    return frames.mean(axis=0), frames.std(axis=0)


def split_validation(examples: Sequence[DiffusionExample], fraction: float, seed: int):
    """Hold out floor(fraction * count) clips (always leaving one for training)."""
    held = min(int(fraction * len(examples)), len(examples) - 1)
    order = step_rng(seed, 0, SPLIT_STREAM).permutation(len(examples))
    validation = sorted(order[:held].tolist())
    training = sorted(order[held:].tolist())
    return [examples[i] for i in training], [examples[i] for i in validation]


def build_denoiser(hyperparameters: Dict[str, Any], seed: int) -> DenoiserModel:
    """Construct a denoiser whose initial weights depend only on `seed`."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(derive_seed(seed, 0, INIT_STREAM))
        return DenoiserModel.from_hyperparameters(hyperparameters)


def load_denoiser(checkpoint: ModelCheckpoint) -> Tuple[DenoiserModel, NoiseSchedule]:
    """Rebuild a frozen denoiser and its schedule from a checkpoint."""
    model = DenoiserModel.from_hyperparameters(checkpoint.hyperparameters)
    restore_state(checkpoint, model)
    model.eval()
    hp = checkpoint.hyperparameters
    schedule = make_schedule(hp["schedule_kind"], hp["num_steps"], hp["beta_start"], hp["beta_end"])
    return model, schedule


class DiffusionTrainer:
    """
    Owns the denoiser and optimizer of one diffusion training run.

    Clips are cut into windows of `window_frames`; a deterministic fraction of
    clips is held out for a validation loss computed with fixed draws.
    """

    def __init__(
        self,
        examples: Sequence[DiffusionExample],
        settings: DiffusionSettings,
        seed: int,
        resume: Optional[ModelCheckpoint] = None,
        extra_hyperparameters: Optional[Dict[str, Any]] = None,
    ):
        if not examples:
            raise DiffusionError("Diffusion training needs at least one clip")
        pose_dims = {example.poses.shape[1] for example in examples}
        conditioning_dims = {example.conditioning.shape[1] for example in examples}
        if len(pose_dims) != 1 or len(conditioning_dims) != 1:
            raise DiffusionError("Clips disagree on pose or conditioning width")
        for example in examples:
            if len(example.poses) != len(example.conditioning):
                raise DiffusionError(
                    f"{example.clip_id}: {len(example.poses)} pose frames vs {len(example.conditioning)} conditioning frames"
                )

        self.settings = settings
        self.seed = seed
        self.window = settings.window_frames
        self.guidance = GuidanceParams(scale=settings.guidance_scale, dropout=settings.guidance_dropout)
        self.schedule = make_schedule(settings.schedule_kind, settings.num_steps, settings.beta_start, settings.beta_end)

        usable = [example for example in examples if len(example.poses) >= self.window]
        if not usable:
            raise DiffusionError(f"No clip is at least {self.window} frames long")
        if len(usable) < len(examples):
            logger.warning("Skipping %d clips shorter than %d frames", len(examples) - len(usable), self.window)
        training, validation = split_validation(usable, settings.validation_fraction, seed)
        self.training_ids = [example.clip_id for example in training]
        self.validation_ids = [example.clip_id for example in validation]

        if resume is not None:
            self.model = DenoiserModel.from_hyperparameters(resume.hyperparameters)
        else:
            self.model = build_denoiser(
                dict(
                    pose_dim=pose_dims.pop(),
                    conditioning_dim=conditioning_dims.pop(),
                    model_dim=settings.model_dim,
                    residual_blocks=settings.residual_blocks,
                    layers_per_block=settings.layers_per_block,
                    heads=settings.heads,
                    ff_dim=settings.ff_dim,
                    max_relative_distance=settings.max_relative_distance,
                    step_embedding_dim=settings.step_embedding_dim,
                ),
                seed,
            )
            mean, std = feature_statistics(training)
            self.model.set_standardization(torch.as_tensor(mean, dtype=torch.float32), torch.as_tensor(std, dtype=torch.float32))
        self.optimizer = AdamOptimizer(self.model.named_parameters(), settings.learning_rate)
        self.step = 0
        if resume is not None:
            restore_state(resume, self.model, self.optimizer)
            self.step = resume.step
            logger.info("Resuming diffusion training from step %d", self.step)

        self.extra_hyperparameters = dict(resume.hyperparameters) if resume is not None else {}
        self.extra_hyperparameters.update(extra_hyperparameters or {})
        self.train_poses, self.train_conditioning, self.train_windows = self._windows(training)
        self.validation_batch = self._validation_batch(validation)
        self.last_validation_loss: Optional[float] = None
        logger.info(
            "Diffusion training on %d windows from %d clips (%d clips held out)",
            len(self.train_windows), len(training), len(validation),
        )

    def _windows(self, examples: Sequence[DiffusionExample]):
        poses = [self.model.standardize(torch.as_tensor(example.poses, dtype=torch.float32)) for example in examples]
        conditioning = [torch.as_tensor(example.conditioning, dtype=torch.float32) for example in examples]
        windows = [
            (index, start)
            for index, example in enumerate(examples)
            for start in window_starts(len(example.poses), self.window, self.settings.window_hop)
        ]
        return poses, conditioning, windows

    def _stack(self, poses, conditioning, chosen) -> Tuple[torch.Tensor, torch.Tensor]:
        x0 = torch.stack([poses[index][start:start + self.window] for index, start in chosen])
        cond = torch.stack([conditioning[index][start:start + self.window] for index, start in chosen])
        return x0, cond

    def _validation_batch(self, examples: Sequence[DiffusionExample]):
        if not examples:
            return None
        poses, conditioning, windows = self._windows(examples)
        return self._stack(poses, conditioning, windows)

    def sample_batch(self, step: int) -> Tuple[torch.Tensor, torch.Tensor]:
        rng = step_rng(self.seed, step, BATCH_STREAM)
        count = len(self.train_windows)
        picks = rng.choice(count, size=self.settings.batch_size, replace=self.settings.batch_size > count)
        return self._stack(self.train_poses, self.train_conditioning, [self.train_windows[i] for i in picks])

    def train_step(self) -> float:
        step = self.step + 1
        x0, conditioning = self.sample_batch(step)
        self.model.train()
        loss = training_step(
            self.model, self.schedule, x0, conditioning, self.guidance,
            step_generator(self.seed, step, NOISE_STREAM), self.optimizer,
        )
        self.step = step
        return loss

    @torch.no_grad()
    def validation_loss(self) -> Optional[float]:
        """Loss on held-out windows with fixed noise and step draws, no dropout."""
        if self.validation_batch is None:
            return None
        self.model.eval()
        x0, conditioning = self.validation_batch
        no_dropout = GuidanceParams(scale=self.guidance.scale, dropout=0.0)
        return training_step(
            self.model, self.schedule, x0, conditioning, no_dropout,
            step_generator(self.seed, 0, VALIDATION_STREAM),
        )

    def train(self, steps: int, on_step: Optional[StepCallback] = None) -> List[float]:
        """Run `steps` more steps; validation loss is computed every validation_interval steps."""
        losses: List[float] = []
        for _ in range(steps):
            loss = self.train_step()
            losses.append(loss)
            validation = None
            if self.step % self.settings.validation_interval == 0:
                validation = self.validation_loss()
                self.last_validation_loss = validation
            if on_step is not None:
                on_step(self.step, loss, validation)
            if self.step % self.settings.log_interval == 0:
                logger.info("diffusion step %d loss %.6f", self.step, loss)
            if validation is not None:
                logger.info("diffusion step %d validation loss %.6f", self.step, validation)
        return losses

    def checkpoint(self) -> ModelCheckpoint:
        hyperparameters = dict(self.extra_hyperparameters)
        hyperparameters.update(self.model.hyperparameters)
        hyperparameters.update(
            schedule_kind=self.settings.schedule_kind,
            num_steps=self.settings.num_steps,
            beta_start=self.settings.beta_start,
            beta_end=self.settings.beta_end,
            window_frames=self.settings.window_frames,
            window_hop=self.settings.window_hop,
            crossfade_frames=self.settings.crossfade_frames,
        )
        return capture_state(CHECKPOINT_KIND, hyperparameters, self.step, self.seed, self.model, self.optimizer)


def train_diffusion(
    examples: Sequence[DiffusionExample],
    settings: DiffusionSettings,
    seed: int,
    steps: Optional[int] = None,
    resume: Optional[ModelCheckpoint] = None,
    on_step: Optional[StepCallback] = None,
    extra_hyperparameters: Optional[Dict[str, Any]] = None,
) -> ModelCheckpoint:
    """
    Train (or continue training) the denoiser.

    Args:
        examples: Clips with pose features and conditioning
        settings: Architecture, schedule and optimization settings
        seed: Root seed
        steps: Additional steps, settings.train_steps when None
        resume: Checkpoint to continue from
        on_step: Per-step callback receiving (step, loss, validation loss or None)
        extra_hyperparameters: Extra JSON values stored in the checkpoint header

    Raises:
        DiffusionError: If no clip covers a training window
    """
    trainer = DiffusionTrainer(examples, settings, seed, resume, extra_hyperparameters)
    trainer.train(settings.train_steps if steps is None else steps, on_step)
    return trainer.checkpoint()
