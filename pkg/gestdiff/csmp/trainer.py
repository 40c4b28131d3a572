"""
Contrastive training over windows sampled across clips.
"""
from typing import Callable, List, Optional, Sequence, Tuple
import logging

import torch

from gestdiff.core.pipeline_config import CsmpConfig
from gestdiff.csmp.loss import contrastive_loss
from gestdiff.csmp.model import CsmpError, CsmpModel
from gestdiff.csmp.windows import window_starts
from gestdiff.domain.checkpoint_models import ModelCheckpoint
from gestdiff.domain.embedding_models import AlignedClip
from gestdiff.neural.checkpoint import capture_state, restore_state
from gestdiff.neural.checks import assert_finite
from gestdiff.neural.optim import AdamOptimizer
from gestdiff.neural.seeding import derive_seed, step_rng


logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "csmp"
INIT_STREAM = 1
BATCH_STREAM = 2

StepCallback = Callable[[int, float, float], None]


def build_csmp_model(hyperparameters: dict, seed: int) -> CsmpModel:
    """Construct a model whose initial weights depend only on `seed`."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(derive_seed(seed, 0, INIT_STREAM))
        return CsmpModel.from_hyperparameters(hyperparameters)


def load_csmp_model(checkpoint: ModelCheckpoint) -> CsmpModel:
    """Rebuild a frozen model from its checkpoint."""
    model = CsmpModel.from_hyperparameters(checkpoint.hyperparameters)
    restore_state(checkpoint, model)
    model.eval()
    return model


class CsmpTrainer:
    """
    Owns the model and optimizer of one contrastive training run.

    Batches are drawn from per-step generators, distinct clips first, so a run
    resumed from a checkpoint continues exactly like an uninterrupted one.
    """

    def __init__(
        self,
        clips: Sequence[AlignedClip],
        settings: CsmpConfig,
        seed: int,
        resume: Optional[ModelCheckpoint] = None,
    ):
        if not clips:
            raise CsmpError("Contrastive training needs at least one clip")
        missing = [clip.clip_id for clip in clips if clip.main_motion is None]
        if missing:
            raise CsmpError(f"Clips without motion cannot be used for training: {', '.join(missing)}")
        motion_dims = {clip.main_motion.frames.shape[1] for clip in clips}
        if len(motion_dims) != 1:
            raise CsmpError(f"Clips disagree on motion width: {sorted(motion_dims)}")
        speech_dims = {clip.main_speech.shape[1] for clip in clips}
        if speech_dims != {settings.speech_dim}:
            raise CsmpError(f"Speech width {sorted(speech_dims)} does not match csmp.speech_dim {settings.speech_dim}")

        self.settings = settings
        self.seed = seed
        self.context = settings.context_length
        self.speech = [torch.as_tensor(clip.main_speech, dtype=torch.float32) for clip in clips]
        self.motion = [torch.as_tensor(clip.main_motion.frames, dtype=torch.float32) for clip in clips]
        self.starts: List[List[int]] = [
            window_starts(clip.frame_count, self.context, settings.hop) for clip in clips
        ]
        self.total_windows = sum(len(starts) for starts in self.starts)
        if settings.batch_size > self.total_windows:
            raise CsmpError(
                f"Batch size {settings.batch_size} exceeds the {self.total_windows} available windows"
            )

        if resume is not None:
            self.model = CsmpModel.from_hyperparameters(resume.hyperparameters)
        else:
            self.model = build_csmp_model(
                CsmpModel.from_config(settings, motion_dims.pop()).hyperparameters, seed
            )
        self.optimizer = AdamOptimizer(self.model.named_parameters(), settings.learning_rate)
        self.step = 0
        if resume is not None:
            restore_state(resume, self.model, self.optimizer)
            self.step = resume.step
            logger.info("Resuming contrastive training from step %d", self.step)
        logger.info("Contrastive training on %d clips, %d windows", len(clips), self.total_windows)

    def sample_batch(self, step: int) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """(speech, motion, mask) for the given step: B windows, each clip used once per round."""
        rng = step_rng(self.seed, step, BATCH_STREAM)
        clip_order = rng.permutation(len(self.starts))
        window_orders = [rng.permutation(len(starts)) for starts in self.starts]

        chosen: List[Tuple[int, int]] = []
        round_index = 0
        while len(chosen) < self.settings.batch_size:
            for clip_index in clip_order:
                if round_index < len(window_orders[clip_index]) and len(chosen) < self.settings.batch_size:
                    chosen.append((clip_index, self.starts[clip_index][window_orders[clip_index][round_index]]))
            round_index += 1

        batch = len(chosen)
        speech = torch.zeros(batch, self.context, self.speech[0].shape[1])
        motion = torch.zeros(batch, self.context, self.motion[0].shape[1])
        mask = torch.zeros(batch, self.context, dtype=torch.bool)
        for row, (clip_index, start) in enumerate(chosen):
            speech_piece = self.speech[clip_index][start:start + self.context]
            length = speech_piece.shape[0]
            speech[row, :length] = speech_piece
            motion[row, :length] = self.motion[clip_index][start:start + self.context]
            mask[row, :length] = True
        return speech, motion, mask

    def train_step(self) -> Tuple[float, float]:
        """One optimizer step; returns (loss, temperature) of the batch."""
        step = self.step + 1
        speech, motion, mask = self.sample_batch(step)
        self.model.train()
        self.optimizer.zero_grad()
        u, v = self.model.encode_pair(speech, motion, mask)
        temperature = self.model.temperature
        loss = assert_finite(contrastive_loss(u, v, temperature), f"contrastive loss at step {step}")
        loss.backward()
        self.optimizer.step()
        self.step = step
        return loss.item(), temperature.item()

    def train(self, steps: int, on_step: Optional[StepCallback] = None) -> List[float]:
        """Run `steps` more steps, reporting each through `on_step(step, loss, temperature)`."""
        losses: List[float] = []
        for _ in range(steps):
            loss, temperature = self.train_step()
            losses.append(loss)
            if on_step is not None:
                on_step(self.step, loss, temperature)
            if self.step % self.settings.log_interval == 0:
                logger.info("csmp step %d loss %.6f temperature %.5f", self.step, loss, temperature)
        return losses

    def checkpoint(self) -> ModelCheckpoint:
        hyperparameters = dict(self.model.hyperparameters, hop=self.settings.hop)
        return capture_state(CHECKPOINT_KIND, hyperparameters, self.step, self.seed, self.model, self.optimizer)


def train_csmp(
    clips: Sequence[AlignedClip],
    settings: CsmpConfig,
    seed: int,
    steps: Optional[int] = None,
    resume: Optional[ModelCheckpoint] = None,
    on_step: Optional[StepCallback] = None,
) -> ModelCheckpoint:
    """
    Train (or continue training) the contrastive model.

    Args:
        clips: Aligned clips with motion
        settings: Architecture and optimization settings
        seed: Root seed
        steps: Additional steps to run, settings.train_steps when None
        resume: Checkpoint to continue from
        on_step: Per-step callback receiving (step, loss, temperature)

    Returns:
        Checkpoint including optimizer moments

    Raises:
        CsmpError: If the dataset is empty or the batch exceeds the available windows
    """
    trainer = CsmpTrainer(clips, settings, seed, resume)
    trainer.train(settings.train_steps if steps is None else steps, on_step)
    return trainer.checkpoint()
