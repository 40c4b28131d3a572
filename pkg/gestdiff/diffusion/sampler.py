"""
Ancestral DDPM sampling with classifier-free guidance.
"""
from typing import Callable, List, Optional, Tuple
import logging
import math

import numpy as np
import torch

from gestdiff.csmp.windows import window_starts
from gestdiff.diffusion.denoiser import DenoiserModel, DiffusionError
from gestdiff.diffusion.guidance import guided_epsilon
from gestdiff.domain.diffusion_models import NoiseSchedule
from gestdiff.domain.motion_models import PoseSequence, Skeleton
from gestdiff.motion.rotations import canonicalize_expmap


logger = logging.getLogger(__name__)

EpsilonFn = Callable[[torch.Tensor, int], torch.Tensor]


@torch.no_grad()
def ancestral_sample(
    epsilon_fn: EpsilonFn,
    schedule: NoiseSchedule,
    shape: Tuple[int, ...],
    generator: torch.Generator,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """
    Run the reverse chain from x_N ~ N(0, I) down to x_0.

    Each step uses mean (x_n - beta_n / sqrt(1 - abar_n) * eps) / sqrt(alpha_n)
    and variance beta_tilde_n; the final step (n = 1) adds no noise.

    Args:
        epsilon_fn: (x_n, n) -> noise estimate of the same shape
        schedule: Noise schedule
        shape: Sample shape
        generator: Source of all randomness
        dtype: Working precision
    """
    x = torch.randn(shape, generator=generator, dtype=dtype)
    for n in range(schedule.num_steps, 0, -1):
        epsilon = epsilon_fn(x, n)
        beta = schedule.beta(n)
        mean = (x - beta / math.sqrt(1.0 - schedule.alpha_bar(n)) * epsilon) / math.sqrt(1.0 - beta)
        if n > 1:
            noise = torch.randn(shape, generator=generator, dtype=dtype)
            x = mean + math.sqrt(schedule.posterior_variance(n)) * noise
        else:
            x = mean
    return x


def crossfade_weights(length: int, fade_in: bool, fade_out: bool, crossfade: int) -> np.ndarray:
    """Per-frame blend weights: 1 inside, linear ramps over `crossfade` frames at faded ends."""
    weights = np.ones(length)
    ramp = np.arange(1, crossfade + 1) / (crossfade + 1)
    if fade_in and crossfade:
        weights[:crossfade] = np.minimum(weights[:crossfade], ramp)
    if fade_out and crossfade:
        weights[length - crossfade:] = np.minimum(weights[length - crossfade:], ramp[::-1])
    return weights


class WindowedEpsilon:
    """
    Guided noise estimates for sequences longer than the training window.

    The sequence is cut into overlapping windows; window estimates are
    blended with linear cross-fades where windows meet.
    """

    def __init__(
        self,
        model: DenoiserModel,
        conditioning: torch.Tensor,
        scale: float,
        window_frames: int,
        window_hop: int,
        crossfade_frames: int,
    ):
        self.model = model
        self.conditioning = conditioning
        self.scale = scale
        length = conditioning.shape[1]
        self.starts: List[int] = [0] if length <= window_frames else window_starts(length, window_frames, window_hop)
        self.window_frames = min(window_frames, length)
        weights = []
        for start in self.starts:
            fade_in = start > 0
            fade_out = start + self.window_frames < length
            weights.append(torch.as_tensor(
                crossfade_weights(self.window_frames, fade_in, fade_out, crossfade_frames), dtype=conditioning.dtype
            ))
        self.weights = weights
        total = torch.zeros(length, dtype=conditioning.dtype)
        for start, weight in zip(self.starts, weights):
            total[start:start + self.window_frames] += weight
        self.total = total

    def __call__(self, x: torch.Tensor, n: int) -> torch.Tensor:
        steps = torch.full((x.shape[0],), n, dtype=torch.long)
        if len(self.starts) == 1:
            return guided_epsilon(x, steps, self.conditioning, self.scale, self.model)
        blended = torch.zeros_like(x)
        for start, weight in zip(self.starts, self.weights):
            end = start + self.window_frames
            estimate = guided_epsilon(x[:, start:end], steps, self.conditioning[:, start:end], self.scale, self.model)
            blended[:, start:end] += weight.view(1, -1, 1) * estimate
        return blended / self.total.view(1, -1, 1)


@torch.no_grad()
def sample(
    model: DenoiserModel,
    schedule: NoiseSchedule,
    conditioning: np.ndarray,
    scale: float,
    seed: int,
    window_frames: Optional[int] = None,
    window_hop: Optional[int] = None,
    crossfade_frames: int = 30,
) -> np.ndarray:
    """
    Draw one pose-feature sequence for a T x conditioning_dim conditioning stream.

    Args:
        model: Trained denoiser
        schedule: Schedule the model was trained with
        conditioning: T x conditioning_dim matrix
        scale: Guidance scale gamma
        seed: Sampling seed; identical inputs and seed give identical output
        window_frames: Training window length; None processes the sequence in one pass
        window_hop: Hop between inference windows
        crossfade_frames: Blend length where windows meet

    Returns:
        T x pose_dim de-standardized features

    Raises:
        DiffusionError: If the conditioning width does not match the model
    """
    conditioning = np.asarray(conditioning)
    if conditioning.ndim != 2 or conditioning.shape[1] != model.conditioning_dim:
        raise DiffusionError(
            f"Conditioning of shape {conditioning.shape} does not match model width {model.conditioning_dim}"
        )
    model.eval()
    length = conditioning.shape[0]
    cond = torch.as_tensor(conditioning, dtype=torch.float32).unsqueeze(0)
    window = window_frames or length
    epsilon_fn = WindowedEpsilon(model, cond, scale, window, window_hop or window, crossfade_frames)

    generator = torch.Generator()
    generator.manual_seed(seed)
    features = ancestral_sample(epsilon_fn, schedule, (1, length, model.pose_dim), generator)
    logger.debug("Sampled %d frames with guidance scale %.3f", length, scale)
    return model.destandardize(features).squeeze(0).double().numpy()


def features_to_pose(
    features: np.ndarray,
    skeleton: Skeleton,
    frame_rate: float,
    includes_root_translation: bool = False,
    tpose: Optional[np.ndarray] = None,
) -> PoseSequence:
    """Wrap sampled features as a pose sequence, re-canonicalizing every expmap."""
    features = np.array(features, dtype=np.float64)
    start = 3 if includes_root_translation else 0
    features[:, start:] = canonicalize_expmap(
        features[:, start:].reshape(len(features), -1, 3)
    ).reshape(len(features), -1)
    return PoseSequence(
        skeleton=skeleton,
        frames=features,
        frame_rate=frame_rate,
        includes_root_translation=includes_root_translation,
        tpose=tpose,
    )
