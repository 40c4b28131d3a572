"""
Noise schedules and the closed-form forward corruption.
"""
from typing import Union
import math

import numpy as np
import torch

from gestdiff.domain.diffusion_models import NoiseSchedule, ScheduleError


SCHEDULE_KINDS = ("linear", "quadratic")

ArrayLike = Union[np.ndarray, torch.Tensor]


def make_schedule(kind: str = "linear", num_steps: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """
    Build beta_1..beta_N.

    'linear' interpolates beta itself; 'quadratic' interpolates sqrt(beta).

    Raises:
        ScheduleError: Unless 0 < beta_start <= beta_end < 1 and N >= 1
    """
    if kind not in SCHEDULE_KINDS:
        raise ScheduleError(f"Unknown schedule kind '{kind}' (expected one of {SCHEDULE_KINDS})")
    if num_steps < 1:
        raise ScheduleError(f"Schedule needs N >= 1 (got: {num_steps})")
    if not 0 < beta_start <= beta_end < 1:
        raise ScheduleError(f"Schedule requires 0 < beta_start <= beta_end < 1 (got: {beta_start}, {beta_end})")
    if kind == "linear":
        betas = np.linspace(beta_start, beta_end, num_steps)
    else:
        betas = np.linspace(math.sqrt(beta_start), math.sqrt(beta_end), num_steps) ** 2
    return NoiseSchedule(betas=betas, kind=kind)


def schedule_from_betas(betas) -> NoiseSchedule:
    """Schedule from explicit beta values."""
    return NoiseSchedule(betas=np.asarray(betas, dtype=np.float64), kind="custom")


def forward_sample(x0: ArrayLike, n: int, schedule: NoiseSchedule, noise: ArrayLike) -> ArrayLike:
    """
    x_n = sqrt(abar_n) * x0 + sqrt(1 - abar_n) * noise.

    Works on numpy arrays and torch tensors alike.

    Raises:
        ScheduleError: If n is outside [1, N]
    """
    schedule.check_step(n)
    alpha_bar = schedule.alpha_bar(n)
    return math.sqrt(alpha_bar) * x0 + math.sqrt(1.0 - alpha_bar) * noise


def forward_sample_batch(x0: torch.Tensor, steps: torch.Tensor, schedule: NoiseSchedule, noise: torch.Tensor) -> torch.Tensor:
    """Batched forward_sample with one step index (1-based) per leading item."""
    alpha_bars = torch.as_tensor(schedule.alpha_bars, dtype=x0.dtype)[steps - 1]
    shape = (-1,) + (1,) * (x0.dim() - 1)
    return alpha_bars.sqrt().view(shape) * x0 + (1.0 - alpha_bars).sqrt().view(shape) * noise
