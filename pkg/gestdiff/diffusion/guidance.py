"""
Classifier-free guidance.
"""
from typing import Union

import numpy as np
import torch

from gestdiff.diffusion.denoiser import DenoiserModel


ArrayLike = Union[np.ndarray, torch.Tensor]


def combine_guidance(epsilon_conditioned: ArrayLike, epsilon_unconditioned: ArrayLike, scale: float) -> ArrayLike:
    """eps_c + scale * (eps_c - eps_u)."""
    return epsilon_conditioned + scale * (epsilon_conditioned - epsilon_unconditioned)


@torch.no_grad()
def guided_epsilon(
    x: torch.Tensor,
    steps: torch.Tensor,
    conditioning: torch.Tensor,
    scale: float,
    model: DenoiserModel,
) -> torch.Tensor:
    """
    Guided noise estimate; the unconditioned branch runs on the learned null token.

    With scale 0 the unconditioned pass is skipped and the conditioned estimate
    is returned as is.
    """
    epsilon_conditioned = model(x, steps, conditioning)
    if scale == 0:
        return epsilon_conditioned
    epsilon_unconditioned = model(x, steps, None)
    return combine_guidance(epsilon_conditioned, epsilon_unconditioned, scale)
