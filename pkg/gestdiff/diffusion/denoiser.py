"""
Residual ε-prediction network: DiffWave-style gated residual blocks whose
mixing layer is a stack of translation-invariant transformers.
"""
from typing import Any, Dict, Optional, Tuple
import logging
import math

import torch
from torch import nn
import torch.nn.functional as F

from gestdiff.core.errors import DataError
from gestdiff.neural.attention import TransformerStack


logger = logging.getLogger(__name__)

FEATURE_STD_FLOOR = 1e-3


class DiffusionError(DataError):
    """Raised for invalid diffusion inputs, training setups or sampling requests."""
    pass


def step_embedding(steps: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer diffusion steps, B -> B x dim."""
    half = dim // 2
    frequencies = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / max(half, 1))
    angles = steps.to(torch.float32).unsqueeze(1) * frequencies.unsqueeze(0)
    embedding = torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)
    if dim % 2:
        embedding = F.pad(embedding, (0, 1))
    return embedding


class ResidualBlock(nn.Module):
    """
    x + step -> transformers -> (+ conditioning) -> tanh * sigmoid gate -> (residual, skip).

    Conditioning enters additively through a per-block projection.
    """

    def __init__(
        self,
        model_dim: int,
        conditioning_dim: int,
        layers: int,
        heads: int,
        ff_dim: int,
        max_relative_distance: int,
    ):
        super().__init__()
        self.step_projection = nn.Linear(model_dim, model_dim)
        self.transformers = TransformerStack(model_dim, layers, heads, ff_dim, max_relative_distance)
        self.mid_projection = nn.Linear(model_dim, 2 * model_dim)
        self.conditioning_projection = nn.Linear(conditioning_dim, 2 * model_dim)
        self.output_projection = nn.Linear(model_dim, 2 * model_dim)

    def forward(self, x: torch.Tensor, step: torch.Tensor, conditioning: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        h = x + self.step_projection(step).unsqueeze(1)
        h = self.mid_projection(self.transformers(h)) + self.conditioning_projection(conditioning)
        gate, filtered = h.chunk(2, dim=-1)
        h = torch.sigmoid(gate) * torch.tanh(filtered)
        residual, skip = self.output_projection(h).chunk(2, dim=-1)
        return (x + residual) / math.sqrt(2.0), skip


class DenoiserModel(nn.Module):
    """
    Predicts the noise in x_n given the step n and per-frame conditioning.

    Passing `conditioning=None` (or dropping items via `drop_mask`) substitutes
    the learned null token for every frame. The model also carries the
    per-dimension feature mean and std used to standardize poses.
    """

    def __init__(
        self,
        pose_dim: int,
        conditioning_dim: int = 1024,
        model_dim: int = 256,
        residual_blocks: int = 15,
        layers_per_block: int = 3,
        heads: int = 4,
        ff_dim: int = 512,
        max_relative_distance: int = 64,
        step_embedding_dim: int = 128,
    ):
        super().__init__()
        self.hyperparameters: Dict[str, Any] = {
            "pose_dim": pose_dim,
            "conditioning_dim": conditioning_dim,
            "model_dim": model_dim,
            "residual_blocks": residual_blocks,
            "layers_per_block": layers_per_block,
            "heads": heads,
            "ff_dim": ff_dim,
            "max_relative_distance": max_relative_distance,
            "step_embedding_dim": step_embedding_dim,
        }
        self.pose_dim = pose_dim
        self.conditioning_dim = conditioning_dim
        self.step_embedding_dim = step_embedding_dim

        self.input_projection = nn.Linear(pose_dim, model_dim)
        self.step_mlp = nn.Sequential(
            nn.Linear(step_embedding_dim, model_dim),
            nn.SiLU(),
            nn.Linear(model_dim, model_dim),
            nn.SiLU(),
        )
        self.null_conditioning = nn.Parameter(torch.randn(conditioning_dim) * 0.02)
        self.blocks = nn.ModuleList(
            ResidualBlock(model_dim, conditioning_dim, layers_per_block, heads, ff_dim, max_relative_distance)
            for _ in range(residual_blocks)
        )
        self.skip_projection = nn.Linear(model_dim, model_dim)
        self.output_projection = nn.Linear(model_dim, pose_dim)
        nn.init.zeros_(self.output_projection.weight)
        nn.init.zeros_(self.output_projection.bias)

        self.register_buffer("feature_mean", torch.zeros(pose_dim))
        self.register_buffer("feature_std", torch.ones(pose_dim))

    @classmethod
    def from_hyperparameters(cls, hyperparameters: Dict[str, Any]) -> "DenoiserModel":
        return cls(**{key: hyperparameters[key] for key in (
            "pose_dim", "conditioning_dim", "model_dim", "residual_blocks", "layers_per_block",
            "heads", "ff_dim", "max_relative_distance", "step_embedding_dim",
        )})

    def set_standardization(self, mean: torch.Tensor, std: torch.Tensor) -> None:
        self.feature_mean.copy_(mean)
        self.feature_std.copy_(std.clamp(min=FEATURE_STD_FLOOR))

    def standardize(self, frames: torch.Tensor) -> torch.Tensor:
        return (frames - self.feature_mean) / self.feature_std

    def destandardize(self, features: torch.Tensor) -> torch.Tensor:
        return features * self.feature_std + self.feature_mean

    def forward(
        self,
        x: torch.Tensor,
        steps: torch.Tensor,
        conditioning: Optional[torch.Tensor] = None,
        drop_mask: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        """
        Args:
            x: B x T x pose_dim noisy features
            steps: B integer steps in [1, N]
            conditioning: B x T x conditioning_dim, or None for the unconditioned pass
            drop_mask: Optional B booleans; True items use the null token

        Returns:
            Predicted noise, B x T x pose_dim

        Raises:
            DiffusionError: If the pose or conditioning widths do not match
        """
        batch, length, width = x.shape
        if width != self.pose_dim:
            raise DiffusionError(f"Pose features have width {width}, model expects {self.pose_dim}")
        null = self.null_conditioning.to(x.dtype).expand(batch, length, self.conditioning_dim)
        if conditioning is None:
            conditioning = null
        else:
            if tuple(conditioning.shape) != (batch, length, self.conditioning_dim):
                raise DiffusionError(
                    f"Conditioning shape {tuple(conditioning.shape)} does not match "
                    f"({batch}, {length}, {self.conditioning_dim})"
                )
            if drop_mask is not None:
                conditioning = torch.where(drop_mask.view(batch, 1, 1), null, conditioning)

        step = self.step_mlp(step_embedding(steps, self.step_embedding_dim).to(x.dtype))
        h = F.relu(self.input_projection(x))
        skip_total = torch.zeros_like(h)
        for block in self.blocks:
            h, skip = block(h, step, conditioning)
            skip_total = skip_total + skip
        h = F.relu(self.skip_projection(skip_total / math.sqrt(len(self.blocks))))
        return self.output_projection(h)
