"""
Dual-encoder contrastive model over speech-text windows and motion windows.
"""
from typing import Any, Dict, Optional, Tuple
import logging
import math

import torch
from torch import nn
import torch.nn.functional as F

from gestdiff.core.errors import DataError
from gestdiff.core.pipeline_config import CsmpConfig
from gestdiff.neural.attention import TransformerStack


logger = logging.getLogger(__name__)


class CsmpError(DataError):
    """Raised for invalid contrastive-model inputs or training setups."""
    pass


class CsmpModel(nn.Module):
    """
    Two relative-position transformer encoders with linear input maps (continuous
    inputs, no token embedding) and projections into a shared 512-d space.

    The temperature is stored as a learnable log-scale (logits are multiplied by
    exp(logit_scale)) and clamped so the temperature never drops below
    `min_temperature`.
    """

    def __init__(
        self,
        speech_dim: int,
        motion_dim: int,
        model_dim: int = 256,
        layers: int = 4,
        heads: int = 4,
        ff_dim: int = 512,
        max_relative_distance: int = 64,
        context_length: int = 500,
        projection_dim: int = 512,
        temperature_init: float = 0.07,
        min_temperature: float = 0.01,
    ):
        super().__init__()
        self.hyperparameters: Dict[str, Any] = {
            "speech_dim": speech_dim,
            "motion_dim": motion_dim,
            "model_dim": model_dim,
            "layers": layers,
            "heads": heads,
            "ff_dim": ff_dim,
            "max_relative_distance": max_relative_distance,
            "context_length": context_length,
            "projection_dim": projection_dim,
            "temperature_init": temperature_init,
            "min_temperature": min_temperature,
        }
        self.speech_dim = speech_dim
        self.motion_dim = motion_dim
        self.context_length = context_length
        self.max_logit_scale = math.log(1.0 / min_temperature)

        self.speech_input = nn.Linear(speech_dim, model_dim)
        self.speech_encoder = TransformerStack(model_dim, layers, heads, ff_dim, max_relative_distance, context_length)
        self.speech_projection = nn.Linear(model_dim, projection_dim)

        self.motion_input = nn.Linear(motion_dim, model_dim)
        self.motion_encoder = TransformerStack(model_dim, layers, heads, ff_dim, max_relative_distance, context_length)
        self.motion_projection = nn.Linear(model_dim, projection_dim)

        self.logit_scale = nn.Parameter(torch.tensor(math.log(1.0 / temperature_init)))

    @classmethod
    def from_config(cls, settings: CsmpConfig, motion_dim: int) -> "CsmpModel":
        return cls(
            speech_dim=settings.speech_dim,
            motion_dim=motion_dim,
            model_dim=settings.model_dim,
            layers=settings.layers,
            heads=settings.heads,
            ff_dim=settings.ff_dim,
            max_relative_distance=settings.max_relative_distance,
            context_length=settings.context_length,
            projection_dim=settings.projection_dim,
            temperature_init=settings.temperature_init,
            min_temperature=settings.min_temperature,
        )

    @classmethod
    def from_hyperparameters(cls, hyperparameters: Dict[str, Any]) -> "CsmpModel":
        known = {key: hyperparameters[key] for key in (
            "speech_dim", "motion_dim", "model_dim", "layers", "heads", "ff_dim",
            "max_relative_distance", "context_length", "projection_dim",
            "temperature_init", "min_temperature",
        )}
        return cls(**known)

    @property
    def temperature(self) -> torch.Tensor:
        return torch.exp(-self.logit_scale.clamp(max=self.max_logit_scale))

    def speech_frames(self, speech: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Per-frame projected speech-text features, B x T x projection_dim (not normalized)."""
        if speech.shape[-1] != self.speech_dim:
            raise CsmpError(f"Speech input has width {speech.shape[-1]}, model expects {self.speech_dim}")
        return self.speech_projection(self.speech_encoder(self.speech_input(speech), mask))

    def motion_frames(self, motion: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Per-frame projected motion features, B x T x projection_dim (not normalized)."""
        if motion.shape[-1] != self.motion_dim:
            raise CsmpError(f"Motion input has width {motion.shape[-1]}, model expects {self.motion_dim}")
        return self.motion_projection(self.motion_encoder(self.motion_input(motion), mask))

    def encode_pair(
        self,
        speech: torch.Tensor,
        motion: torch.Tensor,
        mask: Optional[torch.Tensor] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Pool, project and L2-normalize a batch of window pairs.

        Projection is affine, so pooling projected frames equals projecting
        pooled encoder states.

        Args:
            speech: B x T x speech_dim
            motion: B x T x motion_dim
            mask: Optional B x T validity mask

        Returns:
            (u, v), each B x projection_dim with unit rows

        Raises:
            CsmpError: If a window has no valid frame
        """
        if mask is None:
            mask = torch.ones(speech.shape[:2], dtype=torch.bool)
        counts = mask.sum(dim=1)
        if bool((counts == 0).any()):
            raise CsmpError("Cannot encode a window with no valid frames")
        weights = (mask.to(speech.dtype) / counts.unsqueeze(1).to(speech.dtype)).unsqueeze(-1)
        u = (self.speech_frames(speech, mask) * weights).sum(dim=1)
        v = (self.motion_frames(motion, mask) * weights).sum(dim=1)
        return F.normalize(u, dim=-1), F.normalize(v, dim=-1)
