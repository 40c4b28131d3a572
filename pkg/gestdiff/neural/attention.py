"""
Translation-invariant transformer encoder.

Attention logits are content scores plus a learned per-head bias indexed by the
clipped frame distance i - j, so the operator depends on relative position only.
"""
from typing import Optional
import logging
import math

import torch
from torch import nn

from gestdiff.core.errors import DataError


logger = logging.getLogger(__name__)


class ShapeError(DataError):
    """Raised when tensor shapes do not fit a layer."""
    pass


class ContextLengthError(DataError):
    """Raised when a sequence is longer than a stack's configured context."""
    pass


def relative_distance_index(length: int, max_distance: int) -> torch.Tensor:
    """T x T table of clip(i - j, -max, max) + max, i.e. indices into a 2*max+1 bias table."""
    positions = torch.arange(length)
    distance = positions.unsqueeze(1) - positions.unsqueeze(0)
    return distance.clamp(-max_distance, max_distance) + max_distance


class RelativeSelfAttention(nn.Module):
    """Multi-head self-attention with a clipped relative-position bias."""

    def __init__(self, model_dim: int, heads: int, max_relative_distance: int = 64):
        super().__init__()
        if model_dim % heads != 0:
            raise ShapeError(f"Model dim {model_dim} is not divisible by {heads} heads")
        self.model_dim = model_dim
        self.heads = heads
        self.head_dim = model_dim // heads
        self.max_relative_distance = max_relative_distance

        self.query = nn.Linear(model_dim, model_dim)
        self.key = nn.Linear(model_dim, model_dim)
        self.value = nn.Linear(model_dim, model_dim)
        self.output = nn.Linear(model_dim, model_dim)
        self.relative_bias = nn.Parameter(torch.zeros(heads, 2 * max_relative_distance + 1))
        self.last_weights: Optional[torch.Tensor] = None

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        batch, length, _ = x.shape
        return x.view(batch, length, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        Args:
            x: B x T x model_dim
            mask: Optional B x T boolean, True on valid frames; invalid frames are never attended to

        Returns:
            B x T x model_dim
        """
        batch, length, _ = x.shape
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))

        logits = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        index = relative_distance_index(length, self.max_relative_distance).to(x.device)
        logits = logits + self.relative_bias[:, index].unsqueeze(0)
        if mask is not None:
            logits = logits.masked_fill(~mask[:, None, None, :], float("-inf"))

        weights = torch.softmax(logits, dim=-1)
        self.last_weights = weights.detach()
        context = (weights @ v).transpose(1, 2).reshape(batch, length, self.model_dim)
        return self.output(context)


class TransformerLayer(nn.Module):
    """Pre-norm encoder layer: x + attn(norm(x)), then x + ff(norm(x))."""

    def __init__(self, model_dim: int, heads: int, ff_dim: int, max_relative_distance: int = 64):
        super().__init__()
        self.attention_norm = nn.LayerNorm(model_dim)
        self.attention = RelativeSelfAttention(model_dim, heads, max_relative_distance)
        self.feed_forward_norm = nn.LayerNorm(model_dim)
        self.feed_forward = nn.Sequential(
            nn.Linear(model_dim, ff_dim),
            nn.GELU(),
            nn.Linear(ff_dim, model_dim),
        )

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        x = x + self.attention(self.attention_norm(x), mask)
        return x + self.feed_forward(self.feed_forward_norm(x))


class TransformerStack(nn.Module):
    """
    L pre-norm relative-position layers followed by a final layer norm.

    Args:
        model_dim: Width of every layer
        layers: Number of layers
        heads: Attention heads per layer (must divide model_dim)
        ff_dim: Feed-forward hidden width
        max_relative_distance: Distances beyond this share one bias entry
        context_length: Longest accepted sequence, None for unbounded
    """

    def __init__(
        self,
        model_dim: int,
        layers: int,
        heads: int,
        ff_dim: int,
        max_relative_distance: int = 64,
        context_length: Optional[int] = None,
    ):
        super().__init__()
        self.model_dim = model_dim
        self.context_length = context_length
        self.layers = nn.ModuleList(
            TransformerLayer(model_dim, heads, ff_dim, max_relative_distance) for _ in range(layers)
        )
        self.final_norm = nn.LayerNorm(model_dim)

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        Args:
            x: B x T x model_dim
            mask: Optional B x T boolean validity mask

        Raises:
            ShapeError: If the feature width or mask shape is wrong
            ContextLengthError: If T exceeds the configured context
        """
        if x.dim() != 3 or x.shape[-1] != self.model_dim:
            raise ShapeError(f"Expected B x T x {self.model_dim} input (got {tuple(x.shape)})")
        if self.context_length is not None and x.shape[1] > self.context_length:
            raise ContextLengthError(f"Sequence of {x.shape[1]} frames exceeds context of {self.context_length}")
        if mask is not None and tuple(mask.shape) != tuple(x.shape[:2]):
            raise ShapeError(f"Mask shape {tuple(mask.shape)} does not match input {tuple(x.shape[:2])}")
        for layer in self.layers:
            x = layer(x, mask)
        return self.final_norm(x)


def attend_relative(x: torch.Tensor, stack: TransformerStack, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Run a stack on one T x d sequence or a B x T x d batch."""
    if x.dim() == 2:
        return stack(x.unsqueeze(0), None if mask is None else mask.unsqueeze(0)).squeeze(0)
    return stack(x, mask)
