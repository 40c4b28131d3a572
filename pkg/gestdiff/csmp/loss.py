"""
Symmetric contrastive objective and retrieval scoring.
"""
from typing import Union

import torch
import torch.nn.functional as F

from gestdiff.csmp.model import CsmpError


def similarity_logits(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """B x B dot products; entry [i, j] is exactly entry [j, i] of similarity_logits(v, u)."""
    return (u.unsqueeze(1) * v.unsqueeze(0)).sum(dim=-1)


def contrastive_loss(u: torch.Tensor, v: torch.Tensor, temperature: Union[float, torch.Tensor]) -> torch.Tensor:
    """
    Mean of row-wise and column-wise cross-entropy against diagonal targets.

    Args:
        u: B x k unit rows (speech side)
        v: B x k unit rows (motion side)
        temperature: Positive softmax temperature

    Returns:
        Scalar loss; 0 for B = 1 and ln B when all similarities are equal

    Raises:
        CsmpError: If temperature is not positive or the batches differ in shape
    """
    if float(temperature) <= 0:
        raise CsmpError(f"Temperature must be positive (got: {float(temperature)})")
    if u.shape != v.shape or u.dim() != 2 or u.shape[0] < 1:
        raise CsmpError(f"Embedding batches must share a B x k shape (got {tuple(u.shape)} and {tuple(v.shape)})")
    logits = similarity_logits(u, v) / temperature
    targets = torch.arange(u.shape[0])
    rows = F.cross_entropy(logits, targets)
    columns = F.cross_entropy(logits.t().contiguous(), targets)
    return 0.5 * (rows + columns)


def retrieval_accuracy(u: torch.Tensor, v: torch.Tensor) -> float:
    """Fraction of rows of u whose most similar row of v is their own partner."""
    predicted = similarity_logits(u, v).argmax(dim=1)
    return float((predicted == torch.arange(u.shape[0])).float().mean())
