"""
Adaptive-moment optimizer with a NaN guard and exportable moments.
"""
from typing import Dict, Iterable, List, Tuple
import logging

import torch
from torch import nn

from gestdiff.core.errors import DataError


logger = logging.getLogger(__name__)

MOMENT_PREFIX = "optim."


class OptimizerStepError(DataError):
    """Raised when a step is rejected because gradients are not finite."""
    pass


class AdamOptimizer:
    """
    torch.optim.Adam over named parameters.

    A step whose gradients contain NaN or infinite values is rejected before
    any parameter or moment changes.
    """

    def __init__(
        self,
        named_parameters: Iterable[Tuple[str, nn.Parameter]],
        learning_rate: float,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.named_parameters: List[Tuple[str, nn.Parameter]] = list(named_parameters)
        self.optimizer = torch.optim.Adam(
            [param for _, param in self.named_parameters], lr=learning_rate, betas=betas, eps=eps
        )

    def zero_grad(self) -> None:
        self.optimizer.zero_grad(set_to_none=True)

    def step(self) -> None:
        """
        Apply one bias-corrected Adam update.

        Raises:
            OptimizerStepError: Naming every parameter with non-finite gradients
        """
        bad = [
            name for name, param in self.named_parameters
            if param.grad is not None and not bool(torch.isfinite(param.grad).all())
        ]
        if bad:
            raise OptimizerStepError(f"Step rejected: non-finite gradients in {', '.join(bad)}")
        self.optimizer.step()

    def moment_tensors(self) -> Dict[str, torch.Tensor]:
        """Adam state as named tensors (`optim.<param>.exp_avg`, `.exp_avg_sq`, `.step`)."""
        records: Dict[str, torch.Tensor] = {}
        for name, param in self.named_parameters:
            state = self.optimizer.state.get(param)
            if not state:
                continue
            for key in ("exp_avg", "exp_avg_sq", "step"):
                records[f"{MOMENT_PREFIX}{name}.{key}"] = torch.as_tensor(state[key]).detach().clone()
        return records

    def load_moment_tensors(self, records: Dict[str, torch.Tensor]) -> None:
        """Restore state exported by moment_tensors(); parameters without records start fresh."""
        for name, param in self.named_parameters:
            prefix = f"{MOMENT_PREFIX}{name}."
            if f"{prefix}step" not in records:
                continue
            self.optimizer.state[param] = {
                "step": records[f"{prefix}step"].detach().clone().to(torch.float32).reshape(()),
                "exp_avg": records[f"{prefix}exp_avg"].detach().clone().to(param.dtype),
                "exp_avg_sq": records[f"{prefix}exp_avg_sq"].detach().clone().to(param.dtype),
            }
