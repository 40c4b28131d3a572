"""
Numerical guards and the finite-difference gradient checker.
"""
from typing import Callable, Sequence

import torch

from gestdiff.core.errors import DataError


class NonFiniteError(DataError):
    """Raised when a forward pass or loss produces NaN or infinite values."""
    pass


def assert_finite(tensor: torch.Tensor, what: str) -> torch.Tensor:
    """
    Pass `tensor` through unchanged, raising if any entry is NaN or infinite.

    Raises:
        NonFiniteError: Naming `what` and the offending entry count
    """
    finite = torch.isfinite(tensor)
    if not bool(finite.all()):
        bad = int((~finite).sum())
        raise NonFiniteError(f"{what}: {bad} of {tensor.numel()} values are not finite")
    return tensor


def max_gradient_error(
    fn: Callable[[], torch.Tensor],
    params: Sequence[torch.Tensor],
    h: float = 1e-4,
) -> float:
    """
    Largest |analytic - central difference| / max(1, |analytic|) over every parameter entry.

    Args:
        fn: Closure returning a scalar built from `params`
        params: Leaf tensors with requires_grad=True (float64 recommended)
        h: Finite-difference step

    Returns:
        The worst relative error
    """
    for param in params:
        param.grad = None
    fn().backward()
    analytic = [param.grad.detach().clone() for param in params]

    worst = 0.0
    with torch.no_grad():
        for param, grad in zip(params, analytic):
            flat = param.view(-1)
            flat_grad = grad.view(-1)
            for index in range(flat.numel()):
                original = flat[index].item()
                flat[index] = original + h
                upper = fn().item()
                flat[index] = original - h
                lower = fn().item()
                flat[index] = original
                numeric = (upper - lower) / (2.0 * h)
                value = flat_grad[index].item()
                worst = max(worst, abs(value - numeric) / max(1.0, abs(value)))
    return worst
