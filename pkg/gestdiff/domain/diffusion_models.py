"""
Domain models for the diffusion stage: noise schedules and guidance settings.
"""
from typing import Any, Dict
from dataclasses import dataclass
import math

import numpy as np

from gestdiff.core.errors import UsageError


class ScheduleError(UsageError):
    """Raised when noise-schedule parameters are out of bounds."""
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Per-step noise variances beta_1..beta_N (stored 0-based) and derived products.

    alpha_bars[n - 1] is the signal retention after n steps; it is built by a
    running product so alpha_bars[n] == alpha_bars[n - 1] * alphas[n] exactly.
    """
    betas: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        betas = np.array(self.betas, dtype=np.float64).reshape(-1)
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        if betas.size < 1:
            raise ScheduleError("A schedule needs at least one step")
        if not np.all((betas > 0) & (betas < 1)):
            raise ScheduleError("Every beta must lie in (0, 1)")

        alpha_bars = np.empty_like(betas)
        running = 1.0
        for index, alpha in enumerate(1.0 - betas):
            running = running * alpha
            alpha_bars[index] = running
        alpha_bars.setflags(write=False)
        object.__setattr__(self, "_alpha_bars", alpha_bars)

    @property
    def num_steps(self) -> int:
        return self.betas.size

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return self._alpha_bars

    def beta(self, n: int) -> float:
        return float(self.betas[n - 1])

    def alpha_bar(self, n: int) -> float:
        """Cumulative product up to step n; step 0 gives 1."""
        return 1.0 if n == 0 else float(self._alpha_bars[n - 1])

    def posterior_variance(self, n: int) -> float:
        """(1 - abar_{n-1}) / (1 - abar_n) * beta_n; zero at n = 1."""
        return (1.0 - self.alpha_bar(n - 1)) / (1.0 - self.alpha_bar(n)) * self.beta(n)

    def check_step(self, n: int) -> None:
        if not 1 <= n <= self.num_steps:
            raise ScheduleError(f"Diffusion step {n} outside [1, {self.num_steps}]")

    def to_dict(self) -> Dict[str, Any]:
        """Schedule parameters for sidecars and logs."""
        return {
            "kind": self.kind,
            "num_steps": self.num_steps,
            "beta_start": float(self.betas[0]),
            "beta_end": float(self.betas[-1]),
            "final_alpha_bar": float(self._alpha_bars[-1]),
        }


@dataclass(frozen=True)
class GuidanceParams:
    """Classifier-free guidance: sampling scale and training-time conditioning dropout."""
    scale: float = 1.0
    dropout: float = 0.1

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale >= 0):
            raise ScheduleError(f"Guidance scale must be finite and >= 0 (got: {self.scale})")
        if not 0 <= self.dropout < 1:
            raise ScheduleError(f"Conditioning dropout must lie in [0, 1) (got: {self.dropout})")

    def to_dict(self) -> Dict[str, Any]:
        return {"scale": self.scale, "dropout": self.dropout}
