"""
Domain model for saved training state.
"""
from typing import Any, Dict
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ModelCheckpoint:
    """
    Named parameter tensors plus what is needed to rebuild and resume the model.

    Attributes:
        kind: Model family, 'csmp' or 'diffusion'
        hyperparameters: JSON-serializable architecture and preprocessing settings
        step: Completed training steps
        seed: Root seed of the run
        tensors: Name -> float32 array, including `optim.*` optimizer moments
    """
    kind: str
    hyperparameters: Dict[str, Any]
    step: int
    seed: int
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    def parameter_count(self) -> int:
        return int(sum(array.size for name, array in self.tensors.items() if not name.startswith("optim.")))

    def to_dict(self) -> Dict[str, Any]:
        """Summary for logs (tensor values omitted)."""
        return {
            "kind": self.kind,
            "step": self.step,
            "seed": self.seed,
            "parameters": self.parameter_count(),
            "records": len(self.tensors),
        }
