"""
Seed derivation. Every training step draws from generators derived from
(root seed, step), so a resumed run sees exactly the draws of an
uninterrupted one.
"""
import numpy as np
import torch


def derive_seed(*keys: int) -> int:
    """Mix non-negative integer keys into one 63-bit seed."""
    state = np.random.SeedSequence([int(key) for key in keys]).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31 | int(state[1]) >> 1) & ((1 << 63) - 1)


def step_generator(seed: int, step: int, stream: int = 0) -> torch.Generator:
    """torch.Generator for one step; `stream` separates independent uses within a step."""
    generator = torch.Generator()
    generator.manual_seed(derive_seed(seed, step, stream))
    return generator


def step_rng(seed: int, step: int, stream: int = 0) -> np.random.Generator:
    """numpy Generator counterpart of step_generator (index sampling)."""
    return np.random.default_rng(derive_seed(seed, step, stream))
