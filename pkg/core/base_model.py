"""Base class for measure-dependent SDE coefficients."""

from abc import ABC, abstractmethod

import numpy as np

from .measures import ParticleCloud


class ModelSpec(ABC):
    """
    Coefficients b(t, x, mu) and sigma(t, x, mu) of a McKean-Vlasov SDE.

    Subclasses implement ``drift`` and ``diffusion`` on batches: ``x`` has
    shape (n, m) and the results have shapes (n, m) and (n, m, d). Evaluation
    must not mutate any state so particle chunks can run concurrently.
    """

    kind: str = "custom"

    def __init__(self, dim_state: int = 1, dim_noise: int = 1):
        if dim_state < 1 or dim_noise < 1:
            raise ValueError("state and noise dimensions must be positive")
        self.dim_state = dim_state
        self.dim_noise = dim_noise

    @property
    def interacting(self) -> bool:
        """Whether the coefficients read the measure argument at all."""
        return True

    @abstractmethod
    def drift(self, t: float, x: np.ndarray, cloud: ParticleCloud) -> np.ndarray:
        """Drift for a batch of states. Implement this in your model."""
        pass

    @abstractmethod
    def diffusion(self, t: float, x: np.ndarray, cloud: ParticleCloud) -> np.ndarray:
        """Diffusion matrices for a batch of states. Implement this in your model."""
        pass

    # checked entry points ----------------------------------------------------

    def _as_batch(self, x, cloud: ParticleCloud):
        arr = np.asarray(x, dtype=float)
        single = arr.ndim <= 1
        arr = arr.reshape(1, -1) if single else arr
        if arr.shape[1] != self.dim_state:
            raise ValueError(f"state has dimension {arr.shape[1]}, model expects {self.dim_state}")
        if cloud.dim != self.dim_state:
            raise ValueError(f"cloud has dimension {cloud.dim}, model expects {self.dim_state}")
        return arr, single

    def eval_drift(self, t: float, x, cloud: ParticleCloud) -> np.ndarray:
        """Drift at one state (shape (m,)) or a batch (shape (n, m))."""
        batch, single = self._as_batch(x, cloud)
        out = np.asarray(self.drift(t, batch, cloud), dtype=float)
        if out.shape != batch.shape:
            raise ValueError(f"drift returned shape {out.shape}, expected {batch.shape}")
        if not np.all(np.isfinite(out)):
            raise ValueError(f"drift is not finite at t={t}")
        return out[0] if single else out

    def eval_diffusion(self, t: float, x, cloud: ParticleCloud) -> np.ndarray:
        """Diffusion at one state (shape (m, d)) or a batch (shape (n, m, d))."""
        batch, single = self._as_batch(x, cloud)
        out = np.asarray(self.diffusion(t, batch, cloud), dtype=float)
        expected = (batch.shape[0], self.dim_state, self.dim_noise)
        if out.shape != expected:
            raise ValueError(f"diffusion returned shape {out.shape}, expected {expected}")
        if not np.all(np.isfinite(out)):
            raise ValueError(f"diffusion is not finite at t={t}")
        return out[0] if single else out
