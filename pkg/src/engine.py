"""
╔══════════════════════════════════════════════════════════════════════════════╗
║                        INTERACTING PARTICLE ENGINE                            ║
║                                                                               ║
║  Euler-Maruyama for N particles driven by their own empirical law or by a    ║
║  frozen measure flow, synchronous coupling and empirical estimators.         ║
╚══════════════════════════════════════════════════════════════════════════════╝
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core.base_model import ModelSpec
from core.measures import MeasureFlow, ParticleCloud, pairwise_mean
from core.schemas import SimConfig
from core.time_functions import SampledCurve

logger = logging.getLogger(__name__)

PARTICLE_CHUNK = 1024
INIT_STREAM = 0
NOISE_STREAM = 1


class BlowUpError(RuntimeError):
    """A particle state became non-finite."""

    def __init__(self, step: int, time: float):
        super().__init__(f"non-finite state at step {step} (t={time:g})")
        self.step = step
        self.time = time


@dataclass(frozen=True)
class PathEnsemble:
    """Stored clouds of one run; with record_stride 1 these are the full paths."""
    flow: MeasureFlow
    seed: int
    model_kind: str

    @property
    def times(self) -> np.ndarray:
        return self.flow.times

    @property
    def n_particles(self) -> int:
        return self.flow.n_particles

    def paths(self) -> np.ndarray:
        """(N, K, m) view of the per-particle trajectories."""
        return np.swapaxes(self.flow.points, 0, 1)


# ══════════════════════════════════════════════════════════════════════════════
#  RANDOM STREAMS
# ══════════════════════════════════════════════════════════════════════════════

def stream_generator(seed: int, stream: int, step: int = 0) -> np.random.Generator:
    """Counter-based generator for (seed, stream, step); independent of call order."""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(stream, step))
    return np.random.Generator(np.random.Philox(sequence))


def noise_block(seed: int, step: int, n: int, d: int) -> np.ndarray:
    """Standard normals for all particles at one step, row i belongs to particle i."""
    return stream_generator(seed, NOISE_STREAM, step).standard_normal((n, d))


def sample_initial(init, n: int, dim: int, seed: int) -> np.ndarray:
    rng = stream_generator(seed, INIT_STREAM)
    x0 = np.asarray(init.sample(n, rng) if hasattr(init, "sample") else init(n, rng), dtype=float)
    x0 = x0.reshape(n, -1)
    if x0.shape[1] != dim:
        raise ValueError(f"initial condition has dimension {x0.shape[1]}, model expects {dim}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial condition produced non-finite values")
    return x0


# ══════════════════════════════════════════════════════════════════════════════
#  SIMULATION
# ══════════════════════════════════════════════════════════════════════════════

def _resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        return os.cpu_count() or 1
    if threads < 1:
        raise ValueError("threads must be positive")
    return threads


def simulate(
    model: ModelSpec,
    init,
    cfg: SimConfig,
    frozen_flow: Optional[MeasureFlow] = None,
    threads: Optional[int] = None,
) -> PathEnsemble:
    """
    Euler-Maruyama X_{k+1} = X_k + b dt + sigma sqrt(dt) Z_k for all particles.

    The measure argument at step k is the frozen flow's cloud when given and
    the particles' own empirical cloud otherwise. All particles advance
    against the same snapshot. Results depend on (seed, cfg, model) only.
    """
    grid = cfg.grid
    n, m, d = cfg.n_particles, model.dim_state, model.dim_noise
    times = grid.times()
    if frozen_flow is not None:
        if len(frozen_flow) != grid.steps + 1 or not np.allclose(frozen_flow.times, times):
            raise ValueError("frozen flow is not defined on the simulation grid")
        if frozen_flow.dim != m:
            raise ValueError(f"frozen flow lives in R^{frozen_flow.dim}, model in R^{m}")
    elif model.interacting and n < 2:
        raise ValueError("interacting models need at least two particles")

    workers = _resolve_threads(threads)
    recorded = cfg.recorded_steps()
    store = np.empty((recorded.size, n, m))
    x = sample_initial(init, n, m, cfg.seed)
    store[0] = x
    slot = 1
    sqrt_dt = math.sqrt(grid.dt)
    chunks = [slice(i, min(i + PARTICLE_CHUNK, n)) for i in range(0, n, PARTICLE_CHUNK)]
    logger.debug("simulating %s: N=%d steps=%d threads=%d", model.kind, n, grid.steps, workers)

    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 and len(chunks) > 1 else None
    try:
        for k in range(grid.steps):
            t = float(times[k])
            cloud = frozen_flow.cloud(k) if frozen_flow is not None else ParticleCloud(x, copy=False)
            if model.interacting:
                _ = cloud.mean  # reduce once before the particles fan out
            z = noise_block(cfg.seed, k, n, d)
            x_next = np.empty_like(x)

            def advance(part: slice) -> None:
                xs = x[part]
                drift = np.asarray(model.drift(t, xs, cloud), dtype=float)
                sigma = np.asarray(model.diffusion(t, xs, cloud), dtype=float)
                shock = np.sum(sigma * z[part][:, None, :], axis=2)
                x_next[part] = xs + drift * grid.dt + shock * sqrt_dt

            if executor is None:
                for part in chunks:
                    advance(part)
            else:
                list(executor.map(advance, chunks))

            if not np.all(np.isfinite(x_next)):
                logger.error("blow-up at step %d (t=%g)", k + 1, times[k + 1])
                raise BlowUpError(k + 1, float(times[k + 1]))
            x = x_next
            if slot < recorded.size and recorded[slot] == k + 1:
                store[slot] = x
                slot += 1
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    return PathEnsemble(flow=MeasureFlow(times[recorded], store), seed=cfg.seed, model_kind=model.kind)


def simulate_coupled(
    model_a: ModelSpec,
    model_b: ModelSpec,
    init_a,
    init_b,
    cfg: SimConfig,
    threads: Optional[int] = None,
) -> Tuple[PathEnsemble, PathEnsemble]:
    """Two self-interacting ensembles driven by identical noise increments."""
    if (model_a.dim_state, model_a.dim_noise) != (model_b.dim_state, model_b.dim_noise):
        raise ValueError("coupled models need identical state and noise dimensions")
    first = simulate(model_a, init_a, cfg, threads=threads)
    second = simulate(model_b, init_b, cfg, threads=threads)
    return first, second


# ══════════════════════════════════════════════════════════════════════════════
#  ESTIMATORS
# ══════════════════════════════════════════════════════════════════════════════

def difference_flow(ens_a: PathEnsemble, ens_b: PathEnsemble) -> MeasureFlow:
    """Per-particle differences Y = X^b - X^a as a flow."""
    if ens_a.flow.points.shape != ens_b.flow.points.shape or not np.array_equal(ens_a.times, ens_b.times):
        raise ValueError("ensembles are not on the same grid")
    return MeasureFlow(ens_a.times, ens_b.flow.points - ens_a.flow.points)


def moment_curve(ensemble, p: float) -> SampledCurve:
    """E|X_t|^p per stored time, with the Monte Carlo standard error."""
    flow = ensemble.flow if isinstance(ensemble, PathEnsemble) else ensemble
    if not p >= 1:
        raise ValueError(f"order must be >= 1, got {p}")
    powered = flow.norms() ** p
    values = pairwise_mean(np.ascontiguousarray(powered.T))
    n = flow.n_particles
    if n > 1:
        stderr = np.std(powered, axis=1, ddof=1) / math.sqrt(n)
    else:
        stderr = np.zeros_like(values)
    return SampledCurve(times=flow.times, values=np.asarray(values), stderr=stderr)


@dataclass(frozen=True)
class PathwiseEstimate:
    per_path: np.ndarray
    maximum: float
    mean: float
    stderr: float
    excluded: int
    window: Tuple[float, float]


def pathwise_exponent(
    diff_norms,
    times,
    alpha: float,
    window: Tuple[float, float],
    origin: Optional[float] = None,
) -> PathwiseEstimate:
    """
    Finite-horizon proxy of limsup (t - t0)^-alpha log|Y_t|: per path the
    maximum over the latter half of the window. Paths touching zero there
    are dropped. ``origin`` is t0, the first grid time unless given.

    ``diff_norms`` has shape (K, N) on ``times``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    norms = np.asarray(diff_norms, dtype=float)
    times = np.asarray(times, dtype=float)
    if norms.ndim == 1:
        norms = norms[:, None]
    t0 = float(times[0]) if origin is None else float(origin)
    t_lo, t_hi = window
    start = 0.5 * (t_lo + t_hi)
    mask = (times >= start) & (times <= t_hi) & (times > t0)
    if not np.any(mask):
        raise ValueError(f"window [{t_lo}, {t_hi}] contains no usable grid times")

    block = norms[mask]
    alive = np.all(block > 0, axis=0)
    excluded = int(np.count_nonzero(~alive))
    if not np.any(alive):
        raise ValueError("every path hits zero inside the window")
    scaled = np.log(block[:, alive]) / (times[mask][:, None] - t0) ** alpha
    per_path = np.max(scaled, axis=0)
    spread = float(np.std(per_path, ddof=1) / math.sqrt(per_path.size)) if per_path.size > 1 else 0.0
    return PathwiseEstimate(
        per_path=per_path,
        maximum=float(np.max(per_path)),
        mean=float(pairwise_mean(per_path)),
        stderr=spread,
        excluded=excluded,
        window=(float(t_lo), float(t_hi)),
    )


def pathwise_exponent_of(
    ens_a: PathEnsemble,
    ens_b: PathEnsemble,
    alpha: float,
    window: Optional[Tuple[float, float]] = None,
) -> PathwiseEstimate:
    diff = difference_flow(ens_a, ens_b)
    times = diff.times
    if window is None:
        window = (0.5 * (times[0] + times[-1]), float(times[-1]))
    return pathwise_exponent(diff.norms(), times, alpha, window)
