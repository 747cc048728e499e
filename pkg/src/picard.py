"""
╔══════════════════════════════════════════════════════════════════════════════╗
║                        PICARD ITERATION ON LAW FLOWS                          ║
║                                                                               ║
║  mu_n := Law(X^{xi, mu_{n-1}}) with common random numbers, the a-priori      ║
║  error series and the growth-invariant set check.                            ║
╚══════════════════════════════════════════════════════════════════════════════╝
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from core.base_model import ModelSpec
from core.measures import DEFAULT_ASSIGNMENT_CAP, MeasureFlow, ParticleCloud, flow_distance
from core.schemas import SimConfig
from core.time_functions import cumulative_integral, linear_comparison_bound

from .coefficients import GrowthProfile, LipschitzProfile, growth_coeffs, picard_coefficients
from .engine import moment_curve, sample_initial, simulate
from .models import profile_of

logger = logging.getLogger(__name__)

SERIES_RTOL = 1e-15
SERIES_MAX_TERMS = 100_000


@dataclass
class PicardState:
    """Iterates, sup-distances between neighbours and the error series per n."""
    iterates: List[MeasureFlow]
    distances: List[float] = field(default_factory=list)
    distance_curves: List[np.ndarray] = field(default_factory=list)
    bound_curve: List[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    lower_bound_metric: bool = False
    delta_sup: float = 0.0
    mc_sigma: float = 0.0
    p: float = 2.0

    @property
    def final(self) -> MeasureFlow:
        return self.iterates[-1]

    def to_report(self) -> Dict[str, object]:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "p": self.p,
            "distances": list(self.distances),
            "error_bounds": list(self.bound_curve),
            "delta_sup": self.delta_sup,
            "mc_sigma": self.mc_sigma,
            "lower_bound_metric": self.lower_bound_metric,
        }


# ══════════════════════════════════════════════════════════════════════════════
#  ERROR SERIES
# ══════════════════════════════════════════════════════════════════════════════

def error_bound(inner_integral: float, delta: float, c_pP: float, p: float, n: int) -> float:
    """
    delta * sum_{i >= n} (c^i / i!)^(1/p) * inner^(i/p).

    ``inner_integral`` is int_{t0}^t e^{int_s^t gamma_p^+} delta_p(s) ds at
    the time of interest and ``delta`` the initial discrepancy Delta(t).
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if inner_integral < 0 or delta < 0 or c_pP < 0:
        raise ValueError("inputs of the error series must be nonnegative")
    if not all(math.isfinite(v) for v in (inner_integral, delta, c_pP, p)):
        raise ValueError("inputs of the error series must be finite")
    if delta == 0.0:
        return 0.0
    base = c_pP * inner_integral
    if base == 0.0:
        return delta if n == 0 else 0.0

    log_base = math.log(base)
    total = 0.0
    for i in range(n, n + SERIES_MAX_TERMS):
        term = math.exp((i * log_base - math.lgamma(i + 1.0)) / p)
        total += term
        # terms only shrink once i exceeds the base
        if i > base and term < SERIES_RTOL * total:
            break
    return delta * total


def inner_integral_curve(times, gamma_p, delta_p) -> np.ndarray:
    """t -> int_{t0}^t e^{int_s^t gamma_p^+} delta_p(s) ds on the grid."""
    times = np.asarray(times, dtype=float)
    rate = np.maximum(np.broadcast_to(np.asarray(gamma_p, dtype=float), times.shape), 0.0)
    return linear_comparison_bound(times, rate, delta_p, 0.0)


def error_bound_curve(times, gamma_p, delta_p, delta_curve, c_pP: float, p: float, n: int) -> np.ndarray:
    inner = inner_integral_curve(times, gamma_p, delta_p)
    delta_curve = np.broadcast_to(np.asarray(delta_curve, dtype=float), inner.shape)
    return np.array([error_bound(float(i), float(d), c_pP, p, n) for i, d in zip(inner, delta_curve)])


# ══════════════════════════════════════════════════════════════════════════════
#  ITERATION
# ══════════════════════════════════════════════════════════════════════════════

def _moment_noise_floor(flow: MeasureFlow, p: float) -> float:
    """Standard error of the terminal W_p(mu, delta_0) estimate."""
    curve = moment_curve(flow, p)
    level = float(curve.values[-1])
    if level <= 0.0:
        return 0.0
    return float(level ** (1.0 / p - 1.0) / p * curve.stderr[-1])


def picard_solve(
    model: ModelSpec,
    init,
    cfg: SimConfig,
    mu0: Optional[MeasureFlow] = None,
    n_max: int = 10,
    tol: float = 1e-3,
    p: float = 2.0,
    profile: Optional[LipschitzProfile] = None,
    retain_iterates: bool = False,
    threads: Optional[int] = None,
    max_n: int = DEFAULT_ASSIGNMENT_CAP,
) -> PicardState:
    """
    Iterate mu_n = Law(X^{xi, mu_{n-1}}) until sup_t W_p(mu_n, mu_{n+1}) <= tol.

    Every iterate reuses cfg.seed, so consecutive flows differ only through
    the frozen measure argument. Without ``retain_iterates`` only mu0 and the
    two most recent iterates stay in memory.
    """
    if cfg.record_stride != 1:
        raise ValueError("Picard iteration needs record_stride == 1")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    times = cfg.grid.times()
    if mu0 is None:
        x0 = sample_initial(init, cfg.n_particles, model.dim_state, cfg.seed)
        mu0 = MeasureFlow.constant(ParticleCloud(x0), times)

    if profile is None:
        try:
            profile = profile_of(model, p=p)
        except ValueError:
            logger.info("no Lipschitz profile for %s; the error series is skipped", model.kind)
    elif profile.p != p:
        profile = profile.model_copy(update={"p": p})

    state = PicardState(iterates=[mu0], p=p)
    previous = mu0
    delta_curve = None
    for n in range(1, n_max + 1):
        ensemble = simulate(model, init, cfg, frozen_flow=previous, threads=threads)
        curve, lower = flow_distance(previous, ensemble.flow, p, max_n=max_n)
        distance = float(np.max(curve))
        state.distances.append(distance)
        state.distance_curves.append(curve)
        state.lower_bound_metric = state.lower_bound_metric or lower
        state.iterations = n
        if delta_curve is None:
            scale = profile.c_pP if profile is not None and profile.c_pP > 0 else 1.0
            delta_curve = np.maximum.accumulate(curve) / scale
        logger.info("picard iteration %d: sup distance %.3e", n, distance)

        if retain_iterates:
            state.iterates.append(ensemble.flow)
        else:
            state.iterates = [mu0, *state.iterates[1:][-1:], ensemble.flow]
        previous = ensemble.flow
        if distance <= tol:
            state.converged = True
            break

    if not state.converged:
        logger.warning("picard iteration did not reach tol=%g within %d iterations", tol, n_max)

    state.delta_sup = float(delta_curve[-1])
    state.mc_sigma = _moment_noise_floor(state.final, p)
    if profile is not None:
        gamma_p, delta_p = picard_coefficients(profile, times)
        inner = float(inner_integral_curve(times, gamma_p, delta_p)[-1])
        state.bound_curve = [
            error_bound(inner, state.delta_sup, profile.c_pP, p, n) for n in range(len(state.distances))
        ]
    return state


# ══════════════════════════════════════════════════════════════════════════════
#  GROWTH-INVARIANT SET
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class MembershipCheck:
    member: bool
    t_star: Optional[float] = None
    bound: Optional[np.ndarray] = None


def growth_bound_curve(times, growth: GrowthProfile, xi_moment: float) -> np.ndarray:
    """e^{int f} E|xi|^p + int e^{int_s^t f} g on the grid."""
    f, g = growth_coeffs(growth, np.asarray(times, dtype=float))
    return linear_comparison_bound(times, f, g, xi_moment)


def growth_invariant_check(
    flow: MeasureFlow,
    growth: GrowthProfile,
    xi_moment: float,
    rel_tol: float = 0.0,
    abs_tol: float = 0.0,
) -> MembershipCheck:
    """W_p(mu(t), delta_0)^p below the growth estimate at every grid time."""
    bound = growth_bound_curve(flow.times, growth, xi_moment)
    lhs = flow.moments(growth.p)
    ok = lhs <= bound * (1.0 + rel_tol) + abs_tol
    bad = np.flatnonzero(~ok)
    if bad.size:
        return MembershipCheck(member=False, t_star=float(flow.times[bad[0]]), bound=bound)
    return MembershipCheck(member=True, bound=bound)


def time_integral(values, times) -> np.ndarray:
    return cumulative_integral(values, times)
