"""
╔══════════════════════════════════════════════════════════════════════════════╗
║                        BOUND VERIFICATION                                     ║
║                                                                               ║
║  Certified moment, growth and Lyapunov bounds confronted with the empirical  ║
║  curves of coupled particle ensembles.                                       ║
╚══════════════════════════════════════════════════════════════════════════════╝
"""

import logging
from typing import Mapping, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from core.schemas import BoundReport
from core.time_functions import SampledCurve, linear_comparison_bound

from .coefficients import (
    GrowthProfile,
    HoelderProfile,
    LipschitzProfile,
    PowerEnvelope,
    check_envelope,
    gamma_delta_hoelder,
    gamma_lipschitz,
    gamma_pq,
    lyapunov_from_envelope,
)
from .engine import PathEnsemble, difference_flow, moment_curve, pathwise_exponent_of
from .picard import growth_bound_curve

logger = logging.getLogger(__name__)

StabilityProfile = Union[LipschitzProfile, HoelderProfile]
EnvelopeLike = Union[PowerEnvelope, Mapping[str, object]]

PATHWISE_TOLERANCE = 0.1


class CertificateRefused(ValueError):
    """The envelope does not certify the stability coefficient."""

    def __init__(self, reason: str):
        super().__init__(f"certificate refused: {reason}")
        self.reason = reason


def _allowance(euler_allowance, times: np.ndarray) -> Optional[np.ndarray]:
    if euler_allowance is None:
        return None
    allowance = np.broadcast_to(np.asarray(euler_allowance, dtype=float), times.shape)
    if np.any(allowance < 0):
        raise ValueError("euler allowance must be nonnegative")
    return allowance


def _at_order(profile, p: float):
    return profile if profile.p == p else profile.model_copy(update={"p": p})


def _envelope(envelope: EnvelopeLike) -> PowerEnvelope:
    """Validated envelope, or a refusal naming the broken rule."""
    try:
        if isinstance(envelope, PowerEnvelope):
            lyapunov_from_envelope(envelope)
            return envelope
        return PowerEnvelope.model_validate(envelope)
    except ValidationError as exc:
        reason = "; ".join(err["msg"] for err in exc.errors())
    except ValueError as exc:
        reason = str(exc)
    logger.warning("invalid envelope: %s", reason)
    raise CertificateRefused(reason)


# ══════════════════════════════════════════════════════════════════════════════
#  MOMENT BOUNDS
# ══════════════════════════════════════════════════════════════════════════════

def stability_bound(profile: StabilityProfile, times, initial: float) -> np.ndarray:
    """e^{int gamma} E|Y_0|^p + int e^{int_s^t gamma} delta on the grid."""
    times = np.asarray(times, dtype=float)
    if isinstance(profile, LipschitzProfile):
        gamma, delta = gamma_lipschitz(profile, times), 0.0
    else:
        gamma, delta = gamma_delta_hoelder(profile, times)
    return linear_comparison_bound(times, gamma, delta, initial)


def check_moment_comparison(
    ens_a: PathEnsemble,
    ens_b: PathEnsemble,
    profile: StabilityProfile,
    p: float = 2.0,
    tolerance: float = 0.02,
    euler_allowance=None,
) -> BoundReport:
    diff = difference_flow(ens_a, ens_b)
    empirical = moment_curve(diff, p)
    profile = _at_order(profile, p)
    bound = stability_bound(profile, diff.times, float(empirical.values[0]))
    return BoundReport.evaluate(
        "moment_comparison",
        diff.times,
        bound,
        empirical.values,
        mc_sigma=empirical.stderr,
        tolerance=tolerance,
        allowance=_allowance(euler_allowance, diff.times),
        details={"p": p, "profile": profile.kind, "n_particles": diff.n_particles},
    )


def _log_slope(times: np.ndarray, values: np.ndarray, order: float) -> Optional[float]:
    """Least-squares slope of log(values) against (t - t0)^order."""
    x = (times - times[0]) ** order
    keep = values > 0
    if np.count_nonzero(keep) < 2 or np.ptp(x[keep]) == 0.0:
        return None
    slope, _ = np.polyfit(x[keep], np.log(values[keep]), 1)
    return float(slope)


def check_exponential_stability(
    ens_a: PathEnsemble,
    ens_b: PathEnsemble,
    exponent: float,
    order: float = 1.0,
    constant: float = 1.0,
    p: float = 2.0,
    tolerance: float = 0.02,
    euler_allowance=None,
) -> BoundReport:
    """E|Y_t|^p against c e^{lambda (t - t0)^alpha} E|Y_0|^p."""
    if exponent >= 0:
        raise ValueError(f"exponent must be negative, got {exponent}")
    if not order > 0 or not constant > 0:
        raise ValueError("order and constant must be positive")
    diff = difference_flow(ens_a, ens_b)
    empirical = moment_curve(diff, p)
    times = diff.times
    bound = constant * np.exp(exponent * (times - times[0]) ** order) * empirical.values[0]
    slope = _log_slope(times, empirical.values, order)
    return BoundReport.evaluate(
        "exponential_stability",
        times,
        bound,
        empirical.values,
        mc_sigma=empirical.stderr,
        tolerance=tolerance,
        allowance=_allowance(euler_allowance, times),
        details={"p": p, "exponent": exponent, "order": order, "constant": constant, "slope": slope},
    )


def check_growth(
    ensemble: PathEnsemble,
    growth: GrowthProfile,
    p: Optional[float] = None,
    tolerance: float = 0.02,
    euler_allowance=None,
) -> BoundReport:
    growth = _at_order(growth, growth.p if p is None else p)
    empirical = moment_curve(ensemble, growth.p)
    bound = growth_bound_curve(ensemble.times, growth, float(empirical.values[0]))
    return BoundReport.evaluate(
        "growth",
        ensemble.times,
        bound,
        empirical.values,
        mc_sigma=empirical.stderr,
        tolerance=tolerance,
        allowance=_allowance(euler_allowance, ensemble.times),
        details={"p": growth.p},
    )


# ══════════════════════════════════════════════════════════════════════════════
#  LYAPUNOV CERTIFICATES
# ══════════════════════════════════════════════════════════════════════════════

def _certify(gamma: SampledCurve, envelope: PowerEnvelope, moment_order: float) -> Tuple[float, float]:
    verdict = check_envelope(gamma, envelope)
    if not verdict.holds:
        reason = f"stability coefficient exceeds the envelope at t={verdict.t_star:g}"
        logger.warning(reason)
        raise CertificateRefused(reason)
    return lyapunov_from_envelope(envelope, moment_order)


def certify_moment(profile: LipschitzProfile, p: float, envelope: EnvelopeLike, times) -> Tuple[float, float]:
    """Certified moment exponent and time order (lambda_hat_l, alpha_l); no simulation."""
    envelope = _envelope(envelope)
    times = np.asarray(times, dtype=float)
    gamma = np.broadcast_to(np.asarray(gamma_lipschitz(_at_order(profile, p), times), dtype=float), times.shape)
    return _certify(SampledCurve(times, gamma), envelope, 1.0)


def certify_pathwise_exponent(
    profile: LipschitzProfile, p: float, q: float, envelope: EnvelopeLike, times
) -> Tuple[float, float]:
    """Certified pathwise exponent and time order (lambda_hat_l / (pq), alpha_l)."""
    envelope = _envelope(envelope)
    times = np.asarray(times, dtype=float)
    gamma = np.broadcast_to(np.asarray(gamma_pq(_at_order(profile, p), q, times), dtype=float), times.shape)
    return _certify(SampledCurve(times, gamma), envelope, p * q)


def certify_pathwise(
    ens_a: PathEnsemble,
    ens_b: PathEnsemble,
    profile: LipschitzProfile,
    p: float,
    q: float,
    envelope: EnvelopeLike,
    window: Optional[Tuple[float, float]] = None,
    tolerance: float = PATHWISE_TOLERANCE,
) -> BoundReport:
    """
    Certified pathwise exponent lambda_hat_l/(pq) against the estimate of
    limsup t^-alpha_l log|Y_t| from the coupled paths.
    """
    times = ens_a.times
    certified, order = certify_pathwise_exponent(profile, p, q, envelope, times)
    estimate = pathwise_exponent_of(ens_a, ens_b, order, window)
    return BoundReport.evaluate(
        "pathwise_lyapunov",
        [float(times[-1])],
        [certified],
        [estimate.mean],
        mc_sigma=[estimate.stderr],
        tolerance=tolerance,
        rule="exponent",
        details={
            "p": p,
            "q": q,
            "order": order,
            "certified_exponent": certified,
            "estimated_exponent": estimate.mean,
            "estimated_maximum": estimate.maximum,
            "excluded_paths": estimate.excluded,
            "window_start": estimate.window[0],
            "window_end": estimate.window[1],
        },
    )

