"""
╔══════════════════════════════════════════════════════════════════════════════╗
║                        STABILITY COEFFICIENT CALCULUS                         ║
║                                                                               ║
║  Regularity profiles of the coefficients and the explicit rates built from   ║
║  them: gamma/delta for moment comparison, growth rates f/g, the Picard       ║
║  error coefficients and power envelopes certifying Lyapunov exponents.       ║
╚══════════════════════════════════════════════════════════════════════════════╝
"""

import math
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.measures import Sample, essential_bracket
from core.time_functions import SampledCurve, TimeFunctionLike, evaluate, is_identically


def c_p(p: float) -> float:
    return (p - 1.0) / 2.0


def _bracket(values: np.ndarray, alpha: float) -> np.ndarray:
    """[x]_{p/(1-alpha)} for deterministic x: signed when the order is infinite."""
    return values if alpha == 1.0 else np.maximum(values, 0.0)


def _check_exponents(alpha: Sequence[float], beta: Sequence[float]) -> None:
    if len(alpha) == 0 or len(alpha) != len(beta):
        raise ValueError("alpha and beta need the same positive length")
    for k, (a, b) in enumerate(zip(alpha, beta)):
        if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0 and a + b <= 1.0):
            raise ValueError(f"alpha_{k + 1} + beta_{k + 1} must lie in [0, 1] with both in [0, 1]")


def _check_forced_units(name: str, alpha, beta, weights) -> None:
    if weights is None:
        return
    if len(weights) != len(alpha):
        raise ValueError(f"{name} must have length {len(alpha)}")
    for k, (a, b) in enumerate(zip(alpha, beta)):
        if a + b == 1.0 and not is_identically(weights[k], 1.0):
            raise ValueError(f"{name}_{k + 1} must be identically 1 since alpha_{k + 1} + beta_{k + 1} = 1")


# ══════════════════════════════════════════════════════════════════════════════
#  PROFILES
# ══════════════════════════════════════════════════════════════════════════════

class HoelderProfile(BaseModel):
    """Mixed Hoelder regularity data with l terms."""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["hoelder"] = "hoelder"
    alpha: List[float]
    beta: List[float]
    eta: List[TimeFunctionLike]
    eta_hat: List[TimeFunctionLike]
    zeta: Optional[List[TimeFunctionLike]] = None
    zeta_hat: Optional[List[TimeFunctionLike]] = None
    p: float = Field(default=2.0, ge=2.0)
    c_pP: float = Field(default=1.0, ge=0.0)

    @property
    def l(self) -> int:
        return len(self.alpha)

    @model_validator(mode="after")
    def _check(self):
        _check_exponents(self.alpha, self.beta)
        if len(self.eta) != self.l or len(self.eta_hat) != self.l:
            raise ValueError(f"eta and eta_hat must have length {self.l}")
        _check_forced_units("zeta", self.alpha, self.beta, self.zeta)
        _check_forced_units("zeta_hat", self.alpha, self.beta, self.zeta_hat)
        return self


class GrowthProfile(BaseModel):
    """Affine-type growth data: x'B <= sum kappa_k upsilon_k |x|^{1+a_k} W^{b_k}."""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["growth"] = "growth"
    alpha: List[float]
    beta: List[float]
    upsilon: List[TimeFunctionLike]
    upsilon_hat: List[TimeFunctionLike]
    kappa: Optional[List[TimeFunctionLike]] = None
    kappa_hat: Optional[List[TimeFunctionLike]] = None
    p: float = Field(default=2.0, ge=2.0)
    c_pP: float = Field(default=1.0, ge=0.0)

    @property
    def l(self) -> int:
        return len(self.alpha)

    @model_validator(mode="after")
    def _check(self):
        _check_exponents(self.alpha, self.beta)
        if len(self.upsilon) != self.l or len(self.upsilon_hat) != self.l:
            raise ValueError(f"upsilon and upsilon_hat must have length {self.l}")
        _check_forced_units("kappa", self.alpha, self.beta, self.kappa)
        _check_forced_units("kappa_hat", self.alpha, self.beta, self.kappa_hat)
        return self


class LipschitzProfile(BaseModel):
    """Partial Lipschitz data (eta1 signed, the rest nonnegative)."""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["lipschitz"] = "lipschitz"
    eta1: TimeFunctionLike
    eta2: TimeFunctionLike = 0.0
    etahat1: TimeFunctionLike = 0.0
    etahat2: TimeFunctionLike = 0.0
    p: float = Field(default=2.0, ge=2.0)
    c_pP: float = Field(default=1.0, ge=0.0)

    @model_validator(mode="after")
    def _check(self):
        for name in ("eta2", "etahat1", "etahat2"):
            value = getattr(self, name)
            if isinstance(value, (int, float)) and value < 0:
                raise ValueError(f"{name} must be nonnegative")
        return self

    def nonnegative_parts(self, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        parts = tuple(evaluate(getattr(self, name), t) for name in ("eta2", "etahat1", "etahat2"))
        if any(np.any(part < 0) for part in parts):
            raise ValueError("eta2, etahat1 and etahat2 must be nonnegative")
        return parts


# ══════════════════════════════════════════════════════════════════════════════
#  GAMMA / DELTA
# ══════════════════════════════════════════════════════════════════════════════

def _power_calculus(alpha, beta, drift, diffusion, zeta, zeta_hat, p: float, c: float):
    """
    Shared formula behind the stability and the growth coefficients.

    drift/diffusion/zeta/zeta_hat are per-term arrays already evaluated on
    the time points.
    """
    cp = c_p(p)
    gamma = np.zeros_like(drift[0])
    delta = np.zeros_like(drift[0])
    for k in range(len(alpha)):
        order = alpha[k] + beta[k]
        term = c ** beta[k] * _bracket(drift[k], alpha[k])
        gamma = gamma + (p - 1.0 + order) * term
        if order < 1.0:
            delta = delta + (1.0 - order) * zeta[k] ** (p / (1.0 - order)) * term
    for j in range(len(alpha)):
        for k in range(len(alpha)):
            order = alpha[j] + alpha[k] + beta[j] + beta[k]
            term = cp * c ** (beta[j] + beta[k]) * diffusion[j] * diffusion[k]
            gamma = gamma + (p - 2.0 + order) * term
            if order < 2.0:
                delta = delta + (2.0 - order) * (zeta_hat[j] * zeta_hat[k]) ** (p / (2.0 - order)) * term
    return gamma, delta


def _weights(weights, l: int, t):
    if weights is None:
        return [evaluate(1.0, t)] * l
    return [evaluate(w, t) for w in weights]


def _nonnegative(values, name: str):
    for k, v in enumerate(values):
        if np.any(v < 0):
            raise ValueError(f"{name}_{k + 1} must be nonnegative")
    return values


def gamma_delta_hoelder(profile: HoelderProfile, t):
    """(gamma_p(t), delta_p(t)); scalars for scalar t, arrays otherwise."""
    drift = [evaluate(e, t) for e in profile.eta]
    diffusion = _nonnegative([evaluate(e, t) for e in profile.eta_hat], "eta_hat")
    zeta = _nonnegative(_weights(profile.zeta, profile.l, t), "zeta")
    zeta_hat = _nonnegative(_weights(profile.zeta_hat, profile.l, t), "zeta_hat")
    gamma, delta = _power_calculus(
        profile.alpha, profile.beta, drift, diffusion, zeta, zeta_hat, profile.p, profile.c_pP
    )
    return _unwrap(gamma), _unwrap(delta)


def growth_coeffs(profile: GrowthProfile, t):
    """(f_p(t), g_p(t)) of the p-th moment growth estimate."""
    drift = [evaluate(u, t) for u in profile.upsilon]
    diffusion = _nonnegative([evaluate(u, t) for u in profile.upsilon_hat], "upsilon_hat")
    kappa = _nonnegative(_weights(profile.kappa, profile.l, t), "kappa")
    kappa_hat = _nonnegative(_weights(profile.kappa_hat, profile.l, t), "kappa_hat")
    f, g = _power_calculus(
        profile.alpha, profile.beta, drift, diffusion, kappa, kappa_hat, profile.p, profile.c_pP
    )
    return _unwrap(f), _unwrap(g)


def _unwrap(values):
    arr = np.asarray(values, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def _lipschitz_gamma(profile: LipschitzProfile, order: float, c: float, t):
    eta1 = evaluate(profile.eta1, t)
    eta2, h1, h2 = profile.nonnegative_parts(t)
    diffusion = h1 ** 2 + 2.0 * c * h1 * h2 + c ** 2 * h2 ** 2
    return _unwrap(order * (eta1 + c * eta2 + c_p(order) * diffusion))


def gamma_lipschitz(profile: LipschitzProfile, t):
    """p (eta1 + c eta2 + c_p (etahat1 + c etahat2)^2)."""
    return _lipschitz_gamma(profile, profile.p, profile.c_pP, t)


def gamma_pq(profile: LipschitzProfile, q: float, t, c_pqP: Optional[float] = None):
    """The Lipschitz stability coefficient at moment order pq."""
    if q < 2.0:
        raise ValueError(f"q must be at least 2, got {q}")
    c = profile.c_pP if c_pqP is None else c_pqP
    return _lipschitz_gamma(profile, profile.p * q, c, t)


def picard_coefficients(profile: LipschitzProfile, t):
    """
    (gamma_p, delta_p) driving the Picard error estimate:

        gamma_p = p eta1 + (p-1) eta2 + c_p (p h1^2 + 2(p-1) h1 h2 + (p-2) h2^2)
        delta_p = eta2 + 2 c_p (h1 h2 + h2^2)
    """
    hoelder = HoelderProfile(
        alpha=[1.0, 0.0],
        beta=[0.0, 0.0],
        eta=[profile.eta1, profile.eta2],
        eta_hat=[profile.etahat1, profile.etahat2],
        p=profile.p,
        c_pP=1.0,
    )
    profile.nonnegative_parts(t)
    return gamma_delta_hoelder(hoelder, t)


def product_bracket(sample_j: Sample, sample_k: Sample, p: float, alpha_j: float, alpha_k: float) -> float:
    """[X_j X_k]_{p/(2 - a_j - a_k)} from paired draws."""
    a, b = _paired(sample_j, sample_k)
    gap = 2.0 - alpha_j - alpha_k
    order = math.inf if gap == 0.0 else p / gap
    return essential_bracket(Sample(a * b), order)


def product_bracket_bound(sample_j: Sample, sample_k: Sample, p: float, alpha_j: float, alpha_k: float) -> float:
    """Hoelder bound [X_j]_{p/(1-a_j)} [X_k]_{p/(1-a_k)} of the product bracket."""
    a, b = _paired(sample_j, sample_k)
    order_j = math.inf if alpha_j == 1.0 else p / (1.0 - alpha_j)
    order_k = math.inf if alpha_k == 1.0 else p / (1.0 - alpha_k)
    return essential_bracket(Sample(a), order_j) * essential_bracket(Sample(b), order_k)


def _paired(sample_j: Sample, sample_k: Sample):
    a = sample_j.values if isinstance(sample_j, Sample) else Sample(sample_j).values
    b = sample_k.values if isinstance(sample_k, Sample) else Sample(sample_k).values
    if a.size != b.size:
        raise ValueError("paired samples must have equal size")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("diffusion regularity samples must be nonnegative")
    return a, b


# ══════════════════════════════════════════════════════════════════════════════
#  POWER ENVELOPES
# ══════════════════════════════════════════════════════════════════════════════

def _check_envelope_rules(alpha, lambda_hat, s, t1) -> None:
    if len(alpha) == 0 or not (len(alpha) == len(lambda_hat) == len(s)):
        raise ValueError("alpha, lambda_hat and s need the same positive length")
    if any(a <= 0 for a in alpha):
        raise ValueError("envelope exponents alpha must be positive")
    if any(b <= a for a, b in zip(alpha, alpha[1:])):
        raise ValueError("envelope exponents alpha must be strictly increasing")
    if not lambda_hat[-1] < 0:
        raise ValueError("lambda_hat_l must be negative")
    if max(s) > t1:
        raise ValueError("max_k s_k must not exceed t1")


class PowerEnvelope(BaseModel):
    """sum_k lambda_hat_k alpha_k (s - s_k)^(alpha_k - 1) as an upper envelope for s >= t1."""
    model_config = ConfigDict(extra="forbid")

    alpha: List[float]
    lambda_hat: List[float]
    s: List[float]
    t1: float = 0.0

    @property
    def l(self) -> int:
        return len(self.alpha)

    @model_validator(mode="after")
    def _check(self):
        _check_envelope_rules(self.alpha, self.lambda_hat, self.s, self.t1)
        return self


@dataclass(frozen=True)
class EnvelopeCheck:
    holds: bool
    t_star: Optional[float] = None


def envelope_curve(env: PowerEnvelope, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    total = np.zeros_like(times)
    with np.errstate(divide="ignore", invalid="ignore"):
        for a, lam, s in zip(env.alpha, env.lambda_hat, env.s):
            if lam == 0.0:
                continue
            total = total + lam * a * np.power(np.maximum(times - s, 0.0), a - 1.0)
    return total


def check_envelope(gamma_curve: SampledCurve, env: PowerEnvelope, slack: float = 1e-12) -> EnvelopeCheck:
    """Pointwise gamma(s) <= envelope(s) on every grid time s >= t1."""
    times = np.asarray(gamma_curve.times, dtype=float)
    gamma = np.asarray(gamma_curve.values, dtype=float)
    mask = times >= env.t1
    if not np.any(mask):
        raise ValueError("gamma curve has no samples at or after t1")
    bound = envelope_curve(env, times[mask])
    with np.errstate(invalid="ignore"):
        ok = gamma[mask] <= bound + slack * np.maximum(1.0, np.abs(bound))
    bad = np.flatnonzero(~ok)
    if bad.size:
        return EnvelopeCheck(holds=False, t_star=float(times[mask][bad[0]]))
    return EnvelopeCheck(holds=True)


def lyapunov_from_envelope(env: PowerEnvelope, moment_order: float = 1.0) -> Tuple[float, float]:
    """(lambda_hat_l / moment_order, alpha_l)."""
    _check_envelope_rules(env.alpha, env.lambda_hat, env.s, env.t1)
    if not moment_order > 0:
        raise ValueError("moment order must be positive")
    return env.lambda_hat[-1] / moment_order, env.alpha[-1]
