"""
╔══════════════════════════════════════════════════════════════════════════════╗
║                       OSGOOD / BIHARI MACHINERY                               ║
║                                                                               ║
║  Phi_rho(w) = int_1^w dv / rho(v),  Psi_rho(v, w) = Phi^-1(Phi(v) + w).       ║
║  Second-moment bounds of the form Psi(initial + int additive, int gain).      ║
╚══════════════════════════════════════════════════════════════════════════════╝
"""

import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import bisect

from core.schemas import TimeGrid
from core.time_functions import TimeFunctionLike, cumulative_integral, evaluate

logger = logging.getLogger(__name__)

QUAD_RTOL = 1e-12
INVERSE_RTOL = 1e-11
DIVERGENCE_THRESHOLD = 1e3
CAUCHY_TOL = 1e-6
MAX_WINDOWS = 1000


class QuadratureError(RuntimeError):
    """Adaptive quadrature or the inverse bracket search failed."""


class Divergence(str, Enum):
    DIVERGENT = "divergent"
    CONVERGENT = "convergent"
    INCONCLUSIVE = "inconclusive"


class Endpoint(str, Enum):
    ZERO = "zero"
    INFINITY = "infinity"


# ══════════════════════════════════════════════════════════════════════════════
#  MODULUS FUNCTIONS
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class ModulusFunction:
    """
    A function rho: R_+ -> R_+, continuous, vanishing only at the origin.

    ``parameter`` is the exponent theta for ``power`` and alpha_hat for
    ``log_modulus`` (rho(v) = alpha_hat * v * (|log v| + 1)). Custom kinds wrap
    a callable; their concavity and monotonicity flags are trusted.
    """
    kind: str
    parameter: float = 1.0
    fn: Optional[Callable[[float], float]] = None
    concave: bool = True
    increasing: bool = True
    label: str = ""

    @classmethod
    def power(cls, theta: float) -> "ModulusFunction":
        if not 0.0 < theta <= 1.0:
            raise ValueError(f"power exponent must lie in (0, 1], got {theta}")
        return cls(kind="power", parameter=float(theta))

    @classmethod
    def linear(cls) -> "ModulusFunction":
        return cls(kind="linear")

    @classmethod
    def log_modulus(cls, alpha_hat: float = 1.0) -> "ModulusFunction":
        if not 0.0 < alpha_hat <= 1.0:
            raise ValueError(f"alpha_hat must lie in (0, 1], got {alpha_hat}")
        return cls(kind="log_modulus", parameter=float(alpha_hat))

    @classmethod
    def custom(
        cls,
        fn: Callable[[float], float],
        concave: bool = True,
        increasing: bool = True,
        label: str = "custom",
    ) -> "ModulusFunction":
        return cls(kind="custom", fn=fn, concave=concave, increasing=increasing, label=label)

    @property
    def closed_form(self) -> bool:
        return self.kind != "custom"

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "linear":
            out = v + 0.0
        elif self.kind == "power":
            out = np.power(v, self.parameter)
        elif self.kind == "log_modulus":
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(v > 0, self.parameter * v * (np.abs(np.log(v)) + 1.0), 0.0)
        else:
            out = np.vectorize(self.fn, otypes=[float])(v) if v.ndim else np.asarray(float(self.fn(float(v))))
        return float(out) if out.ndim == 0 else out


def compose_rho0(rho: ModulusFunction, alpha: float) -> ModulusFunction:
    """v -> rho(v)^(1/alpha)."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return rho
    if rho.kind == "power" and rho.parameter / alpha <= 1.0:
        return ModulusFunction.power(rho.parameter / alpha)
    exponent = 1.0 / alpha
    return ModulusFunction.custom(
        lambda v: float(rho(v)) ** exponent,
        concave=rho.concave,
        label=f"({rho.label or rho.kind})^{exponent:g}",
    )


def compose_varrho0(
    rho0: ModulusFunction,
    varrho: ModulusFunction,
    beta: float = 1.0,
    c2P: float = 1.0,
) -> ModulusFunction:
    """v -> rho0(v) max varrho(c^2 v)^(1/beta)."""
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    if beta == 1.0 and c2P == 1.0 and varrho == rho0:
        return rho0
    scale = c2P ** 2
    exponent = 1.0 / beta
    return ModulusFunction.custom(
        lambda v: max(float(rho0(v)), float(varrho(scale * v)) ** exponent),
        label=f"max({rho0.label or rho0.kind}, {varrho.label or varrho.kind})",
    )


def bihari_rates(eta, lam, alpha: float, beta: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gain and additive rates from the second-moment regularity data:

        gain     = alpha [eta]_{1/(1-alpha)} + beta E[lambda]
        additive = (1-alpha) [eta]_{1/(1-alpha)} + (1-beta) E[lambda]

    with [x]_q = x^+ for q < inf and [x]_inf = x.
    """
    if not 0.0 < alpha <= 1.0 or not 0.0 < beta <= 1.0:
        raise ValueError("alpha and beta must lie in (0, 1]")
    eta = np.asarray(eta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    bracket = eta if alpha == 1.0 else np.maximum(eta, 0.0)
    gain = alpha * bracket + beta * lam
    additive = (1.0 - alpha) * bracket + (1.0 - beta) * lam
    return gain, additive


# ══════════════════════════════════════════════════════════════════════════════
#  PHI AND ITS LIMITS
# ══════════════════════════════════════════════════════════════════════════════

def _reciprocal_integral(rho: ModulusFunction, a: float, b: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, _ = quad(lambda v: 1.0 / float(rho(v)), a, b, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
        except (IntegrationWarning, ZeroDivisionError) as exc:
            raise QuadratureError(f"quadrature of 1/rho failed on [{a:g}, {b:g}]: {exc}") from exc
    return value


def _dyadic_integral(rho: ModulusFunction, w: float) -> float:
    """int_1^w dv/rho(v) accumulated over dyadic pieces."""
    if w == 1.0:
        return 0.0
    sign = 1.0 if w > 1.0 else -1.0
    lo, hi = (1.0, w) if w > 1.0 else (w, 1.0)
    total = 0.0
    a = lo
    while a < hi:
        b = min(2.0 * a, hi)
        total += _reciprocal_integral(rho, a, b)
        a = b
    return sign * total


def phi(rho: ModulusFunction, w: float) -> float:
    """Phi_rho(w) = int_1^w dv / rho(v) for w > 0."""
    if not w > 0:
        raise ValueError(f"Phi is defined for w > 0, got {w}")
    w = float(w)
    if rho.kind == "linear" or (rho.kind == "power" and rho.parameter == 1.0):
        return math.log(w)
    if rho.kind == "power":
        gap = 1.0 - rho.parameter
        return (w ** gap - 1.0) / gap
    if rho.kind == "log_modulus":
        lw = math.log(w)
        return math.copysign(math.log1p(abs(lw)), lw) / rho.parameter
    return _dyadic_integral(rho, w)


def _improper_tail(rho: ModulusFunction, endpoint: Endpoint) -> Tuple[Divergence, float]:
    """Partial sums of int 1/rho over dyadic windows towards an endpoint."""
    total = 0.0
    prev = None
    for k in range(MAX_WINDOWS):
        if endpoint == Endpoint.ZERO:
            a, b = 2.0 ** -(k + 1), 2.0 ** -k
            if a < 1e-300:
                break
        else:
            a, b = 2.0 ** k, 2.0 ** (k + 1)
            if b > 1e300:
                break
        piece = _reciprocal_integral(rho, a, b)
        total += piece
        if total > DIVERGENCE_THRESHOLD:
            return Divergence.DIVERGENT, total
        if prev is not None and piece <= CAUCHY_TOL * max(1.0, total) and piece <= 0.9 * prev:
            return Divergence.CONVERGENT, total
        prev = piece
    return Divergence.INCONCLUSIVE, total


def osgood_divergence(rho: ModulusFunction, endpoint="zero") -> Divergence:
    """Whether int 1/rho diverges near zero or near infinity."""
    endpoint = Endpoint(endpoint)
    if rho.kind in ("linear", "log_modulus"):
        return Divergence.DIVERGENT
    if rho.kind == "power":
        if endpoint == Endpoint.ZERO and rho.parameter < 1.0:
            return Divergence.CONVERGENT
        return Divergence.DIVERGENT
    verdict, _ = _improper_tail(rho, endpoint)
    if verdict == Divergence.INCONCLUSIVE:
        logger.warning("Osgood test for %s at %s is inconclusive", rho.label or rho.kind, endpoint.value)
    return verdict


@lru_cache(maxsize=128)
def phi_limits(rho: ModulusFunction) -> Tuple[float, float]:
    """
    (Phi(0+), Phi(inf)). For custom kinds an inconclusive endpoint is
    reported as NaN.
    """
    if rho.kind == "power" and rho.parameter < 1.0:
        return -1.0 / (1.0 - rho.parameter), math.inf
    if rho.closed_form:
        return -math.inf, math.inf
    limits = []
    for endpoint, sign in ((Endpoint.ZERO, -1.0), (Endpoint.INFINITY, 1.0)):
        verdict, total = _improper_tail(rho, endpoint)
        if verdict == Divergence.DIVERGENT:
            limits.append(sign * math.inf)
        elif verdict == Divergence.CONVERGENT:
            limits.append(sign * total)
        else:
            limits.append(math.nan)
    return limits[0], limits[1]


def _phi_extended(rho: ModulusFunction, w: float) -> float:
    if w == 0.0:
        lower, _ = phi_limits(rho)
        if math.isnan(lower):
            raise QuadratureError("Phi(0) is undecided for this modulus")
        return lower
    return phi(rho, w)


# ══════════════════════════════════════════════════════════════════════════════
#  INVERSE AND PSI
# ══════════════════════════════════════════════════════════════════════════════

def _upper_limit(rho: ModulusFunction) -> float:
    upper = phi_limits(rho)[1]
    if math.isnan(upper):
        logger.warning("Phi(inf) undecided for %s; treating it as +inf", rho.label or rho.kind)
        return math.inf
    return upper


def _solve(rho: ModulusFunction, target: float, lo: float, hi: float) -> float:
    """Bisection for Phi(u) = target once Phi(lo) <= target is known."""
    width = hi - lo
    start = lo
    for _ in range(2100):
        if phi(rho, hi) >= target:
            break
        lo = hi
        width *= 2.0
        hi = start + width
        if not math.isfinite(hi):
            break
    else:
        hi = math.inf
    if not math.isfinite(hi):
        raise QuadratureError(f"could not bracket Phi^-1({target:g})")

    def gap(u: float) -> float:
        return _phi_extended(rho, u) - target

    if gap(lo) == 0.0:
        return lo
    try:
        return bisect(gap, lo, hi, xtol=1e-300, rtol=INVERSE_RTOL, maxiter=2000)
    except (RuntimeError, ValueError) as exc:
        raise QuadratureError(f"bisection for Phi^-1({target:g}) failed: {exc}") from exc


def phi_inverse(rho: ModulusFunction, z: float) -> float:
    """Phi_rho^-1(z) for Phi(0) <= z < Phi(inf)."""
    lower, _ = phi_limits(rho)
    upper = _upper_limit(rho)
    if not z < upper:
        raise ValueError(f"{z} is not below Phi(inf) = {upper}")
    if not math.isnan(lower) and z <= lower:
        if z == lower:
            return 0.0
        raise ValueError(f"{z} is below Phi(0) = {lower}")
    if z >= 0.0:
        return _solve(rho, z, 1.0, 2.0)
    lo = 0.5
    while phi(rho, lo) > z:
        lo *= 0.5
        if lo < 1e-300:
            return 0.0
    return _solve(rho, z, lo, 2.0 * lo)


def in_domain(rho: ModulusFunction, v: float, w: float) -> bool:
    """(v, w) lies in D_rho, i.e. Phi(v) + w < Phi(inf)."""
    if v < 0 or w < 0:
        raise ValueError("v and w must be nonnegative")
    start = _phi_extended(rho, v)
    return start + w < _upper_limit(rho)


def psi(rho: ModulusFunction, v: float, w: float) -> Optional[float]:
    """
    Psi_rho(v, w) = Phi^-1(Phi(v) + w), or None outside D_rho.

    The inverse starts from the bracket [v, v + 1] and doubles its width
    until Phi exceeds the target, then bisects to relative accuracy 1e-11.
    """
    if v < 0 or w < 0:
        raise ValueError("v and w must be nonnegative")
    v, w = float(v), float(w)
    if w == 0.0:
        return v
    start = _phi_extended(rho, v)
    if start == -math.inf:
        return 0.0
    target = start + w
    if not target < _upper_limit(rho):
        return None
    return _solve(rho, target, v, v + 1.0)


def log_modulus_psi(alpha_hat: float, v: float, w: float) -> float:
    """Closed form of Psi for rho(v) = alpha_hat * v * (|log v| + 1)."""
    if v <= 0.0:
        return 0.0
    grow = math.exp(alpha_hat * w)
    log_v = math.log(v)
    if v >= 1.0:
        return math.exp((1.0 + log_v) * grow - 1.0)
    if v >= math.exp(1.0 - grow):
        return math.exp(grow / (1.0 - log_v) - 1.0)
    return math.exp(1.0 - (1.0 - log_v) / grow)


# ══════════════════════════════════════════════════════════════════════════════
#  SECOND-MOMENT BOUNDS
# ══════════════════════════════════════════════════════════════════════════════

class BoundInputs(BaseModel):
    """Data of the bound Psi_{rho0}(initial + int additive, int gain)."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    initial: float = Field(ge=0)
    additive: TimeFunctionLike = 0.0
    gain: TimeFunctionLike = 0.0
    rho0: ModulusFunction


@dataclass(frozen=True)
class SecondMomentBound:
    times: np.ndarray
    bound: np.ndarray
    t0_plus: float


def _bihari_curve(times, initial: float, additive, gain, rho0: ModulusFunction) -> SecondMomentBound:
    times = np.asarray(times, dtype=float)
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("grid times must be increasing")
    additive = np.broadcast_to(np.asarray(additive, dtype=float), times.shape)
    gain = np.broadcast_to(np.asarray(gain, dtype=float), times.shape)
    if np.any(additive < 0) or np.any(gain < 0):
        raise ValueError("additive and gain rates must be nonnegative")

    first = initial + cumulative_integral(additive, times)
    second = cumulative_integral(gain, times)
    if not (np.all(np.isfinite(first)) and np.all(np.isfinite(second))):
        raise ValueError("time integrals are not finite on the grid")

    bound = np.full(times.shape, math.inf)
    t0_plus = math.inf
    for k in range(times.size):
        value = psi(rho0, float(first[k]), float(second[k]))
        if value is None:
            t0_plus = float(times[k])
            logger.info("second-moment bound leaves the domain at t=%g", t0_plus)
            break
        bound[k] = value
    return SecondMomentBound(times=times, bound=bound, t0_plus=t0_plus)


def second_moment_bound(inputs: BoundInputs, grid) -> SecondMomentBound:
    """
    t -> Psi_{rho0}(initial + int additive, int gain) on the grid, with
    t0_plus the first grid time outside the domain (inf if none). Bound
    values from t0_plus on are +inf.
    """
    times = grid.times() if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)
    return _bihari_curve(
        times,
        inputs.initial,
        evaluate(inputs.additive, times),
        evaluate(inputs.gain, times),
        inputs.rho0,
    )


def second_moment_growth_bound(
    initial: float,
    kappa,
    upsilon,
    chi,
    phi_modulus: ModulusFunction,
    varphi_modulus: ModulusFunction,
    times,
    alpha: float = 1.0,
    beta: float = 1.0,
    c2P: float = 1.0,
) -> SecondMomentBound:
    """
    Growth bound sup_{s<=t} E|X_s|^2 <= Psi_{phi0}(E|X_0|^2 + int (E[kappa] + g), int f)
    for 2x'B + |Sigma|^2 <= kappa + upsilon*phi(|x|^2) + chi*varphi(W(mu, delta_0)^2).
    """
    times = np.asarray(times, dtype=float)
    f, g = bihari_rates(evaluate(upsilon, times), evaluate(chi, times), alpha, beta)
    phi0 = compose_varrho0(compose_rho0(phi_modulus, alpha), varphi_modulus, beta, c2P)
    if phi_limits(phi0)[1] != math.inf:
        raise ValueError("the combined modulus must satisfy Phi(inf) = inf")
    return _bihari_curve(times, initial, evaluate(kappa, times) + g, f, phi0)
