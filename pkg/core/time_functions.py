"""
Deterministic time functions and trapezoid calculus on time grids.

Coefficients such as eta(t) or gamma(t) are either plain numbers or one of a
small closed-form library, so they can be written into configuration files.
"""

from dataclasses import dataclass
from typing import Annotated, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import cumulative_trapezoid


class _Function(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ConstantFunction(_Function):
    kind: Literal["constant"] = "constant"
    value: float

    def __call__(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.value) + 0.0


class PowerFunction(_Function):
    """scale * (t - shift)^exponent for t >= shift."""
    kind: Literal["power"] = "power"
    scale: float = 1.0
    exponent: float
    shift: float = 0.0

    def __call__(self, t):
        u = np.asarray(t, dtype=float) - self.shift
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.scale * np.power(np.maximum(u, 0.0), self.exponent)


class ExponentialFunction(_Function):
    kind: Literal["exponential"] = "exponential"
    scale: float = 1.0
    rate: float

    def __call__(self, t):
        return self.scale * np.exp(self.rate * np.asarray(t, dtype=float))


class SampledFunction(_Function):
    """Piecewise-linear interpolation through (times, values)."""
    kind: Literal["samples"] = "samples"
    times: List[float]
    values: List[float]

    @model_validator(mode="after")
    def _check_knots(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("samples need equally many times and values")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        return self

    def __call__(self, t):
        return np.interp(np.asarray(t, dtype=float), self.times, self.values)


TimeFunction = Annotated[
    Union[ConstantFunction, PowerFunction, ExponentialFunction, SampledFunction],
    Field(discriminator="kind"),
]
TimeFunctionLike = Union[float, TimeFunction]


def evaluate(f: TimeFunctionLike, t) -> np.ndarray:
    """Evaluate a number or time function at t (scalar or array)."""
    if callable(f):
        return np.asarray(f(t), dtype=float)
    return np.full_like(np.asarray(t, dtype=float), float(f)) + 0.0


def is_identically(f: TimeFunctionLike, value: float) -> bool:
    """True when f is declared as the constant ``value``."""
    if isinstance(f, ConstantFunction):
        return f.value == value
    if isinstance(f, (int, float)):
        return float(f) == value
    return False


@dataclass(frozen=True)
class SampledCurve:
    """Values of a time function on a grid, with optional standard errors."""
    times: np.ndarray
    values: np.ndarray
    stderr: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.times)


# ══════════════════════════════════════════════════════════════════════════════
#  TRAPEZOID CALCULUS
# ══════════════════════════════════════════════════════════════════════════════

def cumulative_integral(values, times) -> np.ndarray:
    """t_k -> int_{t_0}^{t_k} values, trapezoid rule, starting at 0."""
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if times.size == 1:
        return np.zeros(1)
    return cumulative_trapezoid(values, times, initial=0.0)


def linear_comparison_bound(times, rate, forcing, initial: float) -> np.ndarray:
    """
    Solution bound of y' <= rate*y + forcing:

        e^{G(t)} * initial + int_{t0}^t e^{G(t) - G(s)} forcing(s) ds,

    with G the trapezoid antiderivative of ``rate``. Stepped as

        y_{k+1} = e^{G_{k+1} - G_k} (y_k + h_k/2 f_k) + h_k/2 f_{k+1},

    which only ever exponentiates one step's increment of G.
    """
    times = np.asarray(times, dtype=float)
    rate = np.broadcast_to(np.asarray(rate, dtype=float), times.shape)
    forcing = np.broadcast_to(np.asarray(forcing, dtype=float), times.shape)
    growth = cumulative_integral(rate, times)
    if not np.any(forcing):
        if initial == 0:
            return np.zeros(times.shape)
        return np.exp(growth) * initial
    with np.errstate(over="ignore"):
        factors = np.exp(np.diff(growth))
    half = 0.5 * np.diff(times)
    out = np.empty(times.shape)
    out[0] = y = float(initial)
    for k in range(factors.size):
        carried = y + half[k] * forcing[k]
        # 0 * inf stays 0: nothing to carry
        y = (factors[k] * carried if carried != 0.0 else 0.0) + half[k] * forcing[k + 1]
        out[k + 1] = y
    return out
