"""Pydantic schemas for grids, simulation settings and bound reports."""

from typing import Dict, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class TimeGrid(BaseModel):
    """Uniform time grid t_k = t0 + k*dt, k = 0..steps."""
    model_config = ConfigDict(extra="forbid")

    t0: float = 0.0
    dt: float = Field(gt=0)
    steps: int = Field(gt=0)

    @property
    def horizon(self) -> float:
        return self.t0 + self.dt * self.steps

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1, dtype=float)


class SimConfig(BaseModel):
    """Particle simulation settings."""
    model_config = ConfigDict(extra="forbid")

    grid: TimeGrid
    n_particles: int = Field(default=10_000, ge=1)
    seed: int = Field(default=0, ge=0, le=2**64 - 1)
    scheme: Literal["euler_maruyama"] = "euler_maruyama"
    record_stride: int = Field(default=1, ge=1)

    def recorded_steps(self) -> np.ndarray:
        """Step indices whose clouds are stored; the last step is always kept."""
        idx = np.arange(0, self.grid.steps + 1, self.record_stride)
        if idx[-1] != self.grid.steps:
            idx = np.append(idx, self.grid.steps)
        return idx


Verdict = Literal["pass", "fail", "refused"]
DetailValue = Union[bool, int, float, str, None]


def admissible_limit(
    bound: np.ndarray,
    mc_sigma: np.ndarray,
    tolerance: float,
    rule: str = "relative",
    allowance: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Largest empirical value that still counts as consistent with the bound."""
    bound = np.asarray(bound, dtype=float)
    extra = 0.0 if allowance is None else np.asarray(allowance, dtype=float)
    if rule == "relative":
        return bound * (1.0 + tolerance) + 3.0 * np.asarray(mc_sigma, dtype=float) + extra
    if rule == "exponent":
        return bound + tolerance * np.abs(bound) + extra
    raise ValueError(f"unknown verdict rule: {rule}")


class BoundReport(BaseModel):
    """
    A certified bound curve confronted with an empirical curve.

    Under the ``relative`` rule the verdict is ``pass`` iff
    empirical <= bound*(1+tolerance) + 3*mc_sigma (+ allowance) at every time.
    The ``exponent`` rule compares a certified decay exponent against an
    estimated one: empirical <= bound + tolerance*|bound|.
    """
    model_config = ConfigDict(extra="forbid")

    name: str
    grid: Optional[TimeGrid] = None
    times: List[float]
    bound: List[float]
    empirical: List[float]
    mc_sigma: List[float]
    allowance: List[float] = Field(default_factory=list)
    tolerance: float = 0.02
    rule: Literal["relative", "exponent"] = "relative"
    verdict: Verdict
    t_star: Optional[float] = None
    details: Dict[str, DetailValue] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    @classmethod
    def evaluate(
        cls,
        name: str,
        times: Sequence[float],
        bound: Sequence[float],
        empirical: Sequence[float],
        mc_sigma: Optional[Sequence[float]] = None,
        tolerance: float = 0.02,
        rule: str = "relative",
        allowance: Optional[Sequence[float]] = None,
        grid: Optional[TimeGrid] = None,
        details: Optional[Dict[str, DetailValue]] = None,
    ) -> "BoundReport":
        times = np.asarray(times, dtype=float)
        bound = np.asarray(bound, dtype=float)
        empirical = np.asarray(empirical, dtype=float)
        sigma = np.zeros_like(empirical) if mc_sigma is None else np.asarray(mc_sigma, dtype=float)
        if not (times.shape == bound.shape == empirical.shape == sigma.shape):
            raise ValueError("times, bound, empirical and mc_sigma must have equal length")
        extra = None if allowance is None else np.broadcast_to(np.asarray(allowance, float), times.shape)

        limit = admissible_limit(bound, sigma, tolerance, rule, extra)
        # NaN on either side counts as a violation
        ok = empirical <= limit
        bad = np.flatnonzero(~ok)
        t_star = float(times[bad[0]]) if bad.size else None

        return cls(
            name=name,
            grid=grid,
            times=times.tolist(),
            bound=bound.tolist(),
            empirical=empirical.tolist(),
            mc_sigma=sigma.tolist(),
            allowance=[] if extra is None else np.asarray(extra).tolist(),
            tolerance=tolerance,
            rule=rule,
            verdict="pass" if t_star is None else "fail",
            t_star=t_star,
            details=dict(details or {}),
        )
