"""
Coefficient families for mean-field SDEs.

- ``CallableModel``: arbitrary (t, x, mu) callables.
- ``IntegralMapModel``: b(t, x, mu) = int b0(t, x, y) mu(dy), including the
  power-drift family b0 = -x sum_j b_j |x|^(a_j - 1) + sum_j c_j f_j(x, y).
- ``LinearMeanField``: drift a X + b E[X], diffusion c0 + c1 X + c2 E[X],
  whose first two moments solve closed ODEs.
"""

import math
from dataclasses import dataclass
from typing import Annotated, Callable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.base_model import ModelSpec
from core.measures import ParticleCloud, pairwise_mean
from core.schemas import TimeGrid

from .coefficients import GrowthProfile, LipschitzProfile

KERNEL_CHUNK = 256
GAUSSIAN_MOMENT_DRAWS = 200_000


# ══════════════════════════════════════════════════════════════════════════════
#  INITIAL CONDITIONS
# ══════════════════════════════════════════════════════════════════════════════

class _Initial(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    def moment(self, p: float) -> float:
        """E|xi|^p."""
        raise NotImplementedError

    def second_moment(self) -> float:
        return self.moment(2.0)


class ConstantInitial(_Initial):
    kind: Literal["constant"] = "constant"
    value: List[float] = Field(default_factory=lambda: [1.0], min_length=1)

    @property
    def dim(self) -> int:
        return len(self.value)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.tile(np.asarray(self.value, dtype=float), (n, 1))

    def mean_vector(self) -> np.ndarray:
        return np.asarray(self.value, dtype=float)

    def moment(self, p: float) -> float:
        return float(np.linalg.norm(self.value)) ** p


class GaussianInitial(_Initial):
    kind: Literal["gaussian"] = "gaussian"
    mean: List[float] = Field(min_length=1)
    cov: List[List[float]]

    @model_validator(mode="after")
    def _check_cov(self):
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (self.dim, self.dim):
            raise ValueError(f"cov must be {self.dim}x{self.dim}")
        if not np.allclose(cov, cov.T):
            raise ValueError("cov must be symmetric")
        if np.min(np.linalg.eigvalsh(cov)) < -1e-12:
            raise ValueError("cov must be positive semidefinite")
        return self

    @property
    def dim(self) -> int:
        return len(self.mean)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        cov = np.asarray(self.cov, dtype=float)
        values, vectors = np.linalg.eigh(cov)
        root = vectors * np.sqrt(np.maximum(values, 0.0))
        z = rng.standard_normal((n, self.dim))
        return np.asarray(self.mean, dtype=float) + z @ root.T

    def mean_vector(self) -> np.ndarray:
        return np.asarray(self.mean, dtype=float)

    def moment(self, p: float) -> float:
        if p == 2.0:
            return float(np.trace(np.asarray(self.cov)) + np.sum(np.square(self.mean)))
        # no closed form for general p in R^m; fixed-seed Monte Carlo estimate
        draws = self.sample(GAUSSIAN_MOMENT_DRAWS, np.random.default_rng(0))
        return float(pairwise_mean(np.linalg.norm(draws, axis=1) ** p))


class TwoPointInitial(_Initial):
    kind: Literal["two_point"] = "two_point"
    a: List[float] = Field(min_length=1)
    b: List[float] = Field(min_length=1)
    prob_a: float = Field(default=0.5, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_dims(self):
        if len(self.a) != len(self.b):
            raise ValueError("both atoms need the same dimension")
        return self

    @property
    def dim(self) -> int:
        return len(self.a)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        pick_a = rng.random(n) < self.prob_a
        return np.where(pick_a[:, None], np.asarray(self.a, float), np.asarray(self.b, float))

    def mean_vector(self) -> np.ndarray:
        return self.prob_a * np.asarray(self.a, float) + (1.0 - self.prob_a) * np.asarray(self.b, float)

    def moment(self, p: float) -> float:
        return float(
            self.prob_a * np.linalg.norm(self.a) ** p + (1.0 - self.prob_a) * np.linalg.norm(self.b) ** p
        )


InitialCondition = Annotated[
    Union[ConstantInitial, GaussianInitial, TwoPointInitial],
    Field(discriminator="kind"),
]


# ══════════════════════════════════════════════════════════════════════════════
#  GENERIC MODELS
# ══════════════════════════════════════════════════════════════════════════════

class CallableModel(ModelSpec):
    """Coefficients given as batch callables f(t, x, cloud)."""

    kind = "custom"

    def __init__(
        self,
        drift_fn: Callable,
        diffusion_fn: Optional[Callable] = None,
        dim_state: int = 1,
        dim_noise: int = 1,
        interacting: bool = True,
    ):
        super().__init__(dim_state, dim_noise)
        self._drift_fn = drift_fn
        self._diffusion_fn = diffusion_fn
        self._interacting = interacting

    @property
    def interacting(self) -> bool:
        return self._interacting

    def drift(self, t, x, cloud):
        return self._drift_fn(t, x, cloud)

    def diffusion(self, t, x, cloud):
        if self._diffusion_fn is None:
            return np.zeros((x.shape[0], self.dim_state, self.dim_noise))
        return self._diffusion_fn(t, x, cloud)


@dataclass(frozen=True)
class Interaction:
    """
    A Lipschitz interaction map f(x, y) with the constants used for profiles.

    one_sided: sup (x - x')(f(x, y) - f(x', y)) / |x - x'|^2
    growth_*:  x.f(x, y) <= growth_x |x|^2 + growth_y |x||y| + growth_0 |x|

    growth_0 bounds a single coordinate; in m dimensions it enters as
    sqrt(m) growth_0.
    """
    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    one_sided: float
    lip_x: float
    lip_y: float
    growth_x: float
    growth_y: float
    growth_0: float
    abs_0: float = 0.0
    # closed-form mean over the cloud, used instead of the O(nN) average
    mean_fn: Optional[Callable[[np.ndarray, ParticleCloud], np.ndarray]] = None


INTERACTIONS = {
    "attraction": Interaction(
        "attraction", lambda x, y: y - x,
        one_sided=-1.0, lip_x=1.0, lip_y=1.0, growth_x=-1.0, growth_y=1.0, growth_0=0.0,
        mean_fn=lambda x, cloud: cloud.mean - x,
    ),
    "target": Interaction(
        "target", lambda x, y: y + 0.0 * x,
        one_sided=0.0, lip_x=0.0, lip_y=1.0, growth_x=0.0, growth_y=1.0, growth_0=0.0,
        mean_fn=lambda x, cloud: np.broadcast_to(cloud.mean, x.shape) + 0.0,
    ),
    "sine": Interaction(
        "sine", lambda x, y: np.sin(y - x),
        one_sided=1.0, lip_x=1.0, lip_y=1.0, growth_x=0.0, growth_y=0.0, growth_0=1.0,
    ),
}


def kernel_mean(fn: Callable, t: float, x: np.ndarray, cloud: ParticleCloud) -> np.ndarray:
    """mean_i fn(t, x, y_i) for every row of x, in fixed particle order."""
    ys = cloud.points[None, :, :]
    out = []
    for start in range(0, x.shape[0], KERNEL_CHUNK):
        xs = x[start:start + KERNEL_CHUNK, None, :]
        values = np.asarray(fn(t, xs, ys), dtype=float)
        values = np.broadcast_to(values, (xs.shape[0], cloud.size) + values.shape[2:])
        out.append(pairwise_mean(np.moveaxis(values, 1, 0)))
    return np.concatenate(out, axis=0)


def power_drift_local(x: np.ndarray, b_hat: Sequence[float], alpha_hat: Sequence[float]) -> np.ndarray:
    """-x sum_j b_j |x|^(a_j - 1), with value 0 at x = 0."""
    if x.shape[1] == 1:
        magnitude = np.abs(x)
        total = np.zeros_like(x)
        for b, a in zip(b_hat, alpha_hat):
            total = total + b * magnitude ** a
        return -np.sign(x) * total
    norm = np.linalg.norm(x, axis=1, keepdims=True)
    factor = np.zeros_like(norm)
    with np.errstate(divide="ignore", invalid="ignore"):
        for b, a in zip(b_hat, alpha_hat):
            factor = factor + np.where(norm > 0, b * norm ** (a - 1.0), 0.0)
    return -x * factor


@dataclass(frozen=True)
class IntegralKernel:
    """
    Kernels b0(t, x, y) and sigma0(t, x, y) acting on broadcast batches
    x: (n, 1, m), y: (1, N, m), or power-drift parameters.
    """
    b0: Optional[Callable] = None
    sigma0: Optional[Callable] = None
    b_hat: Tuple[float, ...] = ()
    alpha_hat: Tuple[float, ...] = ()
    c_hat: Tuple[float, ...] = ()
    interactions: Tuple[Interaction, ...] = ()
    sigma: float = 0.0
    sigma_state: float = 0.0

    @classmethod
    def power(
        cls,
        b_hat: Sequence[float],
        alpha_hat: Sequence[float],
        c_hat: Sequence[float] = (),
        interactions: Sequence[Union[str, Interaction]] = (),
        sigma: float = 0.0,
        sigma_state: float = 0.0,
    ) -> "IntegralKernel":
        if len(b_hat) != len(alpha_hat):
            raise ValueError("b_hat and alpha_hat need the same length")
        if any(b < 0 for b in b_hat) or any(a <= 0 for a in alpha_hat):
            raise ValueError("b_hat must be nonnegative and alpha_hat positive")
        if len(c_hat) != len(interactions):
            raise ValueError("c_hat and interactions need the same length")
        resolved = tuple(INTERACTIONS[f] if isinstance(f, str) else f for f in interactions)
        return cls(
            b_hat=tuple(b_hat), alpha_hat=tuple(alpha_hat), c_hat=tuple(c_hat),
            interactions=resolved, sigma=sigma, sigma_state=sigma_state,
        )

    @property
    def is_power(self) -> bool:
        return self.b0 is None

    def power_b0(self, t, x, y):
        """The power-drift kernel itself, for broadcast batches."""
        shape = np.broadcast_shapes(x.shape, y.shape)
        flat = np.broadcast_to(x, shape).reshape(-1, shape[-1])
        local = power_drift_local(flat, self.b_hat, self.alpha_hat).reshape(shape)
        for c, f in zip(self.c_hat, self.interactions):
            local = local + c * f.fn(x, y)
        return local


class IntegralMapModel(ModelSpec):
    """b(t, x, mu) = int b0(t, x, y) mu(dy) and sigma(t, x, mu) = int sigma0 mu(dy)."""

    kind = "integral_map"

    def __init__(self, kernel: IntegralKernel, dim_state: int = 1, dim_noise: Optional[int] = None):
        if kernel.is_power and dim_noise not in (None, dim_state):
            raise ValueError("power-drift kernels use one noise per state coordinate")
        super().__init__(dim_state, dim_state if dim_noise is None else dim_noise)
        self.kernel = kernel

    @property
    def interacting(self) -> bool:
        if self.kernel.is_power:
            return any(c != 0 for c in self.kernel.c_hat)
        return True

    def drift(self, t, x, cloud):
        k = self.kernel
        if not k.is_power:
            return kernel_mean(k.b0, t, x, cloud)
        out = power_drift_local(x, k.b_hat, k.alpha_hat)
        for c, f in zip(k.c_hat, k.interactions):
            if c == 0:
                continue
            if f.mean_fn is not None:
                out = out + c * f.mean_fn(x, cloud)
            else:
                out = out + c * kernel_mean(lambda t_, xs, ys, fn=f.fn: fn(xs, ys), t, x, cloud)
        return out

    def diffusion(self, t, x, cloud):
        k = self.kernel
        n, m = x.shape
        if not k.is_power:
            if k.sigma0 is None:
                return np.zeros((n, m, self.dim_noise))
            return kernel_mean(k.sigma0, t, x, cloud)
        scale = k.sigma + k.sigma_state * x
        return scale[:, :, None] * np.eye(m)[None, :, :]


class LinearMeanField(ModelSpec):
    """Scalar model dX = (aX + b E[X]) dt + (c0 + c1 X + c2 E[X]) dW."""

    kind = "linear_meanfield"

    def __init__(self, a: float, b_mf: float = 0.0, c0: float = 0.0, c1: float = 0.0, c2: float = 0.0):
        super().__init__(1, 1)
        self.a, self.b_mf, self.c0, self.c1, self.c2 = float(a), float(b_mf), float(c0), float(c1), float(c2)

    def __repr__(self) -> str:
        return (f"LinearMeanField(a={self.a}, b_mf={self.b_mf}, "
                f"c0={self.c0}, c1={self.c1}, c2={self.c2})")

    @property
    def interacting(self) -> bool:
        return self.b_mf != 0.0 or self.c2 != 0.0

    def drift(self, t, x, cloud):
        if self.b_mf == 0.0:
            return self.a * x
        return self.a * x + self.b_mf * cloud.mean

    def diffusion(self, t, x, cloud):
        scale = self.c0 + self.c1 * x
        if self.c2 != 0.0:
            scale = scale + self.c2 * cloud.mean
        return scale[:, :, None]


# ══════════════════════════════════════════════════════════════════════════════
#  ORACLE AND PROFILES
# ══════════════════════════════════════════════════════════════════════════════

def linear_moment_oracle(
    model: LinearMeanField,
    x0_mean: float,
    x0_second_moment: float,
    grid,
) -> Tuple[np.ndarray, np.ndarray]:
    """E[X_t] and E[X_t^2] on the grid, RK4 with a tenth of each grid step."""
    if not isinstance(model, LinearMeanField):
        raise ValueError("the moment oracle needs a LinearMeanField model")
    times = grid.times() if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)
    a, b, c0, c1, c2 = model.a, model.b_mf, model.c0, model.c1, model.c2

    def rhs(state: np.ndarray) -> np.ndarray:
        m, v = state
        dm = (a + b) * m
        dv = (2.0 * a * v + 2.0 * b * m * m + c0 * c0 + c1 * c1 * v + c2 * c2 * m * m
              + 2.0 * c0 * c1 * m + 2.0 * c0 * c2 * m + 2.0 * c1 * c2 * m * m)
        return np.array([dm, dv])

    state = np.array([float(x0_mean), float(x0_second_moment)])
    means = np.empty(times.size)
    seconds = np.empty(times.size)
    means[0], seconds[0] = state
    for k in range(1, times.size):
        h = (times[k] - times[k - 1]) / 10.0
        for _ in range(10):
            k1 = rhs(state)
            k2 = rhs(state + 0.5 * h * k1)
            k3 = rhs(state + 0.5 * h * k2)
            k4 = rhs(state + h * k3)
            state = state + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        means[k], seconds[k] = state
    return means, seconds


def profile_of(model: ModelSpec, p: float = 2.0) -> LipschitzProfile:
    """Partial Lipschitz profile derived for the parametrised families."""
    if isinstance(model, LinearMeanField):
        return LipschitzProfile(
            eta1=model.a, eta2=abs(model.b_mf), etahat1=abs(model.c1), etahat2=abs(model.c2), p=p,
        )
    if isinstance(model, IntegralMapModel) and model.kernel.is_power:
        k = model.kernel
        eta1 = 0.0  # the power part is monotone decreasing
        eta2 = 0.0
        for c, f in zip(k.c_hat, k.interactions):
            eta1 += c * f.one_sided if c >= 0 else -c * f.lip_x
            eta2 += abs(c) * f.lip_y
        return LipschitzProfile(eta1=eta1, eta2=eta2, etahat1=abs(k.sigma_state), etahat2=0.0, p=p)
    raise ValueError(f"no regularity profile is derived for {model.kind} models; supply one")


def growth_profile_of(model: ModelSpec, p: float = 2.0) -> GrowthProfile:
    """
    Growth profile with terms (alpha, beta) = (1, 0), (0, 1), (0, 0): the
    state-linear, measure-linear and constant parts.
    """
    if isinstance(model, LinearMeanField):
        upsilon = [model.a, abs(model.b_mf), 0.0]
        upsilon_hat = [abs(model.c1), abs(model.c2), abs(model.c0)]
    elif isinstance(model, IntegralMapModel) and model.kernel.is_power:
        k = model.kernel
        # |diag(sigma + sigma_state x)|_F <= sqrt(m)|sigma| + |sigma_state||x|
        root_m = math.sqrt(model.dim_state)
        upsilon = [0.0, 0.0, 0.0]
        for c, f in zip(k.c_hat, k.interactions):
            if c >= 0:
                parts = (c * f.growth_x, c * f.growth_y, c * root_m * f.growth_0)
            else:
                parts = (-c * f.lip_x, -c * f.lip_y, -c * f.abs_0)
            upsilon = [u + v for u, v in zip(upsilon, parts)]
        upsilon_hat = [abs(k.sigma_state), 0.0, root_m * abs(k.sigma)]
    else:
        raise ValueError(f"no growth profile is derived for {model.kind} models; supply one")
    return GrowthProfile(
        alpha=[1.0, 0.0, 0.0], beta=[0.0, 1.0, 0.0],
        upsilon=upsilon, upsilon_hat=upsilon_hat, p=p,
    )
