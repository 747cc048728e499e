"""
╔══════════════════════════════════════════════════════════════════════════════╗
║                           EXPERIMENT CONFIGURATION                            ║
║                                                                               ║
║  One JSON document describes a run: model, initial law, particle grid, the   ║
║  task and its parameters. Unknown keys are rejected.                          ║
╚══════════════════════════════════════════════════════════════════════════════╝
"""

from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.base_model import ModelSpec
from core.schemas import SimConfig, TimeGrid
from core.time_functions import TimeFunctionLike

from .bihari import BoundInputs, ModulusFunction, compose_rho0
from .coefficients import GrowthProfile, HoelderProfile, LipschitzProfile, PowerEnvelope
from .models import (
    ConstantInitial,
    InitialCondition,
    IntegralKernel,
    IntegralMapModel,
    LinearMeanField,
)

SCHEMA_VERSION = 1

TASKS = (
    "simulate",
    "picard",
    "certify",
    "verify-moment",
    "verify-pathwise",
    "verify-growth",
    "verify-exponential",
    "bihari",
)
Task = Literal[
    "simulate",
    "picard",
    "certify",
    "verify-moment",
    "verify-pathwise",
    "verify-growth",
    "verify-exponential",
    "bihari",
]
COUPLED_TASKS = ("verify-moment", "verify-pathwise", "verify-exponential")


class ConfigError(ValueError):
    """Invalid configuration document; the message names the offending key or rule."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ══════════════════════════════════════════════════════════════════════════════
#  MODELS
# ══════════════════════════════════════════════════════════════════════════════

class LinearMeanFieldConfig(_Section):
    kind: Literal["linear_meanfield"] = "linear_meanfield"
    a: float = Field(description="Drift coefficient of X")
    b_mf: float = Field(default=0.0, description="Drift coefficient of E[X]")
    c0: float = Field(default=0.0, description="Constant diffusion")
    c1: float = Field(default=0.0, description="Diffusion coefficient of X")
    c2: float = Field(default=0.0, description="Diffusion coefficient of E[X]")

    def build(self) -> ModelSpec:
        return LinearMeanField(self.a, self.b_mf, self.c0, self.c1, self.c2)


class PowerDriftConfig(_Section):
    kind: Literal["power_drift"] = "power_drift"
    dim: int = Field(default=1, ge=1, description="State dimension")
    b_hat: List[float] = Field(default_factory=lambda: [1.0], description="Weights of -x|x|^(a-1)")
    alpha_hat: List[float] = Field(default_factory=lambda: [3.0], description="Power exponents")
    c_hat: List[float] = Field(default_factory=list, description="Interaction weights")
    interactions: List[Literal["attraction", "target", "sine"]] = Field(default_factory=list)
    sigma: float = Field(default=0.0, description="Additive diffusion")
    sigma_state: float = Field(default=0.0, description="Multiplicative diffusion")

    @model_validator(mode="after")
    def _check_lengths(self):
        if len(self.b_hat) != len(self.alpha_hat):
            raise ValueError("b_hat and alpha_hat need the same length")
        if len(self.c_hat) != len(self.interactions):
            raise ValueError("c_hat and interactions need the same length")
        if any(b < 0 for b in self.b_hat) or any(a <= 0 for a in self.alpha_hat):
            raise ValueError("b_hat must be nonnegative and alpha_hat positive")
        return self

    def build(self) -> ModelSpec:
        kernel = IntegralKernel.power(
            self.b_hat, self.alpha_hat, self.c_hat, self.interactions,
            sigma=self.sigma, sigma_state=self.sigma_state,
        )
        return IntegralMapModel(kernel, dim_state=self.dim)


ModelConfig = Annotated[Union[LinearMeanFieldConfig, PowerDriftConfig], Field(discriminator="kind")]
ProfileConfig = Annotated[Union[LipschitzProfile, HoelderProfile], Field(discriminator="kind")]


# ══════════════════════════════════════════════════════════════════════════════
#  SECTIONS
# ══════════════════════════════════════════════════════════════════════════════

class SimSettings(_Section):
    t0: float = Field(default=0.0, description="Initial time")
    dt: float = Field(default=1e-3, gt=0, description="Euler-Maruyama step")
    steps: int = Field(default=1000, gt=0, description="Number of steps")
    n_particles: int = Field(default=10_000, ge=1, description="Particles per ensemble")
    seed: int = Field(default=0, ge=0, le=2**64 - 1, description="Root seed of all streams")
    record_stride: int = Field(default=1, ge=1, description="Store every k-th cloud")

    def to_sim_config(self) -> SimConfig:
        return SimConfig(
            grid=TimeGrid(t0=self.t0, dt=self.dt, steps=self.steps),
            n_particles=self.n_particles,
            seed=self.seed,
            record_stride=self.record_stride,
        )


class PicardSettings(_Section):
    n_max: int = Field(default=10, ge=1, description="Iteration cap")
    tol: float = Field(default=1e-3, gt=0, description="Stop when the sup distance falls below")
    mu0: Literal["initial", "dirac"] = Field(default="initial", description="Starting flow")
    retain_iterates: bool = False


class ExponentialSettings(_Section):
    exponent: float = Field(lt=0, description="Claimed moment Lyapunov exponent")
    order: float = Field(default=1.0, gt=0, description="Time order alpha")
    constant: float = Field(default=1.0, gt=0, description="Prefactor c")


class BihariSettings(_Section):
    modulus: Literal["linear", "power", "log_modulus"] = "linear"
    parameter: Optional[float] = Field(default=None, description="theta or alpha_hat")
    alpha: float = Field(default=1.0, gt=0, le=1, description="Root taken of the modulus")
    initial: float = Field(default=1.0, ge=0)
    additive: TimeFunctionLike = 0.0
    gain: TimeFunctionLike = 1.0

    @model_validator(mode="after")
    def _check_modulus(self):
        self.modulus_function()
        return self

    def modulus_function(self) -> ModulusFunction:
        if self.modulus == "linear":
            rho = ModulusFunction.linear()
        elif self.modulus == "power":
            rho = ModulusFunction.power(0.5 if self.parameter is None else self.parameter)
        else:
            rho = ModulusFunction.log_modulus(1.0 if self.parameter is None else self.parameter)
        return rho if self.alpha == 1.0 else compose_rho0(rho, self.alpha)

    def bound_inputs(self) -> BoundInputs:
        return BoundInputs(
            initial=self.initial, additive=self.additive, gain=self.gain, rho0=self.modulus_function()
        )


class OutputSettings(_Section):
    report: str = Field(default="report.json", description="JSON report file name")
    curves: str = Field(default="curves.csv", description="CSV curve file name")
    ensemble: Optional[str] = Field(default=None, description="Optional CSV dump of all particles")


class ExperimentConfig(_Section):
    """A complete run description."""

    schema_version: Literal[1] = SCHEMA_VERSION
    task: Task
    model: ModelConfig
    model_b: Optional[ModelConfig] = Field(default=None, description="Second model of a coupled run")
    initial: InitialCondition = Field(default_factory=ConstantInitial)
    initial_b: Optional[InitialCondition] = None
    sim: SimSettings = Field(default_factory=SimSettings)

    p: float = Field(default=2.0, ge=1)
    q: float = Field(default=2.0, ge=2)
    profile: Optional[ProfileConfig] = None
    growth: Optional[GrowthProfile] = None
    envelope: Optional[PowerEnvelope] = None
    tolerance: float = Field(default=0.02, ge=0)
    euler_allowance: float = Field(default=0.0, ge=0)
    window: Optional[Tuple[float, float]] = None

    picard: PicardSettings = Field(default_factory=PicardSettings)
    exponential: Optional[ExponentialSettings] = None
    bihari: BihariSettings = Field(default_factory=BihariSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

    @model_validator(mode="after")
    def _check_task(self):
        if self.task in ("certify", "verify-pathwise") and self.envelope is None:
            raise ValueError(f"task {self.task} requires an envelope")
        if self.task == "verify-exponential" and self.exponential is None:
            raise ValueError("task verify-exponential requires the exponential section")
        if self.task in ("verify-moment", "verify-pathwise", "verify-growth", "picard") and self.p < 2:
            raise ValueError(f"task {self.task} requires p >= 2")
        if self.window is not None and not self.window[0] < self.window[1]:
            raise ValueError("window must satisfy start < end")
        if self.task == "picard" and self.sim.record_stride != 1:
            raise ValueError("task picard requires sim.record_stride == 1")
        return self

    def models(self) -> Tuple[ModelSpec, ModelSpec]:
        first = self.model.build()
        second = first if self.model_b is None else self.model_b.build()
        return first, second

    def initials(self):
        return self.initial, self.initial if self.initial_b is None else self.initial_b


# ══════════════════════════════════════════════════════════════════════════════
#  PARSING
# ══════════════════════════════════════════════════════════════════════════════

def _describe(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(part) for part in err["loc"]) or "<document>"
        lines.append(f"{where}: {err['msg']}")
    return "; ".join(lines)


def parse_config(text: Union[str, bytes]) -> ExperimentConfig:
    """Validate a JSON document; errors name the key path or the JSON position."""
    try:
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from exc


def dump_config(config: ExperimentConfig) -> str:
    return config.model_dump_json(indent=2)
