"""
╔══════════════════════════════════════════════════════════════════════════════╗
║                           COMMAND-LINE ENTRY POINT                            ║
║                                                                               ║
║  mfsde-lab --config run.json --output-dir out/                                ║
║                                                                               ║
║  Exit codes: 0 pass or converged, 1 fail or not converged, 2 refusal,        ║
║  blow-up or invalid configuration, 3 I/O error.                               ║
╚══════════════════════════════════════════════════════════════════════════════╝
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional

import numpy as np
from pydantic import ValidationError

from core.measures import MeasureFlow
from core.output_writer import OutputWriter
from core.schemas import BoundReport

from .bihari import QuadratureError, osgood_divergence, phi_limits, second_moment_bound
from .coefficients import LipschitzProfile, envelope_curve, gamma_lipschitz, gamma_pq
from .config import COUPLED_TASKS, ConfigError, ExperimentConfig, SimSettings, parse_config
from .engine import BlowUpError, moment_curve, simulate, simulate_coupled
from .messages import get_summary
from .models import LinearMeanField, growth_profile_of, linear_moment_oracle, profile_of
from .picard import picard_solve
from .verify import (
    CertificateRefused,
    certify_moment,
    certify_pathwise,
    certify_pathwise_exponent,
    check_exponential_stability,
    check_growth,
    check_moment_comparison,
)

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_REFUSED = 2
EXIT_IO = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@dataclass
class TaskOutcome:
    report: Dict[str, object]
    summary: str
    exit_code: int = EXIT_PASS
    times: Optional[np.ndarray] = None
    curves: Dict[str, np.ndarray] = field(default_factory=dict)
    ensemble: Optional[MeasureFlow] = None


# ══════════════════════════════════════════════════════════════════════════════
#  HELPERS
# ══════════════════════════════════════════════════════════════════════════════

def _lipschitz_profile(config: ExperimentConfig, model) -> LipschitzProfile:
    if config.profile is not None:
        if not isinstance(config.profile, LipschitzProfile):
            raise ValueError(f"task {config.task} needs a lipschitz profile")
        return config.profile
    return profile_of(model, p=max(config.p, 2.0))


def _allowance(config: ExperimentConfig):
    return config.euler_allowance if config.euler_allowance > 0 else None


def _bound_outcome(config: ExperimentConfig, report: BoundReport, **fields) -> TaskOutcome:
    payload = {"task": config.task, **report.model_dump(mode="python")}
    summary = get_summary(config.task, verdict=report.verdict, t_star=report.t_star, **fields)
    return TaskOutcome(
        report=payload,
        summary=summary,
        exit_code=EXIT_PASS if report.passed else EXIT_FAIL,
        times=np.asarray(report.times),
        curves={
            "bound": np.asarray(report.bound),
            "empirical": np.asarray(report.empirical),
            "mc_sigma": np.asarray(report.mc_sigma),
        },
    )


def _coupled(config: ExperimentConfig, threads: Optional[int]):
    model_a, model_b = config.models()
    init_a, init_b = config.initials()
    return simulate_coupled(model_a, model_b, init_a, init_b, config.sim.to_sim_config(), threads=threads)


# ══════════════════════════════════════════════════════════════════════════════
#  TASKS
# ══════════════════════════════════════════════════════════════════════════════

def run_simulate(config: ExperimentConfig, threads: Optional[int]) -> TaskOutcome:
    model, _ = config.models()
    ensemble = simulate(model, config.initial, config.sim.to_sim_config(), threads=threads)
    curve = moment_curve(ensemble, config.p)
    means = ensemble.flow.means()
    curves = {"moment": curve.values, "moment_stderr": curve.stderr}
    for j in range(means.shape[1]):
        curves[f"mean_{j + 1}"] = means[:, j]
    terminal = float(curve.values[-1])
    report = {
        "task": config.task,
        "model": config.model,
        "sim": config.sim,
        "p": config.p,
        "terminal_moment": terminal,
        "terminal_stderr": float(curve.stderr[-1]),
    }
    summary = get_summary(
        "simulate", n_particles=config.sim.n_particles, steps=config.sim.steps, p=config.p, terminal=terminal
    )
    return TaskOutcome(report, summary, times=ensemble.times, curves=curves, ensemble=ensemble.flow)


def run_picard(config: ExperimentConfig, threads: Optional[int]) -> TaskOutcome:
    model, _ = config.models()
    cfg = config.sim.to_sim_config()
    settings = config.picard
    mu0 = None
    if settings.mu0 == "dirac":
        mu0 = MeasureFlow.dirac(cfg.grid.times(), cfg.n_particles, model.dim_state)
    profile = config.profile if isinstance(config.profile, LipschitzProfile) else None
    state = picard_solve(
        model, config.initial, cfg, mu0=mu0, n_max=settings.n_max, tol=settings.tol, p=config.p,
        profile=profile, retain_iterates=settings.retain_iterates, threads=threads,
    )
    final = state.final
    curves = {"second_moment": final.moments(2.0)}
    means = final.means()
    for j in range(means.shape[1]):
        curves[f"mean_{j + 1}"] = means[:, j]
    if isinstance(model, LinearMeanField):
        oracle_mean, oracle_second = linear_moment_oracle(
            model, float(config.initial.mean_vector()[0]), config.initial.second_moment(), final.times
        )
        curves["oracle_mean"] = oracle_mean
        curves["oracle_second_moment"] = oracle_second
    summary = get_summary(
        "picard",
        status="converged" if state.converged else "not converged",
        iterations=state.iterations,
        distance=state.distances[-1],
    )
    return TaskOutcome(
        report={"task": config.task, **state.to_report()},
        summary=summary,
        exit_code=EXIT_PASS if state.converged else EXIT_FAIL,
        times=final.times,
        curves=curves,
        ensemble=final,
    )


def run_certify(config: ExperimentConfig, threads: Optional[int]) -> TaskOutcome:
    model, _ = config.models()
    profile = _lipschitz_profile(config, model)
    times = config.sim.to_sim_config().grid.times()
    pathwise, order = certify_pathwise_exponent(profile, config.p, config.q, config.envelope, times)
    moment, moment_refusal = None, None
    try:
        moment, _ = certify_moment(profile, config.p, config.envelope, times)
    except CertificateRefused as exc:
        moment_refusal = exc.reason
    at_p = profile.model_copy(update={"p": config.p})
    curves = {
        "gamma_p": np.broadcast_to(gamma_lipschitz(at_p, times), times.shape),
        "gamma_pq": np.broadcast_to(gamma_pq(at_p, config.q, times), times.shape),
        "envelope": envelope_curve(config.envelope, times),
    }
    report = {
        "task": config.task,
        "p": config.p,
        "q": config.q,
        "order": order,
        "pathwise_exponent": pathwise,
        "moment_exponent": moment,
        "moment_refusal": moment_refusal,
        "envelope": config.envelope,
        "profile": profile,
    }
    summary = get_summary(
        "certify", pathwise=pathwise, order=order, moment="refused" if moment is None else f"{moment:.6g}"
    )
    return TaskOutcome(report, summary, times=times, curves=curves)


def run_verify_moment(config: ExperimentConfig, threads: Optional[int]) -> TaskOutcome:
    # the comparison bound holds for two solutions of one equation
    if config.profile is None and config.model_b is not None and config.model_b != config.model:
        raise ConfigError("verify-moment with a different model_b needs an explicit profile")
    ens_a, ens_b = _coupled(config, threads)
    profile = config.profile if config.profile is not None else profile_of(config.models()[0], p=config.p)
    report = check_moment_comparison(
        ens_a, ens_b, profile, p=config.p, tolerance=config.tolerance, euler_allowance=_allowance(config)
    )
    return _bound_outcome(config, report)


def run_verify_exponential(config: ExperimentConfig, threads: Optional[int]) -> TaskOutcome:
    ens_a, ens_b = _coupled(config, threads)
    settings = config.exponential
    report = check_exponential_stability(
        ens_a, ens_b, settings.exponent, order=settings.order, constant=settings.constant,
        p=config.p, tolerance=config.tolerance, euler_allowance=_allowance(config),
    )
    return _bound_outcome(config, report)


def run_verify_pathwise(config: ExperimentConfig, threads: Optional[int]) -> TaskOutcome:
    model, _ = config.models()
    profile = _lipschitz_profile(config, model)
    ens_a, ens_b = _coupled(config, threads)
    report = certify_pathwise(ens_a, ens_b, profile, config.p, config.q, config.envelope, window=config.window)
    return _bound_outcome(
        config,
        report,
        estimated=report.details["estimated_exponent"],
        certified=report.details["certified_exponent"],
    )


def run_verify_growth(config: ExperimentConfig, threads: Optional[int]) -> TaskOutcome:
    model, _ = config.models()
    growth = config.growth if config.growth is not None else growth_profile_of(model, p=config.p)
    ensemble = simulate(model, config.initial, config.sim.to_sim_config(), threads=threads)
    report = check_growth(
        ensemble, growth, p=config.p, tolerance=config.tolerance, euler_allowance=_allowance(config)
    )
    return _bound_outcome(config, report)


def run_bihari(config: ExperimentConfig, threads: Optional[int]) -> TaskOutcome:
    inputs = config.bihari.bound_inputs()
    grid = config.sim.to_sim_config().grid
    result = second_moment_bound(inputs, grid)
    phi_zero, phi_inf = phi_limits(inputs.rho0)
    report = {
        "task": config.task,
        "modulus": inputs.rho0.label,
        "phi_zero": phi_zero,
        "phi_infinity": phi_inf,
        "osgood_at_zero": osgood_divergence(inputs.rho0, "zero").value,
        "t0_plus": result.t0_plus,
        "terminal_bound": float(result.bound[-1]),
    }
    summary = get_summary("bihari", terminal=float(result.bound[-1]), t0_plus=result.t0_plus)
    return TaskOutcome(report, summary, times=result.times, curves={"bound": result.bound})


TASK_HANDLERS: Dict[str, Callable[[ExperimentConfig, Optional[int]], TaskOutcome]] = {
    "simulate": run_simulate,
    "picard": run_picard,
    "certify": run_certify,
    "verify-moment": run_verify_moment,
    "verify-pathwise": run_verify_pathwise,
    "verify-growth": run_verify_growth,
    "verify-exponential": run_verify_exponential,
    "bihari": run_bihari,
}


# ══════════════════════════════════════════════════════════════════════════════
#  RUN
# ══════════════════════════════════════════════════════════════════════════════

def _write(writer: OutputWriter, config: ExperimentConfig, outcome: TaskOutcome) -> None:
    writer.write_report(config.output.report, outcome.report)
    if outcome.times is not None and outcome.curves:
        writer.write_curves(config.output.curves, outcome.times, outcome.curves)
    if config.output.ensemble and outcome.ensemble is not None:
        writer.write_ensemble(config.output.ensemble, outcome.ensemble)


def _abort(writer: OutputWriter, config: ExperimentConfig, kind: str, summary: str, **fields) -> int:
    print(summary)
    try:
        writer.write_report(config.output.report, {"task": config.task, "verdict": kind, **fields})
    except OSError as exc:
        print(get_summary("io-error", reason=exc))
        return EXIT_IO
    return EXIT_REFUSED


def run(config: ExperimentConfig, output_dir=".", threads: Optional[int] = None) -> int:
    """Execute the configured task, write its report and curves, return the exit code."""
    if config.task in COUPLED_TASKS and config.model_b is None and config.initial_b is None:
        logger.info("coupled task with a single model and initial law; the difference stays zero")
    try:
        writer = OutputWriter(Path(output_dir))
    except OSError as exc:
        print(get_summary("io-error", reason=exc))
        return EXIT_IO

    try:
        outcome = TASK_HANDLERS[config.task](config, threads)
    except CertificateRefused as exc:
        return _abort(
            writer, config, "refused", get_summary("refused", task=config.task, reason=exc.reason), reason=exc.reason
        )
    except BlowUpError as exc:
        summary = get_summary("blow-up", task=config.task, step=exc.step, time=exc.time)
        return _abort(writer, config, "blow-up", summary, step=exc.step, time=exc.time)
    except (ValueError, QuadratureError) as exc:
        logger.error("task %s rejected: %s", config.task, exc)
        return _abort(writer, config, "error", get_summary("config-error", reason=exc), reason=str(exc))

    try:
        _write(writer, config, outcome)
    except OSError as exc:
        print(get_summary("io-error", reason=exc))
        return EXIT_IO
    print(outcome.summary)
    return outcome.exit_code


# ══════════════════════════════════════════════════════════════════════════════
#  ARGUMENTS
# ══════════════════════════════════════════════════════════════════════════════

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfsde-lab",
        description="Simulate mean-field SDEs and verify their stability bounds.",
    )
    parser.add_argument("--config", required=True, type=Path, help="JSON experiment configuration")
    parser.add_argument("--output-dir", default=Path("."), type=Path, help="Directory for reports and curves")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads (default: all cores)")
    parser.add_argument("--seed", type=int, default=None, help="Override sim.seed")
    parser.add_argument(
        "--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level"
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)

    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(get_summary("io-error", reason=exc))
        return EXIT_IO
    try:
        config = parse_config(text)
        if args.seed is not None:
            sim = SimSettings.model_validate({**config.sim.model_dump(), "seed": args.seed})
            config = config.model_copy(update={"sim": sim})
    except (ConfigError, ValidationError) as exc:
        print(get_summary("config-error", reason=exc))
        return EXIT_REFUSED
    if args.threads is not None and args.threads < 1:
        print(get_summary("config-error", reason="--threads must be positive"))
        return EXIT_REFUSED

    return run(config, args.output_dir, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
