import math

import numpy as np
import pytest
from pydantic import TypeAdapter, ValidationError

from core.schemas import BoundReport, SimConfig, TimeGrid, admissible_limit
from core.time_functions import (
    ConstantFunction,
    ExponentialFunction,
    PowerFunction,
    SampledFunction,
    TimeFunction,
    cumulative_integral,
    evaluate,
    is_identically,
    linear_comparison_bound,
)


class TestTimeFunctions:
    def test_closed_forms(self):
        t = np.array([0.0, 1.0, 4.0])
        assert ConstantFunction(value=2.0)(t) == pytest.approx([2.0, 2.0, 2.0])
        assert PowerFunction(scale=3.0, exponent=0.5)(t) == pytest.approx([0.0, 3.0, 6.0])
        assert ExponentialFunction(rate=-1.0)(t) == pytest.approx(np.exp(-t))
        assert SampledFunction(times=[0.0, 2.0], values=[0.0, 4.0])(1.0) == pytest.approx(2.0)

    def test_discriminated_parsing(self):
        adapter = TypeAdapter(TimeFunction)
        f = adapter.validate_python({"kind": "power", "exponent": 2.0, "shift": 1.0})
        assert isinstance(f, PowerFunction)
        assert f(3.0) == pytest.approx(4.0)

    def test_sampled_knots_must_increase(self):
        with pytest.raises(ValidationError):
            SampledFunction(times=[1.0, 0.0], values=[0.0, 1.0])

    def test_numbers_and_identity(self):
        assert evaluate(1.5, np.zeros(3)) == pytest.approx([1.5, 1.5, 1.5])
        assert is_identically(1.0, 1.0)
        assert is_identically(ConstantFunction(value=1.0), 1.0)
        assert not is_identically(PowerFunction(exponent=0.0), 1.0)


class TestTrapezoidCalculus:
    def test_integral_of_linear_function_is_exact(self):
        times = np.linspace(0.0, 2.0, 21)
        assert cumulative_integral(times, times) == pytest.approx(times ** 2 / 2, abs=1e-14)

    def test_single_point(self):
        assert cumulative_integral([3.0], [0.0]) == pytest.approx([0.0])

    def test_homogeneous_bound(self):
        times = np.linspace(0.0, 3.0, 31)
        assert linear_comparison_bound(times, -1.0, 0.0, 2.0) == pytest.approx(2.0 * np.exp(-times))

    def test_forcing_only(self):
        times = np.linspace(0.0, 1.0, 11)
        assert linear_comparison_bound(times, 0.0, 1.0, 0.0) == pytest.approx(times)

    def test_matches_global_trapezoid_weights(self):
        times = np.linspace(0.0, 2.0, 201)
        rate = -1.0 + times
        forcing = 1.0 + times ** 2
        growth = cumulative_integral(rate, times)
        expected = np.exp(growth) * (0.5 + cumulative_integral(np.exp(-growth) * forcing, times))
        assert linear_comparison_bound(times, rate, forcing, 0.5) == pytest.approx(expected, rel=1e-12)

    def test_strong_dissipation_over_long_horizon(self):
        times = np.linspace(0.0, 100.0, 10001)
        bound = linear_comparison_bound(times, -10.0, 1.0, 1.0)
        assert np.all(np.isfinite(bound))
        exact = np.exp(-10.0 * times) + 0.1 * (1.0 - np.exp(-10.0 * times))
        assert bound == pytest.approx(exact, rel=1e-3)

    def test_zero_start_without_forcing_stays_zero(self):
        times = np.linspace(0.0, 10.0, 11)
        assert linear_comparison_bound(times, 1000.0, 0.0, 0.0).tolist() == [0.0] * 11


class TestSchemas:
    def test_grid(self):
        grid = TimeGrid(t0=1.0, dt=0.5, steps=4)
        assert grid.horizon == pytest.approx(3.0)
        assert grid.times() == pytest.approx([1.0, 1.5, 2.0, 2.5, 3.0])

    @pytest.mark.parametrize("field, value", [("dt", 0.0), ("steps", 0)])
    def test_grid_rejects_degenerate(self, field, value):
        kwargs = {"dt": 0.1, "steps": 10, field: value}
        with pytest.raises(ValidationError):
            TimeGrid(**kwargs)

    def test_recorded_steps_keep_last(self):
        cfg = SimConfig(grid=TimeGrid(dt=0.1, steps=10), record_stride=3)
        assert cfg.recorded_steps().tolist() == [0, 3, 6, 9, 10]

    def test_seed_range(self):
        with pytest.raises(ValidationError):
            SimConfig(grid=TimeGrid(dt=0.1, steps=1), seed=2**64)

    def test_report_pass(self):
        report = BoundReport.evaluate("x", [0.0, 1.0], [1.0, 1.0], [1.01, 0.5], tolerance=0.02)
        assert report.passed
        assert report.t_star is None

    def test_report_fails_at_first_crossing(self):
        report = BoundReport.evaluate("x", [0.0, 1.0, 2.0], [1.0, 1.0, 1.0], [0.5, 2.0, 3.0])
        assert report.verdict == "fail"
        assert report.t_star == 1.0

    def test_mc_sigma_widens_the_limit(self):
        report = BoundReport.evaluate("x", [0.0], [1.0], [1.2], mc_sigma=[0.1], tolerance=0.0)
        assert report.passed

    def test_nan_is_a_violation(self):
        report = BoundReport.evaluate("x", [0.0, 1.0], [1.0, 1.0], [0.0, math.nan])
        assert report.t_star == 1.0

    def test_exponent_rule(self):
        ok = BoundReport.evaluate("e", [50.0], [-0.625], [-0.6], tolerance=0.1, rule="exponent")
        bad = BoundReport.evaluate("e", [50.0], [-0.625], [-0.5], tolerance=0.1, rule="exponent")
        assert ok.passed and not bad.passed

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            admissible_limit(np.ones(1), np.zeros(1), 0.0, rule="other")

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            BoundReport.evaluate("x", [0.0, 1.0], [1.0], [1.0, 1.0])
