import math

import numpy as np
import pytest

from core.measures import MeasureFlow
from src.engine import (
    BlowUpError,
    difference_flow,
    moment_curve,
    noise_block,
    pathwise_exponent,
    pathwise_exponent_of,
    sample_initial,
    simulate,
    simulate_coupled,
)
from src.models import CallableModel, ConstantInitial, GaussianInitial, LinearMeanField

from .conftest import make_sim


class TestRandomStreams:
    def test_noise_is_a_function_of_seed_and_step(self):
        assert np.array_equal(noise_block(7, 3, 5, 2), noise_block(7, 3, 5, 2))
        assert not np.array_equal(noise_block(7, 3, 5, 2), noise_block(7, 4, 5, 2))
        assert not np.array_equal(noise_block(7, 3, 5, 2), noise_block(8, 3, 5, 2))

    def test_particle_rows_do_not_depend_on_n(self):
        assert np.array_equal(noise_block(1, 0, 10, 1)[:4], noise_block(1, 0, 4, 1))
        assert noise_block(1, 0, 10, 3).shape == (10, 3)

    def test_initial_dimension_is_checked(self):
        with pytest.raises(ValueError):
            sample_initial(ConstantInitial(value=[1.0, 2.0]), 4, 1, seed=0)


class TestSimulate:
    def test_deterministic_decay(self, ou_model, unit_initial):
        ens = simulate(ou_model, unit_initial, make_sim(dt=1e-3, steps=1000, n=3))
        assert ens.flow.points[-1, :, 0] == pytest.approx([(1 - 1e-3) ** 1000] * 3, rel=1e-12)
        assert ens.times[-1] == pytest.approx(1.0)

    def test_seed_reproducibility(self):
        model = LinearMeanField(a=-1.0, b_mf=0.25, c0=0.5)
        init = GaussianInitial(mean=[0.0], cov=[[1.0]])
        first = simulate(model, init, make_sim(n=50, seed=3))
        second = simulate(model, init, make_sim(n=50, seed=3))
        other = simulate(model, init, make_sim(n=50, seed=4))
        assert np.array_equal(first.flow.points, second.flow.points)
        assert not np.array_equal(first.flow.points, other.flow.points)

    def test_thread_count_does_not_change_results(self):
        model = LinearMeanField(a=-1.0, b_mf=0.25, c0=0.5, c1=0.1)
        init = GaussianInitial(mean=[1.0], cov=[[0.5]])
        cfg = make_sim(dt=1e-2, steps=20, n=3000)
        single = simulate(model, init, cfg, threads=1)
        pooled = simulate(model, init, cfg, threads=4)
        assert np.array_equal(single.flow.points, pooled.flow.points)

    def test_record_stride(self, ou_model, unit_initial):
        ens = simulate(ou_model, unit_initial, make_sim(steps=100, n=2, stride=30))
        assert ens.times == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])
        assert ens.flow.points.shape == (5, 2, 1)

    def test_blow_up_is_reported(self, unit_initial):
        model = CallableModel(lambda t, x, c: 1e200 * x, interacting=False)
        with pytest.raises(BlowUpError) as info:
            simulate(model, unit_initial, make_sim(dt=1.0, steps=5, n=2))
        assert info.value.step == 2
        assert info.value.time == pytest.approx(2.0)

    def test_interacting_model_needs_two_particles(self, mean_field_model, unit_initial):
        with pytest.raises(ValueError):
            simulate(mean_field_model, unit_initial, make_sim(n=1))

    def test_threads_must_be_positive(self, ou_model, unit_initial):
        with pytest.raises(ValueError):
            simulate(ou_model, unit_initial, make_sim(n=2), threads=0)


class TestFrozenFlow:
    def test_dirac_flow_removes_the_interaction(self, mean_field_model, unit_initial):
        cfg = make_sim(dt=1e-2, steps=50, n=4)
        flow = MeasureFlow.dirac(cfg.grid.times(), 4)
        ens = simulate(mean_field_model, unit_initial, cfg, frozen_flow=flow)
        assert ens.flow.points[-1, :, 0] == pytest.approx([(1 - 1e-2) ** 50] * 4, rel=1e-12)

    def test_single_particle_is_fine_against_a_frozen_flow(self, mean_field_model, unit_initial):
        cfg = make_sim(steps=10, n=1)
        ens = simulate(mean_field_model, unit_initial, cfg, frozen_flow=MeasureFlow.dirac(cfg.grid.times(), 3))
        assert ens.n_particles == 1

    def test_grid_mismatch(self, mean_field_model, unit_initial):
        cfg = make_sim(steps=10, n=4)
        with pytest.raises(ValueError):
            simulate(mean_field_model, unit_initial, cfg, frozen_flow=MeasureFlow.dirac(np.arange(5.0), 4))

    def test_dimension_mismatch(self, mean_field_model, unit_initial):
        cfg = make_sim(steps=10, n=4)
        with pytest.raises(ValueError):
            simulate(mean_field_model, unit_initial, cfg, frozen_flow=MeasureFlow.dirac(cfg.grid.times(), 4, 2))


class TestEstimators:
    def test_coupled_identical_runs_agree(self):
        model = LinearMeanField(a=-1.0, c0=1.0)
        init = ConstantInitial(value=[0.5])
        ens_a, ens_b = simulate_coupled(model, model, init, init, make_sim(n=20))
        assert not np.any(difference_flow(ens_a, ens_b).points)

    def test_coupled_difference_is_deterministic_for_additive_noise(self):
        model = LinearMeanField(a=-1.0, c0=1.0)
        ens_a, ens_b = simulate_coupled(
            model, model, ConstantInitial(value=[1.0]), ConstantInitial(value=[2.0]),
            make_sim(dt=1e-2, steps=100, n=10),
        )
        diff = difference_flow(ens_a, ens_b)
        assert diff.points[-1, :, 0] == pytest.approx([0.99 ** 100] * 10, rel=1e-9)

    def test_coupled_models_must_match(self):
        with pytest.raises(ValueError):
            simulate_coupled(
                LinearMeanField(a=-1.0),
                CallableModel(lambda t, x, c: -x, dim_state=2),
                ConstantInitial(), ConstantInitial(value=[0.0, 0.0]),
                make_sim(n=2),
            )

    def test_moment_curve(self):
        flow = MeasureFlow([0.0, 1.0], np.array([[[1.0], [-3.0]], [[2.0], [2.0]]]))
        curve = moment_curve(flow, 2)
        assert curve.values == pytest.approx([5.0, 4.0])
        assert curve.stderr == pytest.approx([4.0, 0.0])
        with pytest.raises(ValueError):
            moment_curve(flow, 0.5)

    def test_pathwise_exponent_of_exponential_decay(self):
        times = np.linspace(0.0, 10.0, 101)
        norms = np.stack([np.exp(-times), np.exp(-2.0 * times)], axis=1)
        estimate = pathwise_exponent(norms, times, 1.0, (5.0, 10.0))
        assert estimate.per_path == pytest.approx([-1.0, -2.0])
        assert estimate.mean == pytest.approx(-1.5)
        assert estimate.maximum == pytest.approx(-1.0)
        assert estimate.excluded == 0

    def test_paths_at_zero_are_excluded(self):
        times = np.linspace(0.0, 10.0, 101)
        norms = np.stack([np.exp(-times), np.zeros_like(times)], axis=1)
        estimate = pathwise_exponent(norms, times, 1.0, (5.0, 10.0))
        assert estimate.excluded == 1
        assert estimate.mean == pytest.approx(-1.0)
        with pytest.raises(ValueError):
            pathwise_exponent(np.zeros((101, 2)), times, 1.0, (5.0, 10.0))

    def test_pathwise_exponent_on_a_shifted_grid(self):
        times = np.linspace(3.0, 13.0, 101)
        norms = np.exp(-(times - 3.0))
        assert pathwise_exponent(norms, times, 1.0, (8.0, 13.0)).mean == pytest.approx(-1.0)
        # log|Y_t| / t = -1 + 3/t peaks at the first time past the window midpoint
        measured_from_zero = pathwise_exponent(norms, times, 1.0, (8.05, 13.0), origin=0.0)
        assert measured_from_zero.mean == pytest.approx(-1.0 + 3.0 / 10.6)

    def test_empty_window(self):
        times = np.linspace(0.0, 1.0, 11)
        with pytest.raises(ValueError):
            pathwise_exponent(np.ones((11, 1)), times, 1.0, (5.0, 10.0))

    def test_pathwise_estimate_from_ensembles(self):
        model = LinearMeanField(a=-1.0, c0=1.0)
        ens_a, ens_b = simulate_coupled(
            model, model, ConstantInitial(value=[0.0]), ConstantInitial(value=[1.0]),
            make_sim(dt=1e-2, steps=400, n=5),
        )
        estimate = pathwise_exponent_of(ens_a, ens_b, 1.0)
        assert estimate.window == pytest.approx((2.0, 4.0))
        # |Y_t| = 0.99^(100 t), so log|Y_t| / t is constant
        assert estimate.mean == pytest.approx(100 * math.log(0.99), rel=1e-9)
