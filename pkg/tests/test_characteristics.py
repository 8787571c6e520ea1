import math

import numpy as np
import pytest

from sizestructured.characteristics import (
    EnvironmentTrajectory,
    birth_time,
    char_flow,
    cohort_step,
    flow_size,
    kernel_beta,
    kernel_gamma,
    survival,
)
from sizestructured.errors import FlowBelowBirthSize, SpanError


def wavy(t0=0.0, t1=6.0):
    return EnvironmentTrajectory.from_function(lambda t: 1.0 + 0.5 * np.sin(2.0 * t), t0, t1, 600)


class TestEnvironment:
    def test_validation(self):
        grid_env = EnvironmentTrajectory.constant(1.0, 0.0, 1.0, 4)
        with pytest.raises(ValueError):
            EnvironmentTrajectory(grid_env.t_grid, np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            EnvironmentTrajectory(grid_env.t_grid, np.array([1.0, np.nan, 1.0, 1.0, 1.0]))
        with pytest.raises(ValueError):
            EnvironmentTrajectory(grid_env.t_grid, np.array([1.0, -0.1, 1.0, 1.0, 1.0]))

    def test_round_off_negatives_clipped(self):
        env = EnvironmentTrajectory.constant(0.0, 0.0, 1.0, 2)
        env2 = EnvironmentTrajectory(env.t_grid, np.array([0.0, -1e-10, 0.0]))
        assert env2.values.min() == 0.0

    def test_interpolation(self):
        env = EnvironmentTrajectory.from_function(lambda t: t, 0.0, 2.0, 2)
        assert env(0.25) == pytest.approx(0.25)
        assert env.covers(0.0, 2.0) and not env.covers(-0.1, 1.0)


class TestConstantGrowth:
    """g = 1, mu = 1: sizes move at unit speed and survival is e^{-(t-s)}."""

    def test_flow_forward_and_backward(self, constant_model):
        env = wavy()
        assert flow_size(env, 3.0, 1.0, 1.5, constant_model) == pytest.approx(3.5, abs=1e-12)
        assert flow_size(env, 1.0, 3.0, 3.5, constant_model) == pytest.approx(1.5, abs=1e-12)
        np.testing.assert_allclose(flow_size(env, 2.0, 0.0, np.array([1.0, 2.0]), constant_model), [3.0, 4.0])

    def test_birth_time(self, constant_model):
        env = wavy()
        x = np.array([1.0, 2.5, 5.0])
        np.testing.assert_allclose(birth_time(env, x, 5.0, constant_model), 5.0 - (x - 1.0), atol=1e-12)

    def test_survival_and_kernels(self, constant_model):
        env = wavy()
        assert survival(env, 4.0, 1.5, 2.0, constant_model) == pytest.approx(math.exp(-2.5), rel=1e-12)
        assert survival(env, 1.0, 1.0, 2.0, constant_model) == 1.0
        # beta = beta0 S(t), gamma = gamma0
        k = kernel_beta(env, 4.0, 1.5, 2.0, constant_model)
        assert k == pytest.approx(2.0 * float(env(4.0)) * math.exp(-2.5), rel=1e-12)
        assert kernel_gamma(env, 4.0, 1.5, 2.0, constant_model) == pytest.approx(math.exp(-2.5), rel=1e-12)

    def test_backward_flow_hits_birth_size(self, constant_model):
        env = wavy()
        with pytest.raises(FlowBelowBirthSize) as info:
            flow_size(env, 0.0, 1.0, 1.5, constant_model)
        assert info.value.hitting_time == pytest.approx(0.5, abs=1e-9)

    def test_birth_before_environment(self, constant_model):
        env = wavy(2.0, 6.0)
        with pytest.raises(SpanError, match="extend"):
            birth_time(env, 5.0, 4.0, constant_model)

    def test_span_checked(self, constant_model):
        env = wavy(0.0, 2.0)
        with pytest.raises(SpanError):
            flow_size(env, 3.0, 1.0, 1.5, constant_model)
        with pytest.raises(SpanError):
            survival(env, 3.0, 1.0, 1.5, constant_model)

    def test_argument_checks(self, constant_model):
        env = wavy()
        with pytest.raises(ValueError):
            survival(env, 1.0, 2.0, 1.5, constant_model)
        with pytest.raises(ValueError):
            char_flow(env, 0.0, 1.0, 0.5, constant_model)


class TestVariableGrowth:
    def test_birth_time_inverts_flow(self, daphnia_model):
        env = wavy()
        births = np.array([0.3, 1.0, 2.2])
        sizes = np.array([flow_size(env, 5.0, s, daphnia_model.x_b, daphnia_model, n_steps=4000) for s in births])
        np.testing.assert_allclose(birth_time(env, sizes, 5.0, daphnia_model), births, atol=1e-9)

    def test_flow_round_trip(self, daphnia_model):
        env = wavy()
        x = flow_size(env, 4.0, 1.0, 1.7, daphnia_model)
        assert flow_size(env, 1.0, 4.0, x, daphnia_model) == pytest.approx(1.7, abs=1e-10)

    def test_log_jacobian_matches_finite_difference(self, daphnia_model):
        env = wavy()
        flow = char_flow(env, 0.5, 3.0, 1.6, daphnia_model, n_steps=3000)
        d = 1e-5
        fd = (flow_size(env, 3.0, 0.5, 1.6 + d, daphnia_model, n_steps=3000)
              - flow_size(env, 3.0, 0.5, 1.6 - d, daphnia_model, n_steps=3000)) / (2 * d)
        assert math.exp(flow.log_jacobian[-1]) == pytest.approx(fd, rel=1e-6)
        assert flow.x_of_t[-1] == pytest.approx(flow_size(env, 3.0, 0.5, 1.6, daphnia_model, n_steps=3000), abs=1e-12)

    def test_survival_fourth_order(self, daphnia_model):
        env = EnvironmentTrajectory.constant(0.7, 0.0, 3.0)
        ref = survival(env, 3.0, 0.0, 1.2, daphnia_model, n_steps=4096)
        errs = [abs(survival(env, 3.0, 0.0, 1.2, daphnia_model, n_steps=n) - ref) for n in (16, 32)]
        assert errs[0] / errs[1] > 12.0

    def test_cohort_step_matches_flow(self, daphnia_model):
        env = EnvironmentTrajectory.constant(0.8, 0.0, 1.0)
        x, ls, lj = np.array([1.0, 2.0]), np.zeros(2), np.zeros(2)
        h = 1.0 / 200
        for _ in range(200):
            x, ls, lj = cohort_step(daphnia_model, x, ls, lj, 0.8, 0.8, h)
        np.testing.assert_allclose(x, flow_size(env, 1.0, 0.0, np.array([1.0, 2.0]), daphnia_model, n_steps=200), rtol=1e-13)
        np.testing.assert_allclose(np.exp(-ls), survival(env, 1.0, 0.0, np.array([1.0, 2.0]), daphnia_model, n_steps=200), rtol=1e-13)
        x2, ls2, lj2 = cohort_step(daphnia_model, np.array([1.0]), np.zeros(1), None, 0.8, 0.8, h)
        assert lj2 is None
