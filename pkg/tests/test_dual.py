import dataclasses
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from keybound import (
    ConstraintSet,
    DualResult,
    KeyMapPOVM,
    KeyRateProblem,
    binary_entropy,
    build_b92,
    build_bb84,
    build_mdi_bb84,
    build_six_state,
    build_two_mub,
    effective_constraints,
    identity,
    key_rate_from_theta,
    maximize_theta,
    solve_primal,
    theta_objective,
)
from keybound.dual import SolverOptions
from keybound.entropy import LN2


@pytest.fixture
def trivial_problem():
    """Normalization constraint only: theta has the closed form -e^(-1-l) - l."""
    z = KeyMapPOVM((np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
    return KeyRateProblem(
        dim_a=2,
        dim_b=1,
        keymap=z,
        constraints=ConstraintSet((identity(2),), (1.0,)),
        hzazb=0.0,
    )


class TestThetaObjective:
    def test_closed_form_normalization_only(self, trivial_problem):
        # the pinched exponential is e^(-1-l) times the identity
        assert theta_objective(np.array([-1.0]), trivial_problem) == pytest.approx(
            0.0, abs=1e-14
        )
        assert theta_objective(np.array([0.0]), trivial_problem) == pytest.approx(
            -math.exp(-1.0)
        )
        for lam in (-2.0, -0.5, 0.7):
            assert theta_objective(np.array([lam]), trivial_problem) == pytest.approx(
                -math.exp(-1.0 - lam) - lam
            )

    def test_lambda_length_checked(self, trivial_problem):
        with pytest.raises(ValueError):
            theta_objective(np.array([0.0, 1.0]), trivial_problem)

    def test_any_multiplier_is_a_valid_bound(self):
        # weak duality pointwise: random lambdas never beat the primal value
        problem = build_bb84(0.08)
        alpha_nats = LN2 * solve_primal(problem).value
        rng = np.random.default_rng(0)
        for _ in range(50):
            lam = rng.normal(scale=2.0, size=problem.constraints.n)
            assert theta_objective(lam, problem) <= alpha_nats + 1e-6

    def test_block_decomposition_is_exact(self):
        # the MDI problem splits over the announcement register; evaluating
        # on an equivalent flat problem must give the same number
        problem = build_mdi_bb84(0.03)
        flat = dataclasses.replace(problem, dim_b=8, dim_m=1)
        rng = np.random.default_rng(1)
        for _ in range(5):
            lam = rng.normal(scale=0.5, size=problem.constraints.n)
            assert theta_objective(lam, problem) == pytest.approx(
                theta_objective(lam, flat), abs=1e-10
            )


class TestKeyRateFromTheta:
    def test_perfect_correlations(self):
        assert key_rate_from_theta(math.log(2.0), 0.0) == pytest.approx(1.0)

    def test_zero(self):
        assert key_rate_from_theta(0.0, 0.0) == 0.0

    def test_sifting_factor(self):
        assert key_rate_from_theta(math.log(2.0), 0.2, p_pass=0.5) == pytest.approx(0.4)

    def test_clamped_at_zero(self):
        assert key_rate_from_theta(-1.0, 0.5) == 0.0


class TestMaximizeTheta:
    def test_normalization_only_optimum(self, trivial_problem):
        res = maximize_theta(trivial_problem, SolverOptions(starts=2))
        assert res.theta == pytest.approx(0.0, abs=1e-7)
        assert res.lam[0] == pytest.approx(-1.0, abs=1e-3)
        assert res.converged

    def test_bb84_reference_point(self):
        res = maximize_theta(build_bb84(0.05), SolverOptions(starts=4))
        assert res.key_rate == pytest.approx(0.4271, abs=1e-3)
        assert res.key_rate == pytest.approx(
            1.0 - 2.0 * binary_entropy(0.05), abs=1e-3
        )
        assert res.converged

    def test_bb84_noiseless(self):
        res = maximize_theta(build_bb84(0.0), SolverOptions(starts=4))
        assert res.key_rate == pytest.approx(1.0, abs=1e-3)
        assert res.key_rate <= 1.0 + 1e-9  # a bound may never overshoot

    def test_six_state_beats_bb84(self):
        q = 0.08
        k6 = maximize_theta(build_six_state(q), SolverOptions(starts=4)).key_rate
        k4 = maximize_theta(build_bb84(q), SolverOptions(starts=4)).key_rate
        assert k6 > k4 + 0.01

    def test_two_mub_qutrit_noiseless(self):
        res = maximize_theta(build_two_mub(3, 0.0), SolverOptions(starts=4))
        assert res.key_rate == pytest.approx(math.log2(3.0), abs=1e-3)
        assert res.key_rate <= math.log2(3.0) + 1e-9

    def test_two_mub_d5_noiseless(self):
        res = maximize_theta(build_two_mub(5, 0.0), SolverOptions(starts=4))
        assert res.key_rate == pytest.approx(math.log2(5.0), abs=1e-3)

    def test_mdi_noiseless_frozen(self):
        res = maximize_theta(build_mdi_bb84(0.0), SolverOptions(starts=4))
        assert res.key_rate == pytest.approx(0.9998, abs=5e-4)
        assert res.key_rate <= 1.0 + 1e-9
        assert res.converged

    def test_reported_theta_never_exceeds_exact_objective(self):
        # the reported number folds in its own evaluation-noise allowance
        for problem in (build_bb84(0.05), build_two_mub(3, 0.0), build_mdi_bb84(0.0)):
            res = maximize_theta(problem, SolverOptions(starts=2))
            exact = theta_objective(res.lam, problem)
            assert exact >= res.theta - 1e-12
            assert exact - res.theta < 2e-3  # allowance itself stays small

    def test_deterministic_given_seed(self):
        problem = build_bb84(0.03)
        a = maximize_theta(problem, SolverOptions(starts=3, seed=11))
        b = maximize_theta(problem, SolverOptions(starts=3, seed=11))
        assert np.array_equal(a.lam, b.lam)
        assert a.theta == b.theta

    def test_result_fields(self):
        res = maximize_theta(build_bb84(0.05), SolverOptions(starts=2))
        assert isinstance(res, DualResult)
        assert res.lam.shape == (3,)
        assert res.restarts_used >= 1
        assert isinstance(res.converged, bool)

    def test_keyrate_consistency_with_fields(self):
        problem = build_b92(math.radians(50), 0.02)
        res = maximize_theta(problem, SolverOptions(starts=4))
        _, p_pass, _ = effective_constraints(problem)
        expect = max(0.0, p_pass * (res.theta / LN2 - problem.hzazb))
        assert res.key_rate == pytest.approx(expect, abs=1e-12)
        assert res.lam.shape == (problem.constraints.n + 1,)

    def test_b92_noiseless_positive(self):
        res = maximize_theta(build_b92(math.radians(50), 0.0), SolverOptions(starts=4))
        assert res.key_rate > 0.05

    def test_options_defaults(self):
        opts = SolverOptions()
        assert opts.starts == 8
        assert opts.seed == 0
        assert opts.tol == 1e-9
        assert opts.max_iters == 2000
