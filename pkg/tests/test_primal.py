import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from keybound import (
    ConstraintSet,
    HermitianOperator,
    KeyMapPOVM,
    KeyRateProblem,
    OracleOptions,
    PrimalInfeasibleError,
    PrimalResult,
    binary_entropy,
    build_b92,
    build_bb84,
    build_six_state,
    build_two_mub,
    depolarize,
    bell_basis,
    identity,
    perturb_constraints,
    perturbation_convergence_check,
    solve_primal,
    tomography_basis,
)
from keybound.entropy import coherence
from keybound.operators import kron


def fannes_window(trace_dist, d):
    # classic continuity envelope, valid for small trace distance
    return 2.0 * (trace_dist * math.log2(d) - trace_dist * math.log2(trace_dist))


class TestPerturbConstraints:
    def test_eps_zero_is_identity(self):
        cs = build_bb84(0.05).constraints
        assert perturb_constraints(cs, 0.0) is cs

    def test_identity_value_is_fixed_point(self):
        cs = build_bb84(0.05).constraints
        out = perturb_constraints(cs, 0.01)
        assert out.values[0] == pytest.approx(1.0)

    def test_bb84_zero_error_becomes_trace_term(self):
        # Tr(E_Z) = 2, so (1 - 4e-3)*0 + 1e-3*2 = 2e-3
        cs = build_bb84(0.0).constraints
        out = perturb_constraints(cs, 0.001)
        assert out.values[2] == pytest.approx(0.002)

    def test_operators_unchanged(self):
        cs = build_bb84(0.05).constraints
        out = perturb_constraints(cs, 0.01)
        for a, b in zip(cs.operators, out.operators):
            assert_allclose(a.entries, b.entries)

    def test_feasible_point_maps_to_strict_interior(self):
        problem = build_bb84(0.0)
        eps = 0.003
        out = perturb_constraints(problem.constraints, eps)
        d = problem.constraints.dim
        mixed = (1 - d * eps) * problem.witness + eps * np.eye(d)
        for op, val in zip(out.operators, out.values):
            assert np.trace(op.entries @ mixed).real == pytest.approx(val, abs=1e-12)
        assert np.linalg.eigvalsh(mixed).min() > 0

    def test_eps_range_validated(self):
        cs = build_bb84(0.05).constraints
        with pytest.raises(ValueError):
            perturb_constraints(cs, -0.001)
        with pytest.raises(ValueError):
            perturb_constraints(cs, 0.25)  # 1/d with d = 4


class TestSolvePrimal:
    def test_bb84_known_optimum(self):
        # alpha = 1 - h(Q) in the low-noise regime
        res = solve_primal(build_bb84(0.05))
        assert res.value == pytest.approx(1.0 - binary_entropy(0.05), abs=2e-4)
        assert res.feasibility_residual < 1e-6
        assert res.min_eigenvalue > 0
        assert isinstance(res.rho_star, HermitianOperator)
        assert np.trace(res.rho_star.entries).real == pytest.approx(1.0, abs=1e-9)

    def test_six_state_optimum_above_bb84(self):
        q = 0.08
        v6 = solve_primal(build_six_state(q)).value
        v4 = solve_primal(build_bb84(q)).value
        assert v6 > v4 + 0.01

    def test_rank_deficient_witness_triggers_auto_perturbation(self):
        # noiseless BB84 pins a pure state; the automatic interior repair
        # must land within the continuity window of the exact value 1
        res = solve_primal(build_bb84(0.0))
        window = fannes_window(4 * 2e-5, 4) + 1e-4
        assert res.value == pytest.approx(1.0, abs=window)
        assert res.min_eigenvalue > 0

    def test_two_mub_qutrit_noiseless(self):
        res = solve_primal(build_two_mub(3, 0.0))
        window = fannes_window(9 * 2e-5, 9) + 1e-4
        assert res.value == pytest.approx(math.log2(3.0), abs=window)

    def test_explicit_eps_respected(self):
        problem = build_bb84(0.05)
        base = solve_primal(problem, OracleOptions(eps=0.0)).value
        bumped = solve_primal(problem, OracleOptions(eps=0.01)).value
        assert base == pytest.approx(1.0 - binary_entropy(0.05), abs=2e-4)
        assert abs(bumped - base) > 1e-4  # the perturbed problem is different
        assert abs(bumped - base) < fannes_window(4 * 0.01, 4)

    def test_fully_determined_state_shortcut(self):
        # tomographically complete constraints leave nothing to optimize
        phi = bell_basis(2)[0]
        witness = depolarize(np.outer(phi, phi.conj()), 0.1, (2, 2)).entries
        ops = [identity(4)] + list(tomography_basis(4))
        vals = [1.0] + [float(np.trace(o.entries @ witness).real) for o in tomography_basis(4)]
        z = KeyMapPOVM((np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
        problem = KeyRateProblem(
            dim_a=2,
            dim_b=2,
            keymap=z,
            constraints=ConstraintSet(tuple(ops), tuple(vals)),
            hzazb=0.0,
        )
        res = solve_primal(problem)
        assert res.iterations == 0
        assert_allclose(res.rho_star.entries, witness, atol=1e-8)
        assert res.value == pytest.approx(coherence(witness, z, ), abs=1e-9)

    def test_inconsistent_constraints_rejected(self):
        p = np.diag([1.0, 0.0, 0.0, 0.0])
        cs = ConstraintSet(
            (identity(4), HermitianOperator(p), HermitianOperator(np.eye(4) - p)),
            (1.0, 0.8, 0.8),
        )
        z = KeyMapPOVM((np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
        problem = KeyRateProblem(dim_a=2, dim_b=2, keymap=z, constraints=cs, hzazb=0.0)
        with pytest.raises(PrimalInfeasibleError, match="inconsistent"):
            solve_primal(problem)

    def test_psd_infeasible_rejected(self):
        # affinely consistent but no PSD solution: a projector with a
        # negative expectation
        p = np.diag([1.0, 0.0, 0.0, 0.0])
        cs = ConstraintSet((identity(4), HermitianOperator(p)), (1.0, -0.2))
        z = KeyMapPOVM((np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
        problem = KeyRateProblem(dim_a=2, dim_b=2, keymap=z, constraints=cs, hzazb=0.0)
        with pytest.raises(PrimalInfeasibleError):
            solve_primal(problem)

    def test_b92_postselected_oracle_runs(self):
        res = solve_primal(build_b92(math.radians(50), 0.02))
        assert np.isfinite(res.value)
        assert res.value >= -1e-9
        assert res.feasibility_residual < 1e-6


class TestPerturbationConvergence:
    def test_values_approach_the_exact_optimum(self):
        values = perturbation_convergence_check(build_bb84(0.0), [1e-3, 1e-4, 1e-5])
        assert len(values) == 3
        # each value sits in its own continuity window around 1
        for eps, v in zip([1e-3, 1e-4, 1e-5], values):
            assert abs(v - 1.0) < fannes_window(4 * 2 * eps, 4) + 1e-4
        # and the window shrinks
        assert abs(values[-1] - 1.0) < abs(values[0] - 1.0)

    def test_schedule_validated(self):
        problem = build_bb84(0.05)
        with pytest.raises(ValueError):
            perturbation_convergence_check(problem, [])
        with pytest.raises(ValueError):
            perturbation_convergence_check(problem, [1e-4, 1e-3])
        with pytest.raises(ValueError):
            perturbation_convergence_check(problem, [1e-3, 0.0])


class TestOracleOptions:
    def test_defaults(self):
        opts = OracleOptions()
        assert opts.eps is None
        assert opts.mu_start == 1e-2
        assert opts.mu_end == 1e-9
        assert opts.mu_factor == 0.2
        assert opts.max_iters == 300
