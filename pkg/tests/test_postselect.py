import dataclasses
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from keybound import (
    ConstraintSet,
    HermitianOperator,
    KeyMapPOVM,
    KeyRateProblem,
    TransformedConstraints,
    build_b92,
    build_bb84,
    coherence,
    effective_constraints,
    identity,
    maximize_theta,
    pinch,
    relative_entropy,
    transform_general,
    transform_invertible,
    unnormalized_rescale,
)
from keybound.dual import SolverOptions
from keybound.entropy import LN2
from keybound.operators import herm_to_vec


def rand_rho(d, rng):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    p = m @ m.conj().T
    return p / np.trace(p).real


def zbasis_keymap(d):
    eye = np.eye(d)
    return KeyMapPOVM(tuple(np.outer(eye[:, j], eye[:, j]) for j in range(d)))


def satisfied(constraints, rho, tol=1e-8):
    return all(
        abs(np.trace(op.entries @ rho).real - val) < tol
        for op, val in zip(constraints.operators, constraints.values)
    )


class TestTransformedConstraints:
    def test_p_pass_validated(self):
        with pytest.raises(ValueError, match="p_pass"):
            TransformedConstraints((), (), (), p_pass=0.0)

    def test_union_orthonormality_enforced(self):
        e = HermitianOperator(np.diag([1.0, 0.0]))
        with pytest.raises(ValueError, match="orthonormal"):
            TransformedConstraints((e,), (0.5,), (e,), p_pass=0.5)

    def test_to_constraint_set_schema(self):
        om = HermitianOperator(np.diag([1.0, 0.0]))
        lm = HermitianOperator(np.diag([0.0, 1.0]))
        cs = TransformedConstraints((om,), (0.25,), (lm,), p_pass=0.5).to_constraint_set()
        assert cs.n == 3
        assert cs.values[0] == pytest.approx(0.5)  # omega / p_pass
        assert cs.values[1] == 0.0  # lambda block
        assert cs.values[2] == 1.0  # appended normalization
        assert cs.index_of_identity() == 2


class TestInvertiblePath:
    def test_transports_expectations_exactly(self):
        rng = np.random.default_rng(0)
        for seed in range(10):
            rng = np.random.default_rng(seed)
            rho = rand_rho(4, rng)
            gammas = [rand_rho(4, rng) for _ in range(3)]
            cs = ConstraintSet(
                (identity(4),) + tuple(HermitianOperator(g) for g in gammas),
                (1.0,) + tuple(np.trace(g @ rho).real for g in gammas),
            )
            g = np.eye(4) + 0.3 * (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
            g = g / np.linalg.norm(g, 2)  # contractive, so p_pass <= 1
            p = np.trace(g @ rho @ g.conj().T).real
            post = g @ rho @ g.conj().T / p
            out = transform_invertible(g, cs, p)
            assert satisfied(out, post)

    def test_normalization_reappended(self):
        cs = build_bb84(0.05).constraints
        out = transform_invertible(np.diag([1.0, 0.9, 0.8, 0.7]), cs, 0.8)
        assert out.n == cs.n + 1
        assert_allclose(out.operators[-1].entries, np.eye(4))
        assert out.values[-1] == 1.0
        # transported values are scaled by 1/p_pass
        assert out.values[0] == pytest.approx(1.0 / 0.8)

    def test_singular_kraus_rejected(self):
        cs = build_bb84(0.05).constraints
        with pytest.raises(ValueError, match="singular"):
            transform_invertible(np.diag([1.0, 1.0, 1.0, 0.0]), cs, 0.5)

    def test_p_pass_validated(self):
        cs = build_bb84(0.05).constraints
        with pytest.raises(ValueError, match="p_pass"):
            transform_invertible(np.eye(4), cs, 0.0)


class TestGeneralPath:
    def test_projected_witness_satisfies_output(self):
        # a genuinely singular Kraus: discard the |11> corner
        problem = build_bb84(0.05)
        g = np.diag([1.0, 1.0, 1.0, 0.0]).astype(complex)
        tc = transform_general(g, problem.constraints, problem.witness)
        assert tc.one_sided
        p = np.trace(g @ problem.witness @ g.conj().T).real
        assert tc.p_pass == pytest.approx(p)
        post = g @ problem.witness @ g.conj().T / p
        assert satisfied(tc.to_constraint_set(), post)

    def test_union_spans_whole_space_for_full_rank_kraus(self):
        problem = build_bb84(0.05)
        g = np.diag([1.0, 0.9, 0.8, 0.7]).astype(complex)
        tc = transform_general(g, problem.constraints, problem.witness)
        # invertible G: image is everything, so no zero-valued completion
        assert len(tc.lambda_ops) == 0
        assert len(tc.omega_ops) == problem.constraints.n

    def test_shape_checked(self):
        problem = build_bb84(0.05)
        with pytest.raises(ValueError, match="shape"):
            transform_general(np.eye(3), problem.constraints, problem.witness)

    def test_inconsistent_values_rejected(self):
        cs = ConstraintSet((identity(2), identity(2)), (1.0, 0.9))
        with pytest.raises(ValueError, match="inconsistent"):
            transform_general(np.eye(2), cs, np.eye(2) / 2)

    def test_agrees_with_invertible_path_when_both_apply(self):
        # same feasible set written in two parametrizations -> same bound
        problem = build_bb84(0.08)
        rng = np.random.default_rng(5)
        u, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
        g = u @ np.diag([1.0, 0.85, 0.7, 0.55]) @ u.conj().T
        p = np.trace(g @ problem.witness @ g.conj().T).real

        via_inv = transform_invertible(g, problem.constraints, p)
        via_gen = transform_general(g, problem.constraints, problem.witness)
        base = dict(dim_a=2, dim_b=2, keymap=problem.keymap, hzazb=0.0)
        opts = SolverOptions(starts=4, seed=1)
        th_inv = maximize_theta(
            KeyRateProblem(constraints=via_inv, **base), opts
        ).theta
        th_gen = maximize_theta(
            KeyRateProblem(constraints=via_gen.to_constraint_set(), **base), opts
        ).theta
        assert th_inv == pytest.approx(th_gen, abs=2e-4)


class TestEffectiveConstraints:
    def test_plain_problem_passthrough(self):
        problem = build_bb84(0.05)
        cs, p_pass, one_sided = effective_constraints(problem)
        assert cs is problem.constraints
        assert p_pass == 1.0
        assert not one_sided

    def test_b92_uses_invertible_path(self):
        # the unambiguous-discrimination filter is full rank
        problem = build_b92(math.radians(50), 0.03)
        cs, p_pass, one_sided = effective_constraints(problem)
        assert not one_sided
        assert cs.n == problem.constraints.n + 1
        assert p_pass == pytest.approx(problem.p_pass)

    def test_singular_kraus_takes_general_path(self):
        problem = build_bb84(0.05)
        singular = dataclasses.replace(
            problem, postselect=np.diag([1.0, 1.0, 1.0, 0.0]).astype(complex)
        )
        cs, p_pass, one_sided = effective_constraints(singular)
        assert one_sided
        assert 0.0 < p_pass < 1.0

    def test_p_pass_inferred_from_witness(self):
        problem = build_b92(math.radians(50), 0.03)
        anon = dataclasses.replace(problem, p_pass=None)
        _, p_pass, _ = effective_constraints(anon)
        assert p_pass == pytest.approx(problem.p_pass)

    def test_needs_p_pass_or_witness(self):
        problem = build_b92(math.radians(50), 0.03)
        blind = dataclasses.replace(problem, p_pass=None, witness=None)
        with pytest.raises(ValueError, match="witness"):
            effective_constraints(blind)


class TestUnnormalizedRescale:
    def test_no_postselection_is_identity(self):
        assert unnormalized_rescale(0.37, 1.0) == pytest.approx(0.37)

    def test_closed_form(self):
        assert unnormalized_rescale(0.2, 0.5) == pytest.approx(0.4 - math.log(0.5))

    def test_matches_entropy_identity(self):
        # alpha-tilde of the unnormalized state p*sigma against the pinch of
        # sigma rescales to the plain coherence of sigma
        rng = np.random.default_rng(7)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            sigma = rand_rho(4, rng)
            z = zbasis_keymap(4)
            p = 0.3 + 0.5 * rng.random()
            alpha_tilde = LN2 * relative_entropy(p * sigma, pinch(sigma, z))
            alpha_hat = LN2 * coherence(sigma, z)
            assert unnormalized_rescale(alpha_tilde, p) == pytest.approx(
                alpha_hat, abs=1e-9
            )
