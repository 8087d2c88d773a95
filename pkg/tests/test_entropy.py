import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from keybound import (
    JointDistribution,
    KeyMapPOVM,
    binary_entropy,
    coherence,
    cond_entropy,
    fano_bound,
    generalized_coherence,
    pinch,
    relative_entropy,
    von_neumann_entropy,
)
from keybound.entropy import LN2


def rand_rho(d, rng):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    p = m @ m.conj().T
    return p / np.trace(p).real


def zbasis_keymap(d):
    eye = np.eye(d)
    return KeyMapPOVM(tuple(np.outer(eye[:, j], eye[:, j]) for j in range(d)))


class TestBinaryEntropy:
    def test_endpoints(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0

    def test_half(self):
        assert binary_entropy(0.5) == pytest.approx(1.0)

    def test_symmetry(self):
        for q in (0.01, 0.1, 0.3):
            assert binary_entropy(q) == pytest.approx(binary_entropy(1 - q))

    def test_domain(self):
        with pytest.raises(ValueError):
            binary_entropy(-0.01)
        with pytest.raises(ValueError):
            binary_entropy(1.01)


class TestVonNeumann:
    def test_pure_state_zero(self):
        psi = np.array([1.0, 1.0]) / math.sqrt(2)
        assert von_neumann_entropy(np.outer(psi, psi)) == pytest.approx(0.0, abs=1e-12)

    def test_maximally_mixed(self):
        for d in (2, 3, 5):
            assert von_neumann_entropy(np.eye(d) / d) == pytest.approx(np.log2(d))

    def test_matches_shannon_on_diagonal(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            p = rng.dirichlet(np.ones(4))
            expected = -sum(x * np.log2(x) for x in p if x > 0)
            assert von_neumann_entropy(np.diag(p)) == pytest.approx(expected)

    def test_basis_invariant(self):
        rng = np.random.default_rng(3)
        rho = rand_rho(4, rng)
        u, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
        assert_allclose(
            von_neumann_entropy(u @ rho @ u.conj().T),
            von_neumann_entropy(rho),
            atol=1e-10,
        )

    def test_negative_eigenvalue_rejected(self):
        with pytest.raises(ValueError):
            von_neumann_entropy(np.diag([1.1, -0.1]))


class TestJointDistribution:
    def test_accepts_matrix(self):
        jd = JointDistribution([[0.25, 0.25], [0.25, 0.25]])
        assert jd.probs.shape == (2, 2)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            JointDistribution([[0.6, -0.1], [0.3, 0.2]])

    def test_rejects_bad_total(self):
        with pytest.raises(ValueError):
            JointDistribution([[0.3, 0.3], [0.3, 0.3]])

    def test_clamps_float_dust(self):
        jd = JointDistribution([[0.5, -1e-15], [0.25, 0.25 + 1e-15]])
        assert jd.probs.min() >= 0.0


class TestCondEntropy:
    def test_product_gives_marginal_entropy(self):
        # H(A|B) = H(A) when A and B are independent
        pa = np.array([0.7, 0.3])
        pb = np.array([0.4, 0.6])
        jd = JointDistribution(np.outer(pa, pb))
        assert cond_entropy(jd) == pytest.approx(binary_entropy(0.3))

    def test_perfect_correlation_zero(self):
        jd = JointDistribution(np.diag([0.5, 0.5]))
        assert cond_entropy(jd) == pytest.approx(0.0, abs=1e-12)

    def test_manual_formula(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            p = rng.dirichlet(np.ones(6)).reshape(2, 3)
            jd = JointDistribution(p)
            hab = -sum(x * np.log2(x) for x in p.ravel() if x > 0)
            pb = p.sum(axis=0)
            hb = -sum(x * np.log2(x) for x in pb if x > 0)
            assert cond_entropy(jd) == pytest.approx(hab - hb)

    def test_bb84_style_error_channel(self):
        q = 0.07
        jd = JointDistribution([[(1 - q) / 2, q / 2], [q / 2, (1 - q) / 2]])
        assert cond_entropy(jd) == pytest.approx(binary_entropy(q))


class TestPinch:
    def test_kills_offdiagonals(self):
        rng = np.random.default_rng(0)
        rho = rand_rho(3, rng)
        out = pinch(rho, zbasis_keymap(3)).entries
        assert_allclose(out, np.diag(np.diag(rho)), atol=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        z = zbasis_keymap(4)
        once = pinch(rand_rho(4, rng), z)
        twice = pinch(once, z)
        assert_allclose(twice.entries, once.entries, atol=1e-13)

    def test_trace_preserving(self):
        rng = np.random.default_rng(2)
        rho = rand_rho(5, rng)
        z = KeyMapPOVM(
            (np.diag([1.0, 1, 0, 0, 0]), np.diag([0.0, 0, 1, 1, 1]))
        )
        assert np.trace(pinch(rho, z).entries).real == pytest.approx(1.0)

    def test_lift_on_a(self):
        rng = np.random.default_rng(3)
        rho = rand_rho(6, rng)
        z = zbasis_keymap(2)
        lifted = pinch(rho, z, lift_on_a=True).entries
        # manual lift Z_j (x) 1_3
        expected = np.zeros((6, 6), dtype=complex)
        for e in z.elements:
            p = np.kron(e.entries, np.eye(3))
            expected += p @ rho @ p
        assert_allclose(lifted, expected, atol=1e-12)

    def test_lift_requires_divisible_dim(self):
        with pytest.raises(ValueError):
            pinch(np.eye(5) / 5, zbasis_keymap(2), lift_on_a=True)


class TestRelativeEntropy:
    def test_self_zero(self):
        rng = np.random.default_rng(4)
        rho = rand_rho(3, rng)
        assert relative_entropy(rho, rho) == pytest.approx(0.0, abs=1e-9)

    def test_orthogonal_support_infinite(self):
        assert relative_entropy(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == math.inf

    def test_nonnegative_on_states(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            assert relative_entropy(rand_rho(3, rng), rand_rho(3, rng)) > -1e-10

    def test_matches_classical_kl(self):
        rng = np.random.default_rng(8)
        p = rng.dirichlet(np.ones(4))
        q = rng.dirichlet(np.ones(4))
        kl = sum(a * np.log2(a / b) for a, b in zip(p, q))
        assert relative_entropy(np.diag(p), np.diag(q)) == pytest.approx(kl)

    def test_unnormalized_second_argument(self):
        # D(rho || 2 rho) = -1 bit: the second slot need not be a state
        rng = np.random.default_rng(9)
        rho = rand_rho(3, rng)
        assert relative_entropy(rho, 2.0 * rho) == pytest.approx(-1.0, abs=1e-9)

    def test_rejects_negative_rho(self):
        with pytest.raises(ValueError):
            relative_entropy(np.diag([1.5, -0.5]), np.eye(2) / 2)


class TestCoherence:
    def test_plus_state_one_bit(self):
        psi = np.array([1.0, 1.0]) / math.sqrt(2)
        assert coherence(np.outer(psi, psi), zbasis_keymap(2)) == pytest.approx(1.0)

    def test_diagonal_states_zero(self):
        rng = np.random.default_rng(10)
        p = rng.dirichlet(np.ones(3))
        assert coherence(np.diag(p), zbasis_keymap(3)) == pytest.approx(0.0, abs=1e-10)

    def test_equals_relative_entropy_to_pinched(self):
        # the two textbook routes agree on full-rank states
        for seed in range(10):
            rng = np.random.default_rng(20 + seed)
            rho = rand_rho(3, rng)
            z = zbasis_keymap(3)
            assert coherence(rho, z) == pytest.approx(
                relative_entropy(rho, pinch(rho, z)), abs=1e-9
            )

    def test_rejects_non_projective(self):
        povm = KeyMapPOVM((0.6 * np.eye(2), 0.4 * np.eye(2)))
        assert not povm.projective
        with pytest.raises(ValueError, match="projective"):
            coherence(np.eye(2) / 2, povm)

    def test_generalized_handles_povm(self):
        rng = np.random.default_rng(30)
        rho = rand_rho(2, rng)
        povm = KeyMapPOVM((0.6 * np.eye(2), 0.4 * np.eye(2)))
        val = generalized_coherence(rho, povm)
        assert np.isfinite(val)
        assert val > -1e-9

    def test_generalized_matches_projective_route(self):
        rng = np.random.default_rng(31)
        rho = rand_rho(3, rng)
        z = zbasis_keymap(3)
        assert generalized_coherence(rho, z) == pytest.approx(
            coherence(rho, z), abs=1e-8
        )


class TestFanoBound:
    def test_zero_error(self):
        assert fano_bound(0.0, 4) == 0.0

    def test_binary_case_is_binary_entropy(self):
        for q in (0.01, 0.05, 0.2):
            assert fano_bound(q, 2) == pytest.approx(binary_entropy(q))

    def test_general_formula(self):
        q, d = 0.1, 5
        assert fano_bound(q, d) == pytest.approx(binary_entropy(q) + q * np.log2(d - 1))

    def test_alphabet_validated(self):
        with pytest.raises(ValueError):
            fano_bound(0.1, 1)


def test_ln2_constant():
    assert LN2 == pytest.approx(math.log(2.0))
