"""Constraint transformation under post-selection.

A pass/fail announcement is modeled as a single-Kraus CP map
𝒢(ρ) = G ρ G†.  Constraints known for the pre-selection state ρ are turned
into constraints on the normalized post-selected state 𝒢(ρ)/p_pass:

* when G is invertible, each operator maps through the inverse adjoint,
  Γ̃ = G⁻¹† Γ G⁻¹ with value γ/p_pass (the cheap, exact path);
* otherwise an operator-space Gram-Schmidt procedure identifies the image
  directions whose values are pinned by the old constraints ({Ω_n}) and the
  directions orthogonal to the image ({Λ_ℓ}, value 0).  The general path is
  one-sided (the discarded block's positivity is not representable), so
  results obtained through it are lower bounds — flagged on the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import null_space

from .operators import (
    HermitianOperator,
    _as_matrix,
    gram_schmidt_operators,
    herm_to_vec,
    identity,
    vec_to_herm,
)
from .protocols import ConstraintSet, KeyRateProblem

__all__ = [
    "TransformedConstraints",
    "transform_invertible",
    "transform_general",
    "effective_constraints",
    "unnormalized_rescale",
]

#: Condition-number ceiling for the invertible fast path.
COND_LIMIT = 1e12


@dataclass(frozen=True)
class TransformedConstraints:
    """Output of the general (non-invertible) transformation.

    ``omega_ops``/``omega_vals`` pin Tr(𝒢(ρ)Ω_n) = ω_n; ``lambda_ops`` carry
    zero values and restrict to the image of 𝒢.  The union {Ω} ∪ {Λ} is
    orthonormal under the Frobenius inner product.  ``one_sided`` records
    that rates computed through this path are lower bounds only.
    """

    omega_ops: tuple
    omega_vals: tuple
    lambda_ops: tuple
    p_pass: float
    one_sided: bool = True

    def __post_init__(self):
        if not 0.0 < self.p_pass <= 1.0 + 1e-12:
            raise ValueError(f"p_pass = {self.p_pass} outside (0, 1]")
        ops = tuple(self.omega_ops) + tuple(self.lambda_ops)
        if ops:
            v = np.array([herm_to_vec(o) for o in ops])
            dev = np.abs(v @ v.T - np.eye(len(ops))).max()
            if dev > 1e-10:
                raise ValueError(f"{{Ω}} ∪ {{Λ}} not orthonormal (dev {dev:.2e})")

    def to_constraint_set(self) -> ConstraintSet:
        """Constraints on the *normalized* post-selected state.

        Values ω_n/p_pass, zeros for the Λ block, and ⟨𝟙⟩ = 1 appended.
        """
        ops = list(self.omega_ops) + list(self.lambda_ops)
        vals = [v / self.p_pass for v in self.omega_vals] + [0.0] * len(self.lambda_ops)
        dim = ops[0].dim if ops else 0
        ops.append(identity(dim))
        vals.append(1.0)
        return ConstraintSet(tuple(ops), tuple(vals))


def _condition_number(g: np.ndarray) -> float:
    s = np.linalg.svd(g, compute_uv=False)
    if s[-1] <= 0:
        return math.inf
    return float(s[0] / s[-1])


def transform_invertible(g, constraints: ConstraintSet, p_pass: float) -> ConstraintSet:
    """Exact constraint transport through an invertible Kraus operator.

    Γ̃ᵢ = G⁻¹† Γᵢ G⁻¹ with γ̃ᵢ = γᵢ/p_pass, so that
    Tr((𝒢(ρ)/p_pass)·Γ̃ᵢ) = Tr(ρΓᵢ)/p_pass.  The normalization constraint
    ⟨𝟙⟩ = 1 of the normalized post-selected state is re-appended.
    """
    g = np.asarray(g, dtype=complex)
    if not 0.0 < p_pass <= 1.0 + 1e-12:
        raise ValueError(f"p_pass = {p_pass} outside (0, 1]")
    cond = _condition_number(g)
    if cond >= COND_LIMIT:
        raise ValueError(f"Kraus operator is numerically singular (cond {cond:.2e})")
    ginv = np.linalg.inv(g)
    ops = []
    vals = []
    for op, val in zip(constraints.operators, constraints.values):
        m = ginv.conj().T @ op.entries @ ginv
        ops.append(HermitianOperator((m + m.conj().T) / 2))
        vals.append(val / p_pass)
    ops.append(identity(g.shape[0]))
    vals.append(1.0)
    return ConstraintSet(tuple(ops), tuple(vals))


def transform_general(g, constraints: ConstraintSet, rho_witness) -> TransformedConstraints:
    """Constraint transport through an arbitrary single Kraus operator.

    Follows the operator Gram-Schmidt construction: orthonormalize the
    constraint operators to {Δᵢ}, complete to a full basis {Δ}∪{Ξ}, span the
    unconstrained image directions {Υ_m} = span 𝒢(Ξ), extract the newly
    pinned directions {Ω_n} from 𝒢(Δ), evaluate ω_n on 𝒢(ρ₀) with
    ρ₀ = Σδᵢ Δᵢ (minimum-norm, possibly non-PSD — only the trace constraints
    matter), and complete the ambient space with zero-valued {Λ_ℓ}.
    """
    g = np.asarray(g, dtype=complex)
    dim = constraints.dim
    if g.shape != (dim, dim):
        raise ValueError(f"Kraus shape {g.shape} does not match constraint dim {dim}")

    def gmap(m: np.ndarray) -> np.ndarray:
        out = g @ m @ g.conj().T
        return (out + out.conj().T) / 2

    a_embed = np.array([herm_to_vec(o) for o in constraints.operators])
    vals = np.array(constraints.values, dtype=float)
    x0, *_ = np.linalg.lstsq(a_embed, vals, rcond=None)
    resid = np.abs(a_embed @ x0 - vals).max()
    if resid > 1e-8:
        raise ValueError(f"inconsistent constraint set (residual {resid:.2e})")
    rho0 = vec_to_herm(x0, dim).entries

    delta = gram_schmidt_operators(constraints.operators)
    d_embed = np.array([herm_to_vec(e) for e in delta])
    xi_vecs = null_space(d_embed)
    xi_ops = [vec_to_herm(xi_vecs[:, i], dim).entries for i in range(xi_vecs.shape[1])]

    upsilon = list(gram_schmidt_operators([gmap(x) for x in xi_ops])) if xi_ops else []

    # newly pinned image directions: what G(Delta) adds beyond span{Upsilon}
    omega_ops: list[HermitianOperator] = []
    accepted = [herm_to_vec(u) for u in upsilon]
    for dlt in delta:
        v = herm_to_vec(gmap(dlt.entries))
        for _ in range(2):
            for b in accepted:
                v = v - (b @ v) * b
        norm = np.linalg.norm(v)
        if norm < 1e-10:
            continue
        v = v / norm
        accepted.append(v)
        omega_ops.append(vec_to_herm(v, dim))

    grho0 = gmap(rho0)
    omega_vals = tuple(
        float(np.real(np.trace(grho0 @ o.entries))) for o in omega_ops
    )

    # zero-valued completion of the ambient space
    if accepted:
        lam_vecs = null_space(np.array(accepted))
        lambda_ops = tuple(
            vec_to_herm(lam_vecs[:, i], dim) for i in range(lam_vecs.shape[1])
        )
    else:
        lambda_ops = tuple(gram_schmidt_operators(
            [o.entries for o in gram_schmidt_operators([np.eye(dim)])]
        ))  # degenerate; not reachable for nonzero G

    w = _as_matrix(rho_witness)
    p_pass = float(np.real(np.trace(gmap(w))))
    return TransformedConstraints(tuple(omega_ops), omega_vals, lambda_ops, p_pass)


def effective_constraints(problem: KeyRateProblem) -> tuple[ConstraintSet, float, bool]:
    """The constraint set both solvers actually operate on.

    Returns (constraints, p_pass, one_sided).  Without post-selection this
    is the problem's own set with p_pass = 1; with it, the invertible path
    is used whenever cond(G) < 1e12, else the general path (one_sided=True).
    """
    if problem.postselect is None:
        return problem.constraints, float(problem.p_pass or 1.0), False
    g = problem.postselect
    p_pass = problem.p_pass
    if p_pass is None:
        if problem.witness is None:
            raise ValueError("post-selected problem needs p_pass or a witness")
        p_pass = float(np.real(np.trace(g @ problem.witness @ g.conj().T)))
    if _condition_number(g) < COND_LIMIT:
        return transform_invertible(g, problem.constraints, p_pass), p_pass, False
    if problem.witness is None:
        raise ValueError("general post-selection path needs a witness for p_pass")
    tc = transform_general(g, problem.constraints, problem.witness)
    return tc.to_constraint_set(), tc.p_pass, True


def unnormalized_rescale(alpha_tilde_nats: float, p_pass: float) -> float:
    """Cross-check identity between the two normalization conventions.

    With α̃ the relative entropy (nats) of the *unnormalized* post-selected
    state against the pinch of the *normalized* one, the coherence of the
    normalized state is α̂ = α̃/p_pass − ln p_pass.
    """
    return alpha_tilde_nats / p_pass - math.log(p_pass)
