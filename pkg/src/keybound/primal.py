"""Brute-force primal oracle: minimize coherence over the constrained set.

The feasible set {ρ ⪰ 0 : Tr(ρΓᵢ) = γᵢ} is parametrized affinely as
ρ(ξ) = ρ₀ + Σ ξₖ Ξₖ, with ρ₀ the minimum-norm Hermitian solution of the
trace constraints and {Ξₖ} an orthonormal basis of the orthogonal
complement of span{Γᵢ} (both in the real embedding of Hermitian space).
The coherence Φ(ρ) = H(𝒵ρ) − H(ρ) is then minimized over ξ with a log-det
interior-point barrier, μ decreasing geometrically.

This is a verification instrument, not a production solver: it is meant for
total dimensions up to ~36 and is deliberately independent of the dual
machinery so that the two routes can cross-check each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize
from scipy.special import logsumexp

from .entropy import LN2
from .operators import HermitianOperator, herm_to_vec, vec_to_herm
from .postselect import effective_constraints
from .protocols import ConstraintSet, KeyRateProblem

__all__ = [
    "OracleOptions",
    "PrimalResult",
    "PrimalInfeasibleError",
    "PrimalConvergenceError",
    "solve_primal",
    "perturb_constraints",
    "perturbation_convergence_check",
]

#: Automatic strict-feasibility perturbation (Slater repair).
AUTO_EPS = 1e-5

#: Residual above which the affine system Tr(ρΓᵢ) = γᵢ has no Hermitian
#: solution at all.
LSTSQ_RESID_TOL = 1e-8

#: Pre-solve min-eigenvalue above which the set counts as strictly feasible.
STRICT_FEAS_TOL = 1e-6

#: Pre-solve min-eigenvalue below which the set is declared PSD-infeasible.
INFEAS_TOL = -1e-4

_PENALTY_BASE = 1e8
_PENALTY_SLOPE = 1e12


class PrimalInfeasibleError(RuntimeError):
    """The constraint set admits no PSD state (or no Hermitian one)."""


class PrimalConvergenceError(RuntimeError):
    """The barrier loop failed to produce an interior point at every stage."""


@dataclass(frozen=True)
class OracleOptions:
    """Knobs for :func:`solve_primal`.

    ``eps = None`` applies the ℳ_ε strict-feasibility perturbation
    automatically (ε = 1e-5) when the pre-solve finds no strictly positive
    witness; an explicit value (including 0.0) disables that autodetection.
    """

    eps: Optional[float] = None
    mu_start: float = 1e-2
    mu_end: float = 1e-9
    mu_factor: float = 0.2
    max_iters: int = 300


@dataclass(frozen=True)
class PrimalResult:
    rho_star: HermitianOperator
    value: float
    feasibility_residual: float
    min_eigenvalue: float
    iterations: int


def perturb_constraints(constraints: ConstraintSet, eps: float) -> ConstraintSet:
    """Constraint values for the depolarized state ℳ_ε(ρ) = (1−dε)ρ + ε𝟙.

    Operators are unchanged; each value becomes (1−dε)γᵢ + ε·Tr(Γᵢ), so any
    ρ feasible for the original set maps to a strictly positive feasible
    point of the perturbed one.
    """
    d = constraints.dim
    if not 0.0 <= eps < 1.0 / d:
        raise ValueError(f"eps must lie in [0, 1/{d}), got {eps}")
    if eps == 0.0:
        return constraints
    new_vals = tuple(
        (1.0 - d * eps) * val + eps * float(np.real(np.trace(op.entries)))
        for op, val in zip(constraints.operators, constraints.values)
    )
    return constraints.with_values(new_vals)


class _Affine:
    """Real-embedded affine parametrization ρ(ξ) = ρ₀ + Σξₖ Ξₖ."""

    def __init__(self, constraints: ConstraintSet):
        self.dim = constraints.dim
        self.a = np.array([herm_to_vec(op) for op in constraints.operators])
        self.b = np.array(constraints.values, dtype=float)
        x0, *_ = np.linalg.lstsq(self.a, self.b, rcond=None)
        resid = float(np.abs(self.a @ x0 - self.b).max()) if self.b.size else 0.0
        if resid > LSTSQ_RESID_TOL:
            raise PrimalInfeasibleError(
                f"constraint values are mutually inconsistent (residual {resid:.2e})"
            )
        self.x0 = x0
        self.null = null_space(self.a) if self.a.size else np.eye(self.dim**2)
        self.k = self.null.shape[1]

    def rho(self, xi: np.ndarray) -> np.ndarray:
        return vec_to_herm(self.x0 + self.null @ xi, self.dim).entries

    def project(self, rho: np.ndarray) -> np.ndarray:
        """ξ of the affine-set point nearest to ``rho`` (Frobenius)."""
        return self.null.T @ (herm_to_vec(rho) - self.x0)

    def rebase(self, b_new: np.ndarray) -> None:
        """Swap in new constraint values (same operators, same null space)."""
        x0, *_ = np.linalg.lstsq(self.a, b_new, rcond=None)
        self.b = b_new
        self.x0 = x0


def _pinch_arrays(rho: np.ndarray, zops: list) -> np.ndarray:
    out = np.zeros_like(rho)
    for z in zops:
        out += z @ rho @ z
    return (out + out.conj().T) / 2


def _entropy_nats(w: np.ndarray) -> float:
    w = w[w > 1e-300]
    return float(-(w * np.log(w)).sum())


def _max_min_eig(aff: _Affine, xi0: np.ndarray, max_iters: int) -> np.ndarray:
    """Push ξ toward the analytic center in the min-eigenvalue sense.

    Maximizes a softmin surrogate of λ_min(ρ(ξ)): minimizing
    τ·log Σ exp(−wᵢ/τ) (convex in ξ) with τ annealed downward gives a point
    whose true min eigenvalue is within τ·ln(d) of the achievable maximum.
    """
    xi = xi0.copy()
    for tau in (1e-2, 1e-4, 1e-6):

        def fun_grad(x, tau=tau):
            r = aff.rho(x)
            w, u = np.linalg.eigh(r)
            val = tau * logsumexp(-w / tau)
            p = np.exp((-w / tau) - logsumexp(-w / tau))
            grad_rho = -np.einsum("ij,j,kj->ik", u, p, u.conj())
            return val, aff.null.T @ herm_to_vec(grad_rho)

        res = minimize(
            fun_grad,
            xi,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": max_iters, "ftol": 1e-16, "gtol": 1e-12},
        )
        xi = res.x
    return xi


def solve_primal(problem: KeyRateProblem, opts: Optional[OracleOptions] = None) -> PrimalResult:
    """Minimize Φ(ρ, Z_A) over the feasible set; value in bits.

    Raises :class:`PrimalInfeasibleError` when no PSD state satisfies the
    constraints and :class:`PrimalConvergenceError` when every barrier stage
    fails to hold an interior point.
    """
    opts = opts or OracleOptions()
    if problem.keymap.projective is False:
        raise ValueError("the oracle handles projective key maps only")
    constraints, _, _ = effective_constraints(problem)
    if opts.eps is not None and opts.eps > 0.0:
        constraints = perturb_constraints(constraints, opts.eps)
    aff = _Affine(constraints)
    dim = aff.dim
    zops = [np.asarray(z) for z in problem.lifted_keymap()]

    def coherence_bits(rho: np.ndarray) -> float:
        w = np.linalg.eigvalsh(rho)
        wp = np.linalg.eigvalsh(_pinch_arrays(rho, zops))
        return (_entropy_nats(wp) - _entropy_nats(w)) / LN2

    def residual(rho: np.ndarray) -> float:
        return float(np.abs(aff.a @ herm_to_vec(rho) - aff.b).max())

    # fully determined set: nothing to optimize
    if aff.k == 0:
        rho = aff.rho(np.zeros(0))
        wmin = float(np.linalg.eigvalsh(rho).min())
        if wmin < -1e-8:
            raise PrimalInfeasibleError(
                f"unique solution of the constraints is not PSD (min eig {wmin:.2e})"
            )
        rho = rho - min(wmin, 0.0) * np.eye(dim)
        return PrimalResult(
            rho_star=HermitianOperator(rho),
            value=coherence_bits(rho),
            feasibility_residual=residual(rho),
            min_eigenvalue=wmin,
            iterations=0,
        )

    # initial point: the problem's witness when one is shipped, else ρ₀
    xi = np.zeros(aff.k)
    if problem.witness is not None:
        w = np.asarray(problem.witness, dtype=complex)
        if problem.postselect is not None:
            g = problem.postselect
            w = g @ w @ g.conj().T
            w = w / np.real(np.trace(w))
        if w.shape == (dim, dim):
            xi = aff.project(w)

    # feasibility pre-solve, then automatic Slater repair if needed
    xi = _max_min_eig(aff, xi, opts.max_iters)
    lam_min = float(np.linalg.eigvalsh(aff.rho(xi)).min())
    if opts.eps is None and lam_min <= STRICT_FEAS_TOL:
        if lam_min <= INFEAS_TOL:
            raise PrimalInfeasibleError(
                f"no PSD state satisfies the constraints "
                f"(best min eigenvalue {lam_min:.2e})"
            )
        eps = AUTO_EPS
        rho_start = (1.0 - dim * eps) * aff.rho(xi) + eps * np.eye(dim)
        aff.rebase(np.array(perturb_constraints(constraints, eps).values))
        xi = aff.project(rho_start)
        lam_min = float(np.linalg.eigvalsh(aff.rho(xi)).min())
    if lam_min <= 0.0:
        raise PrimalConvergenceError(
            f"could not construct a strictly interior starting point "
            f"(min eigenvalue {lam_min:.2e})"
        )

    eye = np.eye(dim)
    iterations = 0

    def barrier_fun_grad(x: np.ndarray, mu: float):
        rho = aff.rho(x)
        w, u = np.linalg.eigh(rho)
        wmin = w[0]
        if wmin <= 0.0:
            grad_rho = -_PENALTY_SLOPE * np.outer(u[:, 0], u[:, 0].conj())
            return (
                _PENALTY_BASE - _PENALTY_SLOPE * wmin,
                aff.null.T @ herm_to_vec(grad_rho),
            )
        pinched = _pinch_arrays(rho, zops)
        wz, uz = np.linalg.eigh(pinched)
        wz = np.maximum(wz, 1e-300)
        val = _entropy_nats(wz) - _entropy_nats(w) - mu * float(np.log(w).sum())
        log_rho = np.einsum("ij,j,kj->ik", u, np.log(w), u.conj())
        log_pinched = np.einsum("ij,j,kj->ik", uz, np.log(wz), uz.conj())
        inv_rho = np.einsum("ij,j,kj->ik", u, 1.0 / w, u.conj())
        grad_rho = log_rho - log_pinched - mu * inv_rho
        return val, aff.null.T @ herm_to_vec(grad_rho)

    mu = opts.mu_start
    converged_any = False
    while True:
        res = minimize(
            barrier_fun_grad,
            xi,
            args=(mu,),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": opts.max_iters, "ftol": 1e-14, "gtol": 1e-9},
        )
        iterations += int(res.nit)
        if np.linalg.eigvalsh(aff.rho(res.x)).min() > 0.0:
            xi = res.x
            converged_any = True
        if mu <= opts.mu_end:
            break
        mu = max(mu * opts.mu_factor, opts.mu_end)
    if not converged_any:
        raise PrimalConvergenceError("barrier minimization left the PSD cone at every stage")

    rho = aff.rho(xi)
    wmin = float(np.linalg.eigvalsh(rho).min())
    return PrimalResult(
        rho_star=HermitianOperator(rho),
        value=coherence_bits(rho),
        feasibility_residual=residual(rho),
        min_eigenvalue=wmin,
        iterations=iterations,
    )


def perturbation_convergence_check(
    problem: KeyRateProblem, eps_list, opts: Optional[OracleOptions] = None
) -> list:
    """Primal values (bits) along a strictly decreasing positive ε schedule."""
    eps_list = list(eps_list)
    if not eps_list or any(e <= 0 for e in eps_list):
        raise ValueError("eps_list must contain positive values")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    base = opts or OracleOptions()
    out = []
    for eps in eps_list:
        run_opts = OracleOptions(
            eps=eps,
            mu_start=base.mu_start,
            mu_end=base.mu_end,
            mu_factor=base.mu_factor,
            max_iters=base.max_iters,
        )
        out.append(solve_primal(problem, run_opts).value)
    return out
