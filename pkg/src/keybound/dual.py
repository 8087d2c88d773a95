"""Maximization of the dual objective Θ(λ).

Θ(λ) = -‖Σⱼ Zⱼ R(λ) Zⱼ‖ - λ·γ with R(λ) = exp(-𝟙 - λ·Γ).  Any multiplier
vector yields a valid key-rate lower bound, so the solver's only job is to
push Θ as high as it can: multi-start quasi-Newton ascent (L-BFGS-B on -Θ)
with central-difference gradients.

Numerical notes.

* The objective is always evaluated in the shifted form
  -exp(m)·‖pinch(exp(Q - m𝟙))‖ - λ·γ with m = max eig Q, which is exactly
  equal (the pinch is linear, the norm positively homogeneous) and doubles
  as the overflow guard for eigenvalues beyond ~700.
* A finite-difference gradient step costs 2n objective evaluations; those
  are batched into single LAPACK calls, and the perturbed exponents are
  formed as Q ∓ hᵢΓᵢ without re-contracting λ·Γ.
* When the announcement register makes every operator block-diagonal in the
  trailing M factor (the MDI case), the eigenproblems factor into dim_m
  blocks — detected automatically, bit-identical results either way.
* When the builder ships a feasible state whose support is a proper
  subspace (a rank-deficient scenario such as MDI source replacement, or
  any noiseless protocol), the flat directions of Θ swamp a quasi-Newton
  ascent in the full multiplier space.  The solver then switches to a
  support-face search: constraints are compressed to the witness support,
  redundant multiplier directions are removed by an SVD, and a smooth
  Schatten-p surrogate of the compressed objective is annealed (p → ∞)
  with analytic gradients.  The search result is mapped back to a genuine
  full-space multiplier vector by adding a positive-semidefinite
  combination of constraint operators that vanishes on the face (which
  leaves λ·γ unchanged and suppresses the off-face exponent), and the
  reported Θ is the full-space objective of the reported λ — so the
  certificate never depends on the witness being trustworthy.
* Every reported Θ is net of a rigorous allowance for the float error of
  its own evaluation (eigensolver noise ∝ ‖Q‖₂ and dot-product rounding
  ∝ Σ|λᵢγᵢ|, both of order machine-ε times the multiplier scale).  At
  ordinary scales the allowance is ~1e-13 and invisible; for the enormous
  lifted multipliers above it is what stops eigensolver noise from being
  sold as key rate — oversized lift rungs charge themselves more noise
  than they recover and drop out of the running.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize

from .entropy import LN2
from .postselect import effective_constraints
from .protocols import KeyRateProblem

__all__ = [
    "SolverOptions",
    "DualResult",
    "DualSolverError",
    "theta_objective",
    "maximize_theta",
    "key_rate_from_theta",
]

#: Above this log-norm the optimizer surrogate switches from exp(x) to the
#: linear extension e^30·(1 + x - 30): still monotone and continuous, but
#: finite with bounded slope, so line-search probes far outside the useful
#: region cannot overflow.  Every optimum of interest has log-norm well
#: below 30, where the surrogate is exact.
LOG_SAFE = 30.0
_EXP_SAFE = math.exp(LOG_SAFE)

#: Relative finite-difference step.
FD_STEP = 1e-6

#: Top-two pinched-eigenvalue gap below which the FD step is halved
#: (sup_norm is only directionally differentiable at degeneracies).
DEGENERACY_GAP = 1e-9

GRAD_NORM_TOL = 1e-7

#: Witness eigenvalues above this span the support face.
FACE_RANK_TOL = 1e-12

#: Singular values of the compressed-constraint matrix below this mark
#: multiplier directions that cannot move the face objective.
_FACE_NULL_TOL = 1e-10

#: Schatten-p annealing ladder: (p, L-BFGS iteration budget per cycle).
#: ‖·‖_p ≥ ‖·‖_∞, so every stage still minimizes a valid upper bound of the
#: norm term; the surrogate-to-norm error is at most ln(#eigenvalues)/p.
_FACE_P_LADDER = (
    (4, 300),
    (12, 300),
    (40, 500),
    (120, 500),
    (400, 800),
    (1200, 1000),
    (4000, 1200),
    (12000, 1500),
    (48000, 1500),
)

#: Cap on restart cycles within one annealing stage.
_FACE_CYCLE_CAP = 20

#: Off-face suppression scales tried when lifting a face optimum back to a
#: full-space multiplier vector.  Large scales are needed because face↔off
#: coupling blocks of the lifted operator shift the top eigenvalue by
#: O(‖coupling‖²/S) (a conservative shift — Θ only drops), while float
#: noise grows like S·ε; the certified evaluation charges each rung its
#: own noise allowance and picks the best net value.
_LIFT_LADDER = tuple(8.0 * 8.0**k for k in range(14))

#: Machine epsilon of the float64 arithmetic behind every evaluation.
_EPS = float(np.finfo(float).eps)

#: Safety multiplier on the certified-Θ noise allowance.  LAPACK's
#: symmetric eigensolver has forward eigenvalue error c(d)·ε·‖Q‖₂ with a
#: modest c(d); the allowance uses (d + 8) for c(d) — compensated assembly
#: keeps every non-eigensolver term at O(ε) of the same scale — and an 8×
#: cushion on top, which over-covers every dimension this library reaches.
_CERT_SAFETY = 8.0

#: A face search counts as converged when some lift rung's raw Θ realizes
#: the face value to within this slack.  The reported Θ is the best
#: certified (allowance-net) value, which may prefer a smaller rung and so
#: sit a little further below the face value than the slack.
_FACE_CERT_SLACK = 1e-5


class DualSolverError(RuntimeError):
    """All ascent starts failed; carries per-start diagnostics."""


@dataclass(frozen=True)
class SolverOptions:
    starts: int = 8
    seed: int = 0
    tol: float = 1e-9
    max_iters: int = 2000


@dataclass(frozen=True)
class DualResult:
    """Best multiplier vector found and the bound it certifies.

    ``theta`` is in nats; ``key_rate`` in bits, clamped at zero.  ``lam`` has
    one entry per constraint of the (possibly post-selection-transformed)
    constraint set actually solved.  ``theta`` is reported net of a float
    noise allowance for its own evaluation, so it never exceeds the exact
    objective of ``lam`` (re-evaluating the objective at ``lam`` can only
    come out very slightly higher).
    """

    lam: np.ndarray
    theta: float
    key_rate: float
    restarts_used: int
    converged: bool
    objective_trace: list = field(default_factory=list)


class _DualContext:
    """Precontracted arrays for fast repeated Θ evaluation on one problem."""

    def __init__(self, problem: KeyRateProblem):
        constraints, p_pass, one_sided = effective_constraints(problem)
        self.p_pass = p_pass
        self.one_sided = one_sided
        ops, vals = constraints.as_arrays()
        self.gamma = vals
        self.n = len(vals)
        self.identity_index = constraints.index_of_identity()
        dim = ops.shape[1]

        zops = np.array(problem.lifted_keymap())
        dm = problem.dim_m
        blocks = self._try_blocks(ops, zops, dim, dm)
        if blocks is None:
            self.gam_blocks = ops[:, None, :, :]
            zb = zops[:, None, :, :]
        else:
            self.gam_blocks, zb = blocks
        self.n_blocks = self.gam_blocks.shape[1]
        self.block_dim = self.gam_blocks.shape[2]
        self.eye = np.eye(self.block_dim)
        # per-constraint spectral norms: bound ‖Q(λ)‖₂ ≤ 1 + Σ|λᵢ|·‖Γᵢ‖₂
        # for the certified-Θ noise allowance without an extra eigensolve
        self.op_norms = np.abs(np.linalg.eigvalsh(self.gam_blocks)).max(axis=(-2, -1))

        # pinch fast path: diagonal key-map elements reduce Σ Z R Z to a mask
        zdiag_ok = all(
            np.abs(z - np.diag(np.diag(z))).max() < 1e-14
            for blk in zb.transpose(1, 0, 2, 3)
            for z in blk
        )
        same = all(np.abs(zb[:, m] - zb[:, 0]).max() < 1e-14 for m in range(zb.shape[1]))
        if zdiag_ok and same:
            diags = np.real(zb[:, 0].diagonal(axis1=1, axis2=2))
            self.pinch_mask = np.einsum("ki,kj->ij", diags, diags)
            self.zb = None
        else:
            self.pinch_mask = None
            self.zb = zb  # (k, n_blocks, d, d)

    @staticmethod
    def _try_blocks(ops, zops, dim, dm):
        """Split all operators into M-diagonal blocks when that is exact."""
        if dm <= 1:
            return None
        dab = dim // dm
        o4 = ops.reshape(-1, dab, dm, dab, dm)
        z4 = zops.reshape(-1, dab, dm, dab, dm)
        for arr in (o4, z4):
            off = arr.copy()
            for m in range(dm):
                off[:, :, m, :, m] = 0.0
            if np.abs(off).max() > 1e-14:
                return None
        gam_blocks = np.stack([o4[:, :, m, :, m] for m in range(dm)], axis=1)
        z_blocks = np.stack([z4[:, :, m, :, m] for m in range(dm)], axis=1)
        return gam_blocks, z_blocks

    # -- core evaluation ----------------------------------------------------

    def _q_blocks(self, lam: np.ndarray) -> np.ndarray:
        q = -np.tensordot(lam, self.gam_blocks, axes=1)
        q -= self.eye
        return q

    def _pinch(self, r: np.ndarray) -> np.ndarray:
        """Pinch a (..., n_blocks, d, d) stack."""
        if self.pinch_mask is not None:
            return r * self.pinch_mask
        out = np.einsum("kNij,...Njl,kNlm->...Nim", self.zb, r, self.zb)
        return (out + out.conj().swapaxes(-1, -2)) / 2

    def _log_norm_parts(self, q: np.ndarray):
        """(log ‖pinch(exp(Q))‖, max eig Q) for a (..., n_blocks, d, d) stack."""
        w, u = np.linalg.eigh(q)
        m = w.max(axis=(-2, -1))
        expw = np.exp(w - m[..., None, None])
        r = np.einsum("...ij,...j,...kj->...ik", u, expw, u.conj())
        pinched = self._pinch(r)
        pinched = (pinched + pinched.conj().swapaxes(-1, -2)) / 2
        s = np.linalg.eigvalsh(pinched)[..., -1].max(axis=-1)
        return m + np.log(np.maximum(s, 1e-300)), m

    def _log_norms(self, q: np.ndarray) -> np.ndarray:
        """log ‖pinch(exp(Q))‖ for a (..., n_blocks, d, d) stack of exponents."""
        return self._log_norm_parts(q)[0]

    def theta(self, lam: np.ndarray) -> float:
        """The true objective; -inf when the norm overflows the float range."""
        logn = float(self._log_norms(self._q_blocks(lam)))
        lin = float(lam @ self.gamma)
        if logn > 709.0:
            return -math.inf
        return -math.exp(logn) - lin

    def _q_blocks_kahan(self, lam: np.ndarray) -> np.ndarray:
        """Q(λ) assembled with compensated summation over the constraints.

        Keeps the assembly error at ~2ε·Σ|λᵢΓᵢ| with no n-term worst-case
        factor, which is what lets the certified allowance scale with the
        block dimension rather than the constraint count at the enormous
        multiplier scales the face lift produces.
        """
        s = np.zeros_like(self.gam_blocks[0])
        c = np.zeros_like(self.gam_blocks[0])
        for li, g in zip(lam, self.gam_blocks):
            y = (-li) * g - c
            t = s + y
            c = (t - s) - y
            s = t
        return s - self.eye

    def cert_slack(self, lam: np.ndarray, m: float) -> float:
        """Rigorous allowance for the float error of one Θ(λ) evaluation.

        Two sources, both linear in the multiplier scale: the eigensolver's
        forward error lands on the top exponent eigenvalues (absolute size
        c(d)·ε·‖Q‖₂, multiplying the norm term by ≈ e^m·c(d)·ε·‖Q‖₂), and
        the λ·γ products round to ε·Σ|λᵢγᵢ| before their exactly-rounded
        summation.  ‖Q‖₂ is bounded via precomputed operator norms, so the
        allowance costs no extra eigensolve.
        """
        qbound = 1.0 + float(np.abs(lam) @ self.op_norms)
        dot = float(np.abs(lam) @ np.abs(self.gamma))
        coeff = self.block_dim + 8.0
        return _CERT_SAFETY * _EPS * (
            coeff * qbound * math.exp(min(m, 709.0)) + 2.0 * dot
        )

    def theta_certified(self, lam: np.ndarray) -> float:
        """Θ(λ) minus its noise allowance: certified net of float error.

        Assembles the exponent with compensated summation and the linear
        term with exact summation, so ``cert_slack`` only has to cover the
        eigensolver itself plus first-rounding of the inputs.
        """
        logn, m = self._log_norm_parts(self._q_blocks_kahan(lam))
        logn, m = float(logn), float(m)
        if logn > 709.0 or m > 709.0:
            return -math.inf
        lin = math.fsum((lam * self.gamma).tolist())
        return -math.exp(logn) - lin - self.cert_slack(lam, m)

    # -- optimizer surface (finite surrogate, equal to -Θ in the useful range)

    @staticmethod
    def _safe_exp(logn):
        return np.where(
            logn <= LOG_SAFE,
            np.exp(np.minimum(logn, LOG_SAFE)),
            _EXP_SAFE * (1.0 + (logn - LOG_SAFE)),
        )

    def neg_theta(self, lam: np.ndarray) -> float:
        if not np.all(np.isfinite(lam)):
            return 1e300
        logn = float(self._log_norms(self._q_blocks(lam)))
        return float(self._safe_exp(logn)) + float(lam @ self.gamma)

    def neg_theta_grad(self, lam: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(lam)):
            return np.zeros(self.n)
        q = self._q_blocks(lam)
        h = FD_STEP * np.maximum(1.0, np.abs(lam))
        # halve the step near a degenerate top of the pinched spectrum
        w, u = np.linalg.eigh(q)
        m = w.max()
        r = np.einsum("...ij,...j,...kj->...ik", u, np.exp(w - m), u.conj())
        pw = np.linalg.eigvalsh(
            (lambda p: (p + p.conj().swapaxes(-1, -2)) / 2)(self._pinch(r))
        ).ravel()
        pw = np.sort(pw)
        if pw.size > 1 and pw[-1] - pw[-2] < DEGENERACY_GAP:
            h = h / 2
        # batched perturbed exponents: Q(λ ± h eᵢ) = Q ∓ h Γᵢ
        pert = np.empty((self.n, 2) + q.shape, dtype=complex)
        pert[:, 0] = q[None] - h[:, None, None, None] * self.gam_blocks
        pert[:, 1] = q[None] + h[:, None, None, None] * self.gam_blocks
        logn = self._log_norms(pert.reshape((-1,) + q.shape)).reshape(self.n, 2)
        norms = self._safe_exp(logn)
        # d(-Θ)/dλᵢ = (N(λ+h) - N(λ-h))/(2h) + γᵢ
        return (norms[:, 0] - norms[:, 1]) / (2 * h) + self.gamma


def _face_isometry(problem: KeyRateProblem) -> Optional[np.ndarray]:
    """Isometry onto the witness support, or None when the face search
    does not apply (post-selected problem, no witness, full-rank witness).
    """
    if problem.postselect is not None or problem.witness is None:
        return None
    w = np.asarray(problem.witness, dtype=complex)
    w = (w + w.conj().T) / 2
    evals, evecs = np.linalg.eigh(w)
    mask = evals > FACE_RANK_TOL
    rank = int(mask.sum())
    if rank == 0 or rank >= w.shape[0]:
        return None
    return np.ascontiguousarray(evecs[:, mask])


def _lift_candidates(
    ops: np.ndarray, u_face: np.ndarray, lam_lift: np.ndarray
) -> list:
    """Full-space multiplier vectors whose Θ approaches the face value.

    ``lam_lift`` realizes the face optimum of λ·Γ but says nothing useful
    off the face: its face↔offface coupling blocks can be enormous (they
    come from constraint directions with tiny face compression), and its
    off-face block is arbitrary.  Both live in the subspace of coefficient
    vectors whose operator has *zero face compression* — moving along that
    subspace never changes the face objective.  So for a ladder of scales S
    this solves the least-squares problem

        (lam_lift + W·x)·Γ  ≈  U F U† + S·(𝟙 - UU†),   F = U†(lam_lift·Γ)U,

    i.e. keep the face action, kill the coupling blocks, and push the
    off-face exponent down by S.  Where the span allows it exactly, Θ of
    the candidate climbs to the face supremum as S grows; where it does
    not, the candidates are still perfectly valid multiplier vectors and
    the caller's exact evaluation picks the best one.
    """
    n, dim, _ = ops.shape
    # only operators vanishing on the face *columns* qualify: they are
    # block-diagonal (zero face and coupling blocks), so a PSD off-face
    # block is possible — merely having zero face compression is not
    # enough, since a nonzero coupling block forces indefiniteness
    cols = np.einsum("kab,bj->kaj", ops, u_face).reshape(n, -1)
    amat = np.concatenate([cols.real, cols.imag], axis=1)
    wbasis = null_space(amat.T)
    if wbasis.size == 0:
        return []
    perp = null_space(u_face.conj().T)  # orthonormal basis of the off-face
    wops = np.einsum("ik,iab->kab", wbasis, ops)
    dperp = np.einsum("ai,kab,bj->kij", perp.conj(), wops, perp)
    flat = dperp.reshape(wbasis.shape[1], -1)
    design = np.concatenate([flat.real, flat.imag], axis=1).T
    # aggressively truncated pseudoinverse: weakly represented directions
    # would need coefficients so large that the basis's ~1e-15 face
    # residuals get amplified into genuine face-block junk
    pinv = np.linalg.pinv(design, rcond=1e-6)
    pdim = perp.shape[1]

    def vec(m):
        return np.concatenate([m.real.ravel(), m.imag.ravel()])

    # alternating projections between the achievable affine span and the
    # cone of matrices ⪰ floor·𝟙, aiming at the identity on the off-face
    target = np.eye(pdim, dtype=complex)
    x = pinv @ vec(target)
    for _ in range(60):
        fitted = np.einsum("k,kij->ij", x, dperp)
        fitted = (fitted + fitted.conj().T) / 2
        w, v = np.linalg.eigh(fitted)
        clipped = (v * np.maximum(w, 0.1)) @ v.conj().T
        x = pinv @ vec(clipped)
    nu_perp = np.einsum("k,kij->ij", x, dperp)
    if np.linalg.eigvalsh((nu_perp + nu_perp.conj().T) / 2).min() < 1e-9:
        return []
    return [lam_lift + s * (wbasis @ x) for s in _LIFT_LADDER]


class _FaceDual:
    """Θ maximization compressed to the support face of the witness.

    Works in effective multiplier coordinates μ (an SVD basis of the
    compressed constraint operators, so directions that cannot change the
    face objective are gone) and anneals a Schatten-p relaxation of the
    norm term with analytic gradients.  The pinched-spectrum identity used
    throughout: for R ⪰ 0 supported on the face with compressed form E and
    key-map compressions z̃ⱼ = U†ZⱼU, the nonzero eigenvalues of
    Σⱼ Zⱼ (UEU†) Zⱼ are the union over j of the eigenvalues of √E z̃ⱼ √E.
    """

    def __init__(self, problem: KeyRateProblem, u_face: np.ndarray):
        ops, vals = problem.constraints.as_arrays()
        self.u_face = u_face
        self.rank = u_face.shape[1]
        self.n = len(vals)
        self.gamma = vals
        self.identity_index = problem.constraints.index_of_identity()
        self.eye = np.eye(self.rank)
        self.ztil = [
            u_face.conj().T @ z @ u_face for z in problem.lifted_keymap()
        ]
        cops = np.einsum("ai,kab,bj->kij", u_face.conj(), ops, u_face)
        flat = cops.reshape(self.n, -1)
        mat = np.concatenate([flat.real, flat.imag], axis=1)
        u_svd, svals, _ = np.linalg.svd(mat, full_matrices=False)
        keep = svals > _FACE_NULL_TOL
        self.mult_basis = np.ascontiguousarray(u_svd[:, keep])  # (n, k)
        self.eff_ops = np.einsum("nk,nij->kij", self.mult_basis, cops)
        self.eff_vals = self.mult_basis.T @ vals
        self.k = self.eff_ops.shape[0]

    def _spectra(self, mu: np.ndarray):
        """Eigen-pieces of the compressed exponent shared by all evaluators."""
        q = -self.eye - np.einsum("k,kij->ij", mu, self.eff_ops)
        w, u = np.linalg.eigh(q)
        shift = w[-1]
        expw = np.exp(w - shift)
        sq = np.sqrt(expw)
        zrot = [u.conj().T @ z @ u for z in self.ztil]
        pieces = []
        for z in zrot:
            b = sq[:, None] * z * sq[None, :]
            bw, bv = np.linalg.eigh(b)
            pieces.append((np.maximum(bw, 0.0), bv))
        return w, u, shift, expw, sq, zrot, pieces

    def theta(self, mu: np.ndarray) -> float:
        """Exact face objective (sup norm, no surrogate)."""
        _, _, shift, _, _, _, pieces = self._spectra(mu)
        top = max(float(bw[-1]) for bw, _ in pieces)
        logn = shift + math.log(max(top, 1e-300))
        lin = float(mu @ self.eff_vals)
        if logn > 709.0:
            return -math.inf
        return -math.exp(logn) - lin

    def negf(self, mu: np.ndarray, pnorm: float):
        """Schatten-p surrogate of -Θ̃ and its gradient in μ."""
        w, u, shift, expw, _, zrot, pieces = self._spectra(mu)
        if shift <= LOG_SAFE:
            scale = math.exp(shift)
        else:
            scale = _EXP_SAFE * (1.0 + (shift - LOG_SAFE))
        top = max(float(bw[-1]) for bw, _ in pieces)
        top = max(top, 1e-300)
        fq = top * sum(((bw / top) ** pnorm).sum() for bw, _ in pieces) ** (1.0 / pnorm)
        val = scale * fq + float(mu @ self.eff_vals)
        # gradient: Fréchet derivative of the surrogate through the
        # divided-difference kernel of exp on the eigenvalues of Q̃
        dw = w[:, None] - w[None, :]
        mask = np.abs(dw) > 1e-13
        kernel = np.where(
            mask,
            (expw[:, None] - expw[None, :]) / np.where(mask, dw, 1.0),
            (expw[:, None] + expw[None, :]) / 2,
        )
        clamped = np.maximum(expw, 1e-280)
        ratio = np.sqrt(clamped[None, :] / clamped[:, None])
        xmat = np.zeros((self.rank, self.rank), dtype=complex)
        for (bw, bv), z in zip(pieces, zrot):
            weights = (bw / fq) ** (pnorm - 1)
            xmat += ((bv * weights) @ bv.conj().T * ratio) @ z
        xmat = xmat * kernel
        ops_rot = np.einsum("ia,kij,jb->kab", u.conj(), self.eff_ops, u)
        grad = -scale * np.einsum("ab,kba->k", xmat, ops_rot).real + self.eff_vals
        return val, grad

    def solve(self, opts: "SolverOptions"):
        """Annealed ascent; returns (best μ, exact face Θ, trace)."""
        rng = np.random.default_rng(opts.seed)
        # same seeding as the generic path: normalization multiplier at -1,
        # projected into the effective coordinates
        base = np.zeros(self.n)
        if self.identity_index is not None:
            base[self.identity_index] = -1.0
        starts = [self.mult_basis.T @ base]
        for _ in range(min(opts.starts, 2) - 1):
            starts.append(starts[0] + 0.5 * rng.standard_normal(self.k))

        best_mu, best_theta, best_trace = None, -math.inf, []
        for x0 in starts:
            mu = np.asarray(x0, dtype=float)
            trace = [self.theta(mu)]
            for pnorm, iters in _FACE_P_LADDER:
                for _ in range(_FACE_CYCLE_CAP):
                    res = minimize(
                        self.negf,
                        mu,
                        args=(float(pnorm),),
                        jac=True,
                        method="L-BFGS-B",
                        options={
                            "maxiter": iters,
                            "ftol": 0.0,
                            "gtol": 1e-14,
                            "maxcor": 60,
                            "maxls": 120,
                        },
                    )
                    mu = res.x
                    if res.nit < 5:
                        break
                trace.append(self.theta(mu))
            th = self.theta(mu)
            if th > best_theta:
                best_mu, best_theta, best_trace = mu.copy(), th, trace
        return best_mu, best_theta, best_trace


def _maximize_on_face(
    problem: KeyRateProblem,
    ctx: _DualContext,
    u_face: np.ndarray,
    opts: "SolverOptions",
) -> "DualResult":
    """Face search plus honest lift back to a full-space certificate.

    The returned ``theta`` is always the exact full-space Θ of the returned
    ``lam`` (any multiplier vector is a valid bound, so correctness never
    rests on the face argument); the face value only steers the search and
    the convergence verdict.
    """
    face = _FaceDual(problem, u_face)
    mu, face_theta, trace = face.solve(opts)
    lam_lift = face.mult_basis @ mu

    ops, _ = problem.constraints.as_arrays()
    candidates = [lam_lift] + _lift_candidates(ops, u_face, lam_lift)
    thetas = [ctx.theta_certified(c) for c in candidates]
    pick = int(np.argmax(thetas))
    theta, lam = thetas[pick], candidates[pick]
    raw_best = max(ctx.theta(c) for c in candidates)
    trace.append(theta)
    return DualResult(
        lam=lam,
        theta=theta,
        key_rate=key_rate_from_theta(theta, problem.hzazb, ctx.p_pass),
        restarts_used=min(opts.starts, 2),
        converged=bool(raw_best >= face_theta - _FACE_CERT_SLACK),
        objective_trace=trace,
    )


def theta_objective(lam, problem: KeyRateProblem) -> float:
    """Θ(λ) in nats for one multiplier vector (valid bound for any λ)."""
    ctx = _DualContext(problem)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (ctx.n,):
        raise ValueError(f"lambda has length {lam.size}, expected {ctx.n}")
    if not np.all(np.isfinite(lam)):
        raise ValueError("lambda must be finite")
    return ctx.theta(lam)


def key_rate_from_theta(theta: float, hzazb: float, p_pass: Optional[float] = None) -> float:
    """K = max(0, p_pass·(Θ/ln2 - hzazb)) in bits per transmitted signal."""
    if p_pass is None:
        p_pass = 1.0
    return max(0.0, p_pass * (theta / LN2 - hzazb))


def maximize_theta(problem: KeyRateProblem, opts: Optional[SolverOptions] = None) -> DualResult:
    """Multi-start quasi-Newton ascent of Θ.

    Start 0 is the zero vector with the normalization multiplier seeded at
    -1 (the closed-form optimum of the normalization-only problem); the
    remaining starts add standard-normal noise.  Starts whose objective is
    non-finite are discarded; if every start is discarded a
    :class:`DualSolverError` is raised.  Results are deterministic for a
    fixed seed (starts run in order; ties go to the lowest start index).

    Problems that carry a rank-deficient feasible witness (and no
    post-selection map) are routed through the support-face search instead:
    the ascent runs in compressed coordinates where the objective is smooth
    and free of flat directions, and the result is lifted back to a
    full-space multiplier vector whose exact Θ is what gets reported.  The
    compressed surrogate is concave, so that path caps itself at two starts
    (one deterministic, one randomized cross-check).
    """
    opts = opts or SolverOptions()
    ctx = _DualContext(problem)
    u_face = _face_isometry(problem)
    if u_face is not None:
        try:
            face_result = _maximize_on_face(problem, ctx, u_face, opts)
        except np.linalg.LinAlgError:
            face_result = None  # fall back to the generic full-space ascent
        if face_result is not None and math.isfinite(face_result.theta):
            return face_result
    n = ctx.n
    rng = np.random.default_rng(opts.seed)
    base = np.zeros(n)
    if ctx.identity_index is not None:
        base[ctx.identity_index] = -1.0
    starts = [base.copy()]
    for _ in range(max(0, opts.starts - 1)):
        starts.append(base + rng.standard_normal(n))

    best = None
    diagnostics = []
    used = 0
    for idx, x0 in enumerate(starts):
        if not np.isfinite(ctx.theta(x0)):
            diagnostics.append(f"start {idx}: non-finite objective, discarded")
            continue
        used += 1
        trace = [ctx.theta(x0)]
        res = minimize(
            ctx.neg_theta,
            x0,
            jac=ctx.neg_theta_grad,
            method="L-BFGS-B",
            callback=lambda xk: trace.append(ctx.theta(xk)),
            options={
                "maxiter": opts.max_iters,
                "ftol": opts.tol,
                "gtol": GRAD_NORM_TOL,
                "maxcor": 20,
            },
        )
        th = ctx.theta_certified(res.x)
        diagnostics.append(f"start {idx}: theta={th:.6e} status={res.status}")
        if not math.isfinite(th):
            continue
        if best is None or th > best[0]:
            best = (th, res.x.copy(), bool(res.status == 0), trace)
    if best is None:
        raise DualSolverError(
            "no ascent start produced a finite objective:\n" + "\n".join(diagnostics)
        )
    theta, lam, converged, trace = best
    return DualResult(
        lam=lam,
        theta=theta,
        key_rate=key_rate_from_theta(theta, problem.hzazb, ctx.p_pass),
        restarts_used=used,
        converged=converged,
        objective_trace=trace,
    )
