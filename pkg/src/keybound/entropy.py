"""Entropic quantities used by the key-rate bounds.

Von Neumann / relative / conditional entropies, the pinching channel that
decoheres with respect to a key map, relative entropy of coherence and its
POVM generalization, and the Fano bound for the error-correction term.

Unit discipline: every function here returns **bits**.  The dual solver works
internally in nats; all conversions go through the single constant ``LN2``
exported from this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .operators import HermitianOperator, _as_matrix

__all__ = [
    "LN2",
    "JointDistribution",
    "von_neumann_entropy",
    "binary_entropy",
    "pinch",
    "relative_entropy",
    "coherence",
    "generalized_coherence",
    "cond_entropy",
    "fano_bound",
]

#: The one nats<->bits conversion constant.
LN2 = math.log(2.0)

#: Eigenvalues below this floor are treated as zero in entropy sums (0·log 0 = 0).
EIG_FLOOR = 1e-12

#: Support membership cutoffs for relative_entropy (see its docstring).
RHO_SUPPORT_CUT = 1e-10
TAU_SUPPORT_CUT = 1e-12
SUPPORT_LEAK_TOL = 1e-9


@dataclass(frozen=True)
class JointDistribution:
    """Classical joint distribution p(j, k) of Alice and Bob key symbols.

    Entries must be nonnegative (tiny negative rounding noise is clamped)
    and sum to 1 within 1e-10.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2:
            raise ValueError("probs must be a 2-D matrix (Alice x Bob)")
        if p.min() < -1e-12:
            raise ValueError(f"negative probability {p.min():.3e}")
        p = np.clip(p, 0.0, None)
        total = p.sum()
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"probabilities sum to {total}, expected 1")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)


def _shannon(p: np.ndarray) -> float:
    """Shannon entropy in bits, 0·log 0 = 0."""
    p = p[p > EIG_FLOOR]
    return float(-(p * np.log2(p)).sum())


def von_neumann_entropy(p) -> float:
    """H(p) = -Tr(p log₂ p) in bits.

    Sub-normalized input is allowed (the sum simply runs over the spectrum);
    eigenvalues below the floor contribute nothing.  A negative eigenvalue
    beyond tolerance is a domain error.
    """
    w = np.linalg.eigvalsh(_as_matrix(p))
    if w.min() < -1e-9:
        raise ValueError(f"state has negative eigenvalue {w.min():.3e}")
    return _shannon(w)


def binary_entropy(q: float) -> float:
    """h(q) = -q log₂ q - (1-q) log₂(1-q), with h(0) = h(1) = 0."""
    q = float(q)
    if q < -1e-12 or q > 1 + 1e-12:
        raise ValueError(f"binary_entropy argument {q} outside [0, 1]")
    q = min(max(q, 0.0), 1.0)
    if q == 0.0 or q == 1.0:
        return 0.0
    return float(-q * np.log2(q) - (1 - q) * np.log2(1 - q))


def _povm_elements(z) -> list[np.ndarray]:
    """Accept a KeyMapPOVM-like object (has .elements) or a plain sequence."""
    elems = getattr(z, "elements", z)
    return [_as_matrix(e) for e in elems]


def pinch(o, z, lift_on_a: bool = False) -> HermitianOperator:
    """Pinching channel Σⱼ Zⱼ O Zⱼ.

    The key-map elements must act on the same space as ``o``; with
    ``lift_on_a`` each element Z is lifted to Z ⊗ 𝟙 on the left factor
    (requires o.dim divisible by the element dimension).
    """
    m = _as_matrix(o)
    elems = _povm_elements(z)
    zdim = elems[0].shape[0]
    if lift_on_a:
        if m.shape[0] % zdim:
            raise ValueError(f"cannot lift dim {zdim} onto dim {m.shape[0]}")
        eye = np.eye(m.shape[0] // zdim)
        elems = [np.kron(e, eye) for e in elems]
    elif zdim != m.shape[0]:
        raise ValueError(f"dimension mismatch: {zdim} vs {m.shape[0]}")
    out = sum(e @ m @ e for e in elems)
    return HermitianOperator((out + out.conj().T) / 2)


def relative_entropy(rho, tau) -> float:
    """D(ρ‖τ) = Tr(ρ log₂ ρ) - Tr(ρ log₂ τ) in bits.

    ``tau`` may be unnormalized (the POVM-coherence case needs that).  The
    support condition is checked numerically: eigenvectors of ρ carrying
    eigenvalue > 1e-10 must lie in the τ-support (τ-eigenvalues > 1e-12);
    accumulated weight of ρ outside that support beyond 1e-9 signals the
    infinite value.  Returns ``math.inf`` as the sentinel — no exception.
    """
    r = _as_matrix(rho)
    t = _as_matrix(tau)
    wr, vr = np.linalg.eigh(r)
    if wr.min() < -1e-9:
        raise ValueError(f"rho has negative eigenvalue {wr.min():.3e}")
    wt, vt = np.linalg.eigh(t)
    supp = wt > TAU_SUPPORT_CUT
    big = wr > RHO_SUPPORT_CUT
    if not supp.all() and big.any():
        # weight of the significant rho eigenvectors outside the tau support
        c = vt[:, ~supp].conj().T @ vr[:, big]
        leak = float((wr[big] * (np.abs(c) ** 2).sum(axis=0)).sum())
        if leak > SUPPORT_LEAK_TOL:
            return math.inf
    pos = wr[wr > EIG_FLOOR]
    term1 = float((pos * np.log2(pos)).sum())
    # Tr(rho log2 tau) restricted to the tau support
    overlap = np.real(np.einsum("ij,jk,ki->i", vt.conj().T, r, vt))
    term2 = float((overlap[supp] * np.log2(wt[supp])).sum())
    return term1 - term2


def coherence(rho, z) -> float:
    """Relative entropy of coherence Φ(ρ) = D(ρ‖𝒵(ρ)) for a projective key map.

    Computed through the identity Φ(ρ) = H(𝒵(ρ)) - H(ρ), which avoids taking
    logs of near-singular matrices.
    """
    projective = getattr(z, "projective", True)
    if not projective:
        raise ValueError("key map is not projective; use generalized_coherence")
    return von_neumann_entropy(pinch(rho, z)) - von_neumann_entropy(rho)


def generalized_coherence(rho, z) -> float:
    """POVM coherence D(ρ ‖ Σⱼ Pⱼ ρ Pⱼ); the second argument is unnormalized."""
    return relative_entropy(rho, pinch(rho, z))


def cond_entropy(jd: JointDistribution) -> float:
    """H(Z_A | Z_B) = H(Z_A Z_B) - H(Z_B) on the classical joint distribution."""
    p = jd.probs if isinstance(jd, JointDistribution) else JointDistribution(jd).probs
    return _shannon(p.ravel()) - _shannon(p.sum(axis=0))


def fano_bound(q: float, alphabet: int) -> float:
    """Fano upper bound h(q) + q·log₂(alphabet - 1) on H(Z_A|Z_B)."""
    if alphabet < 2 or int(alphabet) != alphabet:
        raise ValueError(f"alphabet must be an integer >= 2, got {alphabet}")
    return binary_entropy(q) + float(q) * np.log2(alphabet - 1)
