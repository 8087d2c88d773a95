"""Dense Hermitian-operator algebra.

Construction, composition, spectral calculus (exp / log / sup norm), partial
trace, and operator-space orthonormalization under the Frobenius inner
product.

Every spectral function goes through a full Hermitian eigendecomposition
(``numpy.linalg.eigh``): the matrices in this package are small and dense,
and a single numerical kernel is easier to validate than separate
expm/logm/norm code paths.  Products and sums of Hermitian matrices drift off
the Hermitian manifold by rounding, so composite results are re-symmetrized
as (M + M†)/2 before being wrapped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "HermitianOperator",
    "OperatorBasis",
    "identity",
    "kron",
    "herm_exp",
    "herm_log",
    "sup_norm",
    "partial_trace",
    "gram_schmidt_operators",
    "is_psd",
    "herm_to_vec",
    "vec_to_herm",
]

#: Maximum allowed relative deviation from Hermiticity at construction.
HERMITICITY_TOL = 1e-12


def _as_matrix(op) -> np.ndarray:
    """Coerce a HermitianOperator or array-like to a complex ndarray."""
    if isinstance(op, HermitianOperator):
        return op.entries
    return np.asarray(op, dtype=complex)


@dataclass(frozen=True)
class HermitianOperator:
    """An immutable dim x dim complex Hermitian matrix.

    The constructor symmetrizes its input as (M + M†)/2 and rejects matrices
    whose anti-Hermitian part exceeds ``HERMITICITY_TOL`` relative to the
    matrix magnitude.  (The tolerance is relative, not absolute, so that
    exponentials with large spectra — whose rounding noise scales with their
    norm — remain constructible.)

    Parameters
    ----------
    entries : array_like
        Square complex matrix.  Stored read-only.
    """

    entries: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        if m.shape[0] < 1:
            raise ValueError("dim must be >= 1")
        scale = max(1.0, np.abs(m).max())
        dev = np.abs(m - m.conj().T).max()
        if dev > HERMITICITY_TOL * scale:
            raise ValueError(
                f"matrix is not Hermitian: |M - M†| = {dev:.3e} "
                f"(tolerance {HERMITICITY_TOL:.0e} relative)"
            )
        m = (m + m.conj().T) / 2
        m.flags.writeable = False
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "dim", m.shape[0])

    # -- minimal arithmetic (each result re-symmetrized by the constructor) --

    def __add__(self, other) -> "HermitianOperator":
        return HermitianOperator(self.entries + _as_matrix(other))

    def __sub__(self, other) -> "HermitianOperator":
        return HermitianOperator(self.entries - _as_matrix(other))

    def __mul__(self, scalar: float) -> "HermitianOperator":
        return HermitianOperator(self.entries * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "HermitianOperator":
        return HermitianOperator(-self.entries)

    def expect(self, state) -> float:
        """Real expectation value Tr(state · self)."""
        return float(np.real(np.trace(_as_matrix(state) @ self.entries)))

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.entries))


@dataclass(frozen=True)
class OperatorBasis:
    """An ordered list of same-dimension Hermitian operators.

    When ``orthonormal`` is set the elements are validated to satisfy
    Tr(Aᵢ Aⱼ) = δᵢⱼ within 1e-10 under the Frobenius inner product.
    """

    elements: tuple
    orthonormal: bool = False

    def __post_init__(self):
        elems = tuple(
            e if isinstance(e, HermitianOperator) else HermitianOperator(e)
            for e in self.elements
        )
        object.__setattr__(self, "elements", elems)
        if len(elems) == 0:
            return
        dim = elems[0].dim
        if any(e.dim != dim for e in elems):
            raise ValueError("all basis elements must share one dimension")
        if self.orthonormal:
            v = np.array([herm_to_vec(e) for e in elems])
            gram = v @ v.T
            dev = np.abs(gram - np.eye(len(elems))).max()
            if dev > 1e-10:
                raise ValueError(
                    f"basis flagged orthonormal but Gram deviates by {dev:.3e}"
                )

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    @property
    def dim(self) -> int:
        return self.elements[0].dim


def identity(dim: int) -> HermitianOperator:
    """The dim x dim identity operator."""
    return HermitianOperator(np.eye(dim))


def kron(a, b) -> HermitianOperator:
    """Kronecker product, left factor = system A."""
    return HermitianOperator(np.kron(_as_matrix(a), _as_matrix(b)))


def herm_exp(h) -> HermitianOperator:
    """Matrix exponential U exp(D) U† of a Hermitian matrix.

    The result is positive definite.  Eigenvalues above ~709.8 overflow to
    inf; callers that may hit that regime should shift the exponent first
    (see the dual solver's objective).
    """
    w, u = np.linalg.eigh(_as_matrix(h))
    m = (u * np.exp(w)) @ u.conj().T
    return HermitianOperator((m + m.conj().T) / 2)


def herm_log(p, floor: float = 1e-14, neg_tol: float = 1e-10) -> HermitianOperator:
    """Matrix logarithm of a PSD matrix with eigenvalue clamping.

    Eigenvalues below ``floor`` are clamped to ``floor`` before the log is
    taken, so rank-deficient states produce a finite (large-negative) result
    instead of -inf.  An eigenvalue below ``-neg_tol`` is a domain error.
    """
    w, u = np.linalg.eigh(_as_matrix(p))
    if w.min() < -neg_tol:
        raise ValueError(
            f"herm_log of a non-PSD matrix (min eigenvalue {w.min():.3e})"
        )
    m = (u * np.log(np.maximum(w, floor))) @ u.conj().T
    return HermitianOperator((m + m.conj().T) / 2)


def sup_norm(p) -> float:
    """Supremum norm: the max eigenvalue for PSD input, max |eigenvalue| generally."""
    w = np.linalg.eigvalsh(_as_matrix(p))
    return float(max(w[-1], -w[0]))


def partial_trace(p, dims: tuple[int, int], keep: str = "A") -> HermitianOperator:
    """Partial trace of an operator on a bipartite space dims = (dA, dB)."""
    da, db = dims
    m = _as_matrix(p)
    if m.shape[0] != da * db:
        raise ValueError(f"dimension mismatch: {m.shape[0]} != {da}*{db}")
    t = m.reshape(da, db, da, db)
    if keep == "A":
        out = np.einsum("abcb->ac", t)
    elif keep == "B":
        out = np.einsum("abad->bd", t)
    else:
        raise ValueError("keep must be 'A' or 'B'")
    return HermitianOperator((out + out.conj().T) / 2)


def gram_schmidt_operators(ops: Iterable, drop_tol: float = 1e-10) -> OperatorBasis:
    """Orthonormalize Hermitian operators under the Frobenius inner product.

    Modified Gram-Schmidt with a re-orthogonalization pass ("twice is
    enough").  Inputs whose residual Frobenius norm falls below ``drop_tol``
    are dropped as linearly dependent, so the output size is the numerical
    rank of the span.
    """
    ops = list(ops)
    if not ops:
        return OperatorBasis((), orthonormal=True)
    kept: list[np.ndarray] = []
    for op in ops:
        v = herm_to_vec(op)
        for _ in range(2):
            for b in kept:
                v = v - (b @ v) * b
        norm = np.linalg.norm(v)
        if norm < drop_tol:
            continue
        kept.append(v / norm)
    dim = _as_matrix(ops[0]).shape[0]
    elems = tuple(vec_to_herm(v, dim) for v in kept)
    return OperatorBasis(elems, orthonormal=True)


def is_psd(p, tol: float = 1e-10) -> bool:
    """True iff the minimum eigenvalue is >= -tol."""
    w = np.linalg.eigvalsh(_as_matrix(p))
    return bool(w[0] >= -tol)


# -- real embedding of the Hermitian matrix space ---------------------------
#
# Hermitian d x d matrices form a real vector space of dimension d²; the map
# below is an isometry onto R^{d²} for the Frobenius inner product
# (Tr(AB) = vec(A)·vec(B)).  It backs the Gram-Schmidt above and the affine
# feasible-set parametrizations in the post-selection and oracle modules.


def herm_to_vec(op) -> np.ndarray:
    """Isometric real embedding: diagonal, then √2·Re / √2·Im of the upper triangle."""
    m = _as_matrix(op)
    d = m.shape[0]
    iu = np.triu_indices(d, k=1)
    return np.concatenate(
        [np.real(np.diag(m)), np.sqrt(2) * np.real(m[iu]), np.sqrt(2) * np.imag(m[iu])]
    )


def vec_to_herm(v: np.ndarray, dim: int) -> HermitianOperator:
    """Inverse of :func:`herm_to_vec`."""
    v = np.asarray(v, dtype=float)
    if v.size != dim * dim:
        raise ValueError(f"vector length {v.size} != dim² = {dim * dim}")
    m = np.zeros((dim, dim), dtype=complex)
    n_off = dim * (dim - 1) // 2
    np.fill_diagonal(m, v[:dim])
    iu = np.triu_indices(dim, k=1)
    upper = (v[dim : dim + n_off] + 1j * v[dim + n_off :]) / np.sqrt(2)
    m[iu] = upper
    m[(iu[1], iu[0])] = upper.conj()
    return HermitianOperator(m)
