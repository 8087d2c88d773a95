"""Protocol constructions.

Measurement-basis toolkits (Fourier, generalized Pauli, Bell basis, mutually
unbiased bases), channel simulation for generating observed constraint
values, and a builder for every shipped scenario.  Each builder returns a
:class:`KeyRateProblem` whose constraint values are produced by an explicit
simulated state (maximally entangled state through a depolarizing channel
matched to the error rate Q via Q = p(d-1)/d); the simulated state rides
along as ``witness`` so feasibility can be checked and the primal oracle can
warm start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .entropy import binary_entropy, fano_bound
from .operators import HermitianOperator, _as_matrix, herm_to_vec, identity, kron

__all__ = [
    "KeyMapPOVM",
    "ConstraintSet",
    "KeyRateProblem",
    "fourier_matrix",
    "generalized_paulis",
    "bell_basis",
    "mub_family",
    "error_operator",
    "depolarize",
    "source_replacement",
    "build_bb84",
    "build_six_state",
    "build_two_mub",
    "build_n_mub",
    "build_rotated",
    "eur_baseline",
    "build_b92",
    "build_mdi_bb84",
]


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KeyMapPOVM:
    """Ordered POVM {Z_j} defining Alice's raw key.

    Elements must be PSD within 1e-10 and sum to the identity within 1e-10.
    The ``projective`` flag is auto-detected (Z_j Z_k = δ_jk Z_j within
    1e-10); passing ``projective=True`` explicitly for a non-projective set
    is an error.
    """

    elements: tuple
    projective: Optional[bool] = None

    def __post_init__(self):
        elems = tuple(
            e if isinstance(e, HermitianOperator) else HermitianOperator(e)
            for e in self.elements
        )
        if not elems:
            raise ValueError("key map needs at least one element")
        d = elems[0].dim
        total = np.zeros((d, d), dtype=complex)
        for e in elems:
            if e.dim != d:
                raise ValueError("key-map elements must share one dimension")
            w = np.linalg.eigvalsh(e.entries)
            if w[0] < -1e-10:
                raise ValueError(f"key-map element not PSD (min eig {w[0]:.2e})")
            total += e.entries
        if np.abs(total - np.eye(d)).max() > 1e-10:
            raise ValueError("key-map elements do not sum to the identity")
        is_proj = all(
            np.abs(
                a.entries @ b.entries - (a.entries if i == j else 0)
            ).max() <= 1e-10
            for i, a in enumerate(elems)
            for j, b in enumerate(elems)
        )
        if self.projective is True and not is_proj:
            raise ValueError("key map flagged projective but elements are not")
        object.__setattr__(self, "elements", elems)
        object.__setattr__(self, "projective", is_proj)

    @property
    def dim(self) -> int:
        return self.elements[0].dim

    def __len__(self):
        return len(self.elements)

    def lifted(self, extra_dim: int) -> list[np.ndarray]:
        """Elements lifted to the joint space as Z_j ⊗ 𝟙_extra."""
        eye = np.eye(extra_dim)
        return [np.kron(e.entries, eye) for e in self.elements]


@dataclass(frozen=True)
class ConstraintSet:
    """Paired experimental constraints (Γ_i, γ_i).

    A full constraint set always contains the normalization entry Γ = 𝟙,
    γ = 1; use :meth:`fragment` for partial sets (e.g. the tomographic
    fragment produced by source replacement) that get merged later.
    """

    operators: tuple
    values: tuple
    _require_normalization: bool = field(default=True, repr=False)

    def __post_init__(self):
        ops = tuple(
            o if isinstance(o, HermitianOperator) else HermitianOperator(o)
            for o in self.operators
        )
        vals = tuple(float(v) for v in self.values)
        if len(ops) != len(vals):
            raise ValueError(
                f"{len(ops)} operators paired with {len(vals)} values"
            )
        if ops:
            d = ops[0].dim
            if any(o.dim != d for o in ops):
                raise ValueError("constraint operators must share one dimension")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "values", vals)
        if self._require_normalization and self.index_of_identity() is None:
            raise ValueError("constraint set lacks the normalization entry ⟨𝟙⟩ = 1")

    @classmethod
    def fragment(cls, operators, values) -> "ConstraintSet":
        """A partial constraint set exempt from the normalization requirement."""
        return cls(tuple(operators), tuple(values), _require_normalization=False)

    @property
    def n(self) -> int:
        return len(self.operators)

    @property
    def dim(self) -> int:
        return self.operators[0].dim

    def index_of_identity(self) -> Optional[int]:
        """Index of the (𝟙, 1) entry, or None."""
        for i, (op, val) in enumerate(zip(self.operators, self.values)):
            if abs(val - 1.0) <= 1e-12 and np.abs(
                op.entries - np.eye(op.dim)
            ).max() <= 1e-10:
                return i
        return None

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Stack to a (n, d, d) complex array and a (n,) value vector."""
        ops = np.array([o.entries for o in self.operators])
        return ops, np.array(self.values, dtype=float)

    def appended(self, op, value: float) -> "ConstraintSet":
        return ConstraintSet(
            self.operators + (op if isinstance(op, HermitianOperator) else HermitianOperator(op),),
            self.values + (float(value),),
            _require_normalization=self._require_normalization,
        )

    def with_values(self, values) -> "ConstraintSet":
        return ConstraintSet(
            self.operators, tuple(float(v) for v in values),
            _require_normalization=False,
        )


@dataclass(frozen=True)
class KeyRateProblem:
    """Everything a solver needs for one protocol instance.

    The key map acts on Alice's system (dimension ``dim_a``); constraint
    operators act on the joint space of dimension dim_a·dim_b·dim_m (the
    announcement register M is trivial except for MDI problems).  ``witness``
    is the builder's simulated state — not part of the optimization, but it
    certifies feasibility and seeds the primal oracle.
    """

    dim_a: int
    dim_b: int
    keymap: KeyMapPOVM
    constraints: ConstraintSet
    hzazb: float
    postselect: Optional[np.ndarray] = None
    p_pass: Optional[float] = None
    dim_m: int = 1
    witness: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.hzazb < 0:
            raise ValueError(f"hzazb must be >= 0, got {self.hzazb}")
        total = self.dim_a * self.dim_b * self.dim_m
        if self.constraints.dim != total:
            raise ValueError(
                f"constraints act on dim {self.constraints.dim}, expected "
                f"{self.dim_a}*{self.dim_b}*{self.dim_m} = {total}"
            )
        if self.keymap.dim != self.dim_a:
            raise ValueError("key map must act on Alice's system")
        if self.postselect is not None:
            g = np.asarray(self.postselect, dtype=complex)
            if g.shape != (total, total):
                raise ValueError("post-selection Kraus operator has wrong shape")
            object.__setattr__(self, "postselect", g)
            if self.p_pass is not None and not (0.0 < self.p_pass <= 1.0):
                raise ValueError(f"p_pass must lie in (0, 1], got {self.p_pass}")
        if self.witness is not None:
            object.__setattr__(
                self, "witness", np.asarray(self.witness, dtype=complex)
            )

    @property
    def total_dim(self) -> int:
        return self.dim_a * self.dim_b * self.dim_m

    def lifted_keymap(self) -> list[np.ndarray]:
        """Key-map elements lifted to the joint space (Z_j ⊗ 𝟙_{B,M})."""
        return self.keymap.lifted(self.dim_b * self.dim_m)


# ---------------------------------------------------------------------------
# basis constructions
# ---------------------------------------------------------------------------


def fourier_matrix(d: int) -> np.ndarray:
    """Fourier matrix F[j,k] = ω^{-jk}/√d with ω = exp(2πi/d)."""
    if d < 2:
        raise ValueError("d must be >= 2")
    j, k = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    return np.exp(-2j * np.pi * j * k / d) / math.sqrt(d)


def generalized_paulis(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Generalized Pauli pair (σ_Z, σ_X) in dimension d.

    σ_Z = Σ ωʲ|j⟩⟨j| and σ_X = Σ|j+1⟩⟨j| (cyclic shift), satisfying
    σ_X = F σ_Z F† and the Weyl relation σ_Z σ_X = ω σ_X σ_Z.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    omega = np.exp(2j * np.pi / d)
    sigma_z = np.diag(omega ** np.arange(d))
    sigma_x = np.roll(np.eye(d, dtype=complex), 1, axis=0)
    return sigma_z, sigma_x


def bell_basis(d: int) -> list[np.ndarray]:
    """The d² generalized Bell vectors |φ_{q,r}⟩ = (𝟙 ⊗ σ_X^q σ_Z^r)|φ_{0,0}⟩.

    Ordered row-major in (q, r); the first vector is the canonical maximally
    entangled state Σ|jj⟩/√d.
    """
    sigma_z, sigma_x = generalized_paulis(d)
    phi00 = np.eye(d, dtype=complex).reshape(d * d) / math.sqrt(d)
    out = []
    for q in range(d):
        for r in range(d):
            op = np.linalg.matrix_power(sigma_x, q) @ np.linalg.matrix_power(sigma_z, r)
            out.append(np.kron(np.eye(d), op) @ phi00)
    return out


def _is_prime(d: int) -> bool:
    if d < 2:
        return False
    for f in range(2, int(math.isqrt(d)) + 1):
        if d % f == 0:
            return False
    return True


def mub_family(d: int, n: int) -> list[np.ndarray]:
    """The first n of the d+1 mutually unbiased bases in prime dimension d.

    Returned as unitary matrices whose columns are the basis vectors:
    standard (Z) basis first, Fourier (X) basis second, then the complex
    Hadamards H_k (k = 1..n-2) built from s_j = (d-j)(d+j-1)/2.  That
    construction needs odd d, so for d = 2 the third basis is the eigenbasis
    of σ_X σ_Z (the Y basis).
    """
    if not _is_prime(d):
        raise ValueError(f"d = {d} is not prime")
    if not 2 <= n <= d + 1:
        raise ValueError(f"n = {n} outside [2, {d + 1}]")
    bases = [np.eye(d, dtype=complex), fourier_matrix(d)]
    if d == 2:
        if n == 3:
            bases.append(np.array([[1, 1], [1j, -1j]], dtype=complex) / math.sqrt(2))
        return bases[:n]
    omega = np.exp(2j * np.pi / d)
    j = np.arange(d)
    s = (d - j) * (d + j - 1) // 2
    for k in range(1, n - 1):
        h = omega ** (-(np.outer(j, j) + k * s[:, None])) / math.sqrt(d)
        bases.append(h)
    return bases[:n]


def _columns(basis) -> list[np.ndarray]:
    b = np.asarray(basis, dtype=complex)
    if b.ndim == 2:
        return [b[:, i] for i in range(b.shape[1])]
    return [np.asarray(v, dtype=complex) for v in basis]


def error_operator(basis_a, basis_b, correlate: bool) -> HermitianOperator:
    """Error operator for measurements in the given local bases.

    With ``correlate=True`` an error is a mismatch: Σ_{j≠k} |aⱼ⟩⟨aⱼ|⊗|bₖ⟩⟨bₖ|.
    The anti-correlated (Y-type) convention counts matches as errors:
    Σⱼ |aⱼ⟩⟨aⱼ|⊗|bⱼ⟩⟨bⱼ|.
    """
    va, vb = _columns(basis_a), _columns(basis_b)
    if len(va) != len(vb):
        raise ValueError("bases must have equal size")
    pa = [np.outer(v, v.conj()) for v in va]
    pb = [np.outer(v, v.conj()) for v in vb]
    match = sum(np.kron(a, b) for a, b in zip(pa, pb))
    if correlate:
        total = np.kron(sum(pa), sum(pb))
        out = total - match
    else:
        out = match
    return HermitianOperator((out + out.conj().T) / 2)


def depolarize(rho, p: float, dims: tuple[int, int], side: str = "B") -> HermitianOperator:
    """Depolarize one side: (1-p)ρ + p·(ρ_kept ⊗ 𝟙/d) toward the mixed marginal."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p = {p} outside [0, 1]")
    from .operators import partial_trace

    m = _as_matrix(rho)
    da, db = dims
    if side == "B":
        mixed = np.kron(partial_trace(m, dims, "A").entries, np.eye(db) / db)
    elif side == "A":
        mixed = np.kron(np.eye(da) / da, partial_trace(m, dims, "B").entries)
    else:
        raise ValueError("side must be 'A' or 'B'")
    return HermitianOperator((1 - p) * m + p * mixed)


def tomography_basis(d: int) -> list[HermitianOperator]:
    """The Hermitian operator basis {|j⟩⟨j|, (|j⟩⟨k|+|k⟩⟨j|)/√2, i(|j⟩⟨k|−|k⟩⟨j|)/√2}."""
    out = []
    for j in range(d):
        m = np.zeros((d, d), dtype=complex)
        m[j, j] = 1.0
        out.append(HermitianOperator(m))
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = m[k, j] = 1 / math.sqrt(2)
            out.append(HermitianOperator(m))
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = 1j / math.sqrt(2)
            m[k, j] = -1j / math.sqrt(2)
            out.append(HermitianOperator(m))
    return out


def source_replacement(
    signals: Sequence[np.ndarray], probs: Sequence[float]
) -> tuple[np.ndarray, ConstraintSet]:
    """Source-replacement state and the tomographic constraints on Alice.

    Builds |ψ⟩ = Σⱼ √pⱼ |j⟩|φⱼ⟩ and returns it together with a constraint
    fragment fixing Alice's marginal: the tomographically complete operator
    set {Ωᵢ} on the register with values Tr(ρ_A Ωᵢ), where ρ_A is the Gram
    form Σ √(pⱼpₖ) ⟨φₖ|φⱼ⟩ |j⟩⟨k|.  The operators act on the register alone;
    builders lift them to the joint space.
    """
    sig = [np.asarray(s, dtype=complex).ravel() for s in signals]
    p = np.asarray(probs, dtype=float)
    if len(sig) != p.size:
        raise ValueError("one probability per signal required")
    if p.min() < -1e-12 or abs(p.sum() - 1.0) > 1e-10:
        raise ValueError("probs must be nonnegative and sum to 1")
    for s in sig:
        if abs(np.linalg.norm(s) - 1.0) > 1e-9:
            raise ValueError("signals must be normalized")
    n = len(sig)
    dsig = sig[0].size
    psi = np.zeros(n * dsig, dtype=complex)
    for j, s in enumerate(sig):
        psi[j * dsig : (j + 1) * dsig] = math.sqrt(max(p[j], 0.0)) * s
    gram = np.array(
        [[math.sqrt(p[j] * p[k]) * np.vdot(sig[k], sig[j]) for k in range(n)] for j in range(n)]
    )
    rho_a = (gram + gram.conj().T) / 2
    ops = tomography_basis(n)
    vals = [float(np.real(np.trace(rho_a @ o.entries))) for o in ops]
    return psi, ConstraintSet.fragment(ops, vals)


# ---------------------------------------------------------------------------
# scenario builders
# ---------------------------------------------------------------------------


def _zbasis_keymap(d: int) -> KeyMapPOVM:
    return KeyMapPOVM(tuple(tomography_basis(d)[:d]))


def _check_q(q: float, hi: float):
    if not 0.0 <= q < hi:
        raise ValueError(f"Q = {q} outside [0, {hi})")


def _entangled_witness(d: int, q: float) -> np.ndarray:
    """Maximally entangled state through a depolarizing channel with Q = p(d-1)/d."""
    phi = bell_basis(d)[0]
    rho = np.outer(phi, phi.conj())
    p = q * d / (d - 1)
    return depolarize(rho, p, (d, d), side="B").entries


def build_bb84(q: float) -> KeyRateProblem:
    """BB84: qubit pair, error rates Q observed in the Z and X bases."""
    _check_q(q, 0.5)
    f = fourier_matrix(2)
    e_x = error_operator(f, f.conj(), correlate=True)
    e_z = error_operator(np.eye(2), np.eye(2), correlate=True)
    constraints = ConstraintSet(
        (identity(4), e_x, e_z), (1.0, q, q)
    )
    return KeyRateProblem(
        dim_a=2,
        dim_b=2,
        keymap=_zbasis_keymap(2),
        constraints=constraints,
        hzazb=binary_entropy(q),
        witness=_entangled_witness(2, q),
    )


def build_six_state(q: float) -> KeyRateProblem:
    """Six-state protocol: the X and Y error rates are merged into their average."""
    _check_q(q, 0.5)
    zb, xb, yb = mub_family(2, 3)
    e_z = error_operator(zb, zb, correlate=True)
    e_x = error_operator(xb, xb.conj(), correlate=True)
    e_y = error_operator(yb, yb, correlate=False)
    e_xy = HermitianOperator((e_x.entries + e_y.entries) / 2)
    constraints = ConstraintSet(
        (identity(4), e_xy, e_z), (1.0, q, q)
    )
    return KeyRateProblem(
        dim_a=2,
        dim_b=2,
        keymap=_zbasis_keymap(2),
        constraints=constraints,
        hzazb=binary_entropy(q),
        witness=_entangled_witness(2, q),
    )


def build_two_mub(d: int, q: float) -> KeyRateProblem:
    """Two MUBs (computational + Fourier) in dimension d; Bob's X basis is F*."""
    if d < 2:
        raise ValueError("d must be >= 2")
    _check_q(q, 1.0 - 1.0 / d)
    f = fourier_matrix(d)
    e_z = error_operator(np.eye(d), np.eye(d), correlate=True)
    e_x = error_operator(f, f.conj(), correlate=True)
    constraints = ConstraintSet(
        (identity(d * d), e_z, e_x), (1.0, q, q)
    )
    return KeyRateProblem(
        dim_a=d,
        dim_b=d,
        keymap=_zbasis_keymap(d),
        constraints=constraints,
        hzazb=fano_bound(q, d),
        witness=_entangled_witness(d, q),
    )


def build_n_mub(d: int, n: int, q: float) -> KeyRateProblem:
    """n MUBs in prime dimension d; one average error rate over the n-1 check bases."""
    bases = mub_family(d, n)
    _check_q(q, 1.0 - 1.0 / d)
    e_z = error_operator(bases[0], bases[0], correlate=True)
    checks = [
        error_operator(b, b.conj(), correlate=True).entries for b in bases[1:]
    ]
    e_avg = HermitianOperator(sum(checks) / len(checks))
    constraints = ConstraintSet(
        (identity(d * d), e_z, e_avg), (1.0, q, q)
    )
    return KeyRateProblem(
        dim_a=d,
        dim_b=d,
        keymap=_zbasis_keymap(d),
        constraints=constraints,
        hzazb=fano_bound(q, d),
        witness=_entangled_witness(d, q),
    )


def build_rotated(theta: float, q: float, level: int = 4) -> KeyRateProblem:
    """Key in Z, checks in a basis rotated by θ from X: σ_W = sinθ·σ_Z + cosθ·σ_X.

    ``level`` selects how many of the four correlator constraints are
    included: ⟨WW⟩, then ⟨ZZ⟩, then the cross terms ⟨ZW⟩ and ⟨WZ⟩.
    """
    if not 0.0 <= theta < math.pi / 2:
        raise ValueError(f"theta = {theta} outside [0, π/2)")
    _check_q(q, 0.5)
    if level not in (1, 2, 3, 4):
        raise ValueError("level must be 1..4")
    sz = np.diag([1.0, -1.0]).astype(complex)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sw = math.sin(theta) * sz + math.cos(theta) * sx
    v = 1.0 - 2.0 * q
    ladder = [
        (np.kron(sw, sw), v),
        (np.kron(sz, sz), v),
        (np.kron(sz, sw), math.sin(theta) * v),
        (np.kron(sw, sz), math.sin(theta) * v),
    ]
    ops = [identity(4)] + [HermitianOperator(o) for o, _ in ladder[:level]]
    vals = [1.0] + [val for _, val in ladder[:level]]
    return KeyRateProblem(
        dim_a=2,
        dim_b=2,
        keymap=_zbasis_keymap(2),
        constraints=ConstraintSet(tuple(ops), tuple(vals)),
        hzazb=binary_entropy(q),
        witness=_entangled_witness(2, q),
    )


def eur_baseline(theta: float, q: float) -> float:
    """Uncertainty-principle comparison bound max(0, -log₂c - 2h(Q)), c = (1+sinθ)/2."""
    c = (1.0 + math.sin(theta)) / 2.0
    return max(0.0, -math.log2(c) - 2.0 * binary_entropy(q))


def build_b92(theta: float, p: float) -> KeyRateProblem:
    """B92 with signal states cos(θ/4)|0⟩ ± sin(θ/4)|1⟩ and depolarizing noise p.

    Prepare-and-measure protocol via source replacement; Bob's unambiguous
    discrimination is encoded in a post-selection Kraus operator
    G = 𝟙 ⊗ [(|φ̄₀⟩⟨φ̄₀| + |φ̄₁⟩⟨φ̄₁|)/2]^{1/2}, where |φ̄ⱼ⟩ ⊥ |φⱼ⟩.
    """
    if not 1e-9 < theta < math.pi - 1e-9:
        raise ValueError(f"theta = {theta} degenerate (signals parallel or orthogonal)")
    if not 0.0 <= p < 1.0:
        raise ValueError(f"p = {p} outside [0, 1)")
    c4, s4 = math.cos(theta / 4), math.sin(theta / 4)
    phi0 = np.array([c4, s4], dtype=complex)
    phi1 = np.array([c4, -s4], dtype=complex)
    phi0_bar = np.array([s4, -c4], dtype=complex)
    phi1_bar = np.array([s4, c4], dtype=complex)

    psi, frag = source_replacement([phi0, phi1], [0.5, 0.5])
    rho_sim = depolarize(np.outer(psi, psi.conj()), p, (2, 2), side="B").entries

    p00 = np.diag([1.0, 0.0]).astype(complex)
    p11 = np.diag([0.0, 1.0]).astype(complex)
    gamma1 = HermitianOperator(
        np.kron(p00, np.outer(phi0_bar, phi0_bar.conj()))
        + np.kron(p11, np.outer(phi1_bar, phi1_bar.conj()))
    )
    gamma2 = HermitianOperator(
        np.kron(p00, np.outer(phi1_bar, phi1_bar.conj()))
        + np.kron(p11, np.outer(phi0_bar, phi0_bar.conj()))
    )
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    g1 = p / 2
    g2 = p / 2 + (1 - p) * math.sin(theta / 2) ** 2
    constraints = ConstraintSet(
        (identity(4), gamma1, gamma2, HermitianOperator(np.kron(sx, np.eye(2)))),
        (1.0, g1, g2, math.cos(theta / 2)),
    )

    filt = (
        np.outer(phi0_bar, phi0_bar.conj()) + np.outer(phi1_bar, phi1_bar.conj())
    ) / 2
    w, u = np.linalg.eigh(filt)
    g = np.kron(np.eye(2), (u * np.sqrt(np.maximum(w, 0.0))) @ u.conj().T)
    p_pass = float(np.real(np.trace(g @ rho_sim @ g.conj().T)))

    err_ps = g1 / (g1 + g2)
    return KeyRateProblem(
        dim_a=2,
        dim_b=2,
        keymap=_zbasis_keymap(2),
        constraints=constraints,
        hzazb=fano_bound(err_ps, 2),
        postselect=g,
        p_pass=p_pass,
        witness=rho_sim,
    )


def build_mdi_bb84(q: float, pz: float = 0.99) -> KeyRateProblem:
    """Measurement-device-independent BB84 with biased basis choice pz.

    Both parties hold 4-symbol registers (two Z signals, two X signals) and
    send √(pz/2)(|0⟩|0⟩+|1⟩|1⟩) + √((1-pz)/2)(|2⟩|+⟩+|3⟩|−⟩); the untrusted
    node Bell-measures the two flying qubits.  Of its four outcomes only the
    two spin-anticorrelated ones (the (|01⟩±|10⟩)/√2 pair, which occur with
    equal probability and identical conditional register statistics) are
    announced as conclusive; the rest are discarded.  The returned problem
    lives on the state *conditioned on a conclusive announcement* — already
    normalized, so the plain identity constraint applies and the key rate is
    per conclusive round, directly comparable with 1−2h(Q).  The two-symbol
    M register records which conclusive outcome was announced.

    Constraints: normalization, the 32 conditional announcement statistics
    Tr[ρ(|j⟩⟨j|⊗|k⟩⟨k|⊗|m⟩⟨m|)], and the 256 product-tomography constraints
    Tr[ρ(Ωₐ⊗Ω_b⊗𝟙)] that pin the joint two-register marginal Tr_M ρ
    completely.  The registers never leave the labs, so their joint marginal
    is set by the sources and the announcement statistics rather than by
    anything the node does with the flying qubits; pinning all 256 products
    (not merely each party's 16 single-register averages) is what makes the
    constraint set well conditioned.
    The symmetric error rate Q is simulated by a depolarizing channel
    (probability 2Q) on Alice's flying qubit before the ideal measurement;
    conditioned on a conclusive announcement the Z-round error rate after
    Bob's standard bit flip is exactly Q, so hzazb = h(Q) is the matching
    sifted error-correction cost.
    """
    _check_q(q, 0.5)
    if not 0.0 < pz < 1.0:
        raise ValueError(f"pz = {pz} outside (0, 1)")
    s2 = 1 / math.sqrt(2)
    signals = [
        np.array([1, 0], dtype=complex),
        np.array([0, 1], dtype=complex),
        np.array([s2, s2], dtype=complex),
        np.array([s2, -s2], dtype=complex),
    ]
    probs = [pz / 2, pz / 2, (1 - pz) / 2, (1 - pz) / 2]
    psi, frag = source_replacement(signals, probs)

    # joint source state ordered (A, B, A', B')
    full = np.kron(psi, psi).reshape(4, 2, 4, 2).transpose(0, 2, 1, 3).reshape(64)
    rho = np.outer(full, full.conj())

    # depolarizing channel (probability 2Q) on Alice's flying qubit A'
    pch = 2 * q
    sz = np.diag([1.0, -1.0]).astype(complex)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    rho_noisy = (1 - 0.75 * pch) * rho
    for pauli in (sx, sy, sz):
        lift = np.kron(np.eye(16), np.kron(pauli, np.eye(2)))
        rho_noisy = rho_noisy + (pch / 4) * lift @ rho @ lift.conj().T

    # ideal Bell measurement on (A', B'); keep the two conclusive outcomes
    bells = bell_basis(2)
    t = rho_noisy.reshape(16, 4, 16, 4)
    blocks = [
        np.einsum("imjn,m,n->ij", t, bells[b].conj(), bells[b]) for b in (2, 3)
    ]
    p_conclusive = float(sum(np.real(np.trace(blk)) for blk in blocks))
    em = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    rho_c = sum(np.kron(blk / p_conclusive, e).astype(complex) for blk, e in zip(blocks, em))

    # constraint assembly (all values read off the conditional state)
    ops: list[HermitianOperator] = [identity(32)]
    vals: list[float] = [1.0]
    proj4 = [np.diag((np.arange(4) == j).astype(complex)) for j in range(4)]
    proj2 = [np.diag((np.arange(2) == m).astype(complex)) for m in range(2)]
    for j in range(4):
        for k in range(4):
            for m in range(2):
                op = np.kron(np.kron(proj4[j], proj4[k]), proj2[m])
                ops.append(HermitianOperator(op))
                vals.append(float(np.real(np.trace(op @ rho_c))))
    eye2 = np.eye(2)
    tomo = [t.entries for t in frag.operators]
    for ta in tomo:
        for tb in tomo:
            op = np.kron(np.kron(ta, tb), eye2)
            ops.append(HermitianOperator(op))
            vals.append(float(np.real(np.trace(op @ rho_c))))

    keymap = KeyMapPOVM(
        (
            HermitianOperator(proj4[0] + proj4[2]),
            HermitianOperator(proj4[1] + proj4[3]),
        )
    )
    return KeyRateProblem(
        dim_a=4,
        dim_b=4,
        dim_m=2,
        keymap=keymap,
        constraints=ConstraintSet(tuple(ops), tuple(vals)),
        hzazb=binary_entropy(q),
        witness=rho_c,
    )
