"""Truncated Hilbert spaces and the sparse operators living on them.

A space is an ordered tuple of factors: bosonic modes truncated at some
occupation (``Fock``), a collective spin ladder kept up to an excitation
cutoff (``Dicke``), a full product of spin-1/2 sites (``SpinHalfProduct``),
or an opaque ``Subspace`` produced by a basis restriction.

Basis conventions (stable, relied on by file outputs and tests):

* within each factor the basis is ordered by excitation number ascending
  (index 0 is the ground level);
* the composite index runs row-major over the factors in declaration
  order, i.e. the first factor varies slowest, exactly as ``numpy.kron``;
* for ``SpinHalfProduct`` the site ``j`` occupies bit ``n_spins - 1 - j``
  of the basis index, so site 0 is the slowest bit, and bit value 1 means
  the site is excited.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    CutoffError,
    EmbeddingError,
    MemoryGuardError,
    StateValidityError,
    TruncationError,
)

HERMITIAN_ATOL = 1e-12

# Hard cap on product-space sites: 2**14 kets keeps a dense density matrix
# (complex128) at 4 GB worst case and anything practical far below that.
PRODUCT_SPIN_MAX = 14


# ---------------------------------------------------------------------------
# factors and space descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Fock:
    """Bosonic mode truncated at occupation ``n_max`` (dimension n_max + 1)."""

    n_max: int

    def __post_init__(self):
        if self.n_max < 1:
            raise TruncationError(f"Fock truncation needs n_max >= 1, got {self.n_max}")

    @property
    def dim(self) -> int:
        return self.n_max + 1


@dataclass(frozen=True)
class Dicke:
    """Collective spin S = N/2 ladder, excitation basis |n> = |S, -S + n>.

    Only the lowest ``n_cut + 1`` ladder states are kept; this is the
    symmetric (maximal-S) sector of ``n_atoms`` spins, truncated for low
    excitation work.
    """

    n_atoms: int
    n_cut: int

    def __post_init__(self):
        if self.n_atoms < 1:
            raise CutoffError(f"Dicke needs n_atoms >= 1, got {self.n_atoms}")
        if not (1 <= self.n_cut <= self.n_atoms):
            raise CutoffError(
                f"Dicke cutoff must satisfy 1 <= n_cut <= N, got n_cut={self.n_cut}, N={self.n_atoms}"
            )

    @property
    def dim(self) -> int:
        return self.n_cut + 1


@dataclass(frozen=True)
class SpinHalfProduct:
    """Full 2**n product space of spin-1/2 sites (guarded at 14 sites)."""

    n_spins: int

    def __post_init__(self):
        if self.n_spins < 1:
            raise MemoryGuardError(f"need n_spins >= 1, got {self.n_spins}")
        if self.n_spins > PRODUCT_SPIN_MAX:
            raise MemoryGuardError(
                f"product space with {self.n_spins} spins exceeds the guard of {PRODUCT_SPIN_MAX}"
            )

    @property
    def dim(self) -> int:
        return 2**self.n_spins


@dataclass(frozen=True)
class Subspace:
    """Opaque factor for states expressed in a restricted basis."""

    size: int
    label: str = "restricted"

    def __post_init__(self):
        if self.size < 1:
            raise CutoffError(f"Subspace needs size >= 1, got {self.size}")

    @property
    def dim(self) -> int:
        return self.size


Factor = Fock | Dicke | SpinHalfProduct | Subspace


@dataclass(frozen=True)
class SpaceDescriptor:
    """Ordered collection of factors; immutable once constructed."""

    factors: tuple[Factor, ...]

    def __post_init__(self):
        if len(self.factors) == 0:
            raise EmbeddingError("a space needs at least one factor")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def index_of(self, levels: Sequence[int]) -> int:
        """Composite basis index of per-factor levels (row-major)."""
        if len(levels) != len(self.factors):
            raise EmbeddingError(
                f"expected {len(self.factors)} levels, got {len(levels)}"
            )
        idx = 0
        for lev, d in zip(levels, self.dims):
            if not (0 <= lev < d):
                raise EmbeddingError(f"level {lev} outside factor dimension {d}")
            idx = idx * d + lev
        return idx

    def levels_of(self, index: int) -> tuple[int, ...]:
        """Inverse of :meth:`index_of`."""
        if not (0 <= index < self.total_dim):
            raise EmbeddingError(f"index {index} outside space of dim {self.total_dim}")
        out = []
        for d in reversed(self.dims):
            out.append(index % d)
            index //= d
        return tuple(reversed(out))


def space(*factors: Factor) -> SpaceDescriptor:
    """Shorthand constructor for a :class:`SpaceDescriptor`."""
    return SpaceDescriptor(tuple(factors))


def excitation_levels(sd: SpaceDescriptor) -> np.ndarray:
    """Total excitation number of every composite basis state.

    Fock and Dicke factors contribute their level index, spin products the
    number of excited sites. ``Subspace`` factors carry no excitation
    bookkeeping and contribute zero.
    """
    total = np.zeros(1, dtype=np.int64)
    for f in sd.factors:
        if isinstance(f, (Fock, Dicke)):
            exc = np.arange(f.dim, dtype=np.int64)
        elif isinstance(f, SpinHalfProduct):
            idx = np.arange(f.dim, dtype=np.int64)
            exc = np.zeros(f.dim, dtype=np.int64)
            for b in range(f.n_spins):
                exc += (idx >> b) & 1
        else:
            exc = np.zeros(f.dim, dtype=np.int64)
        total = (total[:, None] + exc[None, :]).ravel()
    return total


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


class LinOp:
    """Sparse complex linear operator bound to a space.

    Treated as immutable after construction; all algebra returns new
    instances. ``hermitian=True`` is verified at construction against
    ``HERMITIAN_ATOL``.
    """

    __slots__ = ("space", "matrix", "hermitian")

    def __init__(self, sd: SpaceDescriptor, matrix, hermitian: bool = False):
        m = sp.csr_matrix(matrix, dtype=np.complex128)
        m.eliminate_zeros()
        d = sd.total_dim
        if m.shape != (d, d):
            raise EmbeddingError(
                f"matrix shape {m.shape} does not match space dimension {d}"
            )
        if hermitian:
            diff = (m - m.getH()).tocoo()
            dev = np.abs(diff.data).max() if diff.nnz else 0.0
            if dev > HERMITIAN_ATOL:
                raise StateValidityError(
                    f"operator flagged hermitian deviates by {dev:.3e}"
                )
        object.__setattr__(self, "space", sd)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "hermitian", bool(hermitian))

    def __setattr__(self, *_):
        raise AttributeError("LinOp is immutable")

    # --- algebra ---------------------------------------------------------

    def _check_same_space(self, other: "LinOp"):
        if self.space != other.space:
            raise EmbeddingError("operators live on different spaces")

    def __add__(self, other: "LinOp") -> "LinOp":
        self._check_same_space(other)
        return LinOp(self.space, self.matrix + other.matrix,
                     hermitian=self.hermitian and other.hermitian)

    def __sub__(self, other: "LinOp") -> "LinOp":
        self._check_same_space(other)
        return LinOp(self.space, self.matrix - other.matrix,
                     hermitian=self.hermitian and other.hermitian)

    def __neg__(self) -> "LinOp":
        return LinOp(self.space, -self.matrix, hermitian=self.hermitian)

    def __mul__(self, scalar) -> "LinOp":
        s = complex(scalar)
        herm = self.hermitian and s.imag == 0.0
        return LinOp(self.space, self.matrix * s, hermitian=herm)

    __rmul__ = __mul__

    def __matmul__(self, other: "LinOp") -> "LinOp":
        self._check_same_space(other)
        return LinOp(self.space, self.matrix @ other.matrix)

    def dag(self) -> "LinOp":
        return LinOp(self.space, self.matrix.getH(), hermitian=self.hermitian)

    def __reduce__(self):
        # immutable __slots__ class: rebuild through the constructor
        return (LinOp, (self.space, self.matrix, self.hermitian))

    # --- queries ---------------------------------------------------------

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def expect(self, state) -> complex:
        """<psi|A|psi> for a Ket, Tr(rho A) for a DensityMatrix."""
        if isinstance(state, Ket):
            val = np.vdot(state.amplitudes, self.matrix @ state.amplitudes)
        elif isinstance(state, DensityMatrix):
            val = (self.matrix.multiply(state.entries.T)).sum()
        else:
            raise TypeError(f"cannot take expectation in {type(state)}")
        return complex(val)


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------


class Ket:
    """State vector on a space (dense complex amplitudes)."""

    __slots__ = ("space", "amplitudes")

    def __init__(self, sd: SpaceDescriptor, amplitudes):
        v = np.asarray(amplitudes, dtype=np.complex128).ravel()
        if v.size != sd.total_dim:
            raise EmbeddingError(
                f"amplitude length {v.size} does not match space dimension {sd.total_dim}"
            )
        object.__setattr__(self, "space", sd)
        object.__setattr__(self, "amplitudes", v)

    def __setattr__(self, *_):
        raise AttributeError("Ket is immutable; use normalize() etc.")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "Ket":
        n = self.norm
        if n == 0.0:
            raise StateValidityError("cannot normalize the zero vector")
        return Ket(self.space, self.amplitudes / n)

    def overlap(self, other: "Ket") -> complex:
        if self.space != other.space:
            raise EmbeddingError("kets live on different spaces")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_density(self) -> "DensityMatrix":
        v = self.amplitudes
        return DensityMatrix(self.space, np.outer(v, v.conj()))

    def to_csv(self, path):
        """Write (index, re, im) rows; format is stable across runs."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("index,re,im\n")
            for i, a in enumerate(self.amplitudes):
                fh.write(f"{i},{a.real:.17g},{a.imag:.17g}\n")

    def __reduce__(self):
        return (Ket, (self.space, self.amplitudes))


class DensityMatrix:
    """Density operator on a space (dense complex entries).

    Construction only checks the shape; :meth:`validate` enforces the
    physical-state contract when the caller wants it.
    """

    __slots__ = ("space", "entries")

    def __init__(self, sd: SpaceDescriptor, entries):
        m = np.asarray(entries, dtype=np.complex128)
        d = sd.total_dim
        if m.shape != (d, d):
            raise EmbeddingError(f"entries shape {m.shape}, expected ({d}, {d})")
        object.__setattr__(self, "space", sd)
        object.__setattr__(self, "entries", m)

    def __setattr__(self, *_):
        raise AttributeError("DensityMatrix is immutable")

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def validate(self, herm_tol: float = 1e-10, trace_tol: float = 1e-8,
                 eig_floor: float = -1e-8) -> "DensityMatrix":
        m = self.entries
        herm_dev = float(np.abs(m - m.conj().T).max())
        if herm_dev > herm_tol:
            raise StateValidityError(f"hermiticity deviation {herm_dev:.3e} > {herm_tol:.1e}")
        tr_dev = abs(self.trace - 1.0)
        if tr_dev > trace_tol:
            raise StateValidityError(f"trace deviation {tr_dev:.3e} > {trace_tol:.1e}")
        w = np.linalg.eigvalsh((m + m.conj().T) / 2.0)
        if w.min() < eig_floor:
            raise StateValidityError(f"negative eigenvalue {w.min():.3e} < {eig_floor:.1e}")
        return self

    def expect(self, op: LinOp) -> complex:
        return op.expect(self)

    def __reduce__(self):
        return (DensityMatrix, (self.space, self.entries))


def basis_ket(sd: SpaceDescriptor, levels: Sequence[int]) -> Ket:
    """Computational basis state with the given per-factor levels."""
    v = np.zeros(sd.total_dim, dtype=np.complex128)
    v[sd.index_of(levels)] = 1.0
    return Ket(sd, v)


# ---------------------------------------------------------------------------
# elementary operator constructors
# ---------------------------------------------------------------------------


def identity(sd: SpaceDescriptor) -> LinOp:
    return LinOp(sd, sp.identity(sd.total_dim, dtype=np.complex128, format="csr"),
                 hermitian=True)


def fock_destroy(n_max: int) -> LinOp:
    """Annihilation operator a with a|n> = sqrt(n) |n-1> on Fock(n_max)."""
    f = Fock(n_max)
    vals = np.sqrt(np.arange(1, n_max + 1, dtype=np.float64))
    m = sp.diags(vals, offsets=1, shape=(f.dim, f.dim), dtype=np.complex128)
    return LinOp(space(f), m)


def fock_number(n_max: int) -> LinOp:
    f = Fock(n_max)
    return LinOp(space(f), sp.diags(np.arange(f.dim, dtype=np.float64)),
                 hermitian=True)


def dicke_lowering(n_atoms: int, n_cut: int) -> LinOp:
    """Collective lowering S- with S-|n> = sqrt(n (N - n + 1)) |n-1>."""
    f = Dicke(n_atoms, n_cut)
    n = np.arange(1, f.dim, dtype=np.float64)
    vals = np.sqrt(n * (n_atoms - n + 1.0))
    m = sp.diags(vals, offsets=1, shape=(f.dim, f.dim), dtype=np.complex128)
    return LinOp(space(f), m)


def dicke_sz(n_atoms: int, n_cut: int) -> LinOp:
    """S_z with S_z|n> = (-N/2 + n) |n>."""
    f = Dicke(n_atoms, n_cut)
    vals = -0.5 * n_atoms + np.arange(f.dim, dtype=np.float64)
    return LinOp(space(f), sp.diags(vals), hermitian=True)


def dicke_number(n_atoms: int, n_cut: int) -> LinOp:
    """Excitation counter n = S_z + N/2 on the Dicke ladder."""
    f = Dicke(n_atoms, n_cut)
    return LinOp(space(f), sp.diags(np.arange(f.dim, dtype=np.float64)),
                 hermitian=True)


_SIGMA_Z = sp.csr_matrix(np.diag([-1.0, 1.0]).astype(np.complex128))
_SIGMA_MINUS = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=np.complex128))


@dataclass(frozen=True)
class ProductSpinOps:
    """Single-site Paulis plus the collective operators they sum to."""

    space: SpaceDescriptor
    sigma_z: tuple[LinOp, ...]
    sigma_minus: tuple[LinOp, ...]
    s_plus: LinOp
    s_minus: LinOp
    s_z: LinOp


def product_spin_ops(n_spins: int) -> ProductSpinOps:
    """Pauli operators on the 2**N product space.

    Collective operators follow S- = sum_j sigma_j^-, S_z = (1/2) sum_j
    sigma_j^z, so they reproduce the Dicke ladder on the symmetric
    subspace.
    """
    f = SpinHalfProduct(n_spins)
    sd = space(f)
    sz_list, sm_list = [], []
    for j in range(n_spins):
        left = sp.identity(2**j, dtype=np.complex128, format="csr")
        right = sp.identity(2 ** (n_spins - 1 - j), dtype=np.complex128, format="csr")
        sz_list.append(LinOp(sd, sp.kron(sp.kron(left, _SIGMA_Z), right, format="csr"),
                             hermitian=True))
        sm_list.append(LinOp(sd, sp.kron(sp.kron(left, _SIGMA_MINUS), right, format="csr")))
    s_minus_m = sum(op.matrix for op in sm_list)
    s_z_m = sum(op.matrix for op in sz_list) * 0.5
    s_minus = LinOp(sd, s_minus_m)
    return ProductSpinOps(
        space=sd,
        sigma_z=tuple(sz_list),
        sigma_minus=tuple(sm_list),
        s_plus=s_minus.dag(),
        s_minus=s_minus,
        s_z=LinOp(sd, s_z_m, hermitian=True),
    )


def embed(op: LinOp, sd: SpaceDescriptor, slot: int) -> LinOp:
    """Lift a single-factor operator into a composite space at ``slot``.

    The embedded matrix is kron(I_before, op, I_after); sparsity is
    preserved exactly (nnz multiplies by the size of the identity padding).
    """
    if not (0 <= slot < len(sd.factors)):
        raise EmbeddingError(f"slot {slot} outside {len(sd.factors)} factors")
    if len(op.space.factors) != 1 or op.space.factors[0] != sd.factors[slot]:
        raise EmbeddingError(
            f"operator factor {op.space.factors} does not match slot {slot} "
            f"factor {sd.factors[slot]!r}"
        )
    d_before = math.prod(d for d in sd.dims[:slot]) if slot else 1
    d_after = math.prod(d for d in sd.dims[slot + 1:]) if slot + 1 < len(sd.factors) else 1
    m = op.matrix
    if d_before > 1:
        m = sp.kron(sp.identity(d_before, dtype=np.complex128, format="csr"), m, format="csr")
    if d_after > 1:
        m = sp.kron(m, sp.identity(d_after, dtype=np.complex128, format="csr"), format="csr")
    return LinOp(sd, m, hermitian=op.hermitian)


# ---------------------------------------------------------------------------
# symmetric subspace and sector tools
# ---------------------------------------------------------------------------


def symmetric_embedding(n_spins: int) -> sp.csr_matrix:
    """Isometry Q from the Dicke ladder into the spin product space.

    Column n is the normalized symmetric state with n sites excited, so
    Q has shape (2**N, N + 1) and Q^dag Q = I. Collective product-space
    operators sandwiched as Q^dag O Q reproduce the Dicke matrix elements.
    """
    f = SpinHalfProduct(n_spins)  # reuse the guard
    dim = f.dim
    idx = np.arange(dim)
    pop = np.zeros(dim, dtype=np.int64)
    for b in range(n_spins):
        pop += (idx >> b) & 1
    rows, cols, vals = [], [], []
    for n in range(n_spins + 1):
        members = np.nonzero(pop == n)[0]
        amp = 1.0 / math.sqrt(len(members))
        rows.extend(members.tolist())
        cols.extend([n] * len(members))
        vals.extend([amp] * len(members))
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, n_spins + 1),
                         dtype=np.complex128)


def sector_isometry(sd: SpaceDescriptor, indices: np.ndarray) -> sp.csr_matrix:
    """Selection isometry P (k x D) onto the listed composite basis states."""
    indices = np.asarray(indices, dtype=np.int64)
    k, d = indices.size, sd.total_dim
    if k == 0:
        raise EmbeddingError("empty sector")
    data = np.ones(k)
    return sp.csr_matrix((data, (np.arange(k), indices)), shape=(k, d),
                         dtype=np.complex128)


def excitation_parity_indices(sd: SpaceDescriptor) -> tuple[np.ndarray, np.ndarray]:
    """Composite basis indices with even / odd total excitation."""
    exc = excitation_levels(sd)
    even = np.nonzero(exc % 2 == 0)[0]
    odd = np.nonzero(exc % 2 == 1)[0]
    return even, odd


def parity_diagonal(sd: SpaceDescriptor) -> LinOp:
    """Parity operator (-1)^(total excitation) as a diagonal LinOp."""
    signs = 1.0 - 2.0 * (excitation_levels(sd) % 2)
    return LinOp(sd, sp.diags(signs.astype(np.float64)), hermitian=True)


def partial_trace(rho: DensityMatrix, keep: int | Sequence[int]) -> DensityMatrix:
    """Trace out all factors except ``keep`` (an index or tuple of indices)."""
    keep_t = (keep,) if isinstance(keep, int) else tuple(keep)
    nf = len(rho.space.factors)
    if any(not (0 <= k < nf) for k in keep_t) or len(set(keep_t)) != len(keep_t):
        raise EmbeddingError(f"bad keep specification {keep_t} for {nf} factors")
    dims = rho.space.dims
    arr = rho.entries.reshape(dims + dims)
    # contract traced factor pairs one by one, tracking remaining axes
    remaining = list(range(nf))
    for f_idx in sorted(set(range(nf)) - set(keep_t), reverse=True):
        pos = remaining.index(f_idx)
        arr = np.trace(arr, axis1=pos, axis2=pos + len(remaining))
        remaining.pop(pos)
    order = [remaining.index(k) for k in keep_t]
    nk = len(keep_t)
    arr = np.transpose(arr, axes=[*order, *[o + nk for o in order]])
    sub = space(*(rho.space.factors[k] for k in keep_t))
    d = sub.total_dim
    return DensityMatrix(sub, arr.reshape(d, d))


def top_level_masks(sd: SpaceDescriptor) -> list[np.ndarray]:
    """Boolean masks marking the top truncation level of each ladder factor.

    Used for truncation-leak monitoring; spin products and subspaces are
    not truncated and contribute no mask, and neither does a Dicke factor
    with n_cut = N (its top level is the physical fully-excited state).
    """
    masks = []
    for slot, f in enumerate(sd.factors):
        if not isinstance(f, (Fock, Dicke)):
            continue
        if isinstance(f, Dicke) and f.n_cut == f.n_atoms:
            continue
        level = np.zeros(1, dtype=np.int64)
        for gslot, g in enumerate(sd.factors):
            ids = np.arange(g.dim, dtype=np.int64)
            contrib = ids if gslot == slot else np.zeros(g.dim, dtype=np.int64)
            level = (level[:, None] + contrib[None, :]).ravel()
        masks.append(level == f.dim - 1)
    return masks
