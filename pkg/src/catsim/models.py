"""Model assembly: Hamiltonians, dissipator lists, and derived rates.

The three tiers of description used throughout the package are built
here from one SystemParams value:

  * full model: pump and signal cavities plus the atomic ensemble,
  * time-averaged model: pump plus ensemble after eliminating the
    signal mode (third-order two-atom <-> pump-photon exchange),
  * effective model: ensemble (or single bosonic mode) alone, driven
    two-excitation loss after the pump is eliminated as well.

Rates follow the dissipator convention rate * L(op) with the exact
operators listed in each builder docstring.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.constants import hbar, k as k_boltzmann

from . import hilbert as hb
from .errors import (
    AssemblyError,
    EmbeddingError,
    ParameterError,
    RepresentationError,
)

log = logging.getLogger(__name__)

LORENTZIAN_CLAMP = 50.0  # tail clamp for per-atom shifts, in units of delta_inh


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of the two-cavity / ensemble system.

    All frequencies and rates are angular (rad/s). ``Delta`` is the
    dispersive detuning between signal mode and atomic transition;
    ``delta_prime`` is the analogous mismatch of the pump against two
    signal quanta, kept explicit because the rotating frame hides the
    absolute frequencies it derives from. A value of None defaults it
    to 2*Delta.
    """

    N: int
    g: float = 0.0
    J: float = 0.0
    Omega: float = 0.0
    delta_p: float = 0.0
    delta_s: float = 0.0
    delta_q: float = 0.0
    Delta: float = 0.0
    kappa_p: float = 0.0
    kappa_s: float = 0.0
    delta_prime: float | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ParameterError(f"need at least one atom, got N={self.N}")
        if self.kappa_p < 0 or self.kappa_s < 0:
            raise ParameterError("loss rates must be nonnegative")
        if self.delta_prime is None:
            object.__setattr__(self, "delta_prime", 2.0 * self.Delta)

    @property
    def g_col(self) -> float:
        return math.sqrt(self.N) * self.g


@dataclass(frozen=True)
class RateSet:
    """Derived rates of the engineered two-excitation channel."""

    g_col: float
    chi: float
    kappa_2at: float
    chi_2at: float
    kappa_1at: float
    alpha: complex

    def __post_init__(self):
        if self.kappa_2at < 0 or self.chi_2at < 0:
            raise ParameterError("kappa_2at and chi_2at must be nonnegative")

    @property
    def alpha_sq(self) -> float:
        return abs(self.alpha) ** 2


@dataclass(frozen=True)
class DephasingParams:
    """Collective / local dephasing rates and inhomogeneous linewidth."""

    gamma_col: float = 0.0
    gamma_loc: float = 0.0
    delta_inh: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.gamma_col, self.gamma_loc, self.delta_inh) < 0:
            raise ParameterError("dephasing rates must be nonnegative")


@dataclass(frozen=True)
class ThermalParams:
    """Spin relaxation against a thermal bath.

    ``n_th`` is always derived from (omega_q, T) via the Bose-Einstein
    occupation; T = 0 (or an argument that would underflow exp) gives 0.
    """

    gamma_relax: float
    omega_q: float
    T: float
    n_th: float = field(init=False)

    def __post_init__(self):
        if self.gamma_relax < 0 or self.omega_q <= 0 or self.T < 0:
            raise ParameterError("need gamma_relax >= 0, omega_q > 0, T >= 0")
        if self.T == 0.0:
            occ = 0.0
        else:
            x = hbar * self.omega_q / (k_boltzmann * self.T)
            occ = 0.0 if x > 700.0 else 1.0 / math.expm1(x)
        object.__setattr__(self, "n_th", occ)


@dataclass(frozen=True)
class Truncations:
    """Fock-space cutoffs used when assembling composite models.

    ``dicke_cut=None`` lets each builder pick a documented default; the
    resolved value always lands in ModelSpec.space for inspection.
    """

    pump_n_max: int = 4
    signal_n_max: int = 2
    dicke_cut: int | None = None


@dataclass(frozen=True)
class ModelSpec:
    """A Hamiltonian plus weighted jump operators on one space."""

    space: hb.SpaceDescriptor
    hamiltonian: hb.LinOp
    dissipators: tuple[tuple[float, hb.LinOp], ...]
    label: str = ""

    def __post_init__(self):
        if not self.hamiltonian.hermitian:
            raise AssemblyError("model Hamiltonian must carry a verified hermitian flag")
        if self.hamiltonian.space != self.space:
            raise AssemblyError("Hamiltonian lives on a different space")
        for rate, op in self.dissipators:
            if rate < 0:
                raise ParameterError(f"negative dissipator rate {rate}")
            if op.space != self.space:
                raise AssemblyError("dissipator operator lives on a different space")

    def with_extra(self, dissipators=(), hamiltonian_term: hb.LinOp | None = None,
                   label: str | None = None) -> "ModelSpec":
        """New spec with appended channels and/or an added Hamiltonian term."""
        h = self.hamiltonian if hamiltonian_term is None else self.hamiltonian + hamiltonian_term
        return replace(
            self,
            hamiltonian=h,
            dissipators=self.dissipators + tuple(dissipators),
            label=self.label if label is None else label,
        )


# ---------------------------------------------------------------------------
# derived rates
# ---------------------------------------------------------------------------


def derive_rates(p: SystemParams) -> RateSet:
    """Second-order coupling chi and the effective-channel rates.

    chi = g_col^2 J / Delta^2, kappa_2at = 4 chi^2 / kappa_p,
    chi_2at = 2 Omega chi / kappa_p, kappa_1at = (g_col/Delta)^2 kappa_s,
    alpha = i sqrt(Omega/chi).
    """
    if p.Delta == 0.0:
        raise ParameterError("derived rates need a nonzero dispersive detuning Delta")
    if p.kappa_p <= 0.0:
        raise ParameterError("derived rates need kappa_p > 0 (pump loss drives the channel)")
    g_col = p.g_col
    chi = g_col**2 * p.J / p.Delta**2
    kappa_2at = 4.0 * chi**2 / p.kappa_p
    chi_2at = 2.0 * p.Omega * chi / p.kappa_p
    kappa_1at = (g_col / p.Delta) ** 2 * p.kappa_s
    if p.Omega == 0.0:
        alpha = 0.0j
    elif chi <= 0.0:
        raise ParameterError("alpha undefined: drive is on but chi <= 0")
    else:
        alpha = 1j * math.sqrt(p.Omega / chi)
    return RateSet(g_col=g_col, chi=chi, kappa_2at=kappa_2at,
                   chi_2at=chi_2at, kappa_1at=kappa_1at, alpha=alpha)


def standard_params(N: int, *, g_col: float = 1.0, j_ratio: float = 3.0,
                    delta_ratio: float = 20.0, alpha_sq: float = 1.0,
                    kappa_p_over_chi: float = 5.0,
                    kappa_s_over_kappa_p: float = 0.3,
                    compensate: bool = True) -> SystemParams:
    """Reference parameter set, everything expressed through g_col.

    J = j_ratio*g_col, Delta = delta_ratio*g_col, then chi follows and
    kappa_p = kappa_p_over_chi * chi, Omega = alpha_sq * chi (so the
    stabilized amplitude obeys |alpha|^2 = alpha_sq).

    ``compensate`` adds the detunings delta_q = g^2 (N-1)/Delta and
    delta_p = 2 J^2/delta_prime that cancel the static second-order
    level shifts; without them the resonance condition of the
    two-excitation exchange is missed and the conversion stalls.
    The (N-1) factor puts the 0 <-> 2 pair exchange exactly on
    resonance: the shift of |n=2> is -(g^2/Delta) n(N-n+1) = 2 delta_q.
    """
    if N < 1:
        raise ParameterError(f"need at least one atom, got N={N}")
    g = g_col / math.sqrt(N)
    J = j_ratio * g_col
    Delta = delta_ratio * g_col
    chi = g_col**2 * J / Delta**2
    kappa_p = kappa_p_over_chi * chi
    kappa_s = kappa_s_over_kappa_p * kappa_p
    delta_prime = 2.0 * Delta
    delta_q = g**2 * (N - 1) / Delta if compensate else 0.0
    delta_p = 2.0 * J**2 / delta_prime if compensate else 0.0
    delta_s = Delta + delta_q
    return SystemParams(N=N, g=g, J=J, Omega=alpha_sq * chi,
                        delta_p=delta_p, delta_s=delta_s, delta_q=delta_q,
                        Delta=Delta, kappa_p=kappa_p, kappa_s=kappa_s,
                        delta_prime=delta_prime)


# ---------------------------------------------------------------------------
# model builders
# ---------------------------------------------------------------------------


def _hermitian(sd: hb.SpaceDescriptor, m) -> hb.LinOp:
    return hb.LinOp(sd, m, hermitian=True)


def build_full_model(p: SystemParams, trunc: Truncations) -> ModelSpec:
    """Pump x signal x ensemble model.

    H = delta_p n_p + delta_s n_s + delta_q Sz + J (a_p a_s^dag^2 + h.c.)
        + g (a_s S+ + h.c.) + Omega (a_p + a_p^dag)
    dissipators [(kappa_p, a_p), (kappa_s, a_s)].

    Default ensemble cutoff min(N, 2 pump_n_max + signal_n_max): the
    drive-free H conserves 2 n_p + n_s + n_ens, so that cutoff is exact
    for initial states within the pump/signal truncations.
    """
    n_cut = trunc.dicke_cut
    if n_cut is None:
        n_cut = min(p.N, 2 * trunc.pump_n_max + trunc.signal_n_max)
    sd = hb.space(hb.Fock(trunc.pump_n_max), hb.Fock(trunc.signal_n_max),
                  hb.Dicke(p.N, n_cut))
    a_p = hb.embed(hb.fock_destroy(trunc.pump_n_max), sd, 0)
    a_s = hb.embed(hb.fock_destroy(trunc.signal_n_max), sd, 1)
    s_minus = hb.embed(hb.dicke_lowering(p.N, n_cut), sd, 2)
    s_z = hb.embed(hb.dicke_sz(p.N, n_cut), sd, 2)

    ap, as_, sm, sz = a_p.matrix, a_s.matrix, s_minus.matrix, s_z.matrix
    conv = ap @ (as_.getH() @ as_.getH())
    jc = as_ @ sm.getH()
    h = (p.delta_p * (ap.getH() @ ap)
         + p.delta_s * (as_.getH() @ as_)
         + p.delta_q * sz
         + p.J * (conv + conv.getH())
         + p.g * (jc + jc.getH())
         + p.Omega * (ap + ap.getH()))
    return ModelSpec(space=sd, hamiltonian=_hermitian(sd, h),
                     dissipators=((p.kappa_p, a_p), (p.kappa_s, a_s)),
                     label="full")


def build_time_averaged_model(p: SystemParams, trunc: Truncations) -> ModelSpec:
    """Pump x ensemble model after signal elimination.

    H = (chi/N)(a_p S+^2 + a_p^dag S-^2) + Omega (a_p + a_p^dag),
    dissipator [(kappa_p, a_p)].
    """
    rates = derive_rates(p)
    n_cut = trunc.dicke_cut
    if n_cut is None:
        target = max(1.0, rates.alpha_sq)
        n_cut = min(p.N, int(math.ceil(6.0 * target)) + 10)
    sd = hb.space(hb.Fock(trunc.pump_n_max), hb.Dicke(p.N, n_cut))
    a_p = hb.embed(hb.fock_destroy(trunc.pump_n_max), sd, 0)
    s_minus = hb.embed(hb.dicke_lowering(p.N, n_cut), sd, 1)
    ap, sm = a_p.matrix, s_minus.matrix
    exch = ap @ (sm.getH() @ sm.getH())
    h = (rates.chi / p.N) * (exch + exch.getH()) + p.Omega * (ap + ap.getH())
    return ModelSpec(space=sd, hamiltonian=_hermitian(sd, h),
                     dissipators=((p.kappa_p, a_p),),
                     label="time-averaged")


def build_effective_model(p: SystemParams, rep, include_kappa_1at: bool = False) -> ModelSpec:
    """Ensemble-only model with engineered two-excitation decay.

    rep = Fock(n_max): H = i chi_2at (b^2 - b^dag^2),
        dissipators [(kappa_1at, b)?, (kappa_2at, b^2)].
    rep = Dicke(N, n_cut) or SpinHalfProduct(N): H = i chi_2at (S-^2 - S+^2)/N,
        dissipators [(kappa_1at/N, S-)?, (kappa_2at/N^2, S-^2)].

    The product representation carries the same collective operators; it
    exists so site-resolved dephasing channels can be attached.
    """
    rates = derive_rates(p)
    if isinstance(rep, hb.Fock):
        sd = hb.space(rep)
        low = hb.fock_destroy(rep.n_max)
        low = hb.LinOp(sd, low.matrix)
        scale_1, scale_2 = 1.0, 1.0
    elif isinstance(rep, hb.Dicke):
        sd = hb.space(rep)
        low = hb.dicke_lowering(rep.n_atoms, rep.n_cut)
        scale_1, scale_2 = 1.0 / rep.n_atoms, 1.0 / rep.n_atoms**2
    elif isinstance(rep, hb.SpinHalfProduct):
        ops = hb.product_spin_ops(rep.n_spins)
        sd = ops.space
        low = ops.s_minus
        scale_1, scale_2 = 1.0 / rep.n_spins, 1.0 / rep.n_spins**2
    else:
        raise RepresentationError(
            f"effective model needs a Fock, Dicke or SpinHalfProduct factor, got {rep!r}"
        )
    low2 = low @ low
    hm = 1j * rates.chi_2at * scale_1 * (low2.matrix - low2.matrix.getH())
    diss = []
    if include_kappa_1at:
        diss.append((rates.kappa_1at * scale_1, low))
    diss.append((rates.kappa_2at * scale_2, low2))
    return ModelSpec(space=sd, hamiltonian=_hermitian(sd, hm),
                     dissipators=tuple(diss), label="effective")


def build_second_order_hamiltonian(p: SystemParams, trunc: Truncations,
                                   reduced: bool = False) -> hb.LinOp:
    """Static second-order level shifts on the full-model space.

    Full form: -(g^2/Delta)(2 n_s Sz + S+S-)
               - (J^2/delta_prime)(2 n_p - a_s^dag^2 a_s^2 + 4 n_p n_s).
    ``reduced=True`` returns the diagonal low-excitation form
    -(g_col^2/Delta)(Sz + N/2) - (2 J^2/delta_prime) n_p, which is what
    the compensating detunings delta_q, delta_p are chosen against.
    """
    if p.Delta == 0.0 or p.delta_prime == 0.0:
        raise ParameterError("second-order shifts need Delta != 0 and delta_prime != 0")
    n_cut = trunc.dicke_cut
    if n_cut is None:
        n_cut = min(p.N, 2 * trunc.pump_n_max + trunc.signal_n_max)
    sd = hb.space(hb.Fock(trunc.pump_n_max), hb.Fock(trunc.signal_n_max),
                  hb.Dicke(p.N, n_cut))
    a_p = hb.embed(hb.fock_destroy(trunc.pump_n_max), sd, 0).matrix
    a_s = hb.embed(hb.fock_destroy(trunc.signal_n_max), sd, 1).matrix
    sm = hb.embed(hb.dicke_lowering(p.N, n_cut), sd, 2).matrix
    sz = hb.embed(hb.dicke_sz(p.N, n_cut), sd, 2).matrix
    n_p = a_p.getH() @ a_p
    if reduced:
        ident = sp.identity(sd.total_dim, dtype=np.complex128, format="csr")
        m = (-(p.g_col**2 / p.Delta) * (sz + 0.5 * p.N * ident)
             - (2.0 * p.J**2 / p.delta_prime) * n_p)
        return _hermitian(sd, m)
    n_s = a_s.getH() @ a_s
    m = (-(p.g**2 / p.Delta) * (2.0 * (n_s @ sz) + sm.getH() @ sm)
         - (p.J**2 / p.delta_prime)
         * (2.0 * n_p - a_s.getH() @ a_s.getH() @ a_s @ a_s + 4.0 * (n_p @ n_s)))
    return _hermitian(sd, m)


# ---------------------------------------------------------------------------
# extra channels
# ---------------------------------------------------------------------------


def lorentzian_shifts(delta_inh: float, n: int, seed: int) -> np.ndarray:
    """Per-atom static shifts, Lorentzian of half-width delta_inh.

    Inverse-CDF sampling clamped at +-LORENTZIAN_CLAMP * delta_inh; the
    unclamped Cauchy tail would let a single atom dominate small-N
    ensemble averages. Clamping is logged when it fires.
    """
    if delta_inh < 0:
        raise ParameterError("delta_inh must be nonnegative")
    if delta_inh == 0.0:
        return np.zeros(n)
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    shifts = delta_inh * np.tan(math.pi * (u - 0.5))
    lim = LORENTZIAN_CLAMP * delta_inh
    n_clamped = int(np.count_nonzero(np.abs(shifts) > lim))
    if n_clamped:
        log.warning("clamped %d Lorentzian shift(s) to +-%.3g", n_clamped, lim)
        shifts = np.clip(shifts, -lim, lim)
    return shifts


def dephasing_dissipators(d: DephasingParams, rep):
    """Dephasing channels and the sampled inhomogeneous Hamiltonian.

    Returns (dissipators, H_inh) with dissipators a list of (rate, op):
    collective (gamma_col, Sz) in either representation; local
    (gamma_loc, sigma_j^z) per site and H_inh = (1/2) sum_j delta_j
    sigma_j^z only in the product representation. Zero-rate channels
    are dropped.
    """
    if isinstance(rep, hb.Dicke):
        if d.gamma_loc > 0 or d.delta_inh > 0:
            raise RepresentationError(
                "local dephasing and inhomogeneous broadening are site-resolved; "
                "use the SpinHalfProduct representation"
            )
        sd = hb.space(rep)
        out = []
        if d.gamma_col > 0:
            out.append((d.gamma_col, hb.dicke_sz(rep.n_atoms, rep.n_cut)))
        zero = hb.LinOp(sd, sp.csr_matrix((sd.total_dim, sd.total_dim),
                                          dtype=np.complex128), hermitian=True)
        return out, zero
    if not isinstance(rep, hb.SpinHalfProduct):
        raise RepresentationError(
            f"dephasing needs a Dicke or SpinHalfProduct factor, got {rep!r}"
        )
    ops = hb.product_spin_ops(rep.n_spins)
    out = []
    if d.gamma_col > 0:
        out.append((d.gamma_col, ops.s_z))
    if d.gamma_loc > 0:
        out.extend((d.gamma_loc, sz_j) for sz_j in ops.sigma_z)
    shifts = lorentzian_shifts(d.delta_inh, rep.n_spins, d.seed)
    hm = sp.csr_matrix((ops.space.total_dim, ops.space.total_dim), dtype=np.complex128)
    for dj, sz_j in zip(shifts, ops.sigma_z):
        hm = hm + 0.5 * dj * sz_j.matrix
    return out, hb.LinOp(ops.space, hm, hermitian=True)


def thermal_dissipators(t: ThermalParams, rep: hb.Fock):
    """Bosonic relaxation against a bath at temperature T.

    [(gamma_relax (n_th + 1), b), (gamma_relax n_th, b^dag)] with
    zero-rate entries dropped (T = 0 leaves pure decay).
    """
    if not isinstance(rep, hb.Fock):
        raise RepresentationError("thermal channels are defined on a Fock factor")
    b = hb.fock_destroy(rep.n_max)
    out = []
    down = t.gamma_relax * (t.n_th + 1.0)
    up = t.gamma_relax * t.n_th
    if down > 0:
        out.append((down, b))
    if up > 0:
        out.append((up, b.dag()))
    return out


# ---------------------------------------------------------------------------
# sector restriction
# ---------------------------------------------------------------------------


def restrict_model(model: ModelSpec, isometry, validate: bool = True,
                   tol: float = 1e-10) -> ModelSpec:
    """Compress a model onto the column span of an isometry.

    ``isometry`` is a (D x k) sparse/dense matrix Q with orthonormal
    columns (Q^dag Q = 1). Every operator is sandwiched as Q^dag O Q;
    with ``validate`` the invariance of the span is checked via
    ||O Q - Q (Q^dag O Q)||_F <= tol * max(1, ||O Q||_F), so silently
    lossy restrictions are rejected.
    """
    q = sp.csr_matrix(isometry)
    d = model.space.total_dim
    if q.shape[0] != d:
        raise EmbeddingError(
            f"isometry has {q.shape[0]} rows, model space has dimension {d}"
        )
    gram = (q.getH() @ q - sp.identity(q.shape[1], dtype=np.complex128)).toarray()
    if np.abs(gram).max() > 1e-10:
        raise EmbeddingError("isometry columns are not orthonormal")
    sub = hb.space(hb.Subspace(q.shape[1]))

    def compress(op: hb.LinOp, hermitian: bool) -> hb.LinOp:
        oq = op.matrix @ q
        small = q.getH() @ oq
        if validate:
            resid = sp.linalg.norm(oq - q @ small)
            if resid > tol * max(1.0, sp.linalg.norm(oq)):
                raise EmbeddingError(
                    f"operator leaks out of the restricted span (residual {resid:.3e})"
                )
        return hb.LinOp(sub, small, hermitian=hermitian)

    h = compress(model.hamiltonian, True)
    diss = tuple((rate, compress(op, False)) for rate, op in model.dissipators)
    return ModelSpec(space=sub, hamiltonian=h, dissipators=diss,
                     label=model.label + "|restricted")
