"""State comparison and spectral analysis.

Fidelity here is the Uhlmann value Tr sqrt(sqrt(rho) sigma sqrt(rho)),
not its square; every routine that writes fidelities into files states
the convention in the file header. The Wigner function uses the
displaced-parity form W(beta) = (2/pi) Tr[rho D(beta) Pi D(beta)^dag]
with D built by matrix exponential; an independent Laguerre-series
evaluation is kept as a cross-check method. Liouvillian matrices use
column-stacking vectorization.
"""
from __future__ import annotations

import json
import logging
import math
import time as _time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import eval_genlaguerre

from . import hilbert as hb
from .errors import (
    DegenerateSpectrumError,
    DimensionGuardError,
    ParameterError,
    RepresentationError,
    StateValidityError,
)
from .models import ModelSpec

log = logging.getLogger(__name__)

DENSE_EIG_MAX_ROWS = 40_000


# ---------------------------------------------------------------------------
# fidelity
# ---------------------------------------------------------------------------


def _as_density(state) -> np.ndarray:
    if isinstance(state, hb.Ket):
        v = state.amplitudes
        return np.outer(v, v.conj())
    if isinstance(state, hb.DensityMatrix):
        state.validate()
        return state.entries
    raise ParameterError(f"expected Ket or DensityMatrix, got {type(state)}")


def fidelity(rho, target) -> float:
    """Uhlmann fidelity F = Tr sqrt(sqrt(rho) sigma sqrt(rho)) in [0, 1].

    Pure arguments collapse to the cheap forms |<psi|phi>| and
    sqrt(<psi|rho|psi>).
    """
    if rho.space != target.space:
        raise ParameterError("states live on different spaces")
    if isinstance(rho, hb.Ket) and isinstance(target, hb.Ket):
        return min(1.0, abs(rho.overlap(target)))
    if isinstance(rho, hb.Ket) or isinstance(target, hb.Ket):
        ket, mixed = (rho, target) if isinstance(rho, hb.Ket) else (target, rho)
        m = _as_density(mixed)
        val = np.real(np.vdot(ket.amplitudes, m @ ket.amplitudes))
        return min(1.0, math.sqrt(max(val, 0.0)))
    a = _as_density(rho)
    b = _as_density(target)
    w, v = np.linalg.eigh((a + a.conj().T) / 2.0)
    w = np.clip(w, 0.0, None)
    sqrt_a = (v * np.sqrt(w)) @ v.conj().T
    inner = sqrt_a @ b @ sqrt_a
    ev = np.linalg.eigvalsh((inner + inner.conj().T) / 2.0)
    return min(1.0, float(np.sqrt(np.clip(ev, 0.0, None)).sum()))


def preparation_error(rho, target) -> float:
    """eta = 1 - F."""
    return 1.0 - fidelity(rho, target)


# ---------------------------------------------------------------------------
# Wigner function
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WignerGrid:
    """W sampled on a rectangular grid of the complex plane.

    values[i, j] = W(re_axis[j] + 1i * im_axis[i]): rows sweep the
    imaginary axis, columns the real axis.
    """

    re_range: tuple[float, float]
    im_range: tuple[float, float]
    points_per_axis: int
    values: np.ndarray

    @property
    def re_axis(self) -> np.ndarray:
        return np.linspace(self.re_range[0], self.re_range[1], self.points_per_axis)

    @property
    def im_axis(self) -> np.ndarray:
        return np.linspace(self.im_range[0], self.im_range[1], self.points_per_axis)

    def integral(self) -> float:
        da = ((self.re_range[1] - self.re_range[0]) / (self.points_per_axis - 1)
              * (self.im_range[1] - self.im_range[0]) / (self.points_per_axis - 1))
        return float(self.values.sum() * da)

    def to_csv(self, path, label: str = ""):
        """Matrix CSV (rows = imaginary axis) plus a JSON sidecar."""
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")
        sidecar = {
            "re_range": list(self.re_range),
            "im_range": list(self.im_range),
            "points_per_axis": self.points_per_axis,
            "label": label,
            "written_at": _time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "convention": "values[i,j] = W(re_axis[j] + 1i*im_axis[i]); "
                          "normalized so that integral d(Re) d(Im) = 1",
        }
        with open(str(path) + ".json", "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=2)


def displacement_operator(n_max: int, beta: complex) -> hb.LinOp:
    """D(beta) = exp(beta a^dag - conj(beta) a) on the truncated space."""
    a = hb.fock_destroy(n_max)
    gen = (beta * a.dag().matrix - np.conj(beta) * a.matrix).toarray()
    return hb.LinOp(a.space, sla.expm(gen))


def _require_single_fock(sd: hb.SpaceDescriptor) -> int:
    if len(sd.factors) != 1 or not isinstance(sd.factors[0], hb.Fock):
        raise RepresentationError("Wigner functions are defined on a single bosonic mode")
    return sd.factors[0].n_max


def _wigner_displaced_parity(rho: np.ndarray, n_max: int, betas: np.ndarray) -> np.ndarray:
    a = hb.fock_destroy(n_max)
    adag = a.dag().matrix.toarray()
    am = a.matrix.toarray()
    parity = np.diag((-1.0) ** np.arange(n_max + 1))
    out = np.empty(betas.shape, dtype=np.float64)
    flat = betas.ravel()
    vals = np.empty(flat.size)
    for i, b in enumerate(flat):
        d = sla.expm(b * adag - np.conj(b) * am)
        m = d @ parity @ d.conj().T
        vals[i] = (2.0 / math.pi) * float(np.real(np.sum(rho * m.T)))
    out.flat[:] = vals
    return out


def _wigner_laguerre(rho: np.ndarray, n_max: int, betas: np.ndarray) -> np.ndarray:
    """Series form of (2/pi) Tr[rho D(2 beta) Pi]; independent of expm."""
    gamma = 2.0 * betas
    big_g = np.abs(gamma) ** 2
    acc = np.zeros(betas.shape, dtype=np.float64)
    lg = [math.lgamma(n + 1) for n in range(n_max + 2)]
    for m in range(n_max + 1):
        sign = -1.0 if m % 2 else 1.0
        acc += sign * rho[m, m].real * eval_genlaguerre(m, 0, big_g)
        gpow = np.ones_like(gamma)
        for k in range(1, n_max + 1 - m):
            gpow = gpow * gamma
            coeff = rho[m, m + k] * gpow
            if abs(rho[m, m + k]) == 0.0:
                continue
            pref = math.exp(0.5 * (lg[m] - lg[m + k]))
            acc += sign * 2.0 * np.real(coeff) * pref * eval_genlaguerre(m, k, big_g)
    return (2.0 / math.pi) * np.exp(-0.5 * big_g) * acc


def wigner(rho, re_range=None, im_range=None, points_per_axis: int = 121,
           method: str = "displaced-parity") -> WignerGrid:
    """Wigner function of a single-mode state on a square grid.

    Default extents cover +-(sqrt(<n>) + 3). ``method`` picks the
    displaced-parity construction (default) or the equivalent Laguerre
    series ("laguerre"); the two agree to 1e-10 well inside the
    truncation and the series form exists as an independent check.
    """
    if isinstance(rho, hb.Ket):
        rho = rho.to_density()
    n_max = _require_single_fock(rho.space)
    m = rho.entries
    mean_n = float(np.real(np.arange(n_max + 1) @ m.diagonal().real))
    if re_range is None or im_range is None:
        ext = math.sqrt(max(mean_n, 1.0)) + 3.0
        re_range = re_range or (-ext, ext)
        im_range = im_range or (-ext, ext)
    extent = max(abs(re_range[0]), abs(re_range[1]), abs(im_range[0]), abs(im_range[1]))
    # the displaced-parity route displaces the state to the grid edge, so
    # the budget is (edge distance + state radius)^2, not extent^2
    reach = (extent + math.sqrt(max(mean_n, 0.0))) ** 2
    if reach > n_max:
        log.warning("displaced grid edge reaches <n> ~ %.1f with n_max = %d; "
                    "Wigner values near the edge are truncation-limited",
                    reach, n_max)
    re = np.linspace(re_range[0], re_range[1], points_per_axis)
    im = np.linspace(im_range[0], im_range[1], points_per_axis)
    betas = re[None, :] + 1j * im[:, None]
    if method == "displaced-parity":
        vals = _wigner_displaced_parity(m, n_max, betas)
    elif method == "laguerre":
        vals = _wigner_laguerre(m, n_max, betas)
    else:
        raise ParameterError(f"unknown wigner method {method!r}")
    return WignerGrid(re_range=tuple(re_range), im_range=tuple(im_range),
                      points_per_axis=points_per_axis, values=vals)


def parity_expectation(state) -> float:
    """<exp(i pi n_hat)> = sum over basis of (-1)^excitation * population."""
    if isinstance(state, hb.Ket):
        signs = 1.0 - 2.0 * (hb.excitation_levels(state.space) % 2)
        return float(np.real(signs @ state.probabilities()))
    if isinstance(state, hb.DensityMatrix):
        signs = 1.0 - 2.0 * (hb.excitation_levels(state.space) % 2)
        return float(np.real(signs @ state.entries.diagonal()))
    raise ParameterError(f"expected Ket or DensityMatrix, got {type(state)}")


# ---------------------------------------------------------------------------
# Liouvillian spectra
# ---------------------------------------------------------------------------


def liouvillian_matrix(model: ModelSpec, max_dim: int = 200) -> sp.csr_matrix:
    """Column-stacked superoperator of the Lindblad generator.

    vec(rho) stacks columns (Fortran order): rho -> -i[H, rho] +
    sum gamma (c rho c^dag - (1/2){c^dag c, rho}) becomes
    -i(I x H - H^T x I) + sum gamma (conj(c) x c - (1/2) I x c^dag c
    - (1/2) (c^dag c)^T x I).
    """
    d = model.space.total_dim
    if d > max_dim:
        raise DimensionGuardError(
            f"space dimension {d} exceeds the {max_dim}-dim superoperator guard"
        )
    ident = sp.identity(d, dtype=np.complex128, format="csr")
    h = model.hamiltonian.matrix
    lio = -1j * (sp.kron(ident, h) - sp.kron(h.T, ident))
    for rate, c in model.dissipators:
        if rate == 0.0:
            continue
        m = c.matrix
        cdc = m.getH() @ m
        lio = lio + rate * (sp.kron(m.conj(), m)
                            - 0.5 * sp.kron(ident, cdc)
                            - 0.5 * sp.kron(cdc.T, ident))
    return lio.tocsr()


@dataclass(frozen=True)
class SpectrumReport:
    """Liouvillian eigenvalues sorted by |Re| ascending, kernel size, gap."""

    eigenvalues: np.ndarray
    kernel_dim: int
    gap: float

    def __post_init__(self):
        scale = float(np.abs(self.eigenvalues).max(initial=0.0))
        ceiling = max(1e-10, 1e-12 * scale)
        worst = float(np.real(self.eigenvalues).max(initial=0.0))
        if worst > ceiling:
            raise DegenerateSpectrumError(
                f"Liouvillian eigenvalue with positive real part {worst:.3e}"
            )
        if self.gap <= 0.0:
            raise DegenerateSpectrumError("spectral gap must be positive")


def spectral_gap(model: ModelSpec, kernel_tol: float | None = None) -> SpectrumReport:
    """Kernel dimension and slowest nonzero relaxation rate.

    Eigenvalues with |Re| < kernel_tol count as kernel; the gap is the
    smallest |Re| among the rest. Default kernel_tol is 1e-8 times the
    largest dissipator rate. Dense eigensolve up to 4e4 superoperator
    rows, shift-inverted sparse iteration beyond.
    """
    lio = liouvillian_matrix(model)
    rows = lio.shape[0]
    if kernel_tol is None:
        top = max((rate for rate, _ in model.dissipators), default=0.0)
        if top <= 0.0:
            raise ParameterError("kernel_tol has no default for a dissipation-free model")
        kernel_tol = 1e-8 * top
    if rows <= DENSE_EIG_MAX_ROWS:
        eigs = sla.eigvals(lio.toarray())
    else:
        # kernel + slow end of the spectrum only; fine for gap purposes
        k = min(rows - 2, 24)
        shift = -10.0 * kernel_tol
        eigs = spla.eigs(lio, k=k, sigma=shift, which="LM",
                         return_eigenvectors=False)
    order = np.argsort(np.abs(eigs.real), kind="stable")
    eigs = eigs[order]
    re = np.abs(eigs.real)
    kernel_dim = int(np.count_nonzero(re < kernel_tol))
    rest = re[re >= kernel_tol]
    if rest.size == 0:
        raise DegenerateSpectrumError(
            f"no eigenvalue outside the kernel tolerance {kernel_tol:.3e}"
        )
    return SpectrumReport(eigenvalues=eigs, kernel_dim=kernel_dim,
                          gap=float(rest.min()))


# ---------------------------------------------------------------------------
# representation bridge
# ---------------------------------------------------------------------------


def dicke_to_bosonic(state):
    """Reinterpret a Dicke-ladder state on a Fock space of equal cutoff.

    The amplitude-level identity map |n> -> |n> is the leading
    Holstein-Primakoff correspondence; faithful for mean excitation
    well below N. Accepts Ket or DensityMatrix.
    """
    sd = state.space
    if len(sd.factors) != 1 or not isinstance(sd.factors[0], hb.Dicke):
        raise RepresentationError("expected a bare Dicke-ladder state")
    target = hb.space(hb.Fock(sd.factors[0].n_cut))
    if isinstance(state, hb.Ket):
        return hb.Ket(target, state.amplitudes.copy())
    if isinstance(state, hb.DensityMatrix):
        return hb.DensityMatrix(target, state.entries.copy())
    raise ParameterError(f"expected Ket or DensityMatrix, got {type(state)}")
