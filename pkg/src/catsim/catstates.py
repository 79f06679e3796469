"""Coherent, spin-coherent, cat and dark states, and the closed-form
steady-state manifold they span.

All constructors return normalized states on truncated spaces. Cat states
are built by parity-masking a coherent (or spin-coherent) state, which
makes the opposite-parity amplitudes exactly zero and keeps the relative
phase conventions of the two branches consistent everywhere in the
package.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import hilbert as hb
from .errors import (
    CoefficientConsistencyError,
    ParameterError,
    QuadratureError,
    RepresentationError,
    TruncationError,
)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# modified Bessel function of order zero
# ---------------------------------------------------------------------------

_I0_SERIES_CUT = 15.0


def bessel_i0(x: float) -> float:
    """Modified Bessel function I0 for real non-negative argument.

    Power series below 15, asymptotic expansion above; relative error is
    below 1e-12 across the switch. Implemented locally so the manifold
    quadrature does not assume any external special-function provider.
    """
    x = float(x)
    if x < 0.0:
        raise ParameterError(f"bessel_i0 defined here for x >= 0, got {x}")
    if x < _I0_SERIES_CUT:
        # sum_k (x^2/4)^k / (k!)^2, all terms positive
        q = 0.25 * x * x
        term = 1.0
        total = 1.0
        k = 0
        while True:
            k += 1
            term *= q / (k * k)
            total += term
            if term < 1e-18 * total:
                return total
    # I0(x) ~ e^x / sqrt(2 pi x) * sum_k mu_k, mu_k = mu_{k-1} (2k-1)^2 / (8 k x)
    mu = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        nxt = mu * (2 * k - 1) ** 2 / (8.0 * k * x)
        if nxt >= mu or nxt < 1e-17 * total:
            # series started diverging or converged; either way stop
            if nxt < mu:
                total += nxt
            break
        mu = nxt
        total += mu
    return math.exp(x) / math.sqrt(2.0 * math.pi * x) * total


# ---------------------------------------------------------------------------
# basic states
# ---------------------------------------------------------------------------


def coherent_state(alpha: complex, n_max: int) -> hb.Ket:
    """Truncated coherent state |alpha>, renormalized on Fock(n_max).

    Requires |alpha|^2 <= n_max / 2 so the discarded tail is negligible.
    """
    a2 = abs(alpha) ** 2
    if a2 > 0.5 * n_max:
        raise TruncationError(
            f"coherent state with |alpha|^2 = {a2:.3g} needs n_max >= {2 * a2:.3g}"
        )
    amps = np.empty(n_max + 1, dtype=np.complex128)
    amps[0] = 1.0
    for n in range(1, n_max + 1):
        amps[n] = amps[n - 1] * alpha / math.sqrt(n)
    amps /= np.linalg.norm(amps)
    return hb.Ket(hb.space(hb.Fock(n_max)), amps)


def spin_coherent(n_atoms: int, theta: float, phi: float, n_cut: int) -> hb.Ket:
    """Spin coherent state: the ground ladder state rotated to (theta, phi).

    Exact binomial amplitudes c_n = binom(N, n)^(1/2) tau^n / (1+|tau|^2)^(N/2)
    with tau = exp(i phi) tan(theta/2), truncated at n_cut and renormalized.
    The rotation axis convention gives <S_z> = -(N/2) cos(theta).
    """
    if not (0.0 <= theta < math.pi):
        raise ParameterError(f"theta must lie in [0, pi), got {theta}")
    f = hb.Dicke(n_atoms, n_cut)
    tan_half = math.tan(0.5 * theta)
    n = np.arange(f.dim)
    # log-magnitudes for stability at large N
    ln_binom = (
        _lgamma(n_atoms + 1) - _lgamma_arr(n + 1) - _lgamma_arr(n_atoms - n + 1)
    )
    if tan_half == 0.0:
        log_mag = np.where(n == 0, 0.0, -np.inf)
    else:
        log_mag = 0.5 * ln_binom + n * math.log(tan_half)
    log_mag -= log_mag.max()
    amps = np.exp(log_mag) * np.exp(1j * phi * n)
    amps /= np.linalg.norm(amps)
    return hb.Ket(hb.space(f), amps)


def spin_coherent_poissonian(n_atoms: int, theta: float, phi: float, n_cut: int) -> hb.Ket:
    """Low-excitation (Poissonian) approximation of :func:`spin_coherent`.

    Amplitudes proportional to (sqrt(N) tau)^n / sqrt(n!); kept as an
    independent cross-check of the exact binomial form.
    """
    f = hb.Dicke(n_atoms, n_cut)
    tau = math.tan(0.5 * theta)
    lam = math.sqrt(n_atoms) * tau
    amps = np.empty(f.dim, dtype=np.complex128)
    amps[0] = 1.0
    for n in range(1, f.dim):
        amps[n] = amps[n - 1] * lam * np.exp(1j * phi) / math.sqrt(n)
    amps /= np.linalg.norm(amps)
    return hb.Ket(hb.space(f), amps)


def _lgamma(x: float) -> float:
    return math.lgamma(x)


def _lgamma_arr(x: np.ndarray) -> np.ndarray:
    return np.array([math.lgamma(float(v)) for v in x])


# ---------------------------------------------------------------------------
# cat states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CatParams:
    """Cat state specification.

    ``alpha`` is the coherent amplitude (complex), ``parity`` one of
    "even"/"odd", and ``rep`` either a Fock factor (bosonic) or a Dicke
    factor (collective spin). In the Dicke representation the cat is a
    superposition of spin coherent states at azimuth angle(alpha) and
    angle(alpha) + pi with tan(theta/2) = |alpha| / sqrt(N); validity of
    the low-excitation mapping requires |alpha|^2 <= N/4.
    """

    alpha: complex
    parity: str
    rep: hb.Fock | hb.Dicke

    def __post_init__(self):
        if self.parity not in ("even", "odd"):
            raise ParameterError(f"parity must be 'even' or 'odd', got {self.parity!r}")
        if isinstance(self.rep, hb.Dicke):
            a2 = abs(self.alpha) ** 2
            n = self.rep.n_atoms
            if a2 > n / 4.0:
                raise RepresentationError(
                    f"Dicke-representation cat needs |alpha|^2 <= N/4, got {a2:.3g} with N={n}"
                )
            if a2 > n / 10.0:
                log.warning(
                    "cat size |alpha|^2 = %.3g above N/10 = %.3g; low-excitation "
                    "mapping is getting marginal", a2, n / 10.0,
                )


def _parity_mask(amps: np.ndarray, parity: str) -> np.ndarray:
    masked = amps.copy()
    start = 1 if parity == "even" else 0
    masked[start::2] = 0.0
    return masked


def cat_state(p: CatParams) -> hb.Ket:
    """Normalized even or odd cat state in the requested representation.

    The even (odd) cat is the normalized projection of |alpha> onto even
    (odd) excitation numbers, identical to A_pm (|alpha> pm |-alpha>)
    including phases.
    """
    if isinstance(p.rep, hb.Fock):
        base = coherent_state(p.alpha, p.rep.n_max)
    else:
        n = p.rep.n_atoms
        theta = 2.0 * math.atan2(abs(p.alpha), math.sqrt(n))
        phi = float(np.angle(p.alpha)) if p.alpha != 0 else 0.0
        base = spin_coherent(n, theta, phi, p.rep.n_cut)
    amps = _parity_mask(base.amplitudes, p.parity)
    nrm = np.linalg.norm(amps)
    if nrm == 0.0:
        raise ParameterError(f"{p.parity} cat undefined for alpha = {p.alpha}")
    return hb.Ket(base.space, amps / nrm)


def dark_state_recursion(alpha: complex, parity: str, n_max: int) -> hb.Ket:
    """Kernel state of (b^2 - alpha^2) built from the two-step recursion.

    Amplitudes obey c_{m+2} = alpha^2 c_m / sqrt((m+1)(m+2)) seeded at
    c_k = alpha^k for k = 0 (even) or 1 (odd), then normalized. For
    alpha = 0 the odd branch degenerates to the single-excitation state.
    """
    if parity not in ("even", "odd"):
        raise ParameterError(f"parity must be 'even' or 'odd', got {parity!r}")
    k = 0 if parity == "even" else 1
    amps = np.zeros(n_max + 1, dtype=np.complex128)
    amps[k] = complex(alpha) ** k
    if amps[k] == 0.0:
        amps[k] = 1.0
    eps = complex(alpha) ** 2
    for m in range(k, n_max - 1, 2):
        amps[m + 2] = amps[m] * eps / math.sqrt((m + 1.0) * (m + 2.0))
    amps /= np.linalg.norm(amps)
    return hb.Ket(hb.space(hb.Fock(n_max)), amps)


# ---------------------------------------------------------------------------
# steady-state manifold
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifoldCoeffs:
    """Weights of the steady state on span{|C+>, |C->}.

    rho_ss = c_pp |C+><C+| + c_mm |C-><C-| + c_pm |C+><C-| + conj(c_pm) h.c.
    """

    c_pp: float
    c_mm: float
    c_pm: complex

    def __post_init__(self):
        if abs(self.c_pp + self.c_mm - 1.0) > 1e-10:
            raise CoefficientConsistencyError(
                f"populations must sum to 1, got {self.c_pp + self.c_mm}"
            )


def _cpm_quadrature(alpha: complex, alpha0: complex) -> complex:
    """Integral of I0(|alpha^2 - alpha0^2 e^(2 i phi)|) e^(-i phi) over [0, pi]."""
    a2 = complex(alpha) ** 2
    b2 = complex(alpha0) ** 2

    def f_re(phi):
        return bessel_i0(abs(a2 - b2 * np.exp(2j * phi))) * math.cos(phi)

    def f_im(phi):
        return -bessel_i0(abs(a2 - b2 * np.exp(2j * phi))) * math.sin(phi)

    # The integrand modulus is stationary where e^(2 i phi) aligns with
    # a2 / b2; split there when the initial amplitude dominates, since the
    # Bessel growth then concentrates the integral near those angles.
    points = None
    if abs(alpha0) > abs(alpha) and b2 != 0:
        psi = np.angle(a2 / b2) if a2 != 0 else 0.0
        cands = [(psi / 2.0 + 0.5 * k * math.pi) % math.pi for k in range(4)]
        points = sorted(set(round(c, 14) for c in cands if 0.0 < c < math.pi))
    kw = dict(epsabs=1e-10, epsrel=1e-11, limit=400)
    if points:
        kw["points"] = points
    re, re_err = integrate.quad(f_re, 0.0, math.pi, **kw)
    im, im_err = integrate.quad(f_im, 0.0, math.pi, **kw)
    scale = max(1.0, abs(re), abs(im))
    if re_err > 1e-8 * scale or im_err > 1e-8 * scale:
        raise QuadratureError(
            f"manifold quadrature error estimate too large: {re_err:.2e}, {im_err:.2e}"
        )
    return complex(re, im)


def manifold_coeffs(alpha: complex, alpha0: complex) -> ManifoldCoeffs:
    """Steady-manifold weights for an initial coherent state |alpha0>.

    ``alpha`` sets the stabilized cat amplitude. The populations depend
    only on |alpha0|; the cross coherence carries the quadrature over the
    relative phase of the two amplitudes.
    """
    a0_sq = abs(alpha0) ** 2
    a_sq = abs(alpha) ** 2
    c_pp = 0.5 * (1.0 + math.exp(-2.0 * a0_sq))
    c_mm = 1.0 - c_pp
    if a_sq == 0.0:
        raise ParameterError("manifold undefined for alpha = 0")
    pref = -(np.conj(alpha0) * abs(alpha) * math.exp(-a0_sq)
             / math.sqrt(2.0 * math.sinh(2.0 * a_sq)))
    c_pm = pref * _cpm_quadrature(alpha, alpha0)
    return ManifoldCoeffs(c_pp=c_pp, c_mm=c_mm, c_pm=complex(c_pm))


def manifold_state(alpha: complex, alpha0: complex,
                   rep: hb.Fock | hb.Dicke) -> hb.DensityMatrix:
    """Assemble the steady-state density matrix on the cat manifold."""
    co = manifold_coeffs(alpha, alpha0)
    cp = cat_state(CatParams(alpha=alpha, parity="even", rep=rep)).amplitudes
    cm = cat_state(CatParams(alpha=alpha, parity="odd", rep=rep)).amplitudes
    m = (co.c_pp * np.outer(cp, cp.conj())
         + co.c_mm * np.outer(cm, cm.conj())
         + co.c_pm * np.outer(cp, cm.conj())
         + np.conj(co.c_pm) * np.outer(cm, cp.conj()))
    w = np.linalg.eigvalsh((m + m.conj().T) / 2.0)
    if w.min() < -1e-8:
        raise CoefficientConsistencyError(
            f"manifold coefficients give min eigenvalue {w.min():.3e}"
        )
    sd = hb.space(rep)
    return hb.DensityMatrix(sd, m)
