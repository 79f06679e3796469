"""Time evolution of ModelSpecs.

Three entry points: deterministic Lindblad integration (evolve_master),
stochastic quantum-jump trajectories with waiting-time unraveling
(evolve_trajectory, average_trajectories), and steady-state finding by
long-time integration (steady_state).

Master-equation right-hand sides come in two forms picked by dimension:
an explicit sparse superoperator on the column-stacked density matrix
for small spaces, and an operator-product form A rho + rho A^dag +
sum_k gamma_k c_k rho c_k^dag above MATRIX_FORM_MAX_DIM, which never
materializes a D^2 x D^2 matrix. Purely diagonal jump operators are
folded into a single elementwise (Hadamard) update in either case's
operator form.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from . import hilbert as hb
from .errors import (
    AssemblyError,
    ConvergenceError,
    DegenerateSpectrumError,
    ParameterError,
    StiffnessError,
)
from .models import ModelSpec

log = logging.getLogger(__name__)

MATRIX_FORM_MAX_DIM = 300
LEAK_WARN = 1e-3


@dataclass(frozen=True)
class IntegratorConfig:
    """How to integrate and when to look.

    ``method`` is "adaptive" (embedded Runge-Kutta 5(4), the default)
    or "rk4" (fixed step, step size = max_step, for bit-reproducibility
    baselines). store_times must be strictly increasing and start at
    t >= 0; integration always begins at t = 0.
    """

    store_times: tuple[float, ...]
    method: str = "adaptive"
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf

    def __post_init__(self):
        ts = tuple(float(t) for t in self.store_times)
        object.__setattr__(self, "store_times", ts)
        if not ts:
            raise ParameterError("store_times must not be empty")
        if ts[0] < 0.0 or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ParameterError("store_times must be nonnegative and strictly increasing")
        if self.method not in ("adaptive", "rk4"):
            raise ParameterError(f"unknown method {self.method!r}")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ParameterError("tolerances must be positive")
        if self.method == "rk4" and not math.isfinite(self.max_step):
            raise ParameterError("rk4 needs a finite max_step as its step size")


@dataclass(frozen=True)
class EvolutionRecord:
    """Stored master-equation (or trajectory-averaged) output.

    Either full states or named expectation series, never forced to
    both: large runs pass observables and skip state storage. stderr
    carries ensemble standard errors when the record came from
    trajectory averaging.
    """

    times: np.ndarray
    states: tuple[hb.DensityMatrix, ...] | None
    observables: dict[str, np.ndarray]
    population_leak: np.ndarray
    trace_drift: np.ndarray
    stderr: dict[str, np.ndarray] | None = None

    def to_csv(self, path):
        """time column + named observable columns (re/im split if complex)."""
        cols: list[tuple[str, np.ndarray]] = [("time", self.times)]
        for name, series in self.observables.items():
            if np.abs(np.asarray(series).imag).max(initial=0.0) > 1e-10:
                cols.append((f"{name}_re", series.real))
                cols.append((f"{name}_im", series.imag))
            else:
                cols.append((name, series.real))
            if self.stderr and name in self.stderr:
                cols.append((f"{name}_stderr", self.stderr[name].real))
        cols.append(("population_leak", self.population_leak))
        cols.append(("trace_drift", self.trace_drift))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(name for name, _ in cols) + "\n")
            for i in range(self.times.size):
                fh.write(",".join(f"{float(series[i]):.17g}" for _, series in cols) + "\n")


@dataclass(frozen=True)
class TrajectoryRecord:
    """One quantum-jump trajectory: normalized kets and the jump log."""

    times: np.ndarray
    kets: tuple[hb.Ket, ...]
    jump_events: tuple[tuple[float, int], ...]
    seed: int


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------


def _is_diagonal(m: sp.spmatrix) -> bool:
    return (m - sp.diags(m.diagonal())).nnz == 0


class _MasterRHS:
    """Lindblad right-hand side acting on a column-stacked rho."""

    def __init__(self, model: ModelSpec):
        self.dim = model.space.total_dim
        h = model.hamiltonian.matrix
        drift = (-1j) * h
        had = None
        general = []
        for rate, op in model.dissipators:
            if rate == 0.0:
                continue
            m = op.matrix
            drift = drift - 0.5 * rate * (m.getH() @ m)
            if _is_diagonal(m):
                d = m.diagonal()
                term = rate * np.outer(d, d.conj())
                had = term if had is None else had + term
            else:
                general.append((rate, m.tocsr()))
        self.drift = drift.tocsr()
        self.drift_dag = self.drift.getH().tocsr()
        self.hadamard = had
        self.general = general
        if self.dim <= MATRIX_FORM_MAX_DIM:
            from .analysis import liouvillian_matrix
            self.superop = liouvillian_matrix(model, max_dim=MATRIX_FORM_MAX_DIM).tocsr()
        else:
            self.superop = None

    def __call__(self, t, y):
        if self.superop is not None:
            return self.superop @ y
        rho = y.reshape((self.dim, self.dim), order="F")
        out = self.drift @ rho + rho @ self.drift_dag
        if self.hadamard is not None:
            out = out + self.hadamard * rho
        for rate, m in self.general:
            out = out + rate * ((m @ rho) @ m.getH())
        return out.ravel(order="F")


def _rk4_segment(rhs, t0: float, t1: float, y: np.ndarray, h: float) -> np.ndarray:
    """Classic fixed-step RK4 from t0 to t1 with step <= h."""
    n = max(1, int(math.ceil((t1 - t0) / h)))
    dt = (t1 - t0) / n
    t = t0
    for _ in range(n):
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
    return y


def _leak_mask(sd: hb.SpaceDescriptor) -> np.ndarray | None:
    masks = hb.top_level_masks(sd)
    if not masks:
        return None
    union = masks[0]
    for m in masks[1:]:
        union = union | m
    return union


def _resolve_observable(sd: hb.SpaceDescriptor, obs):
    """Return a closure rho-matrix -> complex for a LinOp or Ket observable."""
    if isinstance(obs, hb.Ket):
        if obs.space != sd:
            raise AssemblyError("observable ket lives on a different space")
        v = obs.amplitudes

        def f_ket(rho):
            return complex(np.vdot(v, rho @ v))

        return f_ket
    if isinstance(obs, hb.LinOp):
        if obs.space != sd:
            raise AssemblyError("observable operator lives on a different space")
        m = obs.matrix

        def f_op(rho):
            return complex(m.multiply(rho.T).sum())

        return f_op
    raise ParameterError(f"observable must be a LinOp or Ket, got {type(obs)}")


# ---------------------------------------------------------------------------
# master equation
# ---------------------------------------------------------------------------


def evolve_master(model: ModelSpec, rho0: hb.DensityMatrix, cfg: IntegratorConfig,
                  observables: Mapping[str, object] | None = None,
                  store_states: bool | None = None) -> EvolutionRecord:
    """Integrate d rho/dt = -i[H, rho] + sum_k gamma_k L(c_k) rho.

    States are stored at cfg.store_times unless ``store_states`` is
    False (default: states are kept only when no observables were
    requested). Trace drift and top-truncation-level population are
    recorded at every stored time; leak above 1e-3 logs a warning.

    The exact flow preserves hermiticity, so the integrator's
    anti-hermitian residue is noise at the tolerance scale; recorded
    samples are symmetrized to keep downstream validity gates sharp.
    """
    if rho0.space != model.space:
        raise AssemblyError("initial state lives on a different space")
    rho0.validate()
    if store_states is None:
        store_states = observables is None
    obs_fns = {name: _resolve_observable(model.space, o)
               for name, o in (observables or {}).items()}

    rhs = _MasterRHS(model)
    d = model.space.total_dim
    mask = _leak_mask(model.space)
    times = np.asarray(cfg.store_times)

    states: list[hb.DensityMatrix] = []
    series = {name: np.empty(times.size, dtype=np.complex128) for name in obs_fns}
    leak = np.zeros(times.size)
    drift = np.zeros(times.size)

    def record(i: int, rho: np.ndarray):
        rho = 0.5 * (rho + rho.conj().T)
        tr = complex(np.trace(rho))
        drift[i] = abs(tr - 1.0)
        if mask is not None:
            leak[i] = float(np.real(rho.diagonal()[mask].sum()))
        if store_states:
            states.append(hb.DensityMatrix(model.space, rho.copy()))
        for name, fn in obs_fns.items():
            series[name][i] = fn(rho)

    y = rho0.entries.astype(np.complex128).ravel(order="F")
    t_cur = 0.0
    start = 0
    if times[0] == 0.0:
        record(0, rho0.entries)
        start = 1
    if cfg.method == "rk4":
        for i in range(start, times.size):
            y = _rk4_segment(rhs, t_cur, times[i], y, cfg.max_step)
            t_cur = times[i]
            record(i, y.reshape((d, d), order="F"))
    elif start < times.size:
        sol = solve_ivp(rhs, (0.0, times[-1]), y, method="RK45",
                        t_eval=times[start:], rtol=cfg.rel_tol,
                        atol=cfg.abs_tol, max_step=cfg.max_step)
        if not sol.success:
            raise StiffnessError(f"integrator failed at t = {sol.t[-1] if sol.t.size else 0.0}: "
                                 f"{sol.message}")
        for j in range(sol.t.size):
            record(start + j, sol.y[:, j].reshape((d, d), order="F"))

    worst = float(drift.max(initial=0.0))
    if worst > 1e-6:
        log.warning("trace drift reached %.3e (tolerance 1e-6)", worst)
    worst_leak = float(leak.max(initial=0.0))
    if worst_leak > LEAK_WARN:
        log.warning("top-truncation-level population reached %.3e; "
                    "results may be truncation-limited", worst_leak)
    return EvolutionRecord(times=times, states=tuple(states) if store_states else None,
                           observables=series, population_leak=leak, trace_drift=drift)


# ---------------------------------------------------------------------------
# quantum-jump trajectories
# ---------------------------------------------------------------------------


class _NonHermitianRHS:
    """d psi/dt = -i (H - (i/2) sum_k gamma_k c_k^dag c_k) psi."""

    def __init__(self, model: ModelSpec):
        m = model.hamiltonian.matrix.astype(np.complex128)
        for rate, op in model.dissipators:
            if rate:
                m = m - 0.5j * rate * (op.matrix.getH() @ op.matrix)
        self.gen = (-1j) * m.tocsr()

    def __call__(self, t, y):
        return self.gen @ y


def _choose_channel(rng, model: ModelSpec, psi: np.ndarray) -> tuple[int, np.ndarray]:
    weights = []
    shots = []
    for rate, op in model.dissipators:
        v = op.matrix @ psi
        weights.append(rate * float(np.real(np.vdot(v, v))))
        shots.append(v)
    total = sum(weights)
    if total <= 0.0:
        raise DegenerateSpectrumError("all jump-channel probabilities vanish at a jump event")
    cum = np.cumsum(weights) / total
    k = int(np.searchsorted(cum, rng.random(), side="right"))
    k = min(k, len(weights) - 1)
    return k, shots[k]


def _rk4_trajectory(rhs, model, y, times, start, t_end, r0, rng, cfg):
    """Fixed-step jump unraveling; threshold located by step bisection."""
    stored = []
    jumps = []
    h = cfg.max_step
    t = 0.0
    r = r0
    store_iter = list(times[start:])
    si = 0

    def norm2(v):
        return float(np.real(np.vdot(v, v)))

    while t < t_end - 1e-15 * max(1.0, t_end):
        t_next = min(store_iter[si] if si < len(store_iter) else t_end, t_end)
        while t < t_next - 1e-15 * max(1.0, t_end):
            step = min(h, t_next - t)
            y_new = _rk4_segment(rhs, t, t + step, y, step)
            if norm2(y_new) <= r:
                lo_t, lo_y = t, y
                width = step
                # bisect the crossing inside this step
                while width > 1e-10 * step:
                    width *= 0.5
                    mid = _rk4_segment(rhs, lo_t, lo_t + width, lo_y, width)
                    if norm2(mid) > r:
                        lo_t, lo_y = lo_t + width, mid
                t_jump = lo_t
                k, shot = _choose_channel(rng, model, lo_y)
                y = shot / np.linalg.norm(shot)
                jumps.append((t_jump, k))
                r = rng.random()
                t = t_jump
            else:
                y, t = y_new, t + step
        if si < len(store_iter) and abs(t - store_iter[si]) <= 1e-12 * max(1.0, t):
            stored.append(y / np.linalg.norm(y))
            si += 1
    while si < len(store_iter):
        stored.append(y / np.linalg.norm(y))
        si += 1
    return stored, jumps


def evolve_trajectory(model: ModelSpec, psi0: hb.Ket, cfg: IntegratorConfig,
                      seed: int) -> TrajectoryRecord:
    """Waiting-time quantum-jump unraveling, deterministic per seed.

    The ket evolves under the non-Hermitian generator until its squared
    norm crosses a uniform threshold; a channel k is then drawn with
    probability proportional to gamma_k ||c_k psi||^2, c_k is applied,
    the state renormalized, and a fresh threshold drawn. Stored kets
    are normalized. RNG draw order: threshold, then per jump (channel,
    next threshold).
    """
    if psi0.space != model.space:
        raise AssemblyError("initial state lives on a different space")
    if abs(psi0.norm - 1.0) > 1e-8:
        raise ParameterError(f"psi0 must be normalized, norm = {psi0.norm}")
    rng = np.random.default_rng(seed)
    rhs = _NonHermitianRHS(model)
    times = np.asarray(cfg.store_times)
    t_end = float(times[-1])

    stored: list[np.ndarray] = []
    start = 0
    if times[0] == 0.0:
        stored.append(psi0.amplitudes.copy())
        start = 1
    r = rng.random()
    jumps: list[tuple[float, int]] = []

    if cfg.method == "rk4":
        tail, jumps = _rk4_trajectory(rhs, model, psi0.amplitudes.copy(), times,
                                      start, t_end, r, rng, cfg)
        stored.extend(tail)
    else:
        y = psi0.amplitudes.copy()
        t_cur = 0.0
        pending = list(times[start:])
        while pending:
            threshold = r

            def crossing(t, yv):
                return float(np.real(np.vdot(yv, yv))) - threshold

            crossing.terminal = True
            crossing.direction = -1
            sol = solve_ivp(rhs, (t_cur, t_end), y, method="RK45",
                            t_eval=[t for t in pending if t > t_cur],
                            events=crossing, rtol=cfg.rel_tol, atol=cfg.abs_tol,
                            max_step=cfg.max_step)
            if sol.status == -1:
                raise StiffnessError(f"trajectory integrator failed: {sol.message}")
            # scipy hands back plain empty lists when the terminal event
            # fires before the first requested evaluation point
            got = np.asarray(sol.t, dtype=float)
            ys = np.asarray(sol.y, dtype=np.complex128)
            for j in range(got.size):
                stored.append(ys[:, j] / np.linalg.norm(ys[:, j]))
                pending.pop(0)
            if sol.status == 1:
                t_jump = float(sol.t_events[0][0])
                y_jump = sol.y_events[0][0]
                k, shot = _choose_channel(rng, model, y_jump)
                y = shot / np.linalg.norm(shot)
                jumps.append((t_jump, k))
                r = rng.random()
                t_cur = t_jump
            else:
                break

    kets = tuple(hb.Ket(model.space, v) for v in stored)
    return TrajectoryRecord(times=times, kets=kets, jump_events=tuple(jumps), seed=seed)


def expectation_series(record: TrajectoryRecord,
                       observables: Mapping[str, object]) -> dict[str, np.ndarray]:
    """Named expectation values along a trajectory's stored kets."""
    out = {}
    for name, obs in observables.items():
        if isinstance(obs, hb.Ket):
            vals = [abs(obs.overlap(k)) ** 2 for k in record.kets]
        elif isinstance(obs, hb.LinOp):
            vals = [obs.expect(k) for k in record.kets]
        else:
            raise ParameterError(f"observable must be a LinOp or Ket, got {type(obs)}")
        out[name] = np.asarray(vals, dtype=np.complex128)
    return out


def _traj_worker(args):
    model, psi0, cfg, seed, observables = args
    rec = evolve_trajectory(model, psi0, cfg, seed)
    series = expectation_series(rec, observables)
    return seed, series


def average_trajectories(model: ModelSpec, psi0: hb.Ket, cfg: IntegratorConfig,
                         n_traj: int, seed0: int,
                         observables: Mapping[str, object]) -> EvolutionRecord:
    """Ensemble average of named observables over n_traj trajectories.

    Trajectory i uses seed seed0 + i. Reduction is in index order, so
    the result is independent of the worker count (CATSIM_WORKERS,
    default serial). A Ket observable averages the squared overlap.
    """
    if n_traj < 1:
        raise ParameterError("n_traj must be at least 1")
    jobs = [(model, psi0, cfg, seed0 + i, observables) for i in range(n_traj)]
    workers = int(os.environ.get("CATSIM_WORKERS", "1"))
    results: dict[int, dict[str, np.ndarray]] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for seed, series in pool.map(_traj_worker, jobs, chunksize=8):
                results[seed] = series
    else:
        for job in jobs:
            seed, series = _traj_worker(job)
            results[seed] = series

    times = np.asarray(cfg.store_times)
    names = list(observables.keys())
    mean = {}
    sem = {}
    for name in names:
        stack = np.vstack([results[seed0 + i][name] for i in range(n_traj)])
        mean[name] = stack.mean(axis=0)
        if n_traj > 1:
            sem[name] = stack.std(axis=0, ddof=1) / math.sqrt(n_traj)
        else:
            sem[name] = np.zeros(times.size)
    return EvolutionRecord(times=times, states=None, observables=mean,
                           population_leak=np.zeros(times.size),
                           trace_drift=np.zeros(times.size), stderr=sem)


# ---------------------------------------------------------------------------
# steady state
# ---------------------------------------------------------------------------


def steady_state(model: ModelSpec, rho0: hb.DensityMatrix,
                 residual_tol: float = 1e-8, max_chunks: int = 400) -> hb.DensityMatrix:
    """Integrate until ||d rho/dt||_F < residual_tol * ||rho||_F.

    Long-time integration (not a null-space solve): the Liouvillians of
    interest have a degenerate kernel, so the reached fixed point
    depends on rho0 and that dependence is the point. Chunk length
    self-scales from the instantaneous residual and doubles whenever
    convergence per chunk is slow.
    """
    if residual_tol <= 0:
        raise ParameterError("residual_tol must be positive")
    if rho0.space != model.space:
        raise AssemblyError("initial state lives on a different space")
    rho0.validate()
    rhs = _MasterRHS(model)
    d = model.space.total_dim
    y = rho0.entries.astype(np.complex128).ravel(order="F")

    def residual(yv):
        return float(np.linalg.norm(rhs(0.0, yv))) / max(float(np.linalg.norm(yv)), 1e-300)

    res = residual(y)
    if res < residual_tol:
        return rho0
    chunk = 1.0 / res
    prev = res
    for _ in range(max_chunks):
        sol = solve_ivp(rhs, (0.0, chunk), y, method="RK45",
                        rtol=1e-8, atol=1e-12)
        if not sol.success:
            raise StiffnessError(f"steady-state integrator failed: {sol.message}")
        y = sol.y[:, -1]
        res = residual(y)
        if res < residual_tol:
            rho = y.reshape((d, d), order="F")
            rho = (rho + rho.conj().T) / 2.0
            rho = rho / np.real(np.trace(rho))
            return hb.DensityMatrix(model.space, rho)
        if res > 0.7 * prev:
            chunk *= 2.0
        prev = res
    raise ConvergenceError(
        f"steady state not reached in {max_chunks} chunks", residual=res
    )
