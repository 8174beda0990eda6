"""Time stepping of the damped quasilinear Maxwell system with PEC walls.

Both layouts use the same Stormer-Verlet splitting of the constitutive
variables ``D = eps(E) E`` and ``B = mu(H) H``::

    B^{n+1/2} = B^n - dt/2 curl E^n
    D^{n+1}   = D^n + dt curl H^{n+1/2} - dt sigma (E^n + E^{n+1}) / 2
    B^{n+1}   = B^{n+1/2} - dt/2 curl E^{n+1}

The conduction term is averaged over the step, which turns the ``E`` update
into the pointwise problem ``eps(E) E + dt/2 sigma E = rhs`` (Newton per node
for nonlinear laws, a division on the yee layout).  After the update the
tangential boundary values of ``E`` are zeroed and ``D`` is recomputed.

For linear laws the scheme is time reversible when ``sigma = 0`` and
dissipates the modified energy (:func:`discrete_energy`) by exactly
``dt <sigma E_avg, E_avg>`` per step.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .dynamics import Medium, tensor_apply, tensor_solve, time_derivatives  # noqa: F401
from .grid import VectorField, inner
from .materials import NewtonError, sphere_directions

COMPLETED = "completed"
BARRIER = "barrier-exceeded"
FAILURE = "solver-failure"


class BarrierExceeded(RuntimeError):
    def __init__(self, message, t):
        super().__init__(message)
        self.t = t


class CFLError(ValueError):
    pass


@dataclass
class FieldState:
    t: float
    E: VectorField
    H: VectorField
    D: VectorField
    B: VectorField

    @classmethod
    def from_fields(cls, medium, E, H, t=0.0):
        return cls(t, E, H, medium.d_of(E), medium.b_of(H))

    def constitutive_residual(self, medium):
        return max((medium.d_of(self.E) - self.D).max_abs(),
                   (medium.b_of(self.H) - self.B).max_abs())


def wave_speed_bound(medium, delta_tilde=None, n_radii=11, n_dirs=26, max_points=512):
    """``sqrt(max eig epsD^-1 * max eig muD^-1)`` over sampled ``|xi| <= delta_tilde``."""
    grid = medium.grid
    dt_ = medium.delta_tilde if delta_tilde is None else delta_tilde
    pts = grid.points("node").reshape(-1, 3)
    stride = max(1, len(pts) // max_points)
    xs = pts[::stride]
    radii = np.linspace(0.0, dt_, n_radii)
    dirs = sphere_directions(n_dirs)
    xi = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, 3)

    def inv_max(law):
        if law.is_linear:
            lam = np.linalg.eigvalsh(law.eval(xs, np.zeros_like(xs)))[..., 0]
        else:
            X = np.broadcast_to(xs[:, None, :], (len(xs), len(xi), 3))
            Xi = np.broadcast_to(xi[None, :, :], X.shape)
            lam = np.linalg.eigvalsh(law.eval_diff(X, Xi))[..., 0]
        return 1.0 / float(lam.min())

    return math.sqrt(inv_max(medium.eps) * inv_max(medium.mu))


def cfl_dt(medium, safety=0.5):
    """Stable step ``safety * h_min / (sqrt(3) c_max)``."""
    if not 0.0 < safety <= 1.0:
        raise CFLError(f"CFL safety must lie in (0, 1], got {safety}")
    return safety * medium.grid.h_min / (math.sqrt(3.0) * wave_speed_bound(medium))


def step(state: FieldState, dt, medium: Medium, dt_max=None, check_barrier=True):
    """Advance one Stormer-Verlet step; returns a new :class:`FieldState`."""
    if dt_max is not None and abs(dt) > dt_max * (1 + 1e-12):
        raise CFLError(f"dt = {dt:.6g} exceeds the CFL limit {dt_max:.6g}")
    half = 0.5 * dt
    B_half = state.B - half * medium.curl_e(state.E)
    H_half = medium.h_from_b(B_half, guess=state.H)
    rhs = state.D + dt * medium.curl_h(H_half) - half * medium.sigma_apply(state.E)
    E_new = medium.pec(medium.e_from_d(rhs, guess=state.E, shift_dt=half))
    D_new = medium.d_of(E_new)
    B_new = B_half - half * medium.curl_e(E_new)
    H_new = medium.h_from_b(B_new, guess=H_half)
    new = FieldState(state.t + dt, E_new, H_new, D_new, B_new)
    if not (E_new.is_finite() and H_new.is_finite()):
        raise NewtonError("non-finite field after step", float("nan"))
    if check_barrier:
        peak = max(E_new.max_abs(), H_new.max_abs())
        if peak > medium.delta_tilde:
            raise BarrierExceeded(
                f"field magnitude {peak:.4g} exceeds the positivity radius "
                f"{medium.delta_tilde:.4g}", new.t)
    return new


def step_dissipation(medium, E_old, E_new, dt):
    """``dt <sigma E_avg, E_avg>``, the exact modified-energy loss of a linear step."""
    avg = 0.5 * (E_old + E_new)
    return abs(dt) * inner(medium.grid, avg, medium.sigma_apply(avg))


def discrete_energy(medium, E, H, dt):
    """Modified energy conserved by the lossless linear scheme.

    ``1/2 <D, E> + 1/2 <B, H> - dt^2/8 <mu0^-1 curl E, curl E>`` with
    ``mu0 = mu(x, 0)``.
    """
    grid = medium.grid
    cE = medium.curl_e(E)
    if medium.mu.is_linear:
        mu0 = medium.mu_of(H)
    else:
        mu0 = medium.mu.eval(medium.x, np.zeros_like(medium.x))
    corr = inner(grid, cE, tensor_solve(mu0, cE))
    return 0.5 * inner(grid, medium.d_of(E), E) + 0.5 * inner(grid, medium.b_of(H), H) \
        - dt * dt / 8.0 * corr


@dataclass
class RunResult:
    record: object
    state: FieldState
    status: str
    failure_time: Optional[float]
    message: str
    dt: float
    steps: int
    sample_stride: int
    wall_time: float = 0.0
    checkpoints: list = field(default_factory=list)


def plan_steps(t_final, dt_max, sample_stride=1, sample_interval=None):
    """Choose ``(dt, n_steps, sample_stride)``.

    With ``sample_interval`` the step is ``interval / stride`` for the
    smallest admissible stride, so samples fall on multiples of the interval
    independently of the grid whenever ``t_final`` is a multiple of it.
    Otherwise the step is stretched slightly to end exactly at ``t_final``.
    """
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")
    if sample_interval:
        stride = max(1, math.ceil(sample_interval / dt_max - 1e-12))
        dt = sample_interval / stride
    else:
        stride = int(sample_stride)
        if stride < 1:
            raise ValueError("sample_stride must be a positive integer")
        dt = dt_max
    if t_final == 0:
        return dt, 0, stride
    n = max(1, math.ceil(t_final / dt - 1e-9))
    dt = t_final / n
    return dt, n, stride


def run(medium: Medium, data, t_final, dt=None, cfl_safety=0.5, sample_stride=1,
        sample_interval=None, delta=1.0, checkpoint_stride=0, checkpoint_dir=None,
        sampler: Optional[Callable] = None, resume_state: Optional[FieldState] = None,
        record=None, progress: Optional[Callable] = None):
    """Integrate from the initial data to ``t_final``.

    ``sampler`` (by default a :class:`maxlab.diagnostics.Sampler`) is called
    with the state every ``sample_stride`` steps and on the initial state.
    The run stops with ``barrier-exceeded`` when a field value leaves the
    positivity radius or a sampled ``z`` exceeds ``delta**2``, and with
    ``solver-failure`` when the constitutive Newton solve fails.
    """
    from .diagnostics import Sampler

    t0 = time.perf_counter()
    dt_limit = cfl_dt(medium, 1.0)
    dt_max = cfl_safety * dt_limit if dt is None else float(dt)
    if dt is not None and dt > dt_limit * (1 + 1e-12):
        raise CFLError(f"dt = {dt:.6g} exceeds the CFL limit {dt_limit:.6g}")
    start_t = resume_state.t if resume_state is not None else 0.0
    dt, n_steps, stride = plan_steps(t_final - start_t, dt_max, sample_stride, sample_interval)
    if sampler is None:
        sampler = Sampler(medium, data, dt)
    state = resume_state or FieldState.from_fields(medium, data.E0, data.H0)
    checkpoints = []
    status, fail_t, msg = COMPLETED, None, ""
    diss = 0.0 if record is None else record.last_dissipation()

    sample = sampler(state, diss)
    if sample.z[3] > delta**2:
        status, fail_t, msg = BARRIER, state.t, f"z = {sample.z[3]:.4g} exceeds delta^2"
    k = 0
    while status == COMPLETED and k < n_steps:
        try:
            new = step(state, dt, medium)
        except BarrierExceeded as exc:
            status, fail_t, msg = BARRIER, exc.t, str(exc)
            break
        except (NewtonError, np.linalg.LinAlgError) as exc:
            status, fail_t, msg = FAILURE, state.t + dt, str(exc)
            break
        diss += step_dissipation(medium, state.E, new.E, dt)
        k += 1
        new.t = start_t + k * dt  # no drift from repeated addition
        state = new
        if k % stride == 0 or k == n_steps:
            sample = sampler(state, diss)
            if sample.z[3] > delta**2:
                status, fail_t, msg = BARRIER, state.t, f"z = {sample.z[3]:.4g} exceeds delta^2"
            if progress is not None:
                progress(state.t, sample)
        if checkpoint_stride and checkpoint_dir and k % checkpoint_stride == 0:
            from .io import write_checkpoint
            path = Path(checkpoint_dir) / f"checkpoint_{k:07d}.bin"
            write_checkpoint(path, medium.grid, state, {"step": k, "dt": dt})
            checkpoints.append(str(path))
    return RunResult(sampler.record, state, status, fail_t, msg, dt, k, stride,
                     time.perf_counter() - t0, checkpoints)


# -- linear auxiliary system ------------------------------------------------------

class AuxProblem:
    """Coefficients and data of the linear system

        a du/dt = curl v - sigma u - phi
        b dv/dt = -curl u - psi
        tangential u = chi on the boundary

    on the yee layout.  ``a`` and ``b`` are scalar fields (same value for all
    components) given as callables ``f(t, X, Y, Z)``; ``phi``, ``psi`` and
    ``chi`` as callables returning three components.  Time derivatives of
    the coefficients are central differences unless ``da``/``db`` are given.
    """

    def __init__(self, grid, a, b, sigma, phi=None, psi=None, chi=None, da=None, db=None):
        if grid.layout != "yee":
            raise ValueError("the auxiliary system runs on the yee layout")
        self.grid = grid
        self._a, self._b, self._da, self._db = a, b, da, db
        self._phi, self._psi, self._chi = phi, psi, chi
        self._sigma = sigma
        self.sigma = tuple(self._on("edge", c, lambda t, X, Y, Z: sigma(X, Y, Z), 0.0)
                           for c in range(3))

    def _on(self, loc, comp, fn, t):
        X, Y, Z = self.grid.coords(loc, comp)
        return np.broadcast_to(fn(t, X, Y, Z), X.shape).astype(float)

    def _diag(self, fn, loc, t):
        return tuple(self._on(loc, c, fn, t) for c in range(3))

    def _ddt(self, fn, t, h=1e-5):
        return lambda tt, X, Y, Z: (fn(t + h, X, Y, Z) - fn(t - h, X, Y, Z)) / (2 * h)

    def a(self, t):
        return self._diag(self._a, "edge", t)

    def b(self, t):
        return self._diag(self._b, "face", t)

    def da(self, t):
        return self._diag(self._da or self._ddt(self._a, t), "edge", t)

    def db(self, t):
        return self._diag(self._db or self._ddt(self._b, t), "face", t)

    def _vec(self, fn, loc, t):
        if fn is None:
            return self.grid.zeros(loc)
        comps = []
        for c in range(3):
            X, Y, Z = self.grid.coords(loc, c)
            comps.append(np.broadcast_to(fn(t, X, Y, Z)[c], X.shape).astype(float))
        return VectorField(comps, loc)

    def phi(self, t):
        return self._vec(self._phi, "edge", t)

    def psi(self, t):
        return self._vec(self._psi, "face", t)

    def chi(self, t):
        return self._vec(self._chi, "edge", t)


def _impose_trace(grid, u, chi):
    from .grid import pec_masks
    comps = []
    for cu, cc, m in zip(u.comps, chi.comps, pec_masks(grid, u.loc)):
        cu = cu.copy()
        cu[m] = cc[m]
        comps.append(cu)
    return VectorField(comps, u.loc)


@dataclass
class AuxRecord:
    """Per-step integrands of the energy identity of the auxiliary system."""

    t: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    boundary: list = field(default_factory=list)
    source: list = field(default_factory=list)
    dt: float = 0.0

    def arrays(self):
        return {k: np.asarray(getattr(self, k)) for k in
                ("t", "energy", "dissipation", "boundary", "source")}


def aux_energy(grid, prob, t, u, v, dt=0.0):
    """``1/2 <a u, u> + 1/2 <b v, v>`` minus the Verlet correction ``dt^2/8 <b^-1 curl u, curl u>``."""
    a, b = prob.a(t), prob.b(t)
    cu = tensor_solve(b, _curl_e(grid, u))
    corr = inner(grid, _curl_e(grid, u), cu)
    return 0.5 * inner(grid, u, u, a, interior=True) + 0.5 * inner(grid, v, v, b) \
        - dt * dt / 8.0 * corr


def _curl_e(grid, u):
    from .grid import curl_primal
    return curl_primal(grid, u)


def run_aux(prob: AuxProblem, u0, v0, dt, n_steps, modified_energy=True):
    """Integrate the auxiliary system and record the energy-identity integrands."""
    from .grid import boundary_pairing, curl_dual, curl_primal
    grid = prob.grid
    rec = AuxRecord(dt=dt)
    t = 0.0
    u = _impose_trace(grid, u0, prob.chi(0.0))
    v = v0.copy()
    c = dt if modified_energy else 0.0

    def record(t, u, v):
        rec.t.append(t)
        rec.energy.append(aux_energy(grid, prob, t, u, v, c))
        rec.dissipation.append(inner(grid, u, u, prob.sigma, interior=True))
        rec.boundary.append(boundary_pairing(grid, u, v))
        src = 0.5 * inner(grid, u, u, prob.da(t), interior=True) \
            + 0.5 * inner(grid, v, v, prob.db(t)) \
            - inner(grid, prob.phi(t), u, interior=True) - inner(grid, prob.psi(t), v)
        rec.source.append(src)

    record(t, u, v)
    half = 0.5 * dt
    for _ in range(n_steps):
        v_half = v - half * tensor_solve(prob.b(t), curl_primal(grid, u) + prob.psi(t))
        tm = t + half
        am = prob.a(tm)
        lhs = tuple(a_ / dt + 0.5 * s for a_, s in zip(am, prob.sigma))
        rhs = tensor_apply(tuple(a_ / dt - 0.5 * s for a_, s in zip(am, prob.sigma)), u) \
            + curl_dual(grid, v_half) - prob.phi(tm)
        u = _impose_trace(grid, tensor_solve(lhs, rhs), prob.chi(t + dt))
        t = t + dt
        v = v_half - half * tensor_solve(prob.b(t), curl_primal(grid, u) + prob.psi(t))
        record(t, u, v)
    return rec, u, v
