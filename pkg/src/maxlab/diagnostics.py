"""Energy hierarchy, commutator norms, divergence residuals and energy identities.

For a derivative stack at one instant::

    e_k = 1/2 max_{j<=k} (|eps_k^{1/2} d_t^j E|^2 + |mu_k^{1/2} d_t^j H|^2)
    d_k = max_{j<=k} |sigma^{1/2} d_t^j E|^2
    z_k = max_{j<=k} (|d_t^j E|^2_{H^{k-j}} + |d_t^j H|^2_{H^{k-j}})

with weights ``eps_0 = eps(E)`` and ``eps_k = epsD(E)`` for ``k >= 1`` (the
same for ``mu``).  Time integrals over a record use the trapezoidal rule on
the stored samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import Medium, commutators, tensor_apply, time_derivatives
from .grid import div_field, inner, norm, sobolev_levels, tangential_boundary_max
from .materials import PositivityError

COMMUTATOR_NAMES = ("f2", "f3", "g2", "g3", "ft1", "ft2", "ft3", "gt1", "gt2", "gt3")
CSV_COLUMNS = (
    ("t",)
    + tuple(f"e{k}" for k in range(4))
    + tuple(f"d{k}" for k in range(4))
    + tuple(f"z{k}" for k in range(4))
    + ("div_mag", "div_elec", "bnd_tan_E", "bnd_norm_B")
    + COMMUTATOR_NAMES
    + ("e0_discrete", "diss_discrete")
)


def tensor_sqrt(t, floor=0.0):
    """Symmetric square root per point; aborts if an eigenvalue is below ``floor``."""
    if t is None:
        return None
    if isinstance(t, tuple):
        lo = min(float(a.min()) for a in t)
        if lo < floor:
            raise PositivityError(f"weight eigenvalue {lo:.4g} below floor {floor:.4g}")
        return tuple(np.sqrt(a) for a in t)
    lam, V = np.linalg.eigh(t)
    if lam.min() < floor:
        raise PositivityError(f"weight eigenvalue {lam.min():.4g} below floor {floor:.4g}")
    return np.einsum("...ik,...k,...jk->...ij", V, np.sqrt(np.maximum(lam, 0.0)), V)


def _sq_weighted(grid, w_sqrt, u):
    w = tensor_apply(w_sqrt, u)
    return inner(grid, w, w)


def energies(stack, medium: Medium):
    """Return ``(e, d, z)``, each an array over ``k = 0..3`` (or the stack order)."""
    grid = medium.grid
    K = stack.order
    floor_e, floor_m = 0.5 * medium.eps.eta, 0.5 * medium.mu.eta
    sq = {}
    for k in range(min(K, 1) + 1):
        sq[k] = (tensor_sqrt(stack.eps_hat(k), floor_e), tensor_sqrt(stack.mu_hat(k), floor_m))
    s_sig = tensor_sqrt(medium.sigma, 0.0)

    e = np.zeros(K + 1)
    d = np.zeros(K + 1)
    z = np.zeros(K + 1)
    eh = {}
    for k in range(K + 1):
        we, wm = sq[min(k, 1)]
        vals = []
        for j in range(k + 1):
            key = (min(k, 1), j)
            if key not in eh:
                eh[key] = _sq_weighted(grid, we, stack.E[j]) + _sq_weighted(grid, wm, stack.H[j])
            vals.append(eh[key])
        e[k] = 0.5 * max(vals)
    dj = [_sq_weighted(grid, s_sig, stack.E[j]) for j in range(K + 1)]
    lev = [sobolev_levels(grid, stack.E[j], K - j) + sobolev_levels(grid, stack.H[j], K - j)
           for j in range(K + 1)]
    for k in range(K + 1):
        d[k] = max(dj[: k + 1])
        z[k] = max(lev[j][: k - j + 1].sum() for j in range(k + 1))
    return e, d, z


@dataclass
class DiagnosticSample:
    t: float
    e: np.ndarray
    d: np.ndarray
    z: np.ndarray
    div_mag: float
    div_elec: float
    bnd_tan_E: float
    bnd_norm_B: float
    comm: dict
    e0_discrete: float
    diss_discrete: float

    def row(self):
        vals = [self.t, *self.e, *self.d, *self.z, self.div_mag, self.div_elec,
                self.bnd_tan_E, self.bnd_norm_B]
        vals += [self.comm.get(n, 0.0) for n in COMMUTATOR_NAMES]
        vals += [self.e0_discrete, self.diss_discrete]
        return vals


@dataclass
class EnergyRecord:
    """Ordered diagnostic samples with trapezoidal time integrals."""

    samples: list = field(default_factory=list)

    def append(self, s: DiagnosticSample):
        if self.samples and not s.t > self.samples[-1].t:
            raise ValueError("sample times must increase strictly")
        self.samples.append(s)

    def __len__(self):
        return len(self.samples)

    def last_dissipation(self):
        return self.samples[-1].diss_discrete if self.samples else 0.0

    @property
    def t(self):
        return np.array([s.t for s in self.samples])

    def series(self, name):
        if name in ("e", "d", "z"):
            return np.array([getattr(s, name) for s in self.samples])
        if name[0] in "edz" and name[1:].isdigit():
            return np.array([getattr(s, name[0])[int(name[1:])] for s in self.samples])
        if name in COMMUTATOR_NAMES:
            return np.array([s.comm.get(name, 0.0) for s in self.samples])
        return np.array([getattr(s, name) for s in self.samples])

    def table(self):
        return np.array([s.row() for s in self.samples]).reshape(-1, len(CSV_COLUMNS))

    @classmethod
    def from_table(cls, table):
        rec = cls()
        for row in np.atleast_2d(table):
            r = list(row)
            comm = dict(zip(COMMUTATOR_NAMES, r[17:27]))
            rec.append(DiagnosticSample(r[0], np.array(r[1:5]), np.array(r[5:9]),
                                        np.array(r[9:13]), r[13], r[14], r[15], r[16],
                                        comm, r[27], r[28]))
        return rec


def cumulative_integral(y, t):
    """Running trapezoidal integral ``I[n] = int_{t_0}^{t_n} y``."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(y)
    if len(t) > 1:
        out[1:] = np.cumsum(0.5 * np.diff(t) * (y[1:] + y[:-1]))
    return out


def _interior(a):
    return a[1:-1, 1:-1, 1:-1]


def magnetic_divergence(medium, B):
    return float(np.abs(div_field(medium.grid, B)).max(initial=0.0))


def electric_divergence(medium, D):
    """Divergence of ``D`` at the interior nodes."""
    return _interior(div_field(medium.grid, D))


def normal_boundary_max(B):
    out = 0.0
    for c in range(3):
        a = np.moveaxis(B.comps[c], c, 0)
        out = max(out, float(np.abs(a[0]).max()), float(np.abs(a[-1]).max()))
    return out


class Sampler:
    """Builds :class:`DiagnosticSample` objects along a run.

    Keeps the running trapezoidal integral of ``Div(sigma E)`` between samples
    for the electric divergence relation.
    """

    def __init__(self, medium: Medium, data, dt, order=3, record=None):
        self.medium = medium
        self.dt = dt
        self.order = order
        self.record = record if record is not None else EnergyRecord()
        D0 = medium.d_of(data.E0)
        self.div_d0 = electric_divergence(medium, D0)
        self._prev = None  # (t, Div(sigma E))
        self._int = np.zeros_like(self.div_d0)

    def __call__(self, state, diss=0.0):
        m = self.medium
        stack = time_derivatives(m, state.E, state.H, state.t, order=self.order)
        e, d, z = energies(stack, m)
        comm = {k: norm(m.grid, v) for k, v in commutators(stack).items()}
        div_sig = electric_divergence(m, m.sigma_apply(state.E))
        if self._prev is not None:
            t_prev, ds_prev = self._prev
            self._int = self._int + 0.5 * (state.t - t_prev) * (div_sig + ds_prev)
        self._prev = (state.t, div_sig)
        elec = electric_divergence(m, state.D) - self.div_d0 + self._int
        s = DiagnosticSample(
            t=state.t, e=e, d=d, z=z,
            div_mag=magnetic_divergence(m, state.B),
            div_elec=float(np.abs(elec).max(initial=0.0)),
            bnd_tan_E=tangential_boundary_max(m.grid, state.E),
            bnd_norm_B=normal_boundary_max(state.B),
            comm=comm,
            e0_discrete=_discrete_energy(m, state, self.dt),
            diss_discrete=float(diss),
        )
        self.record.append(s)
        return s


def _discrete_energy(medium, state, dt):
    from .solver import discrete_energy
    return discrete_energy(medium, state.E, state.H, dt)


# -- checks over a record ---------------------------------------------------------

def _window_indices(t, window):
    s, e = window
    if s < t[0] - 1e-12 or e > t[-1] + 1e-12 or s > e:
        raise ValueError(f"window {window} lies outside the record [{t[0]}, {t[-1]}]")
    i = int(np.argmin(np.abs(t - s)))
    j = int(np.argmin(np.abs(t - e)))
    return i, j


def energy_identity_residual(aux_record, window=None):
    """Residual of the energy identity of the auxiliary linear system.

    ``W(t) + int_s^t <sigma u, u> - W(s) - int_s^t (boundary + source)``
    where ``source = 1/2 <da u, u> + 1/2 <db v, v> - <phi, u> - <psi, v>``.
    Returns ``(absolute, relative)``; relative to ``max(W(s), W(t))``.
    """
    arr = aux_record.arrays()
    t = arr["t"]
    if len(t) == 0:
        raise ValueError("empty record")
    i, j = _window_indices(t, window or (t[0], t[-1]))
    sl = slice(i, j + 1)
    tt = t[sl]
    W = arr["energy"]
    diss = cumulative_integral(arr["dissipation"][sl], tt)[-1]
    rhs = cumulative_integral(arr["boundary"][sl] + arr["source"][sl], tt)[-1]
    res = abs(W[j] + diss - W[i] - rhs)
    scale = max(abs(W[i]), abs(W[j]))
    return float(res), float(res / scale) if scale > 0 else 0.0


def energy_inequality_check(record: EnergyRecord, window, k=0, linear_tol=1e-10):
    """Minimal ``c1`` with ``e_k(t) + int d_k <= e_k(s) + c1 int z^{3/2}``.

    Also returns the dissipation defect ``e_k(s) - e_k(t) - int d_k`` of the
    sampled quantities and, for ``k = 0``, the defect of the modified discrete
    energy balance, which vanishes up to rounding for linear laws.
    """
    t = record.t
    i, j = _window_indices(t, window)
    sl = slice(i, j + 1)
    ek = record.series(f"e{k}")
    dk = record.series(f"d{k}")[sl]
    z = record.series("z3")[sl]
    int_d = cumulative_integral(dk, t[sl])[-1]
    int_z = cumulative_integral(z**1.5, t[sl])[-1]
    defect = ek[i] - ek[j] - int_d
    if defect >= 0:
        c1 = 0.0
    elif int_z > 0:
        c1 = -defect / int_z
    else:
        c1 = float("inf")
    W = record.series("e0_discrete")
    Dc = record.series("diss_discrete")
    disc_defect = W[i] - W[j] - (Dc[j] - Dc[i])
    scale = max(abs(W[i]), 1e-300)
    return {
        "k": k, "window": (t[i], t[j]), "c1": c1, "defect": defect,
        "discrete_defect": disc_defect,
        "discrete_holds": bool(abs(disc_defect) <= linear_tol * scale),
    }


def divergence_residuals(record: EnergyRecord):
    """Largest magnetic and electric divergence residuals over the record."""
    if len(record) == 0:
        return 0.0, 0.0
    return float(record.series("div_mag").max()), float(record.series("div_elec").max())
