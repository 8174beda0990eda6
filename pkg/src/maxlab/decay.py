"""Decay-rate fits and fitted constants of the observability-type inequalities.

Every inequality is checked on a set of windows ``(s, t)`` taken from a
coarse subsample of the record.  For each one we report the smallest
constants that make it hold on every window.

The primary fits keep the coefficients of the purely nonlinear terms
(``int z^{3/2}``, ``z^2``) at zero.  At small data those terms are below the
resolution of the fit, and their coefficients scale like ``1/amplitude``.
The LP variants that also use those terms are reported next to the primary
constants.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .diagnostics import EnergyRecord, cumulative_integral


class FitError(ValueError):
    pass


@dataclass
class DecayFit:
    M: float
    omega: float
    r2: float
    window: tuple
    n: int


def fit_decay(t, values, window=None, norm=1.0, min_samples=10):
    """Least-squares line through ``(t, log value)`` on ``window``.

    ``omega = -slope`` and ``M = exp(intercept) / norm``.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is not None:
        sel = (t >= window[0] - 1e-9) & (t <= window[1] + 1e-9)
        t, v = t[sel], v[sel]
    if len(t) < min_samples:
        raise FitError(f"need at least {min_samples} samples, got {len(t)}")
    if np.any(v <= 0):
        raise FitError("decay fit needs strictly positive values")
    y = np.log(v)
    A = np.vstack([np.ones_like(t), t]).T
    (b, slope), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (b + slope * t)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return DecayFit(float(np.exp(b) / norm), float(-slope), r2,
                    (float(t[0]), float(t[-1])), len(t))


@dataclass
class RatioReport:
    """Fitted constants of one inequality over a window set."""

    name: str
    constants: dict
    variants: dict = field(default_factory=dict)
    per_window: list = field(default_factory=list)
    holds: bool = True
    notes: str = ""


def window_indices(t, every=10, min_gap=0.0, t_min=None):
    """All pairs ``(i, j)``, ``i < j``, on every ``every``-th sample."""
    idx = np.arange(0, len(t), every)
    if t_min is not None:
        idx = idx[t[idx] >= t_min - 1e-9]
    return [(int(i), int(j)) for i, j in itertools.combinations(idx, 2)
            if t[j] - t[i] >= min_gap - 1e-12]


class _Quantities:
    def __init__(self, record: EnergyRecord, k):
        self.t = record.t
        self.e = record.series(f"e{k}")
        self.d = record.series(f"d{k}")
        self.z = record.series("z3")
        self.e3 = record.series("e3")
        self.Ie = cumulative_integral(self.e, self.t)
        self.Id = cumulative_integral(self.d, self.t)
        self.Iz = cumulative_integral(self.z, self.t)
        self.Iz32 = cumulative_integral(self.z**1.5, self.t)
        self.Ie3 = cumulative_integral(self.e3, self.t)

    def integral(self, name, i, j):
        arr = getattr(self, "I" + name)
        return float(arr[j] - arr[i])


def _max_ratio(num, den):
    """Smallest ``c >= 0`` with ``num <= c * den`` for all entries."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    if np.any((num > 0) & (den <= 0)):
        return float("inf")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(num > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return float(max(r.max(initial=0.0), 0.0))


def _lp_min(lhs, cols, weights=None):
    """Minimise ``sum w_i c_i`` subject to ``sum_i c_i cols[i] >= lhs``, ``c >= 0``.

    Rows are normalised by ``lhs`` so the problem is scale free.  Returns
    ``None`` when infeasible.
    """
    lhs = np.asarray(lhs, dtype=float)
    A = np.stack([np.asarray(c, dtype=float) for c in cols], axis=1)
    keep = lhs > 0
    if not keep.any():
        return np.zeros(A.shape[1])
    A = A[keep] / lhs[keep, None]
    w = np.ones(A.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    res = linprog(w, A_ub=-A, b_ub=-np.ones(len(A)), bounds=[(0, None)] * A.shape[1],
                  method="highs")
    return res.x if res.status == 0 else None


def _lexicographic(lhs, cols, slack=1e-9):
    """Minimal first constant, then second, ... subject to the inequality."""
    n = len(cols)
    fixed = []
    lhs = np.asarray(lhs, dtype=float)
    A = np.stack([np.asarray(c, dtype=float) for c in cols], axis=1)
    keep = lhs > 0
    if not keep.any():
        return np.zeros(n)
    A = A[keep] / lhs[keep, None]
    for m in range(n):
        w = np.zeros(n)
        w[m] = 1.0
        bounds = [(v, v * (1 + slack) + slack) for v in fixed] + [(0, None)] * (n - m)
        res = linprog(w, A_ub=-A, b_ub=-np.ones(len(A)), bounds=bounds, method="highs")
        if res.status != 0:
            return None
        fixed.append(float(res.x[m]))
    return np.array(fixed)


def observability_constants(record: EnergyRecord, k=0, windows=None, every=10, min_gap=0.0):
    """``e_k(t) + int e_k <= C1 e_k(s) + C2 int z^{3/2}``."""
    q = _Quantities(record, k)
    windows = windows or window_indices(q.t, every, min_gap)
    lhs = np.array([q.e[j] + q.integral("e", i, j) for i, j in windows])
    es = np.array([q.e[i] for i, _ in windows])
    iz = np.array([q.integral("z32", i, j) for i, j in windows])
    C1 = _max_ratio(lhs, es)
    pareto = _lp_min(lhs, [es, iz])
    variants = {"pareto_C1": None, "pareto_C2": None}
    if pareto is not None:
        variants = {"pareto_C1": float(pareto[0]), "pareto_C2": float(pareto[1])}
    per = [(q.t[i], q.t[j], float(l / e) if e > 0 else 0.0) for (i, j), l, e in zip(windows, lhs, es)]
    return RatioReport("observability", {"C1": C1, "C2": 0.0}, variants, per,
                       holds=np.isfinite(C1))


def dissipation_lower_bound(record: EnergyRecord, k=0, windows=None, every=10, min_gap=0.0):
    """``int e_k <= c2 int d_k + c3 (e_k(t) + e_k(s)) + c4 int z^{3/2}``.

    Primary fit, with ``c4 = 0``: the smallest ``c3``, then the smallest
    ``c2`` given that ``c3``.  Decaying records usually give ``c3 = 0`` and
    ``c2`` equal to the plain ratio ``int e / int d``.  The opposite order
    (``c2`` first) and the three-constant fit are variants.
    """
    q = _Quantities(record, k)
    windows = windows or window_indices(q.t, every, min_gap)
    lhs = np.array([q.integral("e", i, j) for i, j in windows])
    idd = np.array([q.integral("d", i, j) for i, j in windows])
    ends = np.array([q.e[i] + q.e[j] for i, j in windows])
    iz = np.array([q.integral("z32", i, j) for i, j in windows])
    lex = _lexicographic(lhs, [ends, idd])
    c3, c2 = (float("inf"), float("inf")) if lex is None else map(float, lex)
    variants = {"c2_only": _max_ratio(lhs, idd)}
    rev = _lexicographic(lhs, [idd, ends])
    if rev is not None:
        variants.update({"c2_first_c2": float(rev[0]), "c2_first_c3": float(rev[1])})
    lex3 = _lexicographic(lhs, [idd, ends, iz])
    if lex3 is not None:
        variants.update({"lex3_c2": float(lex3[0]), "lex3_c3": float(lex3[1]),
                         "lex3_c4": float(lex3[2])})
    return RatioReport("dissipation_lower_bound", {"c2": c2, "c3": c3, "c4": 0.0}, variants,
                       holds=lex is not None)


def regularity_ratio(record: EnergyRecord, windows=None, every=10, min_gap=0.0):
    """``z(t) + int z <= c5 (z(s) + e(t) + z(t)^2) + c6 int (e + z^{3/2})``.

    Primary fit: minimal ``c5`` with ``c6 = 0``.  Variants: the LP minimising
    ``c5 + c6`` and the minimal ``c6`` when ``c5`` is fixed at twice the
    primary value.
    """
    q = _Quantities(record, 3)
    windows = windows or window_indices(q.t, every, min_gap)
    lhs = np.array([q.z[j] + q.integral("z", i, j) for i, j in windows])
    first = np.array([q.z[i] + q.e3[j] + q.z[j] ** 2 for i, j in windows])
    second = np.array([q.integral("e3", i, j) + q.integral("z32", i, j) for i, j in windows])
    c5 = _max_ratio(lhs, first)
    variants = {}
    sol = _lp_min(lhs, [first, second])
    if sol is not None:
        variants["lp_c5"], variants["lp_c6"] = float(sol[0]), float(sol[1])
    rest = np.maximum(lhs - 2 * c5 * first, 0.0) if np.isfinite(c5) else lhs
    variants["c6_at_2c5"] = _max_ratio(rest, second)
    return RatioReport("regularity", {"c5": c5, "c6": 0.0}, variants, holds=np.isfinite(c5))


def barrier_constant(z_s, z_t, gap):
    """Smallest ``C`` with ``(1 + gap / C) z_t <= C z_s``."""
    if z_t <= 0:
        return 0.0
    if z_s <= 0:
        return float("inf")
    return float((z_t + np.sqrt(z_t**2 + 4.0 * z_s * gap * z_t)) / (2.0 * z_s))


def halving_time(C):
    """``T`` with ``C^2 / (C + T) = 1/2``."""
    return 2.0 * C * C - C


def barrier_check(record: EnergyRecord, windows=None, every=10, min_gap=0.0, series="z3",
                  slack=0.05):
    """Minimal ``C`` in ``(1 + (t - s)/C) z(t) <= C z(s)`` over all windows.

    Also checks the geometric bound ``z(nT) <= 2^{-n} z(0)`` at the halving
    time ``T = 2 C^2 - C`` for every ``n`` with ``nT`` inside the record.
    """
    t = record.t
    z = record.series(series)
    windows = windows or window_indices(t, every, min_gap)
    Cs = [barrier_constant(z[i], z[j], t[j] - t[i]) for i, j in windows]
    C = max(Cs, default=0.0)
    T = halving_time(C) if np.isfinite(C) else float("inf")
    geometric = []
    ok = True
    if np.isfinite(T) and T > 0 and z[0] > 0:
        n = 1
        while n * T <= t[-1] + 1e-9:
            val = float(np.interp(n * T, t, z))
            bound = 2.0 ** (-n) * z[0]
            geometric.append((n, n * T, val, bound))
            # nT need not be a window endpoint, hence the slack
            ok &= val <= bound * (1 + slack)
            n += 1
    return RatioReport("barrier", {"Cbar": C}, {"halving_time": T, "geometric": geometric},
                       holds=bool(ok and np.isfinite(C)))


def summary_constants(record: EnergyRecord, k=0, every=10, min_gap=0.0):
    """The constants collected in ``summary.json``."""
    obs = observability_constants(record, k, every=every, min_gap=min_gap)
    low = dissipation_lower_bound(record, k, every=every, min_gap=min_gap)
    reg = regularity_ratio(record, every=every, min_gap=min_gap)
    bar = barrier_check(record, every=every, min_gap=min_gap)
    consts = {**obs.constants, **{k_: low.constants[k_] for k_ in ("c2", "c3", "c4")},
              **reg.constants, **bar.constants}
    return consts, {"observability": obs, "lower_bound": low, "regularity": reg, "barrier": bar}
