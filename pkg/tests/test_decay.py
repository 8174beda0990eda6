import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import cumulative_trapezoid

from maxlab.decay import (FitError, barrier_check, barrier_constant, dissipation_lower_bound,
                          fit_decay, halving_time, observability_constants, regularity_ratio,
                          summary_constants, window_indices)
from maxlab.diagnostics import CSV_COLUMNS, EnergyRecord, cumulative_integral

from oracles import barrier_root, loglinear_fit


def synthetic_record(omega=0.5, ratio=2.0, t_end=10.0, n=201, z_scale=1e-6):
    """e_k = exp(-omega t), d_k = e_k / ratio, z_k = z_scale exp(-omega t)."""
    t = np.linspace(0.0, t_end, n)
    table = np.zeros((n, len(CSV_COLUMNS)))
    col = {c: i for i, c in enumerate(CSV_COLUMNS)}
    table[:, col["t"]] = t
    for k in range(4):
        table[:, col[f"e{k}"]] = np.exp(-omega * t)
        table[:, col[f"d{k}"]] = np.exp(-omega * t) / ratio
        table[:, col[f"z{k}"]] = z_scale * np.exp(-omega * t)
    return EnergyRecord.from_table(table)


@settings(max_examples=40, deadline=None)
@given(M=st.floats(0.1, 10), omega=st.floats(0.01, 3.0))
def test_fit_decay_recovers_exact_exponential(M, omega):
    t = np.linspace(0, 10, 50)
    fit = fit_decay(t, M * np.exp(-omega * t))
    assert fit.omega == pytest.approx(omega, rel=1e-9, abs=1e-12)
    assert fit.M == pytest.approx(M, rel=1e-9)
    assert fit.r2 == pytest.approx(1.0, abs=1e-9)


def test_fit_decay_matches_polyfit_on_noisy_data():
    rng = np.random.default_rng(7)
    t = np.linspace(2, 10, 81)
    y = 0.8 * np.exp(-0.37 * t) * np.exp(0.01 * rng.normal(size=t.size))
    fit = fit_decay(t, y, window=(2, 10), norm=2.0)
    M, om = loglinear_fit(t, y)
    assert fit.omega == pytest.approx(om, rel=1e-12)
    assert fit.M == pytest.approx(M / 2.0, rel=1e-12)
    assert 0.99 < fit.r2 < 1.0


def test_fit_decay_errors():
    with pytest.raises(FitError):
        fit_decay(np.arange(5.0), np.ones(5))
    with pytest.raises(FitError):
        fit_decay(np.arange(20.0), np.r_[np.ones(19), 0.0])


def test_cumulative_integral_matches_scipy():
    t = np.sort(np.random.default_rng(1).uniform(0, 3, 40))
    y = np.sin(t) + 2
    np.testing.assert_allclose(cumulative_integral(y, t),
                               cumulative_trapezoid(y, t, initial=0.0), rtol=1e-14)


@settings(max_examples=50, deadline=None)
@given(zs=st.floats(1e-6, 10), zt=st.floats(1e-6, 10), gap=st.floats(1e-3, 20))
def test_barrier_constant_solves_quadratic(zs, zt, gap):
    C = barrier_constant(zs, zt, gap)
    assert C == pytest.approx(barrier_root(zs, zt, gap), rel=1e-9)
    assert (1 + gap / C) * zt == pytest.approx(C * zs, rel=1e-9)


def test_barrier_edge_cases_and_halving_time():
    assert barrier_constant(1.0, 0.0, 1.0) == 0.0
    assert barrier_constant(0.0, 1.0, 1.0) == math.inf
    C = 1.3
    assert C * C / (C + halving_time(C)) == pytest.approx(0.5)


def test_observability_constant_closed_form():
    # e(t) + int_s^t e = e(s) * (e^{-w(t-s)} + (1 - e^{-w(t-s)}) / w), maximal at the longest window
    w = 0.5
    rec = synthetic_record(omega=w)
    rep = observability_constants(rec, every=10)
    L = 10.0
    exact = math.exp(-w * L) + (1 - math.exp(-w * L)) / w
    assert rep.constants["C1"] == pytest.approx(exact, rel=1e-3)
    assert rep.constants["C2"] == 0.0 and rep.holds


def test_dissipation_lower_bound_equals_ratio():
    rec = synthetic_record(ratio=3.0)
    rep = dissipation_lower_bound(rec, every=10)
    assert rep.constants["c3"] == pytest.approx(0.0, abs=1e-9)
    assert rep.constants["c2"] == pytest.approx(3.0, rel=1e-6)
    assert rep.variants["c2_only"] == pytest.approx(3.0, rel=1e-12)


def test_regularity_matches_brute_force_windows():
    rec = synthetic_record(omega=0.5, z_scale=0.3)
    t, z, e3 = rec.t, rec.series("z3"), rec.series("e3")
    Iz = cumulative_trapezoid(z, t, initial=0.0)
    best = 0.0
    for i, j in window_indices(t, every=10):
        lhs = z[j] + Iz[j] - Iz[i]
        best = max(best, lhs / (z[i] + e3[j] + z[j] ** 2))
    reg = regularity_ratio(rec, every=10)
    assert reg.constants["c5"] == pytest.approx(best, rel=1e-12)
    bar = barrier_check(rec, every=10)
    assert bar.holds and np.isfinite(bar.constants["Cbar"])


def test_summary_constants_keys_and_windows():
    rec = synthetic_record()
    consts, reports = summary_constants(rec, every=20)
    assert set(consts) == {"C1", "C2", "c2", "c3", "c4", "c5", "c6", "Cbar"}
    assert all(np.isfinite(v) for v in consts.values())
    assert set(reports) == {"observability", "lower_bound", "regularity", "barrier"}
    w = window_indices(rec.t, every=50)
    assert w == [(0, 50), (0, 100), (0, 150), (0, 200), (50, 100), (50, 150), (50, 200),
                 (100, 150), (100, 200), (150, 200)]
