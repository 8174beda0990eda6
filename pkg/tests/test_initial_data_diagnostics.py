import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxlab import materials as mat
from maxlab.diagnostics import energies, energy_identity_residual
from maxlab.dynamics import Medium, time_derivatives
from maxlab.grid import BoxGrid, inner, sobolev_levels
from maxlab.initial_data import (BumpSet, boundary_tangential_violation, check_compatibility,
                                 make_admissible, make_rng, pair_h3_norm, smooth_bump)
from maxlab.scenarios import aux_convergence, aux_lossless_drift


def media():
    yee = BoxGrid(1.0, 16, "yee")
    col = BoxGrid(1.0, 16, "collocated")
    sig = mat.Conductivity(0.5 * np.eye(3))
    return [
        (Medium(yee, mat.constant_scalar(1.0), mat.constant_scalar(1.0), sig), "bump-EH-linear-mu"),
        (Medium(yee, mat.constant_scalar(2.0), mat.constant_scalar(1.0), sig), "bump-E"),
        (Medium(col, mat.kerr(1.0, 1e6), mat.kerr(1.0, 1e6), sig), "projected-EH"),
    ]


def test_rng_is_seeded_and_independent_of_global_state():
    a = make_rng(42).normal(size=5)
    np.random.seed(0)
    b = make_rng(42).normal(size=5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, make_rng(43).normal(size=5))
    assert isinstance(make_rng(1).bit_generator, np.random.Philox)


def test_smooth_bump_support_and_peak():
    r2 = np.array([0.0, 0.25, 0.999, 1.0, 4.0])
    b = smooth_bump(r2)
    assert b[0] == 1.0 and b[1] == pytest.approx(0.75**6)
    assert b[3] == 0.0 and b[4] == 0.0


def test_bumps_stay_inside_box():
    for seed in range(20):
        bs = BumpSet.random(make_rng(seed), (1.0, 2.0, 1.0))
        lo = bs.centers - bs.radii[:, None]
        hi = bs.centers + bs.radii[:, None]
        assert np.all(lo > 0) and np.all(hi < np.array([1.0, 2.0, 1.0]))


@pytest.mark.parametrize("case", range(3))
def test_admissible_data_compatible_with_requested_norm(case):
    m, style = media()[case]
    for seed in (0, 1):
        data = make_admissible(m, seed, 1e-2, style)
        assert data.r == pytest.approx(1e-2, rel=1e-10)
        assert pair_h3_norm(m.grid, data.E0, data.H0) == pytest.approx(1e-2, rel=1e-10)
        rep = check_compatibility(data, m)
        assert rep["passed"], rep


def test_compatibility_detects_tangential_violation():
    m, style = media()[0]
    data = make_admissible(m, 0, 1e-2, style)
    data.E0 = boundary_tangential_violation(m.grid, data.E0, 1e-3)
    assert not check_compatibility(data, m)["passed"]


def test_same_seed_same_data_and_zero_amplitude():
    m, style = media()[0]
    a = make_admissible(m, 7, 1e-2, style)
    b = make_admissible(m, 7, 1e-2, style)
    for x, y in zip(a.E0.comps + a.H0.comps, b.E0.comps + b.H0.comps):
        np.testing.assert_array_equal(x, y)
    z = make_admissible(m, 7, 0.0, style)
    assert z.E0.max_abs() == 0.0 and z.r == 0.0
    with pytest.raises(ValueError):
        make_admissible(m, 0, 1e-2, "gaussian")
    with pytest.raises(ValueError):
        make_admissible(media()[2][0], 0, 1e-2, "bump-EH-linear-mu")


def test_energies_match_direct_inner_products():
    m, style = media()[1]
    g = m.grid
    data = make_admissible(m, 3, 1e-2, style)
    stack = time_derivatives(m, data.E0, data.H0, order=3)
    e, d, z = energies(stack, m)
    e0 = 0.5 * (2.0 * inner(g, data.E0, data.E0) + inner(g, data.H0, data.H0))
    assert e[0] == pytest.approx(e0, rel=1e-12)
    assert d[0] == pytest.approx(0.5 * inner(g, data.E0, data.E0), rel=1e-12)
    z3 = max(sobolev_levels(g, stack.E[j], 3 - j).sum() + sobolev_levels(g, stack.H[j], 3 - j).sum()
             for j in range(4))
    assert z[3] == pytest.approx(z3, rel=1e-12)
    assert np.all(np.diff(e) >= 0) and np.all(np.diff(z) >= 0)


@settings(max_examples=5, deadline=None)
@given(scale=st.floats(0.1, 10.0))
def test_linear_energies_scale_quadratically(scale):
    m, style = media()[0]
    data = make_admissible(m, 1, 1e-2, style)
    e1, _, z1 = energies(time_derivatives(m, data.E0, data.H0), m)
    e2, _, z2 = energies(time_derivatives(m, data.E0 * scale, data.H0 * scale), m)
    np.testing.assert_allclose(e2, scale**2 * e1, rtol=1e-12)
    np.testing.assert_allclose(z2, scale**2 * z1, rtol=1e-12)


def test_aux_energy_identity_second_order_and_lossless_drift():
    rows, rec = aux_convergence(BoxGrid(1.0, 12, "yee"), 0.02, 30, 2)
    ratios = [r["ratio"] for r in rows[1:]]
    assert all(3 <= r <= 5 for r in ratios), ratios
    res, rel = energy_identity_residual(rec)
    assert rel < 1e-3
    drift, _ = aux_lossless_drift(BoxGrid(1.0, 12, "yee"), steps=300)
    assert drift <= 1e-10
