import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxlab.grid import (BoxGrid, LayoutError, VectorField, apply_pec, boundary_pairing,
                         curl_dual, curl_primal, div_field, grad_scalar, inner, norm, sample,
                         sbp_diff, sobolev_levels, tangential_boundary_max, to_nodes)
from maxlab.initial_data import make_rng

from oracles import trapezoid_x_squared, yee_curl_loops, yee_div_loops


def random_field(g, loc, rng):
    return VectorField([rng.normal(size=g.comp_shape(loc, c)) for c in range(3)], loc)


def test_component_shapes_yee():
    g = BoxGrid((1.0, 2.0, 3.0), (8, 9, 10), "yee")
    assert g.comp_shape("edge", 0) == (8, 10, 11)
    assert g.comp_shape("face", 0) == (9, 9, 10)
    assert g.comp_shape("node") == (9, 10, 11)
    assert g.comp_shape("cell") == (8, 9, 10)


def test_rejects_bad_grids():
    with pytest.raises(LayoutError):
        BoxGrid(1.0, 8, "hex")
    with pytest.raises(ValueError):
        BoxGrid(1.0, 4, "yee")
    with pytest.raises(ValueError):
        BoxGrid(-1.0, 8, "yee")


def test_curl_matches_loop_oracle():
    g = BoxGrid((1.0, 1.3, 0.7), (8, 9, 10), "yee")
    u = random_field(g, "edge", make_rng(0))
    c = curl_primal(g, u)
    ref = yee_curl_loops(*u.comps, g.spacing)
    for a, b in zip(c.comps, ref):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_div_matches_loop_oracle():
    g = BoxGrid((1.0, 1.3, 0.7), (8, 9, 10), "yee")
    f = random_field(g, "face", make_rng(1))
    np.testing.assert_allclose(div_field(g, f), yee_div_loops(*f.comps, g.spacing), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(8, 14), layout=st.sampled_from(["yee", "collocated"]),
       lx=st.floats(0.5, 2.0), ly=st.floats(0.5, 2.0))
def test_mimetic_identities_property(seed, n, layout, lx, ly):
    g = BoxGrid((lx, ly, 1.0), n, layout)
    rng = make_rng(seed)
    u = random_field(g, g.field_loc[0], rng)
    c = curl_primal(g, u)
    scale = c.max_abs() / g.h_min
    assert np.abs(div_field(g, c)).max() <= 1e-12 * scale
    p = rng.normal(size=g.comp_shape("node"))
    gp = grad_scalar(g, p)
    assert curl_primal(g, gp).max_abs() <= 1e-12 * gp.max_abs() / g.h_min


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_curl_adjoint_with_pec(seed):
    g = BoxGrid(1.0, 10, "yee")
    rng = make_rng(seed)
    u = apply_pec(g, random_field(g, "edge", rng))
    v = random_field(g, "face", rng)
    a = inner(g, curl_primal(g, u), v)
    b = inner(g, u, curl_dual(g, v), interior=True)
    assert abs(a - b) <= 1e-11 * max(1.0, abs(a))
    assert abs(boundary_pairing(g, u, v)) <= 1e-11 * max(1.0, abs(a))


def test_inner_one_is_volume():
    for layout in ("yee", "collocated"):
        g = BoxGrid((1.0, 2.0, 0.5), (8, 10, 12), layout)
        ones = sample(g, lambda X, Y, Z: (1.0, 1.0, 1.0), g.field_loc[0])
        assert inner(g, ones, ones) == pytest.approx(3 * g.volume, rel=1e-14)


def test_pec_zeroes_tangential_only():
    g = BoxGrid(1.0, 8, "yee")
    u = random_field(g, "edge", make_rng(2))
    p = apply_pec(g, u)
    assert tangential_boundary_max(g, p) == 0.0
    # the x component on the x = 0 face is normal there and must survive
    np.testing.assert_array_equal(p[0][:, 1:-1, 1:-1], u[0][:, 1:-1, 1:-1])
    with pytest.raises(LayoutError):
        apply_pec(g, random_field(g, "face", make_rng(3)))


def test_sbp_exact_on_linears_and_second_order():
    x = np.linspace(0, 1, 17)
    np.testing.assert_allclose(sbp_diff(3 * x + 1, 0, x[1]), 3.0, atol=1e-13)
    errs = []
    for n in (32, 64):
        x = np.linspace(0, 1, n + 1)
        d = sbp_diff(np.sin(x), 0, 1.0 / n)
        errs.append(np.abs(d - np.cos(x))[1:-1].max())
    assert np.log2(errs[0] / errs[1]) > 1.9


def test_sobolev_levels_of_linear_function():
    g = BoxGrid(1.0, 10, "collocated")
    u = sample(g, lambda X, Y, Z: (X, 0 * X, 0 * X), "node")
    s = sobolev_levels(g, u, 3)
    assert s[0] == pytest.approx(trapezoid_x_squared(10), rel=1e-12)
    assert s[1] == pytest.approx(1.0, rel=1e-12)
    assert abs(s[2]) < 1e-20 and abs(s[3]) < 1e-18


def test_to_nodes_exact_on_linear():
    g = BoxGrid(1.0, 8, "yee")
    u = sample(g, lambda X, Y, Z: (X + 2 * Y, Y - Z, 3 * Z + X), "edge")
    ref = sample(g, lambda X, Y, Z: (X + 2 * Y, Y - Z, 3 * Z + X), "node")
    for a, b in zip(to_nodes(g, u).comps, ref.comps):
        np.testing.assert_allclose(a, b, atol=1e-13)


def test_field_arithmetic_checks_location():
    g = BoxGrid(1.0, 8, "yee")
    e = g.zeros("edge")
    with pytest.raises(LayoutError):
        _ = e + g.zeros("face")
    assert norm(g, (e + 1.0 * e) * 2) == 0.0
