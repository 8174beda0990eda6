import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxlab import materials as mat
from maxlab.dynamics import Medium
from maxlab.frame import (Frame, FrameError, box_frames, j_of, r_of, recover_normal_normal,
                          recover_normal_tangential)
from maxlab.grid import (BoxGrid, VectorField, apply_pec, curl_primal, div_field, grad_scalar,
                         norm, pec_masks, sample_scalar)
from maxlab.helmholtz import (SolveError, decompose, div_curl_ratio, kappa, poincare_ratio,
                              poisson_dirichlet, random_pec_field, vector_potential)
from maxlab.initial_data import make_admissible, make_rng
from maxlab.scenarios import manufactured_field, recovery_errors

from oracles import discrete_laplacian_eigenvalue


def random_edge(g, rng):
    return VectorField([rng.normal(size=g.comp_shape("edge", c)) for c in range(3)], "edge")


# -- Helmholtz ---------------------------------------------------------------------------

def test_poisson_dirichlet_on_discrete_eigenfunction():
    g = BoxGrid((1.0, 2.0, 1.5), (10, 12, 14), "yee")
    f = sample_scalar(g, lambda X, Y, Z: np.sin(np.pi * X) * np.sin(2 * np.pi * Y / 2.0)
                      * np.sin(np.pi * Z / 1.5), "node")
    lam = discrete_laplacian_eigenvalue((1, 2, 1), g.extents, g.shape)
    np.testing.assert_allclose(poisson_dirichlet(g, f), -f / lam, atol=1e-14)


def test_vector_potential_curl_and_gauge():
    g = BoxGrid(1.0, 10, "yee")
    B = curl_primal(g, apply_pec(g, random_edge(g, make_rng(0))))
    w, info = vector_potential(g, B, return_info=True)
    assert norm(g, curl_primal(g, w) - B) <= 1e-10 * norm(g, B)
    assert info.iterations <= 3
    assert np.abs(div_field(g, w)[1:-1, 1:-1, 1:-1]).max() <= 1e-9 * w.max_abs() / g.h_min
    for c, m in zip(w.comps, pec_masks(g, "edge")):
        assert np.all(c[m] == 0.0)


def test_vector_potential_rejects_divergent_input():
    g = BoxGrid(1.0, 8, "yee")
    f = VectorField([np.random.default_rng(1).normal(size=g.comp_shape("face", c))
                     for c in range(3)], "face")
    with pytest.raises(SolveError):
        vector_potential(g, f)
    with pytest.raises(ValueError):
        vector_potential(g, g.zeros("edge"))


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_decomposition_is_orthogonal_and_complete(seed):
    g = BoxGrid(1.0, 10, "yee")
    rng = make_rng(seed)
    E = apply_pec(g, random_edge(g, rng))
    dec = decompose(g, E)
    assert dec.residual <= 1e-10
    assert dec.max_cross <= 1e-8
    np.testing.assert_array_equal(dec.h.comps[0], 0.0)


def test_pure_gradient_has_no_curl_part():
    g = BoxGrid(1.0, 10, "yee")
    p = sample_scalar(g, lambda X, Y, Z: np.sin(np.pi * X) * np.sin(np.pi * Y) * np.sin(np.pi * Z),
                      "node")
    dec = decompose(g, grad_scalar(g, p))
    assert norm(g, dec.w_part) <= 1e-12
    np.testing.assert_allclose(dec.p, p, atol=1e-12)


def test_poincare_ratio_bounded_by_first_eigenvalue():
    # |w| / |curl w| on divergence-free fields is at most 1 / sqrt(lambda_min)
    g = BoxGrid(1.0, 12, "yee")
    m = Medium(g, mat.constant_scalar(1.0), mat.constant_scalar(1.0), mat.Conductivity(0.5))
    data = make_admissible(m, 1, 1.0, "bump-EH-linear-mu")
    r = poincare_ratio(g, vector_potential(g, m.b_of(data.H0)))
    lam_min = discrete_laplacian_eigenvalue((1, 1, 0), g.extents, g.shape)
    assert 0 < r <= 1 / np.sqrt(lam_min) * (1 + 1e-9)


def test_random_pec_field_and_curl_div_ratio():
    g = BoxGrid(1.0, 12, "collocated")
    rng = make_rng(3)
    u = random_pec_field(g, rng)
    for c, m in zip(u.comps, pec_masks(g, "node")):
        assert np.abs(c[m]).max() < 1e-14
    a = np.broadcast_to(np.eye(3), g.comp_shape("node") + (3, 3))
    r = div_curl_ratio(g, u, a)
    assert 0 < r < 10
    assert kappa(g, 2 * u, a) == pytest.approx(2 * kappa(g, u, a), rel=1e-12)
    assert div_curl_ratio(g, g.zeros("node"), a) == 0.0


# -- frames -------------------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_cross_product_matrix(v):
    xi, u = np.array(v[:3]), np.array(v[3:])
    np.testing.assert_allclose(j_of(xi) @ u, np.cross(xi, u), atol=1e-12)


def test_r_inverts_cross_on_tangent_plane():
    rng = np.random.default_rng(0)
    for fr in box_frames():
        nu = fr.nu
        w = rng.normal(size=3)
        np.testing.assert_allclose(r_of(nu) @ np.cross(nu, w), w - nu * (nu @ w), atol=1e-14)
        B = fr.basis()
        np.testing.assert_allclose(B @ B.T, np.eye(3), atol=1e-15)
    with pytest.raises(FrameError):
        r_of([1.0, 1.0, 0.0])


def test_frames_cover_box():
    names = sorted(f.name for f in box_frames())
    assert names == ["x+", "x-", "y+", "y-", "z+", "z-"]
    assert Frame(2, 0).layer_index(17) == 1 and Frame(2, 1).layer_index(17) == 15


def test_tangential_recovery_exact_for_quadratics():
    g = BoxGrid(1.0, 10, "collocated")
    X, Y, Z = g.coords("node")
    u = VectorField([X * Y + Z**2, Y * Z - X**2, X * Z + Y**2], "node")
    f = curl_primal(g, u)
    for fr in box_frames():
        got = recover_normal_tangential(g, u, f, fr)
        # exact d_nu u at the layer, from the closed form of the gradient
        i = fr.layer_index(11)
        grads = np.array([[Y, X, 2 * Z], [-2 * X, Z, Y], [Z, 2 * Y, X]])
        J = np.take(np.moveaxis(grads, (0, 1), (-2, -1)), i, axis=fr.axis)
        exact = J @ fr.nu
        tan = exact - np.einsum("...i,i->...", exact, fr.nu)[..., None] * fr.nu
        np.testing.assert_allclose(got, tan, atol=1e-12)


def test_normal_recovery_converges():
    e16 = recovery_errors(16)
    e32 = recovery_errors(32)
    assert e16[0] < 1e-12 and e32[0] < 1e-12
    assert np.log2(e16[1] / e32[1]) >= 0.8


def test_normal_recovery_rejects_degenerate_coefficient():
    g = BoxGrid(1.0, 10, "collocated")
    X, Y, Z = g.coords("node")
    u = VectorField(manufactured_field(X, Y, Z), "node")
    a = np.zeros(g.comp_shape("node") + (3, 3))
    with pytest.raises(FrameError):
        recover_normal_normal(g, u, a, np.zeros(g.comp_shape("node")), box_frames()[0])
