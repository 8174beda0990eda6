import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxlab import materials as mat
from maxlab.initial_data import make_rng

from oracles import central_jacobian, kerr_negative_radius


def laws(rng):
    return [mat.kerr(1.0, 2.0), mat.kerr(1.5, 0.7, profile="saturating", profile_coeff=2.0),
            mat.cubic_chi(1.0, rng.normal(size=(3, 3, 3, 3)))]


def test_symmetrize_chi_full_symmetry_and_idempotent():
    chi = mat.symmetrize_chi(make_rng(0).normal(size=(3, 3, 3, 3)))
    for perm in itertools.permutations(range(4)):
        np.testing.assert_allclose(np.transpose(chi, perm), chi, atol=1e-15)
    np.testing.assert_allclose(mat.symmetrize_chi(chi), chi, atol=1e-15)
    with pytest.raises(ValueError):
        mat.chi_from_flat(np.zeros(80))


def test_eval_diff_is_symmetric():
    rng = make_rng(1)
    x = rng.uniform(size=(1000, 3))
    xi = 0.2 * rng.normal(size=(1000, 3))
    for law in laws(rng):
        aD = law.eval_diff(x, xi)
        assert np.abs(aD - np.swapaxes(aD, -1, -2)).max() <= 1e-12


def test_eval_diff_is_jacobian_second_order():
    rng = make_rng(2)
    x = rng.uniform(size=(200, 3))
    xi = 0.3 * rng.normal(size=(200, 3))
    for law in laws(rng):
        exact = law.eval_diff(x, xi)
        errs = [np.abs(central_jacobian(lambda v: law.apply(x, v), xi, h) - exact).max()
                for h in (1e-2, 5e-3)]
        assert np.log2(errs[0] / errs[1]) >= 1.9


def test_linear_laws():
    assert mat.constant_scalar(2.0).is_linear
    assert mat.kerr(1.0, 0.0).is_linear and not mat.kerr(1.0, 1.0).is_linear
    assert mat.cubic_chi(1.0).is_linear
    t = np.diag([1.0, 2.0, 3.0])
    law = mat.linear_tensor(t)
    np.testing.assert_allclose(law.eval(np.zeros(3), np.ones(3)), t)
    np.testing.assert_allclose(law.eval_diff(np.zeros(3), np.ones(3)), t)
    with pytest.raises(ValueError):
        mat.MaterialLaw("plastic")


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), size=st.floats(1e-6, 0.1))
def test_newton_inversion_property(seed, size):
    rng = make_rng(seed)
    x = rng.uniform(size=(50, 3))
    d = rng.normal(size=(50, 3))
    d *= size / np.linalg.norm(d, axis=1, keepdims=True)
    for law in (mat.kerr(1.0, 1.0), mat.cubic_chi(1.0, 0.3 * np.eye(9).reshape(3, 3, 3, 3))):
        xi, info = mat.invert_constitutive(law, x, d, return_info=True)
        assert np.abs(law.apply(x, xi) - d).max() < 1e-12
        assert info.iterations <= 8


def test_newton_with_shift_solves_shifted_system():
    rng = make_rng(3)
    x = rng.uniform(size=(20, 3))
    d = 0.05 * rng.normal(size=(20, 3))
    S = 0.25 * np.eye(3)
    law = mat.kerr(1.0, 5.0)
    xi = mat.invert_constitutive(law, x, d, shift=S)
    np.testing.assert_allclose(law.apply(x, xi) + xi @ S, d, atol=1e-13)


def test_newton_failure_raises():
    law = mat.kerr(1.0, 1.0)
    with pytest.raises(mat.NewtonError):
        mat.invert_constitutive(law, np.zeros((1, 3)), np.array([[50.0, 0, 0]]), max_iter=1)


def test_positivity_radius_closed_form():
    # a_D = 1 + c|xi|^2 (I + 2 xi xi^T / |xi|^2): smallest eigenvalue 1 + 3c r^2 when c < 0
    law = mat.kerr(1.0, -1.0)
    r = mat.positivity_radius(law, 0.5)
    exact = kerr_negative_radius(-1.0, 0.5)
    assert exact - 0.0025 <= r <= exact
    assert mat.positivity_radius(mat.kerr(1.0, 1e6), 0.5) == 1.0
    with pytest.raises(mat.PositivityError):
        mat.positivity_radius(mat.constant_scalar(0.8), 0.5)
    assert mat.positivity_radius(mat.constant_scalar(0.8), 0.5, strict=False) == 0.0


def test_conductivity_check():
    s = mat.Conductivity(0.5)
    np.testing.assert_allclose(s.eval(np.zeros((2, 3))), np.broadcast_to(0.5 * np.eye(3), (2, 3, 3)))
    s.check(np.zeros((2, 3)), 0.5)
    with pytest.raises(mat.PositivityError):
        mat.Conductivity(0.1).check(np.zeros((1, 3)), 0.5)


def test_sphere_directions_unit():
    d = mat.sphere_directions(64)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-14)
    assert np.abs(d.mean(axis=0)).max() < 0.05
