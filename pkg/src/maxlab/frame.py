"""Boundary frames and recovery of normal derivatives from curl and divergence.

On each face of the box the frame ``(tau1, tau2, nu)`` is a constant,
axis-aligned orthonormal basis with ``nu`` the outward normal, so every
derivative of a frame vector vanishes.  The recovery formulas are evaluated
on the first interior node layer of the collocated grid.

The tangential part of the normal derivative comes from the curl:

    d_nu u^tau = R(nu) (curl u - sum_i J(tau_i) d_tau_i u)

and the normal part from the divergence of ``a u``:

    a_nunu d_nu u_nu = Div(a u) - D(a) u

where ``D(a) u`` collects every term except ``a_nunu d_nu u_nu``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import VectorField, curl_primal, sbp_diff

J1 = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
J2 = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
J3 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
JS = np.stack([J1, J2, J3])


class FrameError(ValueError):
    pass


def j_of(xi):
    """Cross-product matrix: ``j_of(xi) @ u == cross(xi, u)``."""
    return np.einsum("j,jab->ab", np.asarray(xi, dtype=float), JS)


def r_of(nu):
    """Inverse of ``J(nu)`` on the tangent plane, extended by zero along ``nu``."""
    nu = np.asarray(nu, dtype=float)
    if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
        raise FrameError(f"r_of needs a unit vector, got |nu| = {np.linalg.norm(nu)}")
    return -j_of(nu)


@dataclass(frozen=True)
class Frame:
    """Axis-aligned frame of one box face."""

    axis: int
    side: int  # 0 for the low face, 1 for the high face

    @property
    def nu(self):
        v = np.zeros(3)
        v[self.axis] = 1.0 if self.side else -1.0
        return v

    @property
    def tangent_axes(self):
        return tuple(ax for ax in range(3) if ax != self.axis)

    @property
    def taus(self):
        out = []
        for ax in self.tangent_axes:
            v = np.zeros(3)
            v[ax] = 1.0
            out.append(v)
        return out

    @property
    def name(self):
        return "xyz"[self.axis] + ("+" if self.side else "-")

    def basis(self):
        return np.stack(self.taus + [self.nu])

    def lower_order_terms(self, u_layer):
        """Frame-derivative terms of the curl expansion.

        They involve ``d_nu tau_i`` only, which is zero for the flat faces of
        a box; kept explicit so the full expansion is visible in the code.
        """
        d_nu_tau = np.zeros((2, 3))
        out = np.zeros_like(u_layer)
        for tau, dtau in zip(self.taus, d_nu_tau):
            out += dtau * (u_layer @ tau)[..., None] + tau * (u_layer @ dtau)[..., None]
        return out

    def layer_index(self, n_nodes):
        return 1 if self.side == 0 else n_nodes - 2


def box_frames():
    return [Frame(ax, side) for ax in range(3) for side in (0, 1)]


def _layer(arr, frame, n_nodes, offset=0):
    idx = frame.layer_index(n_nodes) + offset
    return np.take(arr, idx, axis=frame.axis)


def _tangential_derivative(grid, arr, frame, tangent_axis):
    """d/dtau of a node array restricted to the frame layer."""
    n = grid.shape[frame.axis] + 1
    lay = _layer(arr, frame, n)
    ax = tangent_axis if tangent_axis < frame.axis else tangent_axis - 1
    return sbp_diff(lay, ax, grid.spacing[tangent_axis])


def normal_derivative_direct(grid, arr, frame):
    """Central difference of a node array along ``nu`` on the frame layer."""
    n = grid.shape[frame.axis] + 1
    sgn = frame.nu[frame.axis]
    up = _layer(arr, frame, n, +1)
    dn = _layer(arr, frame, n, -1)
    return sgn * (up - dn) / (2.0 * grid.spacing[frame.axis])


def _layer_points(grid, u, frame):
    n = grid.shape[frame.axis] + 1
    return np.stack([_layer(c, frame, n) for c in u.comps], axis=-1)


def recover_normal_tangential(grid, u, f, frame):
    """Tangential part of ``d_nu u`` on the frame layer, from ``f = curl u``.

    Returns a ``(n_a, n_b, 3)`` array of vectors orthogonal to ``nu``.
    """
    if u.loc != "node" or f.loc != "node":
        raise FrameError("recovery works on node fields of the collocated layout")
    f_l = _layer_points(grid, f, frame)
    rhs = f_l.copy()
    for tau, ax in zip(frame.taus, frame.tangent_axes):
        d_tau_u = np.stack([_tangential_derivative(grid, c, frame, ax) for c in u.comps], axis=-1)
        rhs -= d_tau_u @ j_of(tau).T
    out = rhs @ r_of(frame.nu).T
    return out + frame.lower_order_terms(_layer_points(grid, u, frame))


def _component(u, vec):
    return sum(vec[c] * u.comps[c] for c in range(3) if vec[c] != 0.0)


def _frame_entry(a, xi, zeta):
    return np.einsum("...ij,i,j->...", a, xi, zeta)


def d_operator(grid, u, a, frame, f=None):
    """``D(a) u`` on the frame layer: every term of ``Div(a u)`` except
    ``a_nunu d_nu u_nu``.

    ``a`` is a node tensor field ``(..., 3, 3)``; ``f`` the curl of ``u``
    (computed discretely when omitted).
    """
    if f is None:
        f = curl_primal(grid.with_layout("collocated"), u)
    n = grid.shape[frame.axis] + 1
    nu = frame.nu
    basis = list(zip(frame.taus, frame.tangent_axes)) + [(nu, frame.axis)]
    a_l = _layer(a, frame, n)
    dnu_tau = recover_normal_tangential(grid, u, f, frame)
    total = np.zeros(a_l.shape[:-2])
    for p, (xi, ax_xi) in enumerate(basis):
        for q, (zeta, _) in enumerate(basis):
            u_z = _component(u, zeta)
            if not (p == 2 and q == 2):
                if p == 2:
                    d_u = dnu_tau @ zeta
                else:
                    d_u = _tangential_derivative(grid, u_z, frame, ax_xi)
                total += _frame_entry(a_l, xi, zeta) * d_u
            a_xz = _frame_entry(a, xi, zeta)
            if p == 2:
                d_a = normal_derivative_direct(grid, a_xz, frame)
            else:
                d_a = _tangential_derivative(grid, a_xz, frame, ax_xi)
            total += d_a * _layer(u_z, frame, n)
    return total


def recover_normal_normal(grid, u, a, phi, frame, f=None, eta=1e-12):
    """``d_nu u_nu`` on the frame layer from ``phi = Div(a u)``."""
    n = grid.shape[frame.axis] + 1
    a_nn = _frame_entry(_layer(a, frame, n), frame.nu, frame.nu)
    if np.any(a_nn < eta):
        raise FrameError(f"degenerate coefficient: min a_nunu = {a_nn.min():.3g} < eta = {eta}")
    phi_l = _layer(np.asarray(phi), frame, n)
    return (phi_l - d_operator(grid, u, a, frame, f)) / a_nn


def _cumtrapz(y, t):
    out = np.zeros_like(y)
    dt = np.diff(t).reshape((-1,) + (1,) * (y.ndim - 1))
    out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]), axis=0)
    return out


def recover_normal_normal_ode(grid, times, us, a_list, sigma, frame, phi0=None,
                              psi=None, fs=None):
    """``d_nu u_nu`` at the last time from the conduction-divergence ODE.

    ``times`` is the sample grid, ``us`` and ``a_list`` the fields and node
    coefficient tensors at those times, ``sigma`` the node conductivity
    tensor.  ``phi0`` is ``Div(a(0) u(0))`` (any node scalar; defaults to the
    discrete divergence), ``psi`` an optional list of node scalars and ``fs``
    optional curls.  Both time integrals use the trapezoidal rule.
    """
    times = np.asarray(times, dtype=float)
    if len(us) == 0 or len(us) != len(times) or len(a_list) != len(times):
        raise FrameError("history must hold one (u, a) pair per sample time")
    n = grid.shape[frame.axis] + 1
    fs = fs if fs is not None else [None] * len(us)
    gam, Da, Ds, ps = [], [], [], []
    s_l = _layer(sigma, frame, n)
    for k, (u, a) in enumerate(zip(us, a_list)):
        a_nn = _frame_entry(_layer(a, frame, n), frame.nu, frame.nu)
        g = _frame_entry(s_l, frame.nu, frame.nu) / a_nn
        if np.any(g <= 0.0):
            raise FrameError("conduction rate gamma must be positive")
        gam.append(g)
        Da.append(d_operator(grid, u, a, frame, fs[k]))
        Ds.append(d_operator(grid, u, sigma, frame, fs[k]))
        ps.append(np.zeros_like(g) if psi is None else _layer(np.asarray(psi[k]), frame, n))
    gam, Da, Ds, ps = map(np.array, (gam, Da, Ds, ps))
    if phi0 is None:
        from .grid import div_field
        au0 = np.einsum("...ij,...j->...i", a_list[0], us[0].as_points())
        phi0 = div_field(grid.with_layout("collocated"), VectorField.from_points(au0))
    phi0_l = _layer(np.asarray(phi0), frame, n)

    G = _cumtrapz(gam, times)
    kernel = np.exp(-(G[-1] - G))
    integrand = kernel * (gam * Da - Ds - ps)
    integral = _cumtrapz(integrand, times)[-1]
    a_nn_t = _frame_entry(_layer(a_list[-1], frame, n), frame.nu, frame.nu)
    return (kernel[0] * phi0_l - Da[-1] + integral) / a_nn_t
