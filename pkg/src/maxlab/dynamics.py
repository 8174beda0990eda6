"""Material coupling on a grid and instantaneous time derivatives of the fields.

A :class:`Medium` binds the permittivity, permeability and conductivity to a
grid.  On the yee layout the laws must be state independent with diagonal
tensors; each diagonal entry is sampled at the location of the component it
multiplies.  On the collocated layout tensors are full ``(..., 3, 3)`` arrays
at the nodes.

:func:`time_derivatives` evaluates ``d_t^k E`` and ``d_t^k H`` for ``k <= 3``
from the differentiated system

    epsD(E) d_t^{k+1} E = curl d_t^k H - sigma d_t^k E - ft_k
    muD(H)  d_t^{k+1} H = -curl d_t^k E - gt_k

with ``ft_k = sum_{j=1}^k C(k, j) d_t^j epsD(E) d_t^{k+1-j} E``.  The time
derivatives of ``epsD(E(t))`` follow from the chain rule; the derivatives of
``epsD`` with respect to the state are central differences of ``eval_diff``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .grid import VectorField, apply_pec, curl_dual, curl_primal
from .materials import Conductivity, MaterialLaw, PositivityError, invert_constitutive

# relative size of the state perturbation used for derivatives of epsD
STATE_STEP = 1e-3


class MediumError(ValueError):
    pass


def _is_diag(t):
    return isinstance(t, tuple)


def tensor_apply(t, u):
    """Multiply a tensor field (diagonal tuple or full array) with a vector field."""
    if t is None:
        return VectorField([np.zeros_like(c) for c in u.comps], u.loc)
    if _is_diag(t):
        return VectorField([a * c for a, c in zip(t, u.comps)], u.loc)
    return VectorField.from_points(np.einsum("...ij,...j->...i", t, u.as_points()), u.loc)


def tensor_solve(t, u):
    if _is_diag(t):
        return VectorField([c / a for a, c in zip(t, u.comps)], u.loc)
    return VectorField.from_points(np.linalg.solve(t, u.as_points()[..., None])[..., 0], u.loc)


def tensor_add(s, t, alpha=1.0):
    """``s + alpha t``; ``None`` stands for the zero tensor."""
    if t is None:
        return s
    if s is None:
        return tuple(alpha * a for a in t) if _is_diag(t) else alpha * t
    if _is_diag(s):
        return tuple(a + alpha * b for a, b in zip(s, t))
    return s + alpha * t


def tensor_min_eig(t):
    if t is None:
        return 0.0
    if _is_diag(t):
        return min(float(a.min()) for a in t)
    return float(np.linalg.eigvalsh(t)[..., 0].min())


class Medium:
    """Material laws bound to a grid.

    ``delta_tilde`` is the positivity radius: the largest admissible
    pointwise field magnitude.  It defaults to the radius computed from the
    laws (capped at 1).
    """

    def __init__(self, grid, eps: MaterialLaw, mu: MaterialLaw, sigma: Conductivity,
                 delta_tilde=None, newton_tol=1e-13):
        self.grid = grid
        self.eps = eps
        self.mu = mu
        self.sigma_law = sigma
        self.newton_tol = newton_tol
        self.eloc, self.hloc = grid.field_loc
        if delta_tilde is None:
            from .materials import positivity_radius
            delta_tilde = min(positivity_radius(eps, eps.eta), positivity_radius(mu, mu.eta))
        self.delta_tilde = float(delta_tilde)
        if grid.layout == "yee":
            if not (eps.is_linear and mu.is_linear):
                raise MediumError("the yee layout needs state-independent laws; "
                                  "use the collocated layout for nonlinear media")
            self._eps_d = self._diag(eps.eval, self.eloc, "permittivity")
            self._mu_d = self._diag(mu.eval, self.hloc, "permeability")
            self.sigma = self._diag(lambda x, xi: sigma.eval(x), self.eloc, "conductivity")
        else:
            self.x = grid.points("node")
            self.sigma = sigma.eval(self.x)
            if not eps.is_linear:
                self._eps_d = None
            else:
                self._eps_d = eps.eval(self.x, np.zeros_like(self.x))
            self._mu_d = None if not mu.is_linear else mu.eval(self.x, np.zeros_like(self.x))

    def _diag(self, fn, loc, what):
        out = []
        for c in range(3):
            x = self.grid.points(loc, c)
            t = fn(x, np.zeros_like(x))
            off = t - np.einsum("...ii->...i", t)[..., None] * np.eye(3)
            if np.abs(off).max(initial=0.0) > 1e-14:
                raise MediumError(f"the yee layout needs a diagonal {what} tensor")
            out.append(np.ascontiguousarray(t[..., c, c]))
        return tuple(out)

    @property
    def is_linear(self):
        return self.eps.is_linear and self.mu.is_linear

    # -- pointwise tensors --------------------------------------------------

    def eps_of(self, E):
        if self.eps.is_linear:
            return self._eps_d
        return self.eps.eval(self.x, E.as_points())

    def epsD_of(self, E):
        if self.eps.is_linear:
            return self._eps_d
        return self.eps.eval_diff(self.x, E.as_points())

    def mu_of(self, H):
        if self.mu.is_linear:
            return self._mu_d
        return self.mu.eval(self.x, H.as_points())

    def muD_of(self, H):
        if self.mu.is_linear:
            return self._mu_d
        return self.mu.eval_diff(self.x, H.as_points())

    def d_of(self, E):
        return tensor_apply(self.eps_of(E), E)

    def b_of(self, H):
        return tensor_apply(self.mu_of(H), H)

    def e_from_d(self, D, guess=None, shift_dt=0.0):
        """Invert ``D = eps(E) E + shift_dt * sigma E`` for ``E``."""
        if self.eps.is_linear:
            return tensor_solve(tensor_add(self._eps_d, self.sigma, shift_dt), D)
        shift = None if shift_dt == 0.0 else shift_dt * self.sigma
        g = None if guess is None else guess.as_points()
        xi = invert_constitutive(self.eps, self.x, D.as_points(), guess=g,
                                 tol=self.newton_tol, shift=shift)
        return VectorField.from_points(xi)

    def h_from_b(self, B, guess=None):
        if self.mu.is_linear:
            return tensor_solve(self._mu_d, B)
        g = None if guess is None else guess.as_points()
        xi = invert_constitutive(self.mu, self.x, B.as_points(), guess=g, tol=self.newton_tol)
        return VectorField.from_points(xi)

    # -- spatial operators ----------------------------------------------------

    def curl_e(self, E):
        return curl_primal(self.grid, E)

    def curl_h(self, H):
        return curl_dual(self.grid, H)

    def pec(self, E):
        return apply_pec(self.grid, E)

    def sigma_apply(self, E):
        return tensor_apply(self.sigma, E)

    # -- state derivatives of the differentiated tensors ----------------------

    def tensor_time_derivs(self, which, U, dUs):
        """``[d_t epsD, d_t^2 epsD, d_t^3 epsD]`` (up to ``len(dUs)``) along a path.

        ``U`` is the state and ``dUs`` its first time derivatives.  Returns
        ``None`` entries for state-independent laws.
        """
        law = self.eps if which == "eps" else self.mu
        n = len(dUs)
        if law.is_linear:
            return [None] * n
        x = self.x
        u = U.as_points()
        vs = [d.as_points() for d in dUs]
        F = lambda xi: law.eval_diff(x, xi)  # noqa: E731

        def step_for(v):
            m = np.abs(v).max(initial=0.0)
            return STATE_STEP / m if m > 0 else 0.0

        def d1(v):
            s = step_for(v)
            if s == 0.0:
                return np.zeros(u.shape + (3,))
            return (F(u + s * v) - F(u - s * v)) / (2 * s)

        def d2(v):
            s = step_for(v)
            if s == 0.0:
                return np.zeros(u.shape + (3,))
            return (F(u + s * v) - 2 * F(u) + F(u - s * v)) / s**2

        def d2_mixed(v, w):
            return 0.25 * (d2(v + w) - d2(v - w))

        def d3(v):
            s = step_for(v)
            if s == 0.0:
                return np.zeros(u.shape + (3,))
            return (F(u + 2 * s * v) - 2 * F(u + s * v) + 2 * F(u - s * v)
                    - F(u - 2 * s * v)) / (2 * s**3)

        out = [d1(vs[0])]
        if n >= 2:
            out.append(d2(vs[0]) + d1(vs[1]))
        if n >= 3:
            out.append(d3(vs[0]) + 3 * d2_mixed(vs[0], vs[1]) + d1(vs[2]))
        return out


@dataclass
class DerivativeStack:
    """Time derivatives of the fields at one instant.

    ``E[k]`` and ``H[k]`` hold ``d_t^k E`` and ``d_t^k H``; ``depsD[j - 1]``
    holds ``d_t^j epsD(E)``; ``ft[k - 1]`` and ``gt[k - 1]`` the commutators
    ``ft_k``, ``gt_k``.
    """

    t: float
    E: list
    H: list
    eps: object
    mu: object
    epsD: object
    muD: object
    depsD: list = field(default_factory=list)
    dmuD: list = field(default_factory=list)
    ft: list = field(default_factory=list)
    gt: list = field(default_factory=list)

    @property
    def order(self):
        return len(self.E) - 1

    def eps_hat(self, k):
        return self.eps if k == 0 else self.epsD

    def mu_hat(self, k):
        return self.mu if k == 0 else self.muD


def _commutator(dT, U, k):
    """``sum_{j=1}^k C(k, j) dT[j-1] U[k+1-j]``."""
    acc = None
    for j in range(1, k + 1):
        if dT[j - 1] is None:
            continue
        term = tensor_apply(dT[j - 1], U[k + 1 - j]) * comb(k, j)
        acc = term if acc is None else acc + term
    if acc is None:
        acc = VectorField([np.zeros_like(c) for c in U[0].comps], U[0].loc)
    return acc


def time_derivatives(medium: Medium, E, H, t=0.0, order=3, pec=True, commutator_order=None):
    """Compute the :class:`DerivativeStack` of ``(E, H)`` up to ``order``.

    With ``pec`` the tangential boundary values of every ``d_t^k E`` are
    zeroed, as the solver does.  The commutators ``ft_k`` are returned for
    ``k <= commutator_order`` (default ``order``), which needs the tensor
    derivatives up to that order.
    """
    if commutator_order is None:
        commutator_order = order
    commutator_order = max(commutator_order, order - 1)
    epsD = medium.epsD_of(E)
    muD = medium.muD_of(H)
    for name, t_ in (("epsD", epsD), ("muD", muD)):
        if tensor_min_eig(t_) <= 0.0:
            raise PositivityError(f"{name} is not positive definite at the current state")
    Es, Hs = [E], [H]
    dE, dH = [], []
    ft, gt = [], []
    for k in range(order):
        rhs_e = medium.curl_h(Hs[k]) - medium.sigma_apply(Es[k])
        rhs_h = -medium.curl_e(Es[k])
        if k >= 1:
            rhs_e = rhs_e - ft[k - 1]
            rhs_h = rhs_h - gt[k - 1]
        e_next = tensor_solve(epsD, rhs_e)
        if pec:
            e_next = medium.pec(e_next)
        Es.append(e_next)
        Hs.append(tensor_solve(muD, rhs_h))
        kk = k + 1
        if kk <= commutator_order:
            dE = medium.tensor_time_derivs("eps", E, Es[1:kk + 1])
            dH = medium.tensor_time_derivs("mu", H, Hs[1:kk + 1])
            ft.append(_commutator(dE, Es, kk))
            gt.append(_commutator(dH, Hs, kk))
    return DerivativeStack(t, Es, Hs, medium.eps_of(E), medium.mu_of(H), epsD, muD,
                           dE, dH, ft, gt)


def commutators(stack: DerivativeStack):
    """The commutator fields ``f_k, g_k`` (k = 2, 3) and ``ft_k, gt_k`` (k = 1..3).

    ``f_2 = d_t epsD d_t E`` and ``f_3 = d_t^2 epsD d_t E + 2 d_t epsD d_t^2 E``
    coincide with ``ft_1`` and ``ft_2``.
    """
    out = {}
    for k, (f, g) in enumerate(zip(stack.ft, stack.gt), start=1):
        out[f"ft{k}"] = f
        out[f"gt{k}"] = g
    dE, dH = stack.depsD, stack.dmuD
    zero = lambda U: VectorField([np.zeros_like(c) for c in U.comps], U.loc)  # noqa: E731
    if len(dE) >= 1:
        out["f2"] = tensor_apply(dE[0], stack.E[1]) if dE[0] is not None else zero(stack.E[1])
        out["g2"] = tensor_apply(dH[0], stack.H[1]) if dH[0] is not None else zero(stack.H[1])
    if len(dE) >= 2 and stack.order >= 2:
        f3 = zero(stack.E[1])
        g3 = zero(stack.H[1])
        if dE[1] is not None:
            f3 = tensor_apply(dE[1], stack.E[1]) + 2 * tensor_apply(dE[0], stack.E[2])
        if dH[1] is not None:
            g3 = tensor_apply(dH[1], stack.H[1]) + 2 * tensor_apply(dH[0], stack.H[2])
        out["f3"] = f3
        out["g3"] = g3
    return out
