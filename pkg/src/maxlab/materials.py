"""Nonlinear constitutive laws for the permittivity, permeability and conductivity.

A law maps a position ``x`` and a state vector ``xi`` (the electric or magnetic
field) to a symmetric 3x3 tensor ``a(x, xi)``.  The "differentiated" tensor

    a_D(x, xi)_jk = a_jk(x, xi) + sum_l d a_jl / d xi_k (x, xi) xi_l

is the exact Jacobian of ``xi -> a(x, xi) xi`` and is what enters the
time-differentiated Maxwell system.  All evaluations are vectorised over
leading axes: ``x`` and ``xi`` have shape ``(..., 3)`` and tensors come back
as ``(..., 3, 3)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

KINDS = ("constant-scalar", "linear-tensor", "kerr-isotropic", "cubic-chi")

TensorSpec = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]
ScalarSpec = Union[float, Callable[[np.ndarray], np.ndarray]]


class PositivityError(ValueError):
    """A material tensor fell below the required positivity floor."""


class NewtonError(RuntimeError):
    """Constitutive inversion did not converge."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class Profile:
    """Scalar Kerr profile ``phi`` with ``phi(0) = 0`` and its derivative."""

    name: str = "linear"
    coeff: float = 1.0

    def __call__(self, s):
        if self.name == "linear":
            return self.coeff * s
        if self.name == "saturating":
            return self.coeff * s / (1.0 + s)
        raise ValueError(f"unknown profile {self.name!r}")

    def deriv(self, s):
        if self.name == "linear":
            return self.coeff * np.ones_like(s)
        if self.name == "saturating":
            return self.coeff / (1.0 + s) ** 2
        raise ValueError(f"unknown profile {self.name!r}")


def _tensor_at(spec, x):
    x = np.asarray(x, dtype=float)
    if callable(spec):
        return np.asarray(spec(x), dtype=float)
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        arr = float(arr) * np.eye(3)
    return np.broadcast_to(arr, x.shape[:-1] + (3, 3))


def _scalar_at(spec, x):
    x = np.asarray(x, dtype=float)
    if callable(spec):
        return np.asarray(spec(x), dtype=float)
    return np.full(x.shape[:-1], float(spec))


def symmetrize_chi(chi):
    """Average a rank-4 coefficient tensor over all index permutations.

    Symmetry in ``{j, k, l}`` together with symmetry in ``{i, l}`` generates
    the full permutation group, so the result satisfies both by construction.
    """
    chi = np.asarray(chi, dtype=float)
    lead = chi.ndim - 4
    axes = list(range(lead, lead + 4))
    out = np.zeros_like(chi)
    for perm in itertools.permutations(axes):
        out += np.transpose(chi, list(range(lead)) + list(perm))
    return out / 24.0


def chi_from_flat(values):
    """Build a symmetrized chi tensor from 81 values in (i, j, k, l) order."""
    values = np.asarray(values, dtype=float)
    if values.size != 81:
        raise ValueError(f"chi needs 81 coefficients, got {values.size}")
    return symmetrize_chi(values.reshape(3, 3, 3, 3))


@dataclass(frozen=True)
class MaterialLaw:
    """A state-dependent symmetric tensor law ``a(x, xi)``.

    ``base`` is the linear part (constant, 3x3 array or callable of ``x``),
    ``coeff`` and ``profile`` parametrise the Kerr term
    ``coeff(x) * profile(|xi|^2) * I`` and ``chi`` the cubic term
    ``(sum_jk chi[i, j, k, l] xi_j xi_k)_il``.
    """

    kind: str
    base: TensorSpec = 1.0
    coeff: ScalarSpec = 0.0
    profile: Profile = field(default_factory=Profile)
    chi: Optional[np.ndarray] = None
    eta: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown law kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "cubic-chi":
            chi = np.zeros((3, 3, 3, 3)) if self.chi is None else symmetrize_chi(self.chi)
            object.__setattr__(self, "chi", chi)

    @property
    def is_linear(self):
        """True when the law does not depend on the state."""
        if self.kind in ("constant-scalar", "linear-tensor"):
            return True
        if self.kind == "kerr-isotropic":
            return not callable(self.coeff) and float(self.coeff) == 0.0
        return not np.any(self.chi)

    def eval(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        shape = np.broadcast_shapes(x.shape, xi.shape)[:-1]
        a = np.broadcast_to(_tensor_at(self.base, x), shape + (3, 3)).copy()
        if self.kind == "kerr-isotropic":
            s = np.einsum("...i,...i->...", xi, xi)
            g = _scalar_at(self.coeff, x) * self.profile(s)
            a += np.broadcast_to(g, shape)[..., None, None] * np.eye(3)
        elif self.kind == "cubic-chi":
            a += np.einsum("ijkl,...j,...k->...il", self.chi, xi, xi)
        return a

    def eval_diff(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        a = self.eval(x, xi)
        if self.kind == "kerr-isotropic":
            s = np.einsum("...i,...i->...", xi, xi)
            g = 2.0 * _scalar_at(self.coeff, x) * self.profile.deriv(s)
            a += g[..., None, None] * np.einsum("...i,...j->...ij", xi, xi)
        elif self.kind == "cubic-chi":
            a += 2.0 * np.einsum("ijkl,...j,...k->...il", self.chi, xi, xi)
        return a

    def apply(self, x, xi):
        """The constitutive map ``xi -> a(x, xi) xi``."""
        return np.einsum("...ij,...j->...i", self.eval(x, xi), xi)


def constant_scalar(value=1.0, eta=0.5):
    return MaterialLaw("constant-scalar", base=float(value), eta=eta)


def linear_tensor(tensor, eta=0.5):
    return MaterialLaw("linear-tensor", base=tensor, eta=eta)


def kerr(base=1.0, coeff=1.0, profile="linear", profile_coeff=1.0, eta=0.5):
    return MaterialLaw(
        "kerr-isotropic", base=base, coeff=coeff,
        profile=Profile(profile, profile_coeff), eta=eta,
    )


def cubic_chi(base=1.0, chi=None, eta=0.5):
    return MaterialLaw("cubic-chi", base=base, chi=chi, eta=eta)


@dataclass(frozen=True)
class Conductivity:
    """Symmetric, state-independent conductivity tensor field."""

    tensor: TensorSpec = 1.0

    def eval(self, x):
        return np.array(_tensor_at(self.tensor, np.asarray(x, dtype=float)))

    def check(self, x, eta):
        lam = np.linalg.eigvalsh(self.eval(x))[..., 0]
        if np.any(lam < eta):
            idx = np.unravel_index(np.argmin(lam), lam.shape)
            raise PositivityError(
                f"conductivity below eta={eta} at x={np.asarray(x)[idx]}: "
                f"min eigenvalue {lam[idx]:.6g}"
            )


def sphere_directions(n):
    """Quasi-uniform unit vectors on the sphere (Fibonacci lattice)."""
    i = np.arange(n) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / n)
    azim = math.pi * (1.0 + 5.0 ** 0.5) * i
    return np.stack(
        [np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar), np.cos(polar)],
        axis=-1,
    )


def default_xi_grid(n_radii=401, n_dirs=64):
    radii = np.linspace(0.0, 1.0, n_radii)
    return radii, sphere_directions(n_dirs)


def positivity_radius(law, eta, xi_grid=None, x_samples=None, strict=True):
    """Largest sampled radius ``r <= 1`` keeping ``a`` and ``a_D`` above ``eta``.

    ``xi_grid`` is a pair ``(radii, directions)``; the state samples are
    ``r * d`` for every radius and direction.  ``x_samples`` defaults to the
    corners and centre of the unit box.  The lower bound ``a(x, 0) >= 2 eta``
    is checked first; with ``strict`` a violation raises, otherwise 0 is
    returned.
    """
    radii, dirs = default_xi_grid() if xi_grid is None else xi_grid
    radii = np.sort(np.asarray(radii, dtype=float))
    dirs = np.asarray(dirs, dtype=float)
    if x_samples is None:
        corners = np.array(list(itertools.product((0.0, 1.0), repeat=3)))
        x_samples = np.vstack([corners, [[0.5, 0.5, 0.5]]])
    xs = np.asarray(x_samples, dtype=float).reshape(-1, 3)

    a0 = law.eval(xs, np.zeros_like(xs))
    lam0 = np.linalg.eigvalsh(a0)[:, 0]
    if np.any(lam0 < 2.0 * eta - 1e-14):
        bad = int(np.argmin(lam0))
        if strict:
            raise PositivityError(
                f"a(x, 0) is not >= 2*eta={2 * eta} at x={xs[bad]} "
                f"(min eigenvalue {lam0[bad]:.6g})"
            )
        return 0.0

    xi = radii[:, None, None, None] * dirs[None, None, :, :]
    xx = xs[None, :, None, :]
    xi, xx = np.broadcast_arrays(xi, xx)
    lam_a = np.linalg.eigvalsh(law.eval(xx, xi))[..., 0]
    lam_d = np.linalg.eigvalsh(law.eval_diff(xx, xi))[..., 0]
    ok = (np.minimum(lam_a, lam_d) >= eta).reshape(len(radii), -1).all(axis=1)
    if ok.all():
        return float(radii[-1])
    first_bad = int(np.argmin(ok))
    return float(radii[first_bad - 1]) if first_bad > 0 else 0.0


@dataclass
class NewtonInfo:
    iterations: int
    residual: float


def invert_constitutive(law, x, d, guess=None, tol=1e-13, max_iter=25, shift=None,
                        return_info=False):
    """Solve ``a(x, xi) xi + shift xi = d`` for ``xi`` by damped Newton.

    The Jacobian is ``a_D(x, xi) + shift``; ``shift`` is an optional symmetric
    tensor field (used for the semi-implicit conduction term).  A step is
    halved while it fails to reduce the pointwise residual.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    S = None if shift is None else np.broadcast_to(np.asarray(shift, dtype=float),
                                                   d.shape + (3,))

    def residual(xi):
        r = law.apply(x, xi) - d
        if S is not None:
            r = r + np.einsum("...ij,...j->...i", S, xi)
        return r

    if guess is None:
        A0 = law.eval(x, np.zeros_like(d))
        if S is not None:
            A0 = A0 + S
        xi = np.linalg.solve(A0, d[..., None])[..., 0]
    else:
        xi = np.array(np.broadcast_to(guess, d.shape), dtype=float)

    r = residual(xi)
    rn = np.linalg.norm(r, axis=-1)
    it = 0
    while rn.max(initial=0.0) > tol:
        if it >= max_iter:
            raise NewtonError(
                f"constitutive Newton did not converge in {max_iter} iterations "
                f"(residual {rn.max():.3e})", float(rn.max()))
        J = law.eval_diff(x, xi)
        if S is not None:
            J = J + S
        step = -np.linalg.solve(J, r[..., None])[..., 0]
        lam = np.ones(rn.shape)
        for _ in range(30):
            trial = xi + lam[..., None] * step
            rt = residual(trial)
            rtn = np.linalg.norm(rt, axis=-1)
            bad = (rtn >= rn) & (rn > tol)
            if not bad.any():
                break
            lam = np.where(bad, 0.5 * lam, lam)
        xi, r, rn = trial, rt, rtn
        it += 1
    if return_info:
        return xi, NewtonInfo(it, float(rn.max(initial=0.0)))
    return xi
