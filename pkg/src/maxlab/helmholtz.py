"""Discrete Helmholtz decomposition, vector potentials and curl-div ratios.

On the yee layout an edge field ``E`` with zero tangential boundary values
splits as ``E = -dw + grad p + h`` where ``w`` is a divergence-free edge
field with zero tangential trace, ``p`` a node potential vanishing on the
boundary and ``h`` the harmonic part.  The box is simply connected with a
connected boundary, so ``h`` is identically zero.

:func:`vector_potential` solves ``curl w = g`` through the symmetric system
``(curl* curl - grad div) w = curl* g`` on the interior edges by conjugate
gradients.  On a uniform grid this operator is the componentwise Laplacian,
whose inverse (sine/cosine transforms) serves as preconditioner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft
from scipy.sparse.linalg import LinearOperator, cg

from .grid import (VectorField, curl_dual, curl_primal, div_field, grad_scalar, inner,
                   norm, pec_masks, sobolev_levels)


class SolveError(RuntimeError):
    pass


def _require_yee(grid):
    if grid.layout != "yee":
        raise ValueError("the Helmholtz tools work on the yee layout")


# -- packing of the interior-edge unknowns ---------------------------------------

class _EdgeSpace:
    def __init__(self, grid):
        self.grid = grid
        self.masks = [~m for m in pec_masks(grid, "edge")]
        self.sizes = [int(m.sum()) for m in self.masks]
        self.n = sum(self.sizes)
        self.shapes = []
        for c in range(3):
            shp = list(grid.comp_shape("edge", c))
            for ax in range(3):
                if ax != c:
                    shp[ax] -= 2
            self.shapes.append(tuple(shp))

    def pack(self, u):
        return np.concatenate([c[m] for c, m in zip(u.comps, self.masks)])

    def unpack(self, x):
        comps, k = [], 0
        for c in range(3):
            a = np.zeros(self.grid.comp_shape("edge", c))
            a[self.masks[c]] = x[k:k + self.sizes[c]]
            k += self.sizes[c]
            comps.append(a)
        return VectorField(comps, "edge")


def _interior_nodes(p):
    out = np.zeros_like(p)
    out[1:-1, 1:-1, 1:-1] = p[1:-1, 1:-1, 1:-1]
    return out


def vector_laplacian(grid, w):
    """``curl* curl w - grad div w`` with the divergence kept at interior nodes."""
    return curl_dual(grid, curl_primal(grid, w)) - grad_scalar(grid, _interior_nodes(div_field(grid, w)))


def _eig_dirichlet(n, h):
    k = np.arange(1, n + 1)
    return (2.0 - 2.0 * np.cos(np.pi * k / (n + 1))) / h**2


def _eig_neumann(n, h):
    k = np.arange(n)
    return (2.0 - 2.0 * np.cos(np.pi * k / n)) / h**2


class _ComponentPoisson:
    """Exact inverse of the componentwise edge Laplacian on a uniform grid."""

    def __init__(self, space):
        grid = space.grid
        self.space = space
        self.lam = []
        for c in range(3):
            shp = space.shapes[c]
            eig = []
            for ax in range(3):
                h = grid.spacing[ax]
                e = _eig_neumann(shp[ax], h) if ax == c else _eig_dirichlet(shp[ax], h)
                eig.append(e)
            self.lam.append(eig[0][:, None, None] + eig[1][None, :, None] + eig[2][None, None, :])

    def _solve_comp(self, r, c):
        types = [2 if ax == c else 1 for ax in range(3)]
        x = r
        for ax in range(3):
            x = fft.dct(x, type=2, axis=ax, norm="ortho") if types[ax] == 2 \
                else fft.dst(x, type=1, axis=ax, norm="ortho")
        x = x / self.lam[c]
        for ax in range(3):
            x = fft.idct(x, type=2, axis=ax, norm="ortho") if types[ax] == 2 \
                else fft.idst(x, type=1, axis=ax, norm="ortho")
        return x

    def __call__(self, x):
        sp = self.space
        out, k = [], 0
        for c in range(3):
            r = x[k:k + sp.sizes[c]].reshape(sp.shapes[c])
            out.append(self._solve_comp(r, c).ravel())
            k += sp.sizes[c]
        return np.concatenate(out)


@dataclass
class PotentialInfo:
    iterations: int
    residual: float  # |curl w - g| / |g|
    div_max: float


def vector_potential(grid, g, tol=1e-12, maxiter=500, div_tol=1e-8, return_info=False):
    """Edge field ``w`` with ``curl w = g``, ``div w = 0`` and zero tangential trace."""
    _require_yee(grid)
    if g.loc != "face":
        raise ValueError("the vector potential takes a face field")
    gn = norm(grid, g)
    if gn == 0.0:
        w = grid.zeros("edge")
        return (w, PotentialInfo(0, 0.0, 0.0)) if return_info else w
    div_g = np.abs(div_field(grid, g)).max()
    if div_g > div_tol * g.max_abs() / grid.h_min:
        raise SolveError(f"input is not divergence free (max |div g| = {div_g:.3e})")
    space = _EdgeSpace(grid)

    def matvec(x):
        return space.pack(vector_laplacian(grid, space.unpack(x)))

    A = LinearOperator((space.n, space.n), matvec=matvec, dtype=float)
    M = LinearOperator((space.n, space.n), matvec=_ComponentPoisson(space), dtype=float)
    b = space.pack(curl_dual(grid, g))
    its = [0]

    def count(_):
        its[0] += 1

    x, status = cg(A, b, rtol=tol, atol=0.0, maxiter=maxiter, M=M, callback=count)
    if status != 0:
        raise SolveError(f"vector potential CG did not converge in {maxiter} iterations")
    w = space.unpack(x)
    res = norm(grid, curl_primal(grid, w) - g) / gn
    info = PotentialInfo(its[0], res, float(np.abs(_interior_nodes(div_field(grid, w))).max()))
    return (w, info) if return_info else w


def poisson_dirichlet(grid, f):
    """Node potential ``p``, zero on the boundary, with ``div grad p = f`` inside."""
    _require_yee(grid)
    r = np.asarray(f)[1:-1, 1:-1, 1:-1]
    lam = sum(
        _eig_dirichlet(grid.shape[ax] - 1, grid.spacing[ax]).reshape(
            [-1 if a == ax else 1 for a in range(3)])
        for ax in range(3)
    )
    x = fft.dstn(r, type=1, norm="ortho")
    x = -x / lam
    p = np.zeros(grid.comp_shape("node"))
    p[1:-1, 1:-1, 1:-1] = fft.idstn(x, type=1, norm="ortho")
    return p


@dataclass
class Decomposition:
    w_part: VectorField  # -dw
    grad_part: VectorField
    p: np.ndarray
    h: VectorField
    residual: float
    cross: dict = field(default_factory=dict)
    tolerance: float = 0.0

    @property
    def max_cross(self):
        return max(self.cross.values(), default=0.0)


def time_derivative_of_potential(grid, E, tol=1e-12):
    """``dw/dt`` from Faraday's law: ``curl(dw) = dB/dt = -curl E``.

    A curl at rounding level relative to ``|E| / h`` (a discrete gradient)
    gives ``dw = 0``.
    """
    g = -curl_primal(grid, E)
    if g.max_abs() <= 1e-12 * E.max_abs() / grid.h_min:
        return grid.zeros("edge")
    return vector_potential(grid, g, tol=tol)


def decompose(grid, E, dw=None, tol=1e-12):
    """Split ``E = -dw + grad p + h`` with ``h = 0``.

    ``dw`` defaults to the vector potential of ``-curl E``.  The residual is
    ``|E + dw - grad p| / |E|``; ``cross`` holds the normalised pairings of
    the parts.
    """
    _require_yee(grid)
    if dw is None:
        dw = time_derivative_of_potential(grid, E, tol)
    p = poisson_dirichlet(grid, div_field(grid, E + dw))
    gp = grad_scalar(grid, p)
    h = grid.zeros("edge")  # harmonic fields vanish on a simply connected box
    En = norm(grid, E)
    r = E + dw - gp
    residual = norm(grid, r) / En if En > 0 else 0.0
    parts = {"w": -dw, "grad": gp}
    cross = {}
    nw, ng = norm(grid, parts["w"]), norm(grid, gp)
    if nw > 0 and ng > 0:
        cross["w.grad"] = abs(inner(grid, parts["w"], gp, interior=True)) / (nw * ng)
    return Decomposition(-dw, gp, p, h, residual, cross, tol)


def poincare_ratio(grid, w):
    """``|w| / |curl w|``."""
    nw = norm(grid, w)
    nc = norm(grid, curl_primal(grid, w))
    if nw == 0.0:
        return 0.0
    if nc <= 1e-14 * nw / grid.h_min:
        raise SolveError("curl vanishes on a nonzero constrained field")
    return nw / nc


# -- curl-div estimate on the collocated layout -----------------------------------

def _face_trace_norms(grid, f):
    """``(|f|_{L2(boundary)}, |tangential differences of f|_{L2(boundary)})``."""
    l2 = 0.0
    dif = 0.0
    for ax in range(3):
        tang = [a for a in range(3) if a != ax]
        for side in (0, -1):
            face = np.take(f[ax], side, axis=ax)
            w = [grid.axis_weights(t, False) for t in tang]
            l2 += float(np.sum(face**2 * np.outer(w[0], w[1])))
            for k, t_ax in enumerate(tang):
                dfa = np.diff(face, axis=k) / grid.spacing[t_ax]
                wk = list(w)
                wk[k] = grid.axis_weights(t_ax, True)
                dif += float(np.sum(dfa**2 * np.outer(wk[0], wk[1])))
    return np.sqrt(l2), np.sqrt(dif)


def kappa(grid, u, a):
    """``|u|_{H(curl)} + |Div(a u)| + |tr_n(a u)|_{L2} + |tangential diff of tr_n(a u)|``."""
    cg_ = grid.with_layout("collocated")
    au = VectorField.from_points(np.einsum("...ij,...j->...i", a, u.as_points()))
    hcurl = np.sqrt(norm(cg_, u) ** 2 + norm(cg_, curl_primal(cg_, u)) ** 2)
    div = div_field(cg_, au)
    div_n = np.sqrt(float(np.sum(div**2 * cg_.weights("node"))))
    l2, dif = _face_trace_norms(cg_, au.comps)
    return float(hcurl + div_n + l2 + dif)


def div_curl_ratio(grid, u, a):
    """``|u|_{H^1} / kappa(u)``; 0 for the zero field."""
    cg_ = grid.with_layout("collocated")
    k = kappa(cg_, u, a)
    if k == 0.0:
        return 0.0
    h1 = np.sqrt(sobolev_levels(cg_, u, 1).sum())
    return float(h1 / k)


def random_pec_field(grid, rng, modes=2):
    """Smooth node field with zero tangential boundary values.

    Each component is a random combination of ``cos`` along its own axis
    and ``sin`` along the other two, with wave numbers up to ``modes``.
    """
    X, Y, Z = grid.coords("node")
    L = grid.extents
    coords = (X / L[0], Y / L[1], Z / L[2])
    comps = []
    for c in range(3):
        acc = np.zeros_like(X)
        for k in range(modes + 1):
            for l_ in range(1, modes + 1):
                for m in range(1, modes + 1):
                    amp = rng.normal() / (1 + k * k + l_ * l_ + m * m)
                    idx = [l_, m]
                    f = np.cos(k * np.pi * coords[c])
                    for t_ax, n_ in zip([a for a in range(3) if a != c], idx):
                        f = f * np.sin(n_ * np.pi * coords[t_ax])
                    acc += amp * f
        comps.append(acc)
    return VectorField(comps, "node")
