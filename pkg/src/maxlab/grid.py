"""Box grids, field storage and discrete differential operators.

Two layouts are supported.

``yee``
    Staggered placement: E-like fields on cell edges, H-like fields on cell
    faces, scalar potentials on nodes and divergences of face fields on cell
    centres.  ``div(curl_primal u) = 0`` and ``curl_primal(grad p) = 0`` hold
    to rounding error.

``collocated``
    All components on the grid nodes (boundary included).  First derivatives
    are the second-order summation-by-parts operator: central differences in
    the interior, one-sided first-order rows on the boundary.  Because the 1-D
    operators act on different axes they commute, so the mimetic identities
    also hold here up to rounding.

Inner products use trapezoidal weights (half weight on every index that sits
on the boundary along some axis), so ``inner(1, 1)`` equals the box volume.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

LAYOUTS = ("yee", "collocated")
LOCATIONS = ("edge", "face", "node", "cell")


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class BoxGrid:
    extents: tuple = (1.0, 1.0, 1.0)
    shape: tuple = (16, 16, 16)
    layout: str = "yee"

    def __post_init__(self):
        ext = tuple(float(v) for v in np.broadcast_to(self.extents, (3,)))
        shp = tuple(int(v) for v in np.broadcast_to(self.shape, (3,)))
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "shape", shp)
        if self.layout not in LAYOUTS:
            raise LayoutError(f"unknown layout {self.layout!r}")
        if min(shp) < 8:
            raise ValueError(f"need at least 8 cells per axis, got {shp}")
        if min(ext) <= 0:
            raise ValueError(f"extents must be positive, got {ext}")

    @property
    def spacing(self):
        return tuple(L / n for L, n in zip(self.extents, self.shape))

    @property
    def h_min(self):
        return min(self.spacing)

    @property
    def volume(self):
        return float(np.prod(self.extents))

    @property
    def field_loc(self):
        """Locations of (E-like, H-like) fields for this layout."""
        return ("edge", "face") if self.layout == "yee" else ("node", "node")

    def with_layout(self, layout):
        return BoxGrid(self.extents, self.shape, layout)

    # -- staggering --------------------------------------------------------

    def stagger(self, loc, comp=None):
        """Per-axis flags: True where the location sits at a half index."""
        if loc == "node":
            return (False, False, False)
        if loc == "cell":
            return (True, True, True)
        if loc == "edge":
            return tuple(ax == comp for ax in range(3))
        if loc == "face":
            return tuple(ax != comp for ax in range(3))
        raise LayoutError(f"unknown location {loc!r}")

    def comp_shape(self, loc, comp=None):
        return tuple(n if s else n + 1 for n, s in zip(self.shape, self.stagger(loc, comp)))

    def axis_coords(self, axis, staggered):
        h = self.spacing[axis]
        n = self.shape[axis]
        if staggered:
            return (np.arange(n) + 0.5) * h
        return np.arange(n + 1) * h

    def coords(self, loc, comp=None):
        """Meshgrid (X, Y, Z) of the positions of one component."""
        st = self.stagger(loc, comp)
        axes = [self.axis_coords(ax, st[ax]) for ax in range(3)]
        return np.meshgrid(*axes, indexing="ij")

    def points(self, loc, comp=None):
        return np.stack(self.coords(loc, comp), axis=-1)

    def axis_weights(self, axis, staggered):
        h = self.spacing[axis]
        if staggered:
            return np.full(self.shape[axis], h)
        w = np.full(self.shape[axis] + 1, h)
        w[0] = w[-1] = 0.5 * h
        return w

    def weights(self, loc, comp=None):
        return _weights(self, loc, comp)

    def boundary_mask(self, loc, comp=None):
        """True on indices lying on the box boundary."""
        st = self.stagger(loc, comp)
        masks = []
        for ax in range(3):
            n = self.shape[ax] + (0 if st[ax] else 1)
            m = np.zeros(n, dtype=bool)
            if not st[ax]:
                m[0] = m[-1] = True
            masks.append(m)
        return masks[0][:, None, None] | masks[1][None, :, None] | masks[2][None, None, :]

    def zeros(self, loc):
        return VectorField(tuple(np.zeros(self.comp_shape(loc, c)) for c in range(3)), loc)

    def scalar_zeros(self, loc):
        return np.zeros(self.comp_shape(loc))


@lru_cache(maxsize=64)
def _weights_cached(grid, loc, comp):
    st = grid.stagger(loc, comp)
    w = [grid.axis_weights(ax, st[ax]) for ax in range(3)]
    out = w[0][:, None, None] * w[1][None, :, None] * w[2][None, None, :]
    out.setflags(write=False)
    return out


def _weights(grid, loc, comp):
    return _weights_cached(grid, loc, comp)


class VectorField:
    """Three component arrays living at one location type of a grid."""

    __slots__ = ("comps", "loc")

    def __init__(self, comps, loc):
        if loc not in LOCATIONS:
            raise LayoutError(f"unknown location {loc!r}")
        self.comps = tuple(np.asarray(c, dtype=float) for c in comps)
        self.loc = loc

    def __getitem__(self, i):
        return self.comps[i]

    def __iter__(self):
        return iter(self.comps)

    def _check(self, other):
        if isinstance(other, VectorField) and other.loc != self.loc:
            raise LayoutError(f"location mismatch: {self.loc} vs {other.loc}")

    def __add__(self, other):
        self._check(other)
        return VectorField([a + b for a, b in zip(self.comps, other.comps)], self.loc)

    def __sub__(self, other):
        self._check(other)
        return VectorField([a - b for a, b in zip(self.comps, other.comps)], self.loc)

    def __neg__(self):
        return VectorField([-a for a in self.comps], self.loc)

    def __mul__(self, s):
        if isinstance(s, VectorField):
            self._check(s)
            return VectorField([a * b for a, b in zip(self.comps, s.comps)], self.loc)
        return VectorField([a * s for a in self.comps], self.loc)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return VectorField([a / s for a in self.comps], self.loc)

    def copy(self):
        return VectorField([a.copy() for a in self.comps], self.loc)

    def max_abs(self):
        return max(float(np.max(np.abs(a), initial=0.0)) for a in self.comps)

    def is_finite(self):
        return all(np.isfinite(a).all() for a in self.comps)

    def as_points(self):
        """Stack components into a ``(..., 3)`` array (node fields only)."""
        if self.loc not in ("node", "cell"):
            raise LayoutError("as_points needs co-located components")
        return np.stack(self.comps, axis=-1)

    @classmethod
    def from_points(cls, arr, loc="node"):
        return cls([arr[..., 0], arr[..., 1], arr[..., 2]], loc)

    @property
    def nbytes(self):
        return sum(a.nbytes for a in self.comps)


def sample(grid, func, loc):
    """Evaluate ``func(X, Y, Z) -> (fx, fy, fz)`` at each component's positions."""
    comps = []
    for c in range(3):
        X, Y, Z = grid.coords(loc, c)
        comps.append(np.broadcast_to(func(X, Y, Z)[c], X.shape).astype(float))
    return VectorField(comps, loc)


def sample_scalar(grid, func, loc):
    X, Y, Z = grid.coords(loc)
    return np.broadcast_to(func(X, Y, Z), X.shape).astype(float)


# -- one-dimensional difference kernels -------------------------------------

def _fwd(u, axis, h):
    return np.diff(u, axis=axis) / h


def _bwd_padded(u, axis, h):
    pad = [(0, 0)] * u.ndim
    pad[axis] = (1, 1)
    return np.diff(np.pad(u, pad), axis=axis) / h


def sbp_diff(u, axis, h):
    """Second-order SBP first derivative on a node-centred axis."""
    u = np.moveaxis(u, axis, 0)
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - u[:-2]) / (2.0 * h)
    out[0] = (u[1] - u[0]) / h
    out[-1] = (u[-1] - u[-2]) / h
    return np.moveaxis(out, 0, axis)


def _expect(u, loc):
    if u.loc != loc:
        raise LayoutError(f"expected a field on {loc}, got {u.loc}")


# -- operators ----------------------------------------------------------------

def curl_primal(grid, u):
    """Curl of an E-like field: edges -> faces (yee) or nodes -> nodes."""
    hx, hy, hz = grid.spacing
    if grid.layout == "yee":
        _expect(u, "edge")
        ex, ey, ez = u.comps
        return VectorField([
            _fwd(ez, 1, hy) - _fwd(ey, 2, hz),
            _fwd(ex, 2, hz) - _fwd(ez, 0, hx),
            _fwd(ey, 0, hx) - _fwd(ex, 1, hy),
        ], "face")
    _expect(u, "node")
    return _curl_sbp(u, grid.spacing)


def curl_dual(grid, v):
    """Curl of an H-like field: faces -> edges (yee) or nodes -> nodes.

    On the yee layout this is the transpose of ``curl_primal`` with zero
    ghost values outside the box, hence adjoint to it for fields whose
    tangential boundary values vanish.
    """
    hx, hy, hz = grid.spacing
    if grid.layout == "yee":
        _expect(v, "face")
        vx, vy, vz = v.comps
        return VectorField([
            _bwd_padded(vz, 1, hy) - _bwd_padded(vy, 2, hz),
            _bwd_padded(vx, 2, hz) - _bwd_padded(vz, 0, hx),
            _bwd_padded(vy, 0, hx) - _bwd_padded(vx, 1, hy),
        ], "edge")
    _expect(v, "node")
    return _curl_sbp(v, grid.spacing)


def _curl_sbp(u, h):
    ux, uy, uz = u.comps
    return VectorField([
        sbp_diff(uz, 1, h[1]) - sbp_diff(uy, 2, h[2]),
        sbp_diff(ux, 2, h[2]) - sbp_diff(uz, 0, h[0]),
        sbp_diff(uy, 0, h[0]) - sbp_diff(ux, 1, h[1]),
    ], "node")


def div_field(grid, v):
    """Divergence.

    yee: faces -> cells (mimetic, ``div curl_primal = 0``) or edges -> nodes
    (the negative transpose of ``grad_scalar``; only interior nodes carry a
    meaningful value).  collocated: nodes -> nodes.
    """
    h = grid.spacing
    if grid.layout == "yee":
        if v.loc == "face":
            return sum(_fwd(v.comps[c], c, h[c]) for c in range(3))
        if v.loc == "edge":
            return sum(_bwd_padded(v.comps[c], c, h[c]) for c in range(3))
        raise LayoutError(f"cannot take a yee divergence of a {v.loc} field")
    _expect(v, "node")
    return sum(sbp_diff(v.comps[c], c, h[c]) for c in range(3))


def grad_scalar(grid, p):
    """Gradient of a node scalar: nodes -> edges (yee) or nodes -> nodes."""
    h = grid.spacing
    if grid.layout == "yee":
        return VectorField([_fwd(p, c, h[c]) for c in range(3)], "edge")
    return VectorField([sbp_diff(p, c, h[c]) for c in range(3)], "node")


def pec_masks(grid, loc=None):
    """Per-component masks of the entries that are tangential on the boundary."""
    loc = loc or grid.field_loc[0]
    masks = []
    for c in range(3):
        shp = grid.comp_shape(loc, c)
        m = np.zeros(shp, dtype=bool)
        for ax in range(3):
            if ax == c:
                continue
            sl = [slice(None)] * 3
            sl[ax] = 0
            m[tuple(sl)] = True
            sl[ax] = -1
            m[tuple(sl)] = True
        masks.append(m)
    return masks


def apply_pec(grid, e):
    """Zero the tangential components of an E-like field on the boundary."""
    if e.loc != grid.field_loc[0]:
        raise LayoutError(f"PEC applies to {grid.field_loc[0]} fields, got {e.loc}")
    out = []
    for comp, m in zip(e.comps, pec_masks(grid, e.loc)):
        comp = comp.copy()
        comp[m] = 0.0
        out.append(comp)
    return VectorField(out, e.loc)


def tangential_boundary_max(grid, e):
    return max(float(np.max(np.abs(c[m]), initial=0.0))
               for c, m in zip(e.comps, pec_masks(grid, e.loc)))


def inner(grid, u, v, weight=None, interior=False):
    """Weighted L2 pairing ``sum u . (weight v) * cell volume``.

    ``weight`` may be a scalar, a diagonal given as three component arrays
    (yee), or a ``(..., 3, 3)`` tensor field (co-located layouts).  With
    ``interior`` the boundary-tangential entries (prescribed, not evolved)
    carry zero weight.
    """
    if u.loc != v.loc:
        raise LayoutError(f"location mismatch: {u.loc} vs {v.loc}")
    if weight is not None and not np.isscalar(weight) and not isinstance(weight, (tuple, list)):
        wv = np.einsum("...ij,...j->...i", np.asarray(weight), v.as_points())
        v = VectorField.from_points(wv, v.loc)
        weight = None
    masks = pec_masks(grid, u.loc) if interior else (None, None, None)
    total = 0.0
    for c in range(3):
        w = grid.weights(u.loc, c)
        prod = u.comps[c] * v.comps[c] * w
        if weight is not None:
            prod = prod * (weight if np.isscalar(weight) else weight[c])
        if masks[c] is not None:
            prod = np.where(masks[c], 0.0, prod)
        total += float(np.sum(prod))
    return total


def norm(grid, u, weight=None):
    return float(np.sqrt(max(inner(grid, u, u, weight), 0.0)))


def inner_scalar(grid, p, q, loc):
    return float(np.sum(p * q * grid.weights(loc)))


def boundary_pairing(grid, u, v):
    """Discrete Green remainder ``<u, curl v> - <curl u, v>``.

    For smooth fields this approximates the surface integral of
    ``(u x nu) . v``; it vanishes identically when the tangential boundary
    values of ``u`` are zero.
    """
    return inner(grid, u, curl_dual(grid, v), interior=(grid.layout == "yee")) - \
        inner(grid, curl_primal(grid, u), v)


# -- interpolation and Sobolev norms -------------------------------------------

def _to_nodes_axis(a, axis):
    a = np.moveaxis(a, axis, 0)
    n = a.shape[0]
    out = np.empty((n + 1,) + a.shape[1:])
    out[1:-1] = 0.5 * (a[1:] + a[:-1])
    out[0] = 1.5 * a[0] - 0.5 * a[1]
    out[-1] = 1.5 * a[-1] - 0.5 * a[-2]
    return np.moveaxis(out, 0, axis)


def to_nodes(grid, u):
    """Interpolate a staggered field to the nodes (second order)."""
    if u.loc == "node":
        return u
    comps = []
    for c in range(3):
        a = u.comps[c]
        st = grid.stagger(u.loc, c)
        for ax in range(3):
            if st[ax]:
                a = _to_nodes_axis(a, ax)
        comps.append(a)
    return VectorField(comps, "node")


def _stencil_weights(offsets, order):
    offsets = np.asarray(offsets, dtype=float)
    n = len(offsets)
    A = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(A, rhs)


@lru_cache(maxsize=128)
def fd_matrix(n, h, order):
    """Dense second-order difference matrix for the ``order``-th derivative.

    Interior rows use centred stencils, rows near the ends shift to one-sided
    stencils of the same accuracy.  ``n`` is the number of points.
    """
    half = (order + 1) // 2 if order > 0 else 0
    width_c = 2 * half + 1
    width_b = order + 2
    D = np.zeros((n, n))
    for i in range(n):
        if order == 0:
            D[i, i] = 1.0
            continue
        if i - half >= 0 and i + half < n:
            idx = np.arange(i - half, i - half + width_c)
        else:
            start = 0 if i - half < 0 else n - width_b
            idx = np.arange(start, start + width_b)
        D[i, idx] = _stencil_weights(idx - i, order) / h ** order
    D.setflags(write=False)
    return D


def _apply_axis(M, a, axis):
    return np.moveaxis(np.tensordot(M, a, axes=([1], [axis])), 0, axis)


def multi_indices(order):
    return [a for a in itertools.product(range(order + 1), repeat=3) if sum(a) == order]


def sobolev_levels(grid, u, max_order=3):
    """Squared L2 norms of all derivatives, grouped by total order.

    Returns an array ``s`` with ``s[m] = sum_{|alpha| = m} ||d^alpha u||^2``
    so that the squared ``H^k`` norm is ``s[:k + 1].sum()``.  Staggered
    fields are first interpolated to the nodes.
    """
    if isinstance(u, VectorField):
        comps = to_nodes(grid, u).comps if u.loc != "cell" else u.comps
        loc = "node" if u.loc != "cell" else "cell"
    else:
        comps = (np.asarray(u, dtype=float),)
        loc = "node" if comps[0].shape == grid.comp_shape("node") else "cell"
    w = grid.weights(loc)
    n = comps[0].shape
    h = grid.spacing
    out = np.zeros(max_order + 1)
    for a in comps:
        for m in range(max_order + 1):
            for alpha in multi_indices(m):
                d = a
                for ax in range(3):
                    if alpha[ax]:
                        d = _apply_axis(fd_matrix(n[ax], h[ax], alpha[ax]), d, ax)
                out[m] += float(np.sum(d * d * w))
    return out
