"""Admissible initial fields, their derived time data and compatibility checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import Medium, time_derivatives
from .grid import (VectorField, div_field, pec_masks, sample, sobolev_levels,
                   tangential_boundary_max)

STYLES = ("bump-E", "bump-EH-linear-mu", "projected-EH")


class ProjectionError(RuntimeError):
    pass


def h3_norm(grid, u):
    """Discrete ``H^3`` norm: all finite-difference derivatives up to order 3."""
    return float(np.sqrt(sobolev_levels(grid, u, 3).sum()))


def pair_h3_norm(grid, E, H):
    return float(np.hypot(h3_norm(grid, E), h3_norm(grid, H)))


def make_rng(seed):
    """Counter-based 64-bit generator (Philox) seeded from an integer."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def smooth_bump(r2, power=6):
    """Compact bump ``(1 - r^2)^power`` on ``r^2 < 1``; of class ``C^{power-1}``.

    The polynomial profile is far better resolved by third differences than
    ``exp(-1 / (1 - r^2))`` on coarse grids.
    """
    r2 = np.asarray(r2, dtype=float)
    return np.where(r2 < 1.0, np.clip(1.0 - r2, 0.0, None) ** power, 0.0)


@dataclass
class BumpSet:
    """A few randomly placed vector bumps, all well inside the box."""

    centers: np.ndarray
    radii: np.ndarray
    vectors: np.ndarray

    @classmethod
    def random(cls, rng, extents, count=2, radius=0.33):
        ext = np.asarray(extents, dtype=float)
        centers = ext * (0.5 + rng.uniform(-0.02, 0.02, size=(count, 3)))
        radii = radius * ext.min() * (1.0 + rng.uniform(-0.1, 0.05, size=count))
        vectors = rng.normal(size=(count, 3))
        return cls(centers, radii, vectors)

    def __call__(self, X, Y, Z):
        out = [np.zeros_like(X), np.zeros_like(X), np.zeros_like(X)]
        for c, r, v in zip(self.centers, self.radii, self.vectors):
            r2 = ((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2) / r**2
            b = smooth_bump(r2)
            for i in range(3):
                out[i] = out[i] + v[i] * b
        return out


@dataclass
class InitialData:
    """Initial fields with their derived first and second time derivatives."""

    E0: VectorField
    H0: VectorField
    E1: Optional[VectorField] = None
    H1: Optional[VectorField] = None
    E2: Optional[VectorField] = None
    H2: Optional[VectorField] = None
    r: float = 0.0
    style: str = "bump-E"
    seed: int = 0
    projection_iterations: int = 0
    meta: dict = field(default_factory=dict)


def derived_time_data(medium: Medium, E0, H0):
    """``(E0^1, H0^1, E0^2, H0^2)`` from the differentiated system at ``t = 0``.

    No boundary condition is imposed on the results, so their tangential
    traces can be checked.
    """
    st = time_derivatives(medium, E0, H0, order=2, pec=False)
    return st.E[1], st.H[1], st.E[2], st.H[2]


def magnetic_flux_residuals(medium: Medium, H):
    """``(max |Div(mu(H) H)|, max |tr_n(mu(H) H)|)``."""
    grid = medium.grid
    B = medium.b_of(H)
    div_res = float(np.abs(div_field(grid, B)).max(initial=0.0))
    normal = 0.0
    for c in range(3):
        a = np.moveaxis(B.comps[c], c, 0)
        normal = max(normal, float(np.abs(a[0]).max()), float(np.abs(a[-1]).max()))
    return div_res, normal


def check_compatibility(data: InitialData, medium: Medium, tol=1e-9):
    """Residuals of the divergence and trace conditions on the initial data.

    Returns a dict with one residual per condition, the list of failed
    condition names and an overall ``passed`` flag.
    """
    grid = medium.grid
    if data.E1 is None:
        data.E1, data.H1, data.E2, data.H2 = derived_time_data(medium, data.E0, data.H0)
    div_b, tr_n = magnetic_flux_residuals(medium, data.H0)
    res = {
        "div_muH": div_b,
        "trn_muH": tr_n,
        "trt_E0": tangential_boundary_max(grid, data.E0),
        "trt_E1": tangential_boundary_max(grid, data.E1),
        "trt_E2": tangential_boundary_max(grid, data.E2),
    }
    failed = [k for k, v in res.items() if not v <= tol]
    return {"residuals": res, "failed": failed, "passed": not failed, "tol": tol}


def _potential_field(medium, bumps, scale):
    """``curl A`` for the bump potential ``A``, at the H-like locations."""
    grid = medium.grid
    A = sample(grid, bumps, medium.eloc) * scale
    # A lives where E lives; its curl lands where H lives
    return medium.curl_e(A)


def _project_magnetic(medium, B_target, tol, max_iter=50):
    """Find ``H`` with ``mu(H) H = B_target`` by the preconditioned fixed point.

    ``H <- H - mu(x, 0)^{-1} (mu(H) H - B_target)``; each iterate changes
    ``mu(H) H`` only through the state dependence, so the magnetic
    divergence and normal trace of the limit are those of ``B_target``.
    """
    from .dynamics import tensor_solve
    grid = medium.grid
    mu0 = medium.mu.eval(medium.x, np.zeros_like(medium.x)) if grid.layout == "collocated" \
        else medium.mu_of(B_target)
    H = tensor_solve(mu0, B_target)
    scale = max(B_target.max_abs(), 1e-300)
    for it in range(1, max_iter + 1):
        R = medium.b_of(H) - B_target
        div_res = float(np.abs(div_field(grid, medium.b_of(H))).max(initial=0.0))
        if R.max_abs() <= 1e-15 * scale and div_res <= tol:
            return H, it - 1, div_res
        H = H - tensor_solve(mu0, R)
    div_res = float(np.abs(div_field(grid, medium.b_of(H))).max(initial=0.0))
    if div_res <= tol:
        return H, max_iter, div_res
    raise ProjectionError(f"magnetic projection did not converge in {max_iter} iterations "
                          f"(divergence residual {div_res:.3e})")


def make_admissible(medium: Medium, seed=0, amplitude=1e-2, style="bump-E",
                    div_tol=1e-10, outer_passes=6):
    """Build interior-supported initial data whose pair ``H^3`` norm equals ``amplitude``."""
    if style not in STYLES:
        raise ValueError(f"unknown initial-data style {style!r}; expected one of {STYLES}")
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    grid = medium.grid
    rng = make_rng(seed)
    e_bumps = BumpSet.random(rng, grid.extents)
    h_bumps = BumpSet.random(rng, grid.extents)
    if style == "bump-EH-linear-mu" and not medium.mu.is_linear:
        raise ValueError("bump-EH-linear-mu needs a state-independent permeability")

    if amplitude == 0:
        E0 = grid.zeros(medium.eloc)
        H0 = grid.zeros(medium.hloc)
        data = InitialData(E0, H0, r=0.0, style=style, seed=seed)
        data.E1, data.H1, data.E2, data.H2 = derived_time_data(medium, E0, H0)
        return data

    E_shape = sample(grid, e_bumps, medium.eloc)
    E_shape = medium.pec(E_shape)
    iters = 0
    if style == "bump-E":
        H_shape = grid.zeros(medium.hloc)
        s = amplitude / h3_norm(grid, E_shape)
        E0, H0 = E_shape * s, H_shape
    elif style == "bump-EH-linear-mu":
        B_shape = _potential_field(medium, h_bumps, 1.0)
        H_shape = medium.h_from_b(B_shape)
        s = amplitude / pair_h3_norm(grid, E_shape, H_shape)
        E0, H0 = E_shape * s, H_shape * s
    else:
        # linear guess for the scale, then correct for the nonlinear response
        B_shape = _potential_field(medium, h_bumps, 1.0)
        from .dynamics import tensor_solve
        mu0 = medium.mu.eval(medium.x, np.zeros_like(medium.x)) \
            if grid.layout == "collocated" else medium.mu_of(B_shape)
        s = amplitude / pair_h3_norm(grid, E_shape, tensor_solve(mu0, B_shape))
        for _ in range(outer_passes):
            H0, iters, _ = _project_magnetic(medium, B_shape * s, div_tol)
            E0 = E_shape * s
            ratio = amplitude / pair_h3_norm(grid, E0, H0)
            if abs(ratio - 1.0) < 1e-13:
                break
            s *= ratio
        H0, iters, _ = _project_magnetic(medium, B_shape * s, div_tol)
        E0 = E_shape * s

    peak = max(E0.max_abs(), H0.max_abs())
    if peak > medium.delta_tilde:
        raise ValueError(f"initial data peak {peak:.3g} exceeds the positivity radius "
                         f"{medium.delta_tilde:.3g}; lower the amplitude")
    data = InitialData(E0, H0, r=pair_h3_norm(grid, E0, H0), style=style, seed=seed,
                       projection_iterations=iters)
    data.E1, data.H1, data.E2, data.H2 = derived_time_data(medium, E0, H0)
    return data


def boundary_tangential_violation(grid, u, value=1.0):
    """Copy of ``u`` with ``value`` written on its tangential boundary entries."""
    comps = []
    for comp, m in zip(u.comps, pec_masks(grid, u.loc)):
        comp = comp.copy()
        comp[m] = value
        comps.append(comp)
    return VectorField(comps, u.loc)
