"""Built-in verification suite (``maxlab --verify LEVEL``).

``unit``         fast algebraic identities of the operators and laws
``property``     invariants of short runs at N = 16 (under a minute)
``convergence``  grid and time-step halving studies at N in {16, 32}

Prints a tab-separated table ``level, check, result, seconds, detail`` and
returns 0 when every check passes, 4 otherwise.
"""

from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np

from . import materials as mat
from .dynamics import Medium, time_derivatives
from .grid import (BoxGrid, VectorField, apply_pec, curl_dual, curl_primal, div_field,
                   grad_scalar, norm)
from .initial_data import check_compatibility, make_admissible, make_rng
from .solver import FieldState, cfl_dt, run, step

CHECKS = {"unit": [], "property": [], "convergence": []}


def check(level):
    def deco(fn):
        CHECKS[level].append(fn)
        return fn
    return deco


def _random_edge(g, rng):
    return VectorField([rng.normal(size=g.comp_shape("edge", c)) for c in range(3)], "edge")


def _random_face(g, rng):
    return VectorField([rng.normal(size=g.comp_shape("face", c)) for c in range(3)], "face")


def _linear_medium(N=16, layout="yee", sigma=0.5):
    g = BoxGrid(1.0, N, layout)
    return Medium(g, mat.constant_scalar(1.0), mat.constant_scalar(1.0),
                  mat.Conductivity(sigma * np.eye(3)))


# -- unit ------------------------------------------------------------------------------

@check("unit")
def mimetic_identities():
    g = BoxGrid(1.0, 16, "yee")
    rng = make_rng(0)
    worst = 0.0
    for _ in range(10):
        u = _random_edge(g, rng)
        c = curl_primal(g, u)
        worst = max(worst, np.abs(div_field(g, c)).max() / (c.max_abs() / g.h_min))
        p = rng.normal(size=g.comp_shape("node"))
        gp = grad_scalar(g, p)
        worst = max(worst, curl_primal(g, gp).max_abs() / (gp.max_abs() / g.h_min))
    return worst <= 1e-13, f"max relative residual {worst:.2e}"


@check("unit")
def curl_adjoint():
    g = BoxGrid(1.0, 12, "yee")
    rng = make_rng(1)
    u = apply_pec(g, _random_edge(g, rng))
    v = _random_face(g, rng)
    from .grid import inner
    a, b = inner(g, curl_primal(g, u), v), inner(g, u, curl_dual(g, v), interior=True)
    rel = abs(a - b) / max(abs(a), 1e-300)
    return rel <= 1e-12, f"relative mismatch {rel:.2e}"


@check("unit")
def differentiated_tensor_symmetry():
    rng = make_rng(2)
    x = rng.uniform(size=(500, 3))
    xi = 0.1 * rng.normal(size=(500, 3))
    laws = [mat.kerr(1.0, 2.0), mat.cubic_chi(1.0, rng.normal(size=(3, 3, 3, 3)))]
    worst = max(np.abs(L.eval_diff(x, xi) - np.swapaxes(L.eval_diff(x, xi), -1, -2)).max()
                for L in laws)
    return worst <= 1e-12, f"max asymmetry {worst:.2e}"


@check("unit")
def newton_inversion():
    rng = make_rng(3)
    x = rng.uniform(size=(300, 3))
    d = rng.normal(size=(300, 3))
    d *= 0.1 * rng.uniform(size=(300, 1)) / np.linalg.norm(d, axis=1, keepdims=True)
    law = mat.kerr(1.0, 1.0)
    xi, info = mat.invert_constitutive(law, x, d, return_info=True)
    res = np.abs(law.apply(x, xi) - d).max()
    return res < 1e-12 and info.iterations <= 8, f"residual {res:.2e} in {info.iterations} iterations"


@check("unit")
def vector_potential_exact():
    from .helmholtz import vector_potential
    g = BoxGrid(1.0, 12, "yee")
    rng = make_rng(4)
    B = curl_primal(g, apply_pec(g, _random_edge(g, rng)))
    w, info = vector_potential(g, B, return_info=True)
    return info.residual <= 1e-10, f"curl residual {info.residual:.2e}, {info.iterations} iterations"


@check("unit")
def energies_round_trip():
    import tempfile
    from .diagnostics import CSV_COLUMNS, EnergyRecord
    from .io import read_energies, write_energies
    rng = make_rng(5)
    table = rng.normal(size=(4, len(CSV_COLUMNS)))
    table[:, 0] = np.arange(4) * 0.1
    rec = EnergyRecord.from_table(table)
    with tempfile.TemporaryDirectory() as d:
        back = read_energies(write_energies(Path(d) / "e.csv", rec)).table()
    return bool(np.array_equal(back, table)), "bit-exact" if np.array_equal(back, table) else "mismatch"


# -- property -----------------------------------------------------------------------------

@check("property")
def magnetic_divergence_linear_run():
    m = _linear_medium()
    data = make_admissible(m, 1, 1e-2, "bump-EH-linear-mu")
    res = run(m, data, 1.0, sample_stride=5)
    worst = res.record.series("div_mag").max()
    return worst <= 1e-13 and res.status == "completed", f"max |Div B| {worst:.2e}"


@check("property")
def time_reversal():
    m = _linear_medium(sigma=0.0)
    data = make_admissible(m, 2, 1.0, "bump-EH-linear-mu")
    st = FieldState.from_fields(m, data.E0, data.H0)
    dt = cfl_dt(m, 0.5)
    s = st
    for _ in range(40):
        s = step(s, dt, m, check_barrier=False)
    for _ in range(40):
        s = step(s, -dt, m, check_barrier=False)
    err = max((s.E - st.E).max_abs() / st.E.max_abs(), (s.H - st.H).max_abs() / st.H.max_abs())
    return err <= 1e-9, f"relative return error {err:.2e}"


@check("property")
def constitutive_consistency():
    g = BoxGrid(1.0, 16, "collocated")
    m = Medium(g, mat.kerr(1.0, 1e6), mat.kerr(1.0, 1e6), mat.Conductivity(0.5 * np.eye(3)))
    data = make_admissible(m, 1, 1e-2, "projected-EH")
    st = FieldState.from_fields(m, data.E0, data.H0)
    dt = cfl_dt(m, 0.5)
    worst = 0.0
    for _ in range(10):
        st = step(st, dt, m)
        worst = max(worst, st.constitutive_residual(m))
    return worst <= 10 * m.newton_tol, f"max |eps(E)E - D| {worst:.2e}"


@check("property")
def modified_energy_balance():
    m = _linear_medium()
    data = make_admissible(m, 1, 1e-2, "bump-EH-linear-mu")
    res = run(m, data, 1.0, sample_stride=5)
    W = res.record.series("e0_discrete")
    D = res.record.series("diss_discrete")
    err = np.abs(W + D - W[0]).max() / W[0]
    ok = err <= 1e-12 and res.status == "completed" and len(W) > 2
    return ok, f"relative balance defect {err:.2e} over {len(W)} samples"


@check("property")
def initial_data_compatibility():
    out = []
    ok = True
    for layout, style, eps in (("yee", "bump-EH-linear-mu", mat.constant_scalar(1.0)),
                               ("collocated", "projected-EH", mat.kerr(1.0, 1e6))):
        g = BoxGrid(1.0, 16, layout)
        mu = mat.constant_scalar(1.0) if layout == "yee" else mat.kerr(1.0, 1e6)
        m = Medium(g, eps, mu, mat.Conductivity(0.5 * np.eye(3)))
        rep = check_compatibility(make_admissible(m, 1, 1e-2, style), m)
        ok &= rep["passed"]
        out.append(f"{style}: {max(rep['residuals'].values()):.1e}")
    return ok, "; ".join(out)


@check("property")
def aux_lossless_drift():
    from .scenarios import aux_lossless_drift
    drift, _ = aux_lossless_drift(BoxGrid(1.0, 16, "yee"))
    return drift <= 1e-10, f"relative drift {drift:.2e} over 1000 steps"


# -- convergence ---------------------------------------------------------------------------

@check("convergence")
def electric_divergence_order():
    g = BoxGrid(1.0, 16, "yee")
    sig = mat.Conductivity(lambda x: np.einsum("...,ij->...ij", 0.5 + 0.4 * x[..., 0] * x[..., 1],
                                               np.eye(3)))
    m = Medium(g, mat.constant_scalar(1.0), mat.constant_scalar(1.0), sig)
    data = make_admissible(m, 1, 1e-2, "bump-EH-linear-mu")
    dt0 = cfl_dt(m, 0.5)
    res = []
    for k in range(3):
        dt = dt0 / 2**k
        n = int(round(1.0 / dt))
        res.append(run(m, data, n * dt, dt=dt, sample_stride=8).record.series("div_elec").max())
    ratios = [res[i] / res[i + 1] for i in range(2)]
    return all(3 <= r <= 5 for r in ratios), "ratios " + ", ".join(f"{r:.3f}" for r in ratios)


@check("convergence")
def aux_identity_order():
    from .scenarios import aux_convergence
    rows, _ = aux_convergence(BoxGrid(1.0, 16, "yee"), 0.02, 50, 2)
    ratios = [r["ratio"] for r in rows[1:]]
    return all(3 <= r <= 5 for r in ratios), "ratios " + ", ".join(f"{r:.3f}" for r in ratios)


@check("convergence")
def normal_recovery_order():
    from .scenarios import recovery_errors
    e16 = recovery_errors(16)[1]
    e32 = recovery_errors(32)[1]
    order = math.log2(e16 / e32)
    return order >= 0.8, f"observed order {order:.3f}"


@check("convergence")
def ode_recovery_gap():
    from .scenarios import ode_gap_ok, ode_vs_algebraic
    rows = ode_vs_algebraic(refinements=1)
    return ode_gap_ok(rows), "relative gaps " + ", ".join(f"{r['rel_gap']:.2e}" for r in rows)


@check("convergence")
def poincare_refinement():
    from .helmholtz import poincare_ratio, vector_potential
    vals = []
    for N in (16, 32):
        m = _linear_medium(N)
        data = make_admissible(m, 1, 1.0, "bump-EH-linear-mu")
        vals.append(poincare_ratio(m.grid, vector_potential(m.grid, m.b_of(data.H0))))
    var = abs(vals[1] - vals[0]) / vals[0]
    return var < 0.1, f"ratios {vals[0]:.5f}, {vals[1]:.5f} ({100 * var:.2f}%)"


@check("convergence")
def third_derivative_consistency():
    """Second time derivative from the recursion vs differences of solver states."""
    g = BoxGrid(1.0, 16, "collocated")
    m = Medium(g, mat.kerr(1.0, 1e6), mat.kerr(1.0, 1e6), mat.Conductivity(0.5 * np.eye(3)))
    data = make_admissible(m, 1, 1e-2, "projected-EH")
    errs = []
    for k in range(2):
        dt = cfl_dt(m, 0.25) / 2**k
        s0 = FieldState.from_fields(m, data.E0, data.H0)
        s1 = step(s0, dt, m)
        s2 = step(s1, dt, m)
        fd = (s2.E - 2 * s1.E + s0.E) / dt**2
        st = time_derivatives(m, s1.E, s1.H, order=2)
        errs.append(norm(g, fd - st.E[2]) / norm(g, st.E[2]))
    ok = errs[1] < errs[0] or errs[1] < 1e-3
    return ok, f"relative errors {errs[0]:.2e}, {errs[1]:.2e}"


# -- driver --------------------------------------------------------------------------------

def run_suite(level, out=None, stream=None):
    stream = stream or sys.stdout
    rows = []
    for fn in CHECKS[level]:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        rows.append((level, fn.__name__, "pass" if ok else "fail",
                     f"{time.perf_counter() - t0:.2f}", detail))
    text = "\n".join("\t".join(r) for r in [("level", "check", "result", "seconds", "detail")] + rows)
    print(text, file=stream)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"verify_{level}.tsv").write_text(text + "\n")
    return 0 if all(r[2] == "pass" for r in rows) else 4

