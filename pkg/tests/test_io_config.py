import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxlab import materials as mat
from maxlab.config import (PRESETS, SCHEMA, ConfigError, dump, load, load_text, parse_text,
                           preset, schema_reference)
from maxlab.diagnostics import CSV_COLUMNS, EnergyRecord
from maxlab.dynamics import Medium
from maxlab.grid import BoxGrid, VectorField
from maxlab.initial_data import make_admissible, make_rng
from maxlab.io import (FormatError, read_checkpoint, read_energies, read_fields,
                       read_initial_data, read_summary, write_checkpoint, write_energies,
                       write_fields, write_initial_data, write_slice, write_summary)
from maxlab.solver import FieldState


# -- io -------------------------------------------------------------------------------------

@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32), layout=st.sampled_from(["yee", "collocated"]))
def test_field_bundle_round_trip(tmp_path_factory, seed, layout):
    g = BoxGrid((1.0, 1.5, 0.5), (8, 9, 10), layout)
    rng = make_rng(seed)
    loc = g.field_loc[0]
    u = VectorField([rng.normal(size=g.comp_shape(loc, c)) for c in range(3)], loc)
    p = rng.normal(size=g.comp_shape("node"))
    path = tmp_path_factory.mktemp("f") / "f.bin"
    write_fields(path, g, {"u": u, "p": p}, {"note": "x"})
    g2, f, meta = read_fields(path)
    assert g2 == g and meta["note"] == "x"
    for a, b in zip(f["u"].comps, u.comps):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(f["p"], p)


def test_field_bundle_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"not json\n\x00\x01")
    with pytest.raises(FormatError):
        read_fields(bad)
    trunc = tmp_path / "t.bin"
    g = BoxGrid(1.0, 8, "yee")
    write_fields(trunc, g, {"u": g.zeros("edge")})
    trunc.write_bytes(trunc.read_bytes()[:-8])
    with pytest.raises(FormatError):
        read_fields(trunc)


def test_checkpoint_and_initial_data_round_trip(tmp_path):
    g = BoxGrid(1.0, 8, "yee")
    m = Medium(g, mat.constant_scalar(1.0), mat.constant_scalar(1.0), mat.Conductivity(0.5))
    data = make_admissible(m, 1, 1e-2, "bump-EH-linear-mu")
    st_ = FieldState.from_fields(m, data.E0, data.H0, t=0.1 + 0.2)
    _, back, _ = read_checkpoint(write_checkpoint(tmp_path / "c.bin", g, st_))
    assert back.t == st_.t
    np.testing.assert_array_equal(back.B[2], st_.B[2])
    _, d2 = read_initial_data(write_initial_data(tmp_path / "i.bin", g, data))
    assert d2.r == data.r and d2.style == data.style
    np.testing.assert_array_equal(d2.E2[1], data.E2[1])


@settings(max_examples=20, deadline=None)
@given(rows=st.integers(0, 6), seed=st.integers(0, 1000))
def test_energies_csv_round_trip_exact(tmp_path_factory, rows, seed):
    rng = np.random.default_rng(seed)
    table = rng.normal(size=(rows, len(CSV_COLUMNS))) * 10.0 ** rng.integers(-300, 300, size=(rows, 1))
    table[:, 0] = np.arange(rows) * 0.1
    path = tmp_path_factory.mktemp("e") / "e.csv"
    write_energies(path, EnergyRecord.from_table(table) if rows else EnergyRecord())
    back = read_energies(path)
    assert len(back) == rows
    if rows:
        np.testing.assert_array_equal(back.table(), table)
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)


def test_energies_header_checked(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("t,e0\n0,1\n")
    with pytest.raises(FormatError):
        read_energies(p)


def test_summary_round_trip_with_infinity(tmp_path):
    consts = {k: 1.0 for k in ("C1", "C2", "c2", "c3", "c4", "c5", "c6")}
    consts["Cbar"] = math.inf
    summary = {"scenario": "s", "grid": {"shape": [8, 8, 8]}, "amplitude": 1e-2,
               "omega": np.float64(0.5), "M": 1.0, "r2": 0.99, "constants": consts,
               "status": "completed"}
    back = read_summary(write_summary(tmp_path / "s.json", summary))
    assert back["constants"]["Cbar"] == math.inf and back["omega"] == 0.5
    assert back["schema_version"] == 1
    del summary["status"]
    with pytest.raises(FormatError):
        write_summary(tmp_path / "t.json", summary)
    obj = json.loads((tmp_path / "s.json").read_text())
    obj["schema_version"] = 99
    (tmp_path / "u.json").write_text(json.dumps(obj))
    with pytest.raises(FormatError):
        read_summary(tmp_path / "u.json")


def test_slice_csv(tmp_path):
    g = BoxGrid(1.0, 8, "collocated")
    u = VectorField([np.ones(g.comp_shape("node"))] * 3, "node")
    write_slice(tmp_path / "s.csv", g, u)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert len(lines) == 1 + 9 * 9


# -- config ---------------------------------------------------------------------------------

def test_presets_load_and_round_trip_through_dump():
    assert set(PRESETS) == {"linear-damped-cavity", "kerr-small", "cubic-chi-small",
                            "aux-linear-energy-identity", "frame-recovery-bench", "helmholtz-bench"}
    for name in PRESETS:
        cfg = preset(name)
        assert cfg["scenario.name"] == name
        again = load_text(dump(cfg))
        assert again.values == cfg.values


def test_sections_and_dotted_keys():
    cfg = load_text("[domain]\nresolution = (8, 10, 12)\n# comment\n\nrun.t_final = 2\n"
                    "layout = collocated\n[eps]\nkind = 'kerr-isotropic'\n")
    assert cfg["domain.layout"] == "collocated"
    assert cfg["domain.resolution"] == (8, 10, 12)
    assert cfg["run.t_final"] == 2.0
    assert cfg.section("eps")["kind"] == "kerr-isotropic"


@pytest.mark.parametrize("text,line,fragment", [
    ("[run]\nt_final = = 3\n", 2, "cannot read value"),
    ("\n\ndomain.resolutoin = 16\n", 3, "unknown key"),
    ("run.t_final = -1\n", 1, "nonnegative"),
    ("run.dt 0.1\n", 1, "key = value"),
    ("run.dt = 0.1\nrun.dt = 0.2\n", 2, "duplicate"),
    ("[domain]\nlayout = hex\n", 2, "domain.layout"),
    ("eps.kind = 'kerr-isotropic'\neps.coeff = 1.0\ndomain.layout = 'yee'\n", 1, "linear laws"),
    ("domain.resolution = 4\n", 1, "at least 8"),
])
def test_config_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as exc:
        load_text(text)
    assert exc.value.line == line
    assert fragment in str(exc.value) and str(exc.value).startswith(f"line {line}:")


def test_overrides_validate():
    cfg = preset("linear-damped-cavity")
    assert cfg.with_overrides(run__t_final=1.0)["run.t_final"] == 1.0
    with pytest.raises(ConfigError):
        cfg.with_overrides(run__cfl_safety=2.0)
    with pytest.raises(ConfigError):
        cfg.with_overrides(nope=1)
    with pytest.raises(ConfigError):
        cfg.with_overrides(domain__resolution=(4000, 4000, 4000))


def test_schema_reference_lists_every_key():
    text = schema_reference()
    for k in SCHEMA:
        assert k in text


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load(tmp_path / "absent.cfg")


@settings(max_examples=30, deadline=None)
@given(t=st.floats(0, 1e3), n=st.integers(8, 64), seed=st.integers(0, 2**64 - 1))
def test_parse_values_round_trip(t, n, seed):
    cfg = load_text(f"run.t_final = {t!r}\ndomain.resolution = {n}\ninitial.seed = {seed}\n")
    assert cfg["run.t_final"] == t and cfg["initial.seed"] == seed
    assert tuple(cfg["domain.resolution"]) == (n, n, n)
    assert parse_text(dump(cfg))["run.t_final"][0] == t
