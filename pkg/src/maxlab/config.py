"""Scenario configuration: a line-oriented ``key = value`` format.

Syntax
    * ``# ...`` comments and blank lines are ignored.
    * ``[section]`` sets a prefix for the following keys; ``key = value``
      inside it means ``section.key``.  Fully dotted keys work anywhere.
    * Values are Python literals (numbers, strings, tuples, lists, ``True``,
      ``None``).  A bare word such as ``yee`` is read as a string.

Every key, its default and its meaning are listed in :data:`SCHEMA`;
``maxlab --schema`` prints the table.  Errors carry the line number.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field

import numpy as np

SCENARIO_KINDS = ("maxwell", "aux", "frame", "helmholtz")
LAW_KINDS = ("constant-scalar", "linear-tensor", "kerr-isotropic", "cubic-chi")
STYLES = ("bump-E", "bump-EH-linear-mu", "projected-EH")


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


# -- value checkers ------------------------------------------------------------------

def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _float(v):
    if not _num(v):
        raise TypeError("expected a number")
    return float(v)


def _pos_float(v):
    v = _float(v)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _nonneg_float(v):
    v = _float(v)
    if v < 0:
        raise ValueError("must be nonnegative")
    return v


def _opt(check):
    def inner(v):
        return None if v is None else check(v)
    inner.__doc__ = f"{check.__doc__ or check.__name__.strip('_')} or None"
    return inner


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected an integer")
    return v


def _nonneg_int(v):
    v = _int(v)
    if v < 0:
        raise ValueError("must be nonnegative")
    return v


def _pos_int(v):
    v = _int(v)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("expected True or False")
    return v


def _str(v):
    if not isinstance(v, str):
        raise TypeError("expected a string")
    return v


def _choice(*options):
    def inner(v):
        if v not in options:
            raise ValueError(f"expected one of {options}")
        return v
    return inner


def _vec3(positive=False, integer=False):
    def inner(v):
        vals = list(v) if isinstance(v, (list, tuple)) else [v] * 3
        if len(vals) != 3:
            raise ValueError("expected a scalar or three values")
        out = tuple((_pos_int if integer else (_pos_float if positive else _float))(x) for x in vals)
        return out
    return inner


def _tensor(v):
    """Scalar (times identity) or a 3x3 nested list."""
    if _num(v):
        return float(v)
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3, 3):
        raise ValueError("expected a scalar or a 3x3 list")
    if not np.allclose(arr, arr.T, atol=1e-14):
        raise ValueError("tensor must be symmetric")
    return arr.tolist()


def _window(v):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise TypeError("expected a pair (start, end)")
    s, e = _float(v[0]), _float(v[1])
    if not s < e:
        raise ValueError("window start must precede its end")
    return (s, e)


def _chi(v):
    if v is None:
        return None
    vals = np.asarray(v, dtype=float).ravel()
    if vals.size != 81:
        raise ValueError("chi needs 81 coefficients in (i, j, k, l) order")
    return vals.tolist()


def _int_list(v):
    if not isinstance(v, (list, tuple)) or not v:
        raise TypeError("expected a nonempty list of integers")
    return tuple(_pos_int(x) for x in v)


# -- schema ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Key:
    default: object
    check: object
    doc: str


def _law_keys(name, base):
    return {
        f"{name}.kind": Key("constant-scalar", _choice(*LAW_KINDS), "law kind"),
        f"{name}.base": Key(base, _tensor, "linear part: scalar or symmetric 3x3"),
        f"{name}.coeff": Key(0.0, _float, "Kerr coefficient"),
        f"{name}.profile": Key("linear", _choice("linear", "saturating"), "Kerr profile"),
        f"{name}.profile_coeff": Key(1.0, _float, "Kerr profile scale"),
        f"{name}.chi": Key(None, _chi, "81 cubic coefficients, (i, j, k, l) order"),
        f"{name}.eta": Key(0.5, _pos_float, "positivity floor eta"),
    }


SCHEMA = {
    "scenario.name": Key("custom", _str, "scenario label written to the outputs"),
    "scenario.kind": Key("maxwell", _choice(*SCENARIO_KINDS), "what to run"),
    "domain.extents": Key((1.0, 1.0, 1.0), _vec3(positive=True), "box side lengths"),
    "domain.resolution": Key((16, 16, 16), _vec3(integer=True), "cells per axis"),
    "domain.layout": Key("yee", _choice("yee", "collocated"), "grid layout"),
    **_law_keys("eps", 1.0),
    **_law_keys("mu", 1.0),
    "sigma.tensor": Key(0.5, _tensor, "conductivity: scalar or symmetric 3x3"),
    "laws.delta_tilde": Key(None, _opt(_pos_float), "positivity radius (None: computed)"),
    "laws.newton_tol": Key(1e-13, _pos_float, "constitutive Newton tolerance"),
    "initial.style": Key("bump-E", _choice(*STYLES), "initial-data construction"),
    "initial.seed": Key(0, _nonneg_int, "seed of the Philox generator"),
    "initial.amplitude": Key(1e-2, _nonneg_float, "pair H^3 norm of the initial fields"),
    "initial.div_tol": Key(1e-10, _pos_float, "magnetic divergence tolerance"),
    "run.t_final": Key(10.0, _nonneg_float, "final time"),
    "run.dt": Key(None, _opt(_pos_float), "time step (None: CFL-based)"),
    "run.cfl_safety": Key(0.5, _pos_float, "fraction of the CFL limit, in (0, 1]"),
    "run.sample_stride": Key(1, _pos_int, "steps between diagnostic samples"),
    "run.sample_interval": Key(None, _opt(_pos_float), "time between samples (overrides stride)"),
    "run.checkpoint_stride": Key(0, _nonneg_int, "steps between checkpoints (0: none)"),
    "run.delta": Key(1.0, _pos_float, "barrier: stop when z exceeds delta^2"),
    "run.memory_limit_mb": Key(4096.0, _pos_float, "refuse grids whose estimate exceeds this"),
    "analysis.fit_window": Key((2.0, 10.0), _window, "decay-fit window for e0 and z"),
    "analysis.window_every": Key(10, _pos_int, "inequality windows use every n-th sample"),
    "analysis.min_gap": Key(0.0, _nonneg_float, "minimal window length"),
    "analysis.min_r2": Key(0.99, _pos_float, "fit quality required by assert_decay"),
    "analysis.assert_decay": Key(False, _bool, "require omega > 0 with r2 >= min_r2"),
    "analysis.assert_constants_finite": Key(False, _bool, "require finite fitted constants"),
    "analysis.assert_divergence": Key(None, _opt(_pos_float), "bound on the magnetic divergence"),
    "analysis.z_transient": Key(None, _opt(_nonneg_float),
                                "require z(t) <= z_growth * z(T) for t >= T"),
    "analysis.z_growth": Key(1.05, _pos_float, "slack of the z check"),
    "aux.steps": Key(200, _pos_int, "auxiliary run: number of steps"),
    "aux.dt": Key(5e-3, _pos_float, "auxiliary run: time step"),
    "aux.sigma": Key(0.5, _nonneg_float, "auxiliary run: conductivity"),
    "aux.variation": Key(0.3, _nonneg_float, "relative time variation of a and b"),
    "aux.trace": Key(0.1, _float, "amplitude of the prescribed tangential trace"),
    "aux.source": Key(1.0, _float, "amplitude of the sources phi, psi"),
    "aux.refinements": Key(3, _pos_int, "number of dt halvings for the convergence table"),
    "frame.resolutions": Key((16, 32, 64), _int_list, "grids of the recovery benchmark"),
    "frame.kerr": Key(0.5, _float, "state dependence of the benchmark coefficient"),
    "helmholtz.tol": Key(1e-12, _pos_float, "CG relative tolerance"),
    "helmholtz.samples": Key(100, _pos_int, "random fields for the curl-div ratio"),
    "helmholtz.resolutions": Key((16, 24, 32), _int_list, "grids of the Helmholtz benchmark"),
    "output.dir": Key(None, _opt(_str), "output directory (None: MAXLAB_OUT or ./maxlab-out)"),
    "output.figures": Key(True, _bool, "render PNG figures"),
    "output.slices": Key(True, _bool, "write CSV slices of the final fields"),
    "output.fields": Key(True, _bool, "write the final fields as a binary bundle"),
}


def schema_reference():
    width = max(len(k) for k in SCHEMA)
    lines = [f"{'key'.ljust(width)}  {'default':<22} meaning"]
    for k, spec in SCHEMA.items():
        lines.append(f"{k.ljust(width)}  {repr(spec.default):<22} {spec.doc}")
    return "\n".join(lines)


# -- parsing --------------------------------------------------------------------------

_SECTION = re.compile(r"^\[([A-Za-z_][\w.]*)\]$")
_KEY = re.compile(r"^[A-Za-z_][\w]*(\.[A-Za-z_][\w]*)*$")
_BARE = re.compile(r"^[A-Za-z_][\w.+-]*$")


def _literal(text, line):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        if _BARE.match(text) and text not in ("True", "False", "None"):
            return text
        raise ConfigError(f"cannot read value {text!r}", line) from None


def parse_text(text):
    """``{key: (value, line)}`` from config text, without schema checks."""
    out = {}
    prefix = ""
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _SECTION.match(line)
        if m:
            prefix = m.group(1) + "."
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", n)
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not _KEY.match(key):
            raise ConfigError(f"malformed key {key!r}", n)
        if not val:
            raise ConfigError(f"missing value for {key!r}", n)
        full = key if "." in key else prefix + key
        if full in out:
            raise ConfigError(f"duplicate key {full!r} (first on line {out[full][1]})", n)
        out[full] = (_literal(val, n), n)
    return out


@dataclass
class ScenarioConfig:
    values: dict
    source: str = "<text>"
    lines: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def section(self, name):
        p = name + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    def with_overrides(self, **kv):
        vals = dict(self.values)
        for k, v in kv.items():
            k = k.replace("__", ".")
            if k not in SCHEMA:
                raise ConfigError(f"unknown key {k!r}")
            try:
                vals[k] = SCHEMA[k].check(v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{k}: {exc}") from None
        cfg = ScenarioConfig(vals, self.source, dict(self.lines))
        cfg.validate()
        return cfg

    def validate(self):
        v = self.values
        line = self.lines.get
        if not 0 < v["run.cfl_safety"] <= 1:
            raise ConfigError("run.cfl_safety must lie in (0, 1]", line("run.cfl_safety"))
        if min(v["domain.resolution"]) < 8:
            raise ConfigError("domain.resolution needs at least 8 cells per axis",
                              line("domain.resolution"))
        mb = memory_estimate_mb(v["domain.resolution"])
        if mb > v["run.memory_limit_mb"]:
            raise ConfigError(f"grid needs about {mb:.0f} MB, above run.memory_limit_mb",
                              line("domain.resolution"))
        if v["domain.layout"] == "yee" and v["scenario.kind"] == "maxwell":
            for name in ("eps", "mu"):
                kind = v[f"{name}.kind"]
                nonlinear = (kind == "kerr-isotropic" and v[f"{name}.coeff"] != 0) or \
                    (kind == "cubic-chi" and v[f"{name}.chi"] is not None and any(v[f"{name}.chi"]))
                if nonlinear:
                    raise ConfigError(f"{name}: the yee layout takes linear laws only",
                                      line(f"{name}.kind"))
        if v["initial.style"] == "bump-EH-linear-mu" and v["mu.kind"] in ("kerr-isotropic",) \
                and v["mu.coeff"] != 0:
            raise ConfigError("bump-EH-linear-mu needs a linear permeability", line("initial.style"))
        return self


def memory_estimate_mb(resolution):
    """Rough peak memory: about 400 float64 node-sized arrays (tensors included)."""
    n = int(np.prod([r + 1 for r in resolution]))
    return 400 * 8 * n / 2**20


def load_text(text, source="<text>"):
    raw = parse_text(text)
    values = {k: spec.default for k, spec in SCHEMA.items()}
    lines = {}
    for k, (val, n) in raw.items():
        if k not in SCHEMA:
            raise ConfigError(f"unknown key {k!r} (see maxlab --schema)", n)
        try:
            values[k] = SCHEMA[k].check(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{k}: {exc}", n) from None
        lines[k] = n
    return ScenarioConfig(values, source, lines).validate()


def load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return load_text(text, str(path))


def dump(cfg: ScenarioConfig):
    """Config text reproducing ``cfg`` (every key, schema order)."""
    return "\n".join(f"{k} = {cfg.values[k]!r}" for k in SCHEMA) + "\n"


# -- presets ---------------------------------------------------------------------------

PRESETS = {
    "linear-damped-cavity": """\
[scenario]
name = "linear-damped-cavity"
kind = "maxwell"
[domain]
resolution = 24
layout = "yee"
[sigma]
tensor = 0.5
[initial]
style = "bump-EH-linear-mu"
seed = 1
amplitude = 1e-2
[run]
t_final = 10.0
sample_interval = 0.1
[analysis]
fit_window = (2.0, 10.0)
assert_decay = True
assert_divergence = 1e-13
""",
    "kerr-small": """\
[scenario]
name = "kerr-small"
kind = "maxwell"
[domain]
resolution = 16
layout = "collocated"
[eps]
kind = "kerr-isotropic"
base = 1.0
coeff = 1e6
[mu]
kind = "kerr-isotropic"
base = 1.0
coeff = 1e6
[sigma]
tensor = 0.5
[initial]
style = "projected-EH"
seed = 1
amplitude = 1e-2
[run]
t_final = 10.0
sample_interval = 0.1
[analysis]
fit_window = (2.0, 10.0)
assert_constants_finite = True
z_transient = 1.0
z_growth = 1.05
""",
    "cubic-chi-small": """\
[scenario]
name = "cubic-chi-small"
kind = "maxwell"
[domain]
resolution = 16
layout = "collocated"
[eps]
kind = "cubic-chi"
base = 1.0
# isotropic cubic response chi_ijkl = c (d_ij d_kl + d_ik d_jl + d_il d_jk)
chi = [600000, 0, 0, 0, 200000, 0, 0, 0, 200000, 0, 200000, 0, 200000, 0, 0, 0, 0, 0, 0, 0, 200000, 0, 0, 0, 200000, 0, 0, 0, 200000, 0, 200000, 0, 0, 0, 0, 0, 200000, 0, 0, 0, 600000, 0, 0, 0, 200000, 0, 0, 0, 0, 0, 200000, 0, 200000, 0, 0, 0, 200000, 0, 0, 0, 200000, 0, 0, 0, 0, 0, 0, 0, 200000, 0, 200000, 0, 200000, 0, 0, 0, 200000, 0, 0, 0, 600000]
[mu]
kind = "constant-scalar"
base = 1.0
[sigma]
tensor = 0.5
[initial]
style = "bump-E"
seed = 2
amplitude = 1e-2
[run]
t_final = 6.0
sample_interval = 0.1
[analysis]
fit_window = (1.0, 6.0)
assert_constants_finite = True
""",
    "aux-linear-energy-identity": """\
[scenario]
name = "aux-linear-energy-identity"
kind = "aux"
[domain]
resolution = 16
layout = "yee"
[aux]
steps = 50
dt = 0.02
sigma = 0.5
variation = 0.3
trace = 0.1
source = 1.0
refinements = 3
""",
    "frame-recovery-bench": """\
[scenario]
name = "frame-recovery-bench"
kind = "frame"
[domain]
layout = "collocated"
[frame]
resolutions = (16, 32, 64)
kerr = 0.5
""",
    "helmholtz-bench": """\
[scenario]
name = "helmholtz-bench"
kind = "helmholtz"
[domain]
layout = "yee"
[sigma]
tensor = 0.5
[initial]
style = "bump-EH-linear-mu"
seed = 1
[helmholtz]
tol = 1e-12
samples = 100
resolutions = (16, 24, 32)
""",
}


def preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown scenario {name!r}; presets: {', '.join(PRESETS)}")
    return load_text(PRESETS[name], f"preset:{name}")
