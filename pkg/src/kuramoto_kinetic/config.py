"""Experiment configuration: YAML in, validated dataclasses out.

Validation errors name the offending field and, when the value came from a
file, its line number.
"""
import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from .errors import ConfigError

FAMILIES = ("vonmises_bump", "two_bump", "uniform", "near_uniform", "from_file")

DEFAULTS = {
    "model": {"K": 10.0, "W": 0.1},
    "initial": {"family": "vonmises_bump", "center": 1.0, "concentration": 1.0},
    "grid": {"n_theta": 256, "n_omega": 17, "dt": 1e-3, "T_end": 4.0, "stride": 10},
    "particles": {"N": 1000, "seed": 0, "trials": 20, "dt": 5e-3, "T_end": 2.0},
    "analysis": {
        "checks": ["dissipation_bounds", "dissipation_R_relation", "phi_dot", "mass_lateral",
                   "instability", "global_l2", "convexity_regime", "transport_dissipation",
                   "subdivision", "decay"],
        "tol_scale": 1.0,
        "alpha": float(np.pi / 6),   # lateral half-angle
        "beta": float(np.pi / 3),    # convexity-regime arc
        "delta0": 0.5,               # cutoff width
        "lambda": None,              # None -> 1 - R0/240
        "Q": 1.0 / 3600.0,           # attractor-time threshold
        "C": 1.0,                    # unknown universal constant in calibration flags
        "eps": None,                 # None -> R0/15
        "c_T0": 20.0,                # multiple in the T0 bound
        "transient": "corrected",    # or "printed"
    },
    "concentration": {"Ns": [50, 200, 800], "trials": 50, "eps": [0.05, 0.1, 0.2],
                      "n_theta": 64, "n_omega": 9, "probes": 6, "window": 1.0,
                      "horizon": 2.0, "horizon_step": 0.1, "md_trials": 20},
    "output": {"dir": "out"},
}

POSITIVE = {("model", "K"), ("grid", "n_theta"), ("grid", "n_omega"), ("grid", "dt"),
            ("grid", "T_end"), ("grid", "stride"), ("particles", "N"), ("particles", "dt"),
            ("particles", "T_end"), ("concentration", "n_theta"), ("concentration", "n_omega")}
NONNEGATIVE = {("model", "W"), ("particles", "trials"), ("particles", "seed"),
               ("concentration", "trials"), ("concentration", "md_trials"),
               ("analysis", "tol_scale")}
INTEGERS = {("grid", "n_theta"), ("grid", "n_omega"), ("grid", "stride"), ("particles", "N"),
            ("particles", "seed"), ("particles", "trials"), ("concentration", "trials"),
            ("concentration", "n_theta"), ("concentration", "n_omega"),
            ("concentration", "probes"), ("concentration", "md_trials")}


@dataclass
class ExperimentConfig:
    model: dict
    initial: dict
    grid: dict
    particles: dict
    analysis: dict
    concentration: dict
    output: dict
    source: str = field(default=None, compare=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("source")
        return d

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @property
    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _line_map(text):
    """(section, key) -> 1-based line of the key in the YAML source."""
    out = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out
    if not isinstance(root, yaml.MappingNode):
        return out
    for knode, vnode in root.value:
        out[(knode.value,)] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, _ in vnode.value:
                out[(knode.value, k2.value)] = k2.start_mark.line + 1
    return out


def _merge(base, over, lines):
    out = copy.deepcopy(base)
    for sec, val in (over or {}).items():
        if sec not in base:
            raise ConfigError(f"unknown section {sec!r}", field=sec, line=lines.get((sec,)))
        if not isinstance(val, dict):
            raise ConfigError("section must be a mapping", field=sec, line=lines.get((sec,)))
        for k, v in val.items():
            if sec != "initial" and k not in base[sec]:
                raise ConfigError(f"unknown field {k!r}", field=f"{sec}.{k}", line=lines.get((sec, k)))
            out[sec][k] = v
    if over and "initial" in over:
        # the family fixes which keys make sense; do not inherit the default family's keys
        out["initial"] = dict(over["initial"])
    return out


def _validate(d, lines):
    def err(sec, key, msg):
        raise ConfigError(msg, field=f"{sec}.{key}", line=lines.get((sec, key), lines.get((sec,))))

    for sec, key in POSITIVE | NONNEGATIVE:
        v = d[sec][key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            err(sec, key, f"expected a number, got {v!r}")
        if (sec, key) in INTEGERS and int(v) != v:
            err(sec, key, f"expected an integer, got {v!r}")
        if (sec, key) in POSITIVE and not v > 0:
            err(sec, key, f"must be positive, got {v!r}")
        if (sec, key) in NONNEGATIVE and v < 0:
            err(sec, key, f"must be nonnegative, got {v!r}")
    fam = d["initial"].get("family")
    if fam not in FAMILIES:
        err("initial", "family", f"unknown family {fam!r}; expected one of {', '.join(FAMILIES)}")
    if fam == "two_bump":
        for k in ("centers", "weights", "widths"):
            if k not in d["initial"]:
                err("initial", k, "two_bump needs centers, weights and widths")
        n = {len(d["initial"][k]) for k in ("centers", "weights", "widths")}
        if len(n) != 1:
            err("initial", "centers", "centers, weights and widths must have equal length")
    if fam == "from_file" and "path" not in d["initial"]:
        err("initial", "path", "from_file needs a path")
    if d["model"]["W"] > d["model"]["K"]:
        err("model", "W", "W must not exceed K (no phase-locked equilibrium)")
    if d["analysis"]["transient"] not in ("corrected", "printed"):
        err("analysis", "transient", "expected 'corrected' or 'printed'")
    if not isinstance(d["analysis"]["checks"], list):
        err("analysis", "checks", "expected a list of check names")
    for sec, key in INTEGERS:
        d[sec][key] = int(d[sec][key])


def load_config(path=None, text=None, overrides=None):
    """Read YAML (path or text), merge over defaults and validate."""
    if path is not None:
        with open(path) as fh:
            text = fh.read()
    text = text or ""
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(e, 'problem', e)}",
                          line=None if mark is None else mark.line + 1) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping", line=1)
    lines = _line_map(text)
    d = _merge(DEFAULTS, raw, lines)
    for dotted, v in (overrides or {}).items():
        sec, key = dotted.split(".", 1)
        d[sec][key] = v
    _validate(d, lines)
    return ExperimentConfig(**d, source=path)


def default_config():
    return load_config(text="")
