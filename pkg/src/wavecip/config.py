"""Scenario files: INI sections [grid] [boundary] [coefficient] [bump] [control] [recon] [validate].

Numbers may be written as multiples of pi (``4pi``, ``pi/2``, ``1.5*pi``).
Frequency lists are ``x, y`` pairs separated by ``;``. Unknown keys are
errors, so typos surface with their line number.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError

_PI = re.compile(r"^([+-]?)\s*((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?$")


def parse_number(text):
    """Float, or a multiple of pi such as ``4pi``, ``-pi/2``, ``1.5*pi``."""
    s = text.strip()
    m = _PI.match(s)
    if m:
        sign = -1.0 if m.group(1) == "-" else 1.0
        a = float(m.group(2)) if m.group(2) else 1.0
        b = float(m.group(3)) if m.group(3) else 1.0
        return sign * a * math.pi / b
    return float(s)


def parse_pairs(text):
    out = []
    for part in text.split(";"):
        if not part.strip():
            continue
        xs = [parse_number(v) for v in part.split(",")]
        if len(xs) != 2:
            raise ValueError(f"expected 'x, y', got {part.strip()!r}")
        out.append((xs[0], xs[1]))
    return out


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return [parse_number(v) for v in text.replace(",", " ").split()]


def _words(text):
    return [w.strip() for w in text.replace(",", " ").split() if w.strip()]


def _opt_float(text):
    return None if text.strip().lower() in ("", "none", "auto") else parse_number(text)


# section -> key -> (parser, default); default None with required=True marks mandatory keys
SCHEMA = {
    "grid": {"Lx": (parse_number, 1.0), "Ly": (parse_number, 1.0), "nx": (int, 64), "ny": (int, 64),
             "T": (parse_number, 4.0), "dt": (_opt_float, None), "dt_factor": (parse_number, 0.4),
             "cfl_factor": (parse_number, 0.5)},
    "boundary": {"gamma": (_words, ["right", "top"])},
    "coefficient": {"c0": (parse_number, 1.0), "alpha": (parse_number, 0.02), "c2": (parse_number, 1.0),
                    "omega_prime": (_words, ["rect", "0.25", "0.75", "0.25", "0.75"]),
                    "c_star": (_opt_float, None)},
    "bump": {"center": (_floats, [0.5, 0.5]), "radius": (parse_number, 0.2), "amplitude": (parse_number, 1.0)},
    "control": {"cg_tol": (parse_number, 1e-3), "cg_max_iters": (int, 200), "epsilon": (parse_number, 1e-6),
                "filter": (_bool, False), "taper_fraction": (parse_number, 0.05),
                "beta_margin": (parse_number, 0.15)},
    "recon": {"eta_max": (parse_number, 4 * math.pi), "d_eta": (parse_number, math.pi / 2),
              "convention": (str, "derived"), "imag_tol": (parse_number, 0.05),
              "hermitian_tol": (parse_number, 0.02), "max_excluded": (parse_number, 0.2),
              "l2_tol": (parse_number, 0.25)},
    "validate": {"etas": (parse_pairs, [(2 * math.pi, 0.0), (math.pi, -math.pi), (1.5 * math.pi, 2 * math.pi)]),
                 "cg_tol": (parse_number, 1e-5), "cg_max_iters": (int, 600),
                 "alphas": (_floats, [0.04, 0.02, 0.01]), "prop31_tol": (parse_number, 0.05),
                 "lemma_slope_tol": (parse_number, 0.15), "theorem_tol": (parse_number, 0.10),
                 "theorem_min_slope": (parse_number, 0.7), "theta_tol": (parse_number, 0.01),
                 "forms_tol": (parse_number, 0.01), "verify_tol": (parse_number, 0.10)},
}
REQUIRED_SECTIONS = ("grid", "boundary", "coefficient", "bump", "control", "recon")


def _line_index(text):
    """(section, key) -> 1-based line number, plus section -> header line."""
    idx, sec = {}, None
    for n, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            sec = s[1:-1].strip()
            idx[(sec, None)] = n
        elif sec is not None and ("=" in s or ":" in s):
            key = re.split(r"[=:]", s, 1)[0].strip()
            idx[(sec, key)] = n
    return idx


@dataclass
class ScenarioConfig:
    """Parsed config values, one dict per section."""

    sections: dict
    source: str = "<default>"
    text: str = ""

    def __getitem__(self, name):
        return self.sections[name]

    def digest(self):
        blob = json.dumps(self.sections, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()


def parse_config_text(text, source="<string>"):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"{source}: {exc.message if hasattr(exc, 'message') else exc}", line) from exc
    lines = _line_index(text)
    sections = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]", lines.get((sec, None)))
    for sec in REQUIRED_SECTIONS:
        if not cp.has_section(sec):
            raise ConfigError(f"{source}: missing section [{sec}]", None, sec)
    for sec, keys in SCHEMA.items():
        vals = {}
        given = dict(cp.items(sec)) if cp.has_section(sec) else {}
        for key in given:
            if key not in keys:
                raise ConfigError(f"{source}: unknown key {key!r} in [{sec}]", lines.get((sec, key)), f"{sec}.{key}")
        for key, (conv, default) in keys.items():
            if key in given:
                try:
                    vals[key] = conv(given[key])
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"{source}: bad value for {sec}.{key}: {exc}", lines.get((sec, key)),
                                      f"{sec}.{key}") from exc
            else:
                vals[key] = default
        sections[sec] = vals
    _semantic_checks(sections, lines, source)
    return ScenarioConfig(sections, source, text)


def _semantic_checks(s, lines, source):
    def fail(sec, key, msg):
        raise ConfigError(f"{source}: {sec}.{key}: {msg}", lines.get((sec, key)), f"{sec}.{key}")

    for key in ("Lx", "Ly", "T"):
        if s["grid"][key] <= 0:
            fail("grid", key, "must be positive")
    for key in ("nx", "ny"):
        if s["grid"][key] < 2:
            fail("grid", key, "need at least 2 cells")
    op = s["coefficient"]["omega_prime"]
    if not op or op[0] not in ("rect", "disk") or len(op) != (5 if op[0] == "rect" else 4):
        fail("coefficient", "omega_prime", "expected 'rect x0 x1 y0 y1' or 'disk cx cy r'")
    try:
        [float(v) for v in op[1:]]
    except ValueError:
        fail("coefficient", "omega_prime", "non-numeric bounds")
    if len(s["bump"]["center"]) != 2:
        fail("bump", "center", "expected two coordinates")
    if s["recon"]["convention"] not in ("derived", "literal"):
        fail("recon", "convention", "must be 'derived' or 'literal'")
    if s["control"]["cg_tol"] <= 0:
        fail("control", "cg_tol", "must be positive")
    if s["control"]["epsilon"] < 0:
        fail("control", "epsilon", "must be nonnegative")


def load_config(path=None):
    if path is None:
        text = resources.files("wavecip").joinpath("scenarios/default.ini").read_text()
        return parse_config_text(text, "default.ini")
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config_text(text, str(p))


def dump_config(cfg: ScenarioConfig):
    """Normalized values (after defaults) for manifests."""
    return {k: dict(v) for k, v in cfg.sections.items()}
