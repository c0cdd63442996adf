"""Experiment configuration: an INI file with [modulation], [link], [analysis].

Values are validated on load; errors carry the file line of the offending
key.  ``ExperimentConfig.to_text()`` writes the effective configuration back
in the same format and parses to an equal object.
"""
import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError
from .formats import parse_format
from .ssfm import LinkConfig

__all__ = ["ModulationConfig", "AnalysisConfig", "ExperimentConfig", "load_config"]


@dataclass(frozen=True)
class ModulationConfig:
    format: str = "ess1d-5"
    formats: tuple = ()
    M: int = 4
    H: float = 1.6
    inner_cap: int = None

    def all_formats(self):
        return self.formats or (self.format,)


@dataclass(frozen=True)
class AnalysisConfig:
    windows: tuple = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512)
    moment_slots: int = 2**17
    seeds: tuple = (1,)
    calibration_seeds: tuple = (1, 2)
    auto_calibrate: bool = True
    kappa_spm: str = ""
    kappa_xpm: str = ""
    ase: bool = True
    nli_mode: str = "separate"
    window_rates: tuple = (5.5e9, 22e9, 88e9)
    window_spans: tuple = (1, 20, 72)
    total_bw: float = 500e9
    out: str = "out"


@dataclass(frozen=True)
class ExperimentConfig:
    modulation: ModulationConfig = field(default_factory=ModulationConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def to_text(self):
        out = []
        for name in ("modulation", "link", "analysis"):
            section = getattr(self, name)
            out.append(f"[{name}]")
            for f in fields(section):
                out.append(f"{f.name} = {_fmt(getattr(section, f.name))}")
            out.append("")
        return "\n".join(out)

    def with_overrides(self, seed=None, out=None):
        a = self.analysis
        if seed is not None:
            a = replace(a, seeds=(int(seed),) + tuple(s for s in a.seeds[1:]))
        if out is not None:
            a = replace(a, out=str(out))
        return replace(self, analysis=a)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# -- parsing -----------------------------------------------------------------

def _key_lines(text):
    lines = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            lines[(section, None)] = no
            continue
        m = re.match(r"^([^=:;#\s][^=:]*?)\s*[=:]", s)
        if m and section:
            lines[(section, m.group(1).strip().lower())] = no
    return lines


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _convert(raw, kind, name):
    raw = raw.strip()
    if kind in ("opt_int", "opt_float"):
        if raw == "":
            return None
        kind = kind[4:]
    if kind == "int":
        v = float(raw)
        if v != int(v):
            raise ValueError(f"{name} must be an integer")
        return int(v)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        if raw.lower() not in _BOOL:
            raise ValueError(f"{name} must be a boolean")
        return _BOOL[raw.lower()]
    if kind == "str":
        return raw
    if kind == "floats":
        return tuple(float(x) for x in raw.split(",") if x.strip())
    if kind == "ints":
        return tuple(_convert(x, "int", name) for x in raw.split(",") if x.strip())
    if kind == "strs":
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    if kind == "windows":
        m = re.match(r"^pow2\s*:\s*(\d+)$", raw)
        if m:
            top = int(m.group(1))
            out, w = [], 1
            while w <= top:
                out.append(w)
                w *= 2
            return tuple(out)
        m = re.match(r"^range\s*:\s*(\d+)\s*:\s*(\d+)$", raw)
        if m:
            return tuple(range(int(m.group(1)), int(m.group(2)) + 1))
        return _convert(raw, "ints", name)
    raise AssertionError(kind)  # pragma: no cover


_SCHEMA = {
    "modulation": (ModulationConfig, {
        "format": "str", "formats": "strs", "M": "int", "H": "float", "inner_cap": "opt_int",
    }),
    "link": (LinkConfig, {
        "R_sym": "float", "rolloff": "float", "N_ch": "int", "delta_f_abs": "opt_float",
        "center_freq": "float", "alpha_db_km": "float", "beta2": "float", "gamma": "float",
        "L_span": "float", "N_span": "int", "noise_figure": "float",
        "steps_per_span": "int", "samples_per_symbol": "int", "n_symbols": "int",
        "launch_dbm": "floats", "ref_bw": "float",
    }),
    "analysis": (AnalysisConfig, {
        "windows": "windows", "moment_slots": "int", "seeds": "ints",
        "calibration_seeds": "ints", "auto_calibrate": "bool", "kappa_spm": "str",
        "kappa_xpm": "str", "ase": "bool", "nli_mode": "str", "window_rates": "floats",
        "window_spans": "ints", "total_bw": "float", "out": "str",
    }),
}


def parse_config(text, path=None):
    lines = _key_lines(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}", getattr(exc, "lineno", None), path)

    def err(msg, section, key=None):
        raise ConfigError(msg, lines.get((section, key.lower() if key else None)), path)

    parts = {}
    for sec in cp.sections():
        if sec.lower() not in _SCHEMA:
            err(f"unknown section [{sec}]", sec.lower())
    for name, (cls, schema) in _SCHEMA.items():
        lower = {k.lower(): k for k in schema}
        kw = {}
        if cp.has_section(name):
            for key, raw in cp.items(name):
                canon = lower.get(key.lower())
                if canon is None:
                    err(f"unknown key {key!r} in [{name}]", name, key)
                try:
                    kw[canon] = _convert(raw, schema[canon], canon)
                except ValueError as exc:
                    err(f"bad value for {canon}: {raw!r} ({exc})", name, key)
        try:
            parts[name] = cls(**kw)
        except (TypeError, ValueError) as exc:
            err(str(exc), name)
    cfg = ExperimentConfig(**parts)
    _validate(cfg, lines, path)
    return cfg


def _validate(cfg, lines, path):
    def err(msg, section, key=None):
        raise ConfigError(msg, lines.get((section, key.lower() if key else None),
                                         lines.get((section, None))), path)

    mod, link, an = cfg.modulation, cfg.link, cfg.analysis
    if mod.M < 1:
        err("M must be >= 1", "modulation", "M")
    if not 0 < mod.H <= math.log2(max(mod.M, 1)) + 1e-12 and mod.M > 1:
        err(f"H = {mod.H} is not feasible for M = {mod.M} (max {math.log2(mod.M):g})",
            "modulation", "H")
    for tok in mod.all_formats():
        try:
            parse_format(tok)
        except ValueError as exc:
            err(str(exc), "modulation", "formats" if mod.formats else "format")
    if mod.inner_cap is not None and mod.inner_cap < 4:
        err("inner_cap must be >= 4", "modulation", "inner_cap")
    try:
        link.validate()
    except ConfigError as exc:
        err(str(exc), "link")
    if not link.launch_dbm:
        err("launch sweep is empty", "link", "launch_dbm")
    if not an.windows or any(w < 1 for w in an.windows):
        err("window grid must be nonempty and positive", "analysis", "windows")
    if any(b <= a for a, b in zip(an.windows, an.windows[1:])):
        err("window grid must be strictly ascending", "analysis", "windows")
    if an.moment_slots < max(an.windows):
        err("moment_slots shorter than the largest window", "analysis", "moment_slots")
    if not an.seeds:
        err("at least one seed is required", "analysis", "seeds")
    if an.nli_mode not in ("separate", "joint"):
        err("nli_mode must be 'separate' or 'joint'", "analysis", "nli_mode")


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None, path)
    return parse_config(text, path)
