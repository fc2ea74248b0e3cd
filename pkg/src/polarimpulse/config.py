"""
Experiment configuration files.

The format is INI (``configparser``) with the sections below; every value
error is reported with the file name and line number of the offending key.

::

    [noise]
    A = 0.1                      ; impulsive index, 0 < A <= 1
    gamma = 0.1                  ; background-to-impulsive power ratio
    truncation_M = 20            ; mixture terms retained
    complex_convention = full    ; full | split (per-dimension variance of complex noise)

    [code]
    N = 1024
    K = 512
    method = de                  ; de | heuristic | file
    design_snr_db = 3.0          ; required for de and heuristic
    info_set_file = code.txt     ; required for file (relative to the config file)
    construction_samples = 10000000
    construction_seed = 0

    [channel]
    modulation = single-carrier  ; single-carrier | ofdm
    nonlinearity = none          ; none | blanking | clipping (ofdm only)
    threshold_T = 2.0            ; required with a nonlinearity
    llr_variance_mode = empirical  ; analytic | empirical (ofdm only)
    calibration_symbols = 100000

    [simulation]
    snr_db = 1.0, 1.5, 2.0       ; strictly increasing, total-noise SNR in dB
    min_block_errors = 100
    max_blocks = 10000000
    seed = 1
    workers = 1

    [bound]
    samples = 10000000           ; histogram budget for single-carrier initial densities
    grid_step = 0.0625
    grid_half_range = 960
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
import re
from dataclasses import dataclass, field

from .construction import DEFAULT_GRID, Grid
from .errors import ConfigError, ParameterError
from .noise_model import COMPLEX_CONVENTIONS, ClassAParams, total_variance
from .ofdm import OfdmConfig
from .polar_codec import PolarCode

MODULATIONS = ("single-carrier", "ofdm")
CODE_METHODS = ("de", "heuristic", "file")


@dataclass(frozen=True)
class NoiseSpec:
    """Class A shape parameters; the background variance follows from the SNR point."""

    A: float
    gamma: float
    truncation_M: int = 20

    def __post_init__(self):
        # validates the shape parameters with a placeholder variance
        ClassAParams(self.A, self.gamma, 1.0, self.truncation_M)

    def params_at(self, snr_db):
        """ClassAParams whose total variance is ``10**(-snr_db/10)``."""
        unit = ClassAParams(self.A, self.gamma, 1.0, self.truncation_M)
        target = 10.0 ** (-float(snr_db) / 10.0)
        return dataclasses.replace(unit, sigma_g2=target / total_variance(unit))


@dataclass(frozen=True)
class CodeSpec:
    N: int
    K: int
    method: str = "de"
    design_snr_db: float | None = None
    info_set_file: str | None = None
    construction_samples: int = 10**7
    construction_seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    noise: NoiseSpec
    code_spec: CodeSpec
    snr_points: tuple
    modulation: str = "single-carrier"
    ofdm: OfdmConfig | None = None
    complex_convention: str = "full"
    calibration_symbols: int = 100_000
    min_block_errors: int = 100
    max_blocks: int = 10**7
    seed: int = 0
    workers: int = 1
    bound_samples: int = 10**7
    grid: Grid = DEFAULT_GRID
    code: PolarCode | None = field(default=None, compare=False)

    def __post_init__(self):
        pts = tuple(float(s) for s in self.snr_points)
        object.__setattr__(self, "snr_points", pts)
        if not pts:
            raise ConfigError("snr_points must be nonempty")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ConfigError("snr_points must be strictly increasing")
        if self.min_block_errors < 1:
            raise ConfigError("min_block_errors must be >= 1")
        if self.max_blocks < 1:
            raise ConfigError("max_blocks must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.modulation not in MODULATIONS:
            raise ConfigError(f"modulation must be one of {MODULATIONS}")
        if self.modulation == "ofdm" and self.ofdm is None:
            raise ConfigError("ofdm modulation needs an OfdmConfig")
        if self.complex_convention not in COMPLEX_CONVENTIONS:
            raise ConfigError(f"complex_convention must be one of {COMPLEX_CONVENTIONS}")
        if self.code is not None and (self.code.N, self.code.K) != (self.code_spec.N, self.code_spec.K):
            raise ConfigError("code does not match code_spec N/K")

    def with_code(self, code):
        return dataclasses.replace(self, code=code)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def canonical(self):
        """JSON-able description of everything that affects results (not ``workers``)."""
        d = {
            "noise": dataclasses.asdict(self.noise),
            "code_spec": dict(dataclasses.asdict(self.code_spec),
                              info_set_file=os.path.basename(self.code_spec.info_set_file or "")),
            "snr_points": list(self.snr_points),
            "modulation": self.modulation,
            "ofdm": dataclasses.asdict(self.ofdm) if self.ofdm else None,
            "complex_convention": self.complex_convention,
            "calibration_symbols": self.calibration_symbols,
            "min_block_errors": self.min_block_errors,
            "max_blocks": self.max_blocks,
            "seed": self.seed,
            "bound_samples": self.bound_samples,
            "grid": dataclasses.asdict(self.grid),
        }
        if self.code is not None:
            info = ",".join(map(str, self.code.info_set)).encode()
            d["info_set_sha256"] = hashlib.sha256(info).hexdigest()
        return d

    def digest(self):
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# parsing

_SCHEMA = {
    "noise": {"A": float, "gamma": float, "truncation_M": int, "complex_convention": str},
    "code": {"N": int, "K": int, "method": str, "design_snr_db": float, "info_set_file": str,
             "construction_samples": int, "construction_seed": int},
    "channel": {"modulation": str, "nonlinearity": str, "threshold_T": float,
                "llr_variance_mode": str, "calibration_symbols": int},
    "simulation": {"snr_db": "floats", "min_block_errors": int, "max_blocks": int,
                   "seed": int, "workers": int},
    "bound": {"samples": int, "grid_step": float, "grid_half_range": int},
}
# dataclass field names that differ from their config keys
_FIELD_KEYS = {"snr_points": "snr_db"}
_REQUIRED = {"noise": ("A", "gamma"), "code": ("N", "K"), "simulation": ("snr_db",)}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^\s=:;#][^=:]*?)\s*[=:]")


def _line_index(text):
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    where = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), lineno)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None and not line[:1].isspace():
            where.setdefault((section, m.group(1)), lineno)
    return where


def _convert(kind, raw):
    if kind == "floats":
        parts = [p for p in re.split(r"[,\s]+", raw.strip()) if p]
        if not parts:
            raise ValueError("empty list")
        return tuple(float(p) for p in parts)
    if kind is int:
        v = float(raw)
        if v != int(v):
            raise ValueError(f"not an integer: {raw!r}")
        return int(v)
    return kind(raw.strip())


def parse_config(text, path="<config>", base_dir=None):
    """Parse configuration text into an :class:`ExperimentConfig` (code unresolved)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=path)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno, path)
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno, path)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", exc.lineno, path)
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("unparsable line", lineno, path)
    lines = _line_index(text)

    vals = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)), path)
        vals[section] = {}
        for key, raw in cp.items(section):
            line = lines.get((section, key))
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line, path)
            try:
                vals[section][key] = _convert(_SCHEMA[section][key], raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", line, path)
    for section, keys in _REQUIRED.items():
        for key in keys:
            if key not in vals.get(section, {}):
                raise ConfigError(f"missing required key {key!r} in [{section}]",
                                  lines.get((section, None)), path)

    def at(section, key):
        return lines.get((section, key), lines.get((section, None)))

    def build(section, keys, fn):
        try:
            return fn()
        except (ParameterError, ConfigError, ValueError) as exc:
            msg = exc.args[0] if exc.args else str(exc)
            named = {_FIELD_KEYS.get(k, k) for k in re.findall(r"\w+", str(msg))}
            bad = next((k for k in keys if k in named and k in vals.get(section, {})), None)
            raise ConfigError(str(msg), at(section, bad) if bad else lines.get((section, None)), path)

    nz = vals["noise"]
    noise = build("noise", ("A", "gamma", "truncation_M"),
                  lambda: NoiseSpec(nz["A"], nz["gamma"], nz.get("truncation_M", 20)))

    cd = vals["code"]
    method = cd.get("method", "de")
    if method not in CODE_METHODS:
        raise ConfigError(f"method must be one of {CODE_METHODS}", at("code", "method"), path)
    if method in ("de", "heuristic") and "design_snr_db" not in cd:
        raise ConfigError(f"method {method!r} needs design_snr_db", at("code", "method"), path)
    info_file = cd.get("info_set_file")
    if method == "file":
        if info_file is None:
            raise ConfigError("method 'file' needs info_set_file", at("code", "method"), path)
        if base_dir is not None and not os.path.isabs(info_file):
            info_file = os.path.join(base_dir, info_file)
    code_spec = CodeSpec(cd["N"], cd["K"], method, cd.get("design_snr_db"), info_file,
                         cd.get("construction_samples", 10**7), cd.get("construction_seed", 0))
    build("code", ("N", "K"), lambda: PolarCode(code_spec.N, code_spec.K, tuple(range(code_spec.K))))

    ch = vals.get("channel", {})
    modulation = ch.get("modulation", "single-carrier")
    if modulation not in MODULATIONS:
        raise ConfigError(f"modulation must be one of {MODULATIONS}", at("channel", "modulation"), path)
    ofdm = None
    if modulation == "ofdm":
        ofdm = build("channel", ("nonlinearity", "threshold_T", "llr_variance_mode"),
                     lambda: OfdmConfig(code_spec.N, ch.get("nonlinearity", "none"),
                                        ch.get("threshold_T"), ch.get("llr_variance_mode", "empirical")))
    elif ch.get("nonlinearity", "none") != "none":
        raise ConfigError("nonlinearity requires modulation = ofdm", at("channel", "nonlinearity"), path)

    sim = vals["simulation"]
    bd = vals.get("bound", {})
    grid = build("bound", ("grid_step", "grid_half_range"),
                 lambda: Grid(bd.get("grid_step", DEFAULT_GRID.step),
                              bd.get("grid_half_range", DEFAULT_GRID.half_range)))
    return build("simulation", ("snr_db", "min_block_errors", "max_blocks", "workers"),
                 lambda: ExperimentConfig(
                     noise=noise, code_spec=code_spec, snr_points=sim["snr_db"],
                     modulation=modulation, ofdm=ofdm,
                     complex_convention=nz.get("complex_convention", "full"),
                     calibration_symbols=ch.get("calibration_symbols", 100_000),
                     min_block_errors=sim.get("min_block_errors", 100),
                     max_blocks=sim.get("max_blocks", 10**7),
                     seed=sim.get("seed", 0), workers=sim.get("workers", 1),
                     bound_samples=bd.get("samples", 10**7), grid=grid))


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=os.fspath(path))
    return parse_config(text, os.fspath(path), base_dir=os.path.dirname(os.path.abspath(path)))
