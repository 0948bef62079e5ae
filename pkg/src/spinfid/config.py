"""Run configuration: a flat TOML file, one run per file.

Keys (all optional unless noted)::

    engine = "quantum"          # required: quantum | classical | lyapunov | twospin | compare
    lattice = [5, 5, 5]         # or coords = [[0,0,0], [0,0,1], ...]
    p_d = 0.01
    t_max = 2000.0
    dt = 0.5                    # output grid step
    init = "linear"             # classical/lyapunov: linear | random
    s = 0.5                     # initial x polarization
    seed = 0
    perturb = 0.0               # classical: per-spin tilt applied after init
    perturb_seed = 1
    frame = "lab"               # lab | rotating_secular
    secular_only = false
    dft = true
    fit = true
    t_star = true
    t_star_threshold = 0.2
    resolution = 0.0            # spectrum zero-padding target (0: none)
    T = 1000.0                  # lyapunov
    rescale_interval = 10.0
    sample_interval = 100.0
    mode = "period"             # twospin: period | c2 | sx | eigs
    E = 2.0
    tau = 0.0
    trace_a = "a.csv"           # compare
    trace_b = "b.csv"
    output_dir = "runs"
    sweep_param = "p_d"         # sweep only
    sweep_values = [0.005, 0.01, 0.02]
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import tomli

from .quantum import MAX_QUANTUM_SPINS

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

ENGINES = ("quantum", "classical", "lyapunov", "twospin", "compare")
TWOSPIN_MODES = ("period", "c2", "sx", "eigs")


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{message}")
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    engine: str
    lattice: Optional[tuple[int, int, int]] = None
    coords: Optional[tuple[tuple[int, int, int], ...]] = None
    p_d: float = 0.01
    t_max: float = 2000.0
    dt: float = 0.5
    init: str = "linear"
    s: float = 1.0
    seed: int = 0
    perturb: float = 0.0
    perturb_seed: int = 1
    frame: str = "lab"
    secular_only: bool = False
    dft: bool = True
    fit: bool = True
    t_star: bool = True
    t_star_threshold: float = 0.2
    resolution: float = 0.0
    T: float = 1000.0
    rescale_interval: float = 10.0
    sample_interval: float = 100.0
    mode: str = "period"
    E: float = 2.0
    tau: float = 0.0
    trace_a: Optional[str] = None
    trace_b: Optional[str] = None
    output_dir: str = "runs"
    sweep_param: Optional[str] = None
    sweep_values: Optional[tuple] = None

    def resolved(self) -> dict:
        """Canonical dict of the run parameters (sweep and output keys excluded)."""
        d = asdict(self)
        for k in ("output_dir", "sweep_param", "sweep_values"):
            d.pop(k)
        return json.loads(json.dumps(d))

    def digest(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def n_spins(self) -> Optional[int]:
        if self.coords is not None:
            return len(self.coords)
        if self.lattice is not None:
            return self.lattice[0] * self.lattice[1] * self.lattice[2]
        return None

    def with_value(self, key: str, value) -> "RunConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d[key] = value
        d["sweep_param"] = None
        d["sweep_values"] = None
        cfg = RunConfig(**d)
        _validate(cfg, _fail_plain)
        return cfg


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _line_of(text: str, key: str) -> Optional[int]:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.match(line):
            return i
    return None


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def parse_config(text: str) -> RunConfig:
    """Parse and validate config text."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}", getattr(exc, "lineno", None)) from None

    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}", _line_of(text, key))

    for key, val in raw.items():
        if key not in _FIELD_TYPES:
            fail(key, "unknown key")
        if isinstance(val, dict):
            fail(key, "nested tables are not supported; use flat keys")
    if "engine" not in raw:
        raise ConfigError("missing required key 'engine'")
    kw: dict[str, Any] = {}
    for key, val in raw.items():
        typ = str(_FIELD_TYPES[key])
        if typ == "float" and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if typ == "float" and not isinstance(val, float):
            fail(key, f"expected a number, got {val!r}")
        if typ == "int" and (not isinstance(val, int) or isinstance(val, bool)):
            fail(key, f"expected an integer, got {val!r}")
        if typ == "bool" and not isinstance(val, bool):
            fail(key, f"expected true/false, got {val!r}")
        kw[key] = _tuplify(val)
    try:
        cfg = RunConfig(**kw)
    except TypeError as exc:  # pragma: no cover - guarded by the key check
        raise ConfigError(str(exc)) from None
    _validate(cfg, fail)
    return cfg


def _fail_plain(key, msg):
    raise ConfigError(f"{key}: {msg}")


def _validate(cfg: RunConfig, fail) -> None:
    if cfg.engine not in ENGINES:
        fail("engine", f"must be one of {', '.join(ENGINES)}")
    if cfg.lattice is not None and cfg.coords is not None:
        fail("coords", "give either lattice or coords, not both")
    if cfg.lattice is not None:
        if len(cfg.lattice) != 3 or any(not isinstance(v, int) or v < 1 for v in cfg.lattice):
            fail("lattice", "must be three positive integers")
    if cfg.coords is not None:
        if len(cfg.coords) == 0 or any(len(c) != 3 or not all(isinstance(v, int) for v in c)
                                       for c in cfg.coords):
            fail("coords", "must be a non-empty list of integer 3-vectors")
        if len(set(cfg.coords)) != len(cfg.coords):
            fail("coords", "duplicate coordinates")
    if cfg.engine in ("quantum", "classical", "lyapunov"):
        if cfg.lattice is None and cfg.coords is None:
            fail("engine", f"{cfg.engine} runs need lattice or coords")
        if not cfg.p_d > 0:
            fail("p_d", "must be positive")
        if not cfg.t_max > 0:
            fail("t_max", "must be positive")
        if not 0 < cfg.dt <= cfg.t_max:
            fail("dt", "must be positive and not exceed t_max")
    if cfg.engine == "quantum" and cfg.n_spins() > MAX_QUANTUM_SPINS:
        key = "lattice" if cfg.lattice is not None else "coords"
        fail(key, f"{cfg.n_spins()} quantum spins exceeds the limit of {MAX_QUANTUM_SPINS}")
    if cfg.engine in ("classical", "lyapunov"):
        if not -1.0 <= cfg.s <= 1.0:
            fail("s", "polarization must lie in [-1, 1]")
        if cfg.init not in ("linear", "random"):
            fail("init", "must be 'linear' or 'random'")
        if cfg.frame not in ("lab", "rotating_secular"):
            fail("frame", "must be 'lab' or 'rotating_secular'")
        if cfg.perturb < 0:
            fail("perturb", "must be non-negative")
    if cfg.engine == "lyapunov" and not cfg.t_max > cfg.T:
        fail("t_max", "must exceed the transient cutoff T")
    if cfg.engine == "twospin" and cfg.mode not in TWOSPIN_MODES:
        fail("mode", f"must be one of {', '.join(TWOSPIN_MODES)}")
    if cfg.engine == "compare" and (cfg.trace_a is None or cfg.trace_b is None):
        fail("engine", "compare runs need trace_a and trace_b")
    if not 0 < cfg.t_star_threshold < 1:
        fail("t_star_threshold", "must lie in (0, 1)")
    if cfg.sweep_param is not None:
        if cfg.sweep_param not in _FIELD_TYPES or cfg.sweep_param in ("engine", "sweep_param",
                                                                       "sweep_values", "output_dir"):
            fail("sweep_param", "not a sweepable parameter")
        if not cfg.sweep_values:
            fail("sweep_values", "must be a non-empty list")


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())
