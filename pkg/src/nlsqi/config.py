"""Experiment configuration: one TOML file per run.

Top level holds the common keys and names the subcommand; parameters that
belong to a single subcommand live in a table of the same name::

    subcommand = "qi-test"
    s = 2.5
    k = 1
    N = 4
    t = 0.1
    seed = 7
    n_samples = 200

    [qi-test]
    n_sigma = 4.0
    [[qi-test.observables]]
    kind = "cylinder"
    modes = [[1, 0]]
    a = [2.0]

Unknown keys are rejected.  Errors carry the line of the offending key when
it can be located in the source text.
"""

from __future__ import annotations

import copy
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .flow import FlowConfig
from .gauss import GaussianSpec
from .spectral import is_dyadic
from .transport import ObservableSpec

SUBCOMMANDS = ("sample", "evolve", "energy-audit", "counting", "qi-test", "moments")

COMMON_DEFAULTS: dict[str, Any] = {
    "s": 2.5,
    "k": 1,
    "N": 4,
    "dt": 1e-3,
    "t": 0.1,
    "seed": 0,
    "n_samples": 200,
}

# per-subcommand keys and defaults; None means "derived from the common keys"
TABLE_DEFAULTS: dict[str, dict[str, Any]] = {
    "sample": {"cutoff": None, "first_stream": 0},
    "evolve": {"stream": 0, "snapshot": None, "checkpoints": 10, "direction": "forward"},
    "energy-audit": {"cutoff": None, "dt_fd": [1e-3, 5e-4, 2.5e-4], "tolerance": 1e-9},
    "counting": {"set": "S", "Ns": [4, 8, 16], "signs": [1, 1, 1], "ms": None, "cyclic": True,
                 "ball": False, "k": None, "max_exponent": 2.3, "max_search": 10 ** 9},
    "qi-test": {"observables": [], "quad_steps": None, "n_sigma": 4.0, "cutoff": None},
    "moments": {"kind": "S", "p": 2.0, "R": 2.0, "sigma": None, "tolerance": 0.05, "cutoff": None},
}

OBSERVABLE_KEYS = {"kind", "name", "modes", "a", "b", "func", "sigma", "R", "mode", "power"}


class ConfigError(ValueError):
    """Invalid configuration, with the source line when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.message = message
        self.line = line
        self.path = path
        super().__init__(self.format())

    def format(self) -> str:
        where = self.path or "<config>"
        if self.line is not None:
            where = f"{where}:{self.line}"
        return f"{where}: {self.message}"


@dataclass
class ExperimentConfig:
    subcommand: str
    s: float
    k: int
    N: int
    dt: float
    t: float
    seed: int
    n_samples: int
    params: dict = field(default_factory=dict)

    def flow(self, direction: str = "forward") -> FlowConfig:
        return FlowConfig(k=self.k, N=self.N, dt=self.dt, direction=direction)

    def gaussian(self, cutoff: int | None = None) -> GaussianSpec:
        return GaussianSpec(s=self.s, cutoff=cutoff or self.N, seed=self.seed)

    def observables(self) -> list[ObservableSpec]:
        out = []
        for o in self.params.get("observables", []):
            o = dict(o)
            kind = o.pop("kind")
            name = o.pop("name", "")
            out.append(ObservableSpec(kind, o, name))
        return out

    def as_dict(self) -> dict:
        return {
            "subcommand": self.subcommand, "s": self.s, "k": self.k, "N": self.N, "dt": self.dt,
            "t": self.t, "seed": self.seed, "n_samples": self.n_samples,
            self.subcommand: copy.deepcopy(self.params),
        }


class _Locator:
    def __init__(self, text: str):
        self.lines = text.splitlines()

    def find(self, key: str, table: str | None = None) -> int | None:
        """1-based line of ``key = ...`` (inside ``[table]`` if given), or of the table header."""
        start = 0
        if table is not None:
            hdr = re.compile(r"^\s*\[\[?\s*\"?" + re.escape(table) + r"\"?(\.[^\]]*)?\s*\]\]?")
            hits = [i for i, ln in enumerate(self.lines) if hdr.match(ln)]
            if not hits:
                return None
            start = hits[0]
            if key is None:
                return start + 1
        pat = re.compile(r"^\s*\"?" + re.escape(key) + r"\"?\s*=")
        for i in range(start, len(self.lines)):
            if table is None and i > start and re.match(r"^\s*\[", self.lines[i]):
                break
            if pat.match(self.lines[i]):
                return i + 1
        return start + 1 if table is not None else None


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def parse(text: str, path: str | None = None, seed_override: int | None = None,
          subcommand: str | None = None) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None, path) from None
    return from_mapping(raw, text, path, seed_override, subcommand)


def load(path: str | Path, seed_override: int | None = None, subcommand: str | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(p)) from None
    return parse(text, str(p), seed_override, subcommand)


def from_mapping(raw: Mapping, text: str = "", path: str | None = None,
                 seed_override: int | None = None, subcommand: str | None = None) -> ExperimentConfig:
    """Validate a parsed key tree.

    ``subcommand`` (from the command line) is used when the file has no
    ``subcommand`` key; if both are present they must agree.
    """
    loc = _Locator(text)

    def fail(msg, key=None, table=None):
        line = loc.find(key, table) if (key is not None or table is not None) else None
        raise ConfigError(msg, line, path)

    sub = raw.get("subcommand", subcommand)
    if subcommand is not None and sub != subcommand:
        fail(f"config is for subcommand {sub!r} but {subcommand!r} was requested", "subcommand")
    if sub not in SUBCOMMANDS:
        fail(f"'subcommand' must be one of {', '.join(SUBCOMMANDS)}; got {sub!r}", "subcommand")
    allowed = set(COMMON_DEFAULTS) | {"subcommand", sub}
    for key in raw:
        if key not in allowed:
            if key in SUBCOMMANDS:
                fail(f"table [{key}] does not belong to subcommand {sub!r}", None, key)
            fail(f"unknown key {key!r}", key)

    vals = {**COMMON_DEFAULTS, **{k: v for k, v in raw.items() if k in COMMON_DEFAULTS}}
    if seed_override is not None:
        vals["seed"] = int(seed_override)
    for key in ("k", "N", "seed", "n_samples"):
        if not _is_int(vals[key]):
            fail(f"'{key}' must be an integer, got {vals[key]!r}", key)
    for key in ("s", "dt", "t"):
        if not _is_num(vals[key]):
            fail(f"'{key}' must be a number, got {vals[key]!r}", key)
        vals[key] = float(vals[key])
    if not vals["s"] > 2:
        fail(f"'s' must exceed 2, got {vals['s']}", "s")
    if vals["k"] < 1:
        fail(f"'k' must be a positive integer, got {vals['k']}", "k")
    if not is_dyadic(vals["N"]):
        fail(f"'N' must be a dyadic integer (1, 2, 4, ...), got {vals['N']}", "N")
    if not vals["dt"] > 0:
        fail(f"'dt' must be positive, got {vals['dt']}", "dt")
    if vals["t"] < 0:
        fail(f"'t' must be nonnegative, got {vals['t']}", "t")
    if not 0 <= vals["seed"] < 2 ** 64:
        fail("'seed' must fit in 64 unsigned bits", "seed")
    if vals["n_samples"] < 1:
        fail(f"'n_samples' must be at least 1, got {vals['n_samples']}", "n_samples")

    table = raw.get(sub, {})
    if not isinstance(table, Mapping):
        fail(f"[{sub}] must be a table", sub)
    defaults = TABLE_DEFAULTS[sub]
    for key in table:
        if key not in defaults:
            fail(f"unknown key {key!r} in [{sub}]", key, sub)
    params = {**copy.deepcopy(defaults), **copy.deepcopy(dict(table))}
    cfg = ExperimentConfig(subcommand=sub, params=params, **vals)
    _validate_table(cfg, lambda msg, key: fail(msg, key, sub))
    return cfg


def _validate_table(cfg: ExperimentConfig, fail) -> None:
    p = cfg.params
    sub = cfg.subcommand

    def need_cutoff(key="cutoff"):
        if p[key] is None:
            p[key] = cfg.N
        if not _is_int(p[key]) or p[key] < cfg.N:
            fail(f"'{key}' must be an integer >= N = {cfg.N}, got {p[key]!r}", key)

    def positive(key):
        if not _is_num(p[key]) or not p[key] > 0:
            fail(f"'{key}' must be a positive number, got {p[key]!r}", key)

    if sub == "sample":
        need_cutoff()
        if not _is_int(p["first_stream"]) or p["first_stream"] < 0:
            fail("'first_stream' must be a nonnegative integer", "first_stream")
    elif sub == "evolve":
        if p["direction"] not in ("forward", "backward"):
            fail(f"'direction' must be 'forward' or 'backward', got {p['direction']!r}", "direction")
        if not _is_int(p["checkpoints"]) or p["checkpoints"] < 1:
            fail("'checkpoints' must be a positive integer", "checkpoints")
        if p["snapshot"] is not None and not isinstance(p["snapshot"], str):
            fail("'snapshot' must be a file path", "snapshot")
        if not _is_int(p["stream"]) or p["stream"] < 0:
            fail("'stream' must be a nonnegative integer", "stream")
    elif sub == "energy-audit":
        need_cutoff()
        dts = p["dt_fd"]
        if not isinstance(dts, list) or not dts or not all(_is_num(x) and x > 0 for x in dts):
            fail("'dt_fd' must be a nonempty list of positive numbers", "dt_fd")
        positive("tolerance")
    elif sub == "counting":
        if p["set"] not in ("S", "E"):
            fail(f"'set' must be 'S' or 'E', got {p['set']!r}", "set")
        Ns = p["Ns"]
        if not isinstance(Ns, list) or len(Ns) < 2 or not all(_is_int(x) and is_dyadic(x) for x in Ns):
            fail("'Ns' must list at least two dyadic integers", "Ns")
        if p["set"] == "S":
            if not (isinstance(p["signs"], list) and len(p["signs"]) == 3 and all(x in (1, -1) for x in p["signs"])):
                fail("'signs' must be three entries of +1 or -1", "signs")
        kk = cfg.k if p["k"] is None else p["k"]
        if not _is_int(kk) or kk < 1:
            fail("'k' must be a positive integer", "k")
        p["k"] = kk
        if p["ms"] is not None:
            ms = p["ms"]
            if not (isinstance(ms, list) and ms and all(isinstance(m, list) and len(m) == 2 and all(map(_is_int, m))
                                                         for m in ms)):
                fail("'ms' must be a nonempty list of integer pairs", "ms")
        positive("max_exponent")
        if not _is_int(p["max_search"]) or p["max_search"] < 1:
            fail("'max_search' must be a positive integer", "max_search")
    elif sub == "qi-test":
        need_cutoff()
        obs = p["observables"]
        if not isinstance(obs, list) or not obs:
            fail("'observables' must be a nonempty list of observable tables", "observables")
        for o in obs:
            if not isinstance(o, Mapping) or "kind" not in o:
                fail("each entry of 'observables' needs a 'kind'", "observables")
            bad = set(o) - OBSERVABLE_KEYS
            if bad:
                fail(f"unknown key(s) {sorted(bad)} in an entry of 'observables'", "observables")
        try:
            specs = cfg.observables()
        except ValueError as exc:
            fail(f"invalid entry in 'observables': {exc}", "observables")
        for F in specs:
            if not F.bounded:
                fail(f"observable {F.label} is not bounded; 'observables' must be bounded", "observables")
        positive("n_sigma")
        if p["quad_steps"] is not None and (not _is_int(p["quad_steps"]) or p["quad_steps"] < 1):
            fail("'quad_steps' must be a positive integer", "quad_steps")
    elif sub == "moments":
        need_cutoff()
        if p["kind"] not in ("S", "Q1"):
            fail(f"'kind' must be 'S' or 'Q1', got {p['kind']!r}", "kind")
        for key in ("p", "R", "tolerance"):
            positive(key)
        if p["sigma"] is not None and not _is_num(p["sigma"]):
            fail("'sigma' must be a number", "sigma")
    try:
        cfg.flow()
        cfg.gaussian(p.get("cutoff"))
    except ValueError as exc:  # pragma: no cover - common keys are checked above
        fail(str(exc), None)
