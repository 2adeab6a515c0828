"""Report serialization: JSON documents, CSV tables, field snapshots, manifests.

Every document carries ``schema_version``.  Floats in CSV files are written
with ``%.17g`` so they round-trip exactly; JSON uses Python's shortest
round-trip repr.  Column lists are frozen per schema version.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import jsonschema
import numpy as np

from .spectral import SpectralField

SCHEMA_VERSION = "1.0"
SNAPSHOT_FORMAT = "nlsqi-snapshot"

_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}
_INT = {"type": "integer"}

MC_REPORT_SCHEMA = {
    "type": "object",
    "description": "Monte Carlo estimate with a verdict.",
    "required": ["name", "estimate", "stderr", "n_samples", "bound", "verdict", "details"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "estimate": {**_NUM_OR_NULL, "description": "point estimate (dimensionless); null if it overflows a double"},
        "stderr": {"type": ["number", "null"], "minimum": 0,
                   "description": "standard error of the estimate; null if not finite"},
        "n_samples": {**_INT, "minimum": 0},
        "bound": {**_NUM_OR_NULL, "description": "threshold the estimate is compared against"},
        "verdict": {
            "enum": ["pass", "fail", "inconclusive"],
            "description": "pass: |estimate| <= bound (or relative change within tolerance for moments); "
                           "fail: otherwise; inconclusive: stderr > 25% of the estimate scale",
        },
        "details": {"type": "object"},
    },
}

ENERGY_SCHEMA = {
    "type": "object",
    "description": "Breakdown of the modified-energy rate at one field.",
    "required": ["s", "k", "N", "l2s", "correction", "term_I", "term_II", "term_III", "term_IV",
                 "term_V", "term_VI", "term_VII", "q1", "q2", "galerkin_remainder"],
    "properties": {
        "s": _NUM, "k": _INT, "N": _INT,
        "l2s": {**_NUM, "description": "||D^s u||^2"},
        "correction": {**_NUM, "description": "2 S(u)"},
        **{f"term_{r}": _NUM for r in ("I", "II", "III", "IV", "V", "VI", "VII")},
        "q1": _NUM, "q2": _NUM, "galerkin_remainder": _NUM,
        "term_sum": _NUM, "modified_energy": _NUM,
    },
}

COUNTING_SCHEMA = {
    "type": "object",
    "description": "Sup-counts of a resonance set over a list of scales with a fitted power law.",
    "required": ["set", "rows", "exponent"],
    "properties": {
        "set": {"enum": ["S", "E"]},
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["N", "count", "kappa"],
                "properties": {"N": _INT, "count": _INT, "kappa": _INT,
                               "m": {"type": ["array", "null"], "items": _INT}},
            },
        },
        "exponent": {**_NUM_OR_NULL, "description": "least-squares slope of log count against log N"},
        "bound": _NUM_OR_NULL,
        "verdict": {"enum": ["pass", "fail", "inconclusive"]},
    },
}

SNAPSHOT_SCHEMA = {
    "type": "object",
    "description": "Fourier coefficients of one field; exact round trip.",
    "required": ["format", "version", "cutoff", "modes"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": SNAPSHOT_FORMAT},
        "version": {"type": "string"},
        "cutoff": {**_INT, "minimum": 0},
        "modes": {
            "type": "array",
            "description": "[n1, n2, Re u_hat(n), Im u_hat(n)] for every nonzero coefficient",
            "items": {"type": "array", "minItems": 4, "maxItems": 4,
                      "prefixItems": [_INT, _INT, _NUM, _NUM]},
        },
    },
}

MANIFEST_SCHEMA = {
    "type": "object",
    "description": "Provenance of one run.",
    "required": ["schema_version", "package_version", "subcommand", "config", "timings", "outputs", "exit_code"],
    "properties": {
        "schema_version": {"type": "string"},
        "package_version": {"type": "string"},
        "subcommand": {"type": "string"},
        "config": {"type": "object", "description": "the exact resolved configuration"},
        "timings": {"type": "object", "additionalProperties": _NUM, "description": "wall seconds"},
        "outputs": {"type": "object", "additionalProperties": {"type": "string"},
                    "description": "file name -> sha256 of its bytes"},
        "exit_code": _INT,
    },
}

CSV_COLUMNS = {
    "sample": ["stream", "n1", "n2", "re", "im"],
    "evolve": ["time", "mass", "hamiltonian", "hs_norm", "fl_norm"],
    "energy-audit": ["index", "l2s", "correction", "term_I", "term_II", "term_III", "term_IV", "term_V",
                     "term_VI", "term_VII", "q1", "q2", "galerkin_remainder", "term_sum"],
    "energy-residuals": ["index", "dt_fd", "residual", "fd", "term_sum"],
    "counting": ["set", "shells", "signs", "m1", "m2", "kappa", "count"],
    "qi-test": ["name", "estimate", "stderr", "bound", "A", "B", "verdict"],
    "moments": ["name", "estimate", "stderr", "relative_change", "verdict"],
}

SCHEMAS = {
    "mc_report": MC_REPORT_SCHEMA,
    "energy_breakdown": ENERGY_SCHEMA,
    "counting_summary": COUNTING_SCHEMA,
    "snapshot": SNAPSHOT_SCHEMA,
    "manifest": MANIFEST_SCHEMA,
}


def schema_document() -> dict:
    """Every report schema plus the frozen CSV columns."""
    return {
        "schema_version": SCHEMA_VERSION,
        "reports": SCHEMAS,
        "csv_columns": CSV_COLUMNS,
        "float_format": "%.17g",
        "units": "all quantities are dimensionless; times in units of the flow time, timings in seconds",
    }


def validate(doc: Mapping, kind: str) -> None:
    """Raise jsonschema.ValidationError if ``doc`` does not match the schema ``kind``."""
    jsonschema.Draft202012Validator(SCHEMAS[kind]).validate(doc)


def _plain(x: Any) -> Any:
    if isinstance(x, Mapping):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def dumps(doc: Any) -> str:
    return json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"


def fmt(x: Any) -> str:
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def csv_text(kind: str, rows: Iterable[Sequence]) -> str:
    cols = CSV_COLUMNS[kind]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        if len(r) != len(cols):
            raise ValueError(f"{kind} row has {len(r)} fields, expected {len(cols)}")
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


# snapshots -------------------------------------------------------------------

def snapshot(u: SpectralField) -> dict:
    modes = [[n1, n2, float(c.real), float(c.imag)] for (n1, n2), c in sorted(u.to_modes().items())]
    return {"format": SNAPSHOT_FORMAT, "version": SCHEMA_VERSION, "cutoff": int(u.cutoff), "modes": modes}


def from_snapshot(doc: Mapping) -> SpectralField:
    validate(doc, "snapshot")
    modes = {(int(a), int(b)): complex(re, im) for a, b, re, im in doc["modes"]}
    return SpectralField.from_modes(modes, int(doc["cutoff"]))


# files -------------------------------------------------------------------------

def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class OutputDir:
    """Collects written files and their checksums for the manifest."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.outputs: dict[str, str] = {}

    def write_text(self, name: str, text: str) -> Path:
        data = text.encode("utf-8")
        p = self.path / name
        p.write_bytes(data)
        self.outputs[name] = sha256(data)
        return p

    def write_json(self, name: str, doc: Any, kind: str | None = None) -> Path:
        doc = _plain(doc)
        if kind is not None:
            validate(doc, kind)
        return self.write_text(name, dumps(doc))

    def write_csv(self, name: str, kind: str, rows) -> Path:
        return self.write_text(name, csv_text(kind, rows))

    def write_manifest(self, subcommand: str, config: Mapping, timings: Mapping, exit_code: int,
                       version: str) -> Path:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "package_version": version,
            "subcommand": subcommand,
            "config": _plain(config),
            "timings": {k: float(v) for k, v in timings.items()},
            "outputs": dict(sorted(self.outputs.items())),
            "exit_code": int(exit_code),
        }
        validate(doc, "manifest")
        p = self.path / "manifest.json"
        p.write_text(dumps(doc))
        return p
