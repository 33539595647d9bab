"""Report types and their JSON / CSV serialisation.

JSON documents carry ``"schema": 1``.  Floats are written with ``repr`` so
they round-trip exactly; infinities and NaNs become the strings "inf",
"-inf" and "nan".  Nothing time- or host-dependent is written, so the same
config and seed give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import scipy

SCHEMA_VERSION = 1
DEGENERATE = "degenerate"


def jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def unjson_float(x: Any) -> Any:
    if x in ("inf", "-inf", "nan"):
        return float(x)
    return x


def versions() -> dict:
    from .. import __version__
    return {"kimflow": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


@dataclass
class StabilityReport:
    """Outcome of one L2 or L-infinity stability experiment.

    ``bound = constant * sqrt(fi_used)``; ``slack = empirical / bound`` or the
    string "degenerate" when both are zero.  ``passed`` means
    empirical <= bound * (1 + 3 * rel_se).
    """

    metric: str                 # "l2" | "linf"
    empirical: float
    empirical_se: float
    l2: float
    linf: float
    fi: float
    fi_se: float
    fi_inf: float | None
    constant_name: str
    constant: float             # closed-form Lambda_inf / eta_inf
    constant_T: float           # finite-horizon Lambda_T / eta_T
    constant_limit: float       # lim_T Lambda_T by direct quadrature
    bound: float
    slack: float | str
    rel_se: float
    passed: bool
    profile: dict
    n: int
    T: float
    extras: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return jsonable(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "StabilityReport":
        kw = {}
        for f in fields(cls):
            v = data[f.name]
            if f.name == "slack" and v == DEGENERATE:
                kw[f.name] = v
            elif isinstance(v, str):
                kw[f.name] = unjson_float(v)
            else:
                kw[f.name] = v
        return cls(**kw)

    csv_header = ("metric", "estimate", "se", "bound")

    def csv_rows(self) -> list[tuple]:
        rows = [("l2", self.l2, self.empirical_se if self.metric == "l2" else "",
                 self.bound if self.metric == "l2" else ""),
                ("linf", self.linf, "", self.bound if self.metric == "linf" else ""),
                ("fi", self.fi, self.fi_se, "")]
        if self.fi_inf is not None:
            rows.append(("fi_inf", self.fi_inf, "", ""))
        rows.append(("slack", self.slack, "", ""))
        return rows


@dataclass
class TableReport:
    """Generic tabular result (decay curves, theta checks, constant tables)."""

    kind: str
    passed: bool
    summary: dict
    header: tuple[str, ...]
    rows: list[tuple]
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return jsonable({"summary": self.summary,
                         "table": [dict(zip(self.header, r)) for r in self.rows]})

    def csv_rows(self) -> list[tuple]:
        return self.rows

    @property
    def csv_header(self):
        return self.header


def document(kind: str, config: dict, report, provenance: dict) -> dict:
    status = "pass" if report.passed else "violation"
    results = report.to_dict()
    results.pop("provenance", None)
    return jsonable({"schema": SCHEMA_VERSION, "experiment": kind, "status": status,
                     "passed": report.passed, "config": config, "results": results,
                     "provenance": provenance})


def dumps_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def dumps_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(out_dir: str | Path, stem: str, doc: dict, header, rows) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    jpath, cpath = out_dir / f"{stem}.json", out_dir / f"{stem}.csv"
    atomic_write(jpath, dumps_json(doc))
    atomic_write(cpath, dumps_csv(header, rows))
    return jpath, cpath
