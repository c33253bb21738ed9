"""Versioned CV report: per-lambda error estimates along a path.

Serialised as a single JSON document; :func:`to_csv` gives a flat table for
plotting. Loading is strict: a different schema version or any unknown key
raises :class:`ReportError`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional

SCHEMA = "acvmlr.cvreport"
VERSION = 1
ESTIMATORS = ("training", "acv", "saacv", "literal")

STATUS_CONVERGED = "converged"
STATUS_NOT_CONVERGED = "not_converged"
STATUS_FAILED = "failed"


class ReportError(ValueError):
    pass


@dataclass
class LambdaRecord:
    lambda_tilde: float
    status: str
    training_error: Optional[float] = None
    eps_acv: Optional[float] = None
    eps_saacv: Optional[float] = None
    eps_literal: Optional[float] = None
    ned_acv: Optional[float] = None
    ned_saacv: Optional[float] = None
    active_set_size: int = 0
    zero_modes_removed: int = 0
    kkt_violation: Optional[float] = None
    saacv_iterations: Optional[int] = None
    flags: List[str] = field(default_factory=list)
    op_counts: Dict[str, int] = field(default_factory=dict)
    wall_times: Dict[str, float] = field(default_factory=dict)


@dataclass
class CvReport:
    lambda_grid: List[float]
    eta: float
    records: List[LambdaRecord]
    provenance: Dict[str, object] = field(default_factory=dict)
    argmin: Dict[str, Optional[float]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.records:
            raise ReportError("report has an empty lambda grid")
        if not self.argmin:
            self.argmin = compute_argmin(self.records)

    def column(self, name: str) -> List[Optional[float]]:
        return [getattr(r, name) for r in self.records]

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "version": VERSION,
            "eta": self.eta,
            "lambda_grid": list(self.lambda_grid),
            "records": [_clean(asdict(r)) for r in self.records],
            "argmin": self.argmin,
            "provenance": self.provenance,
        }

    def dumps(self, timings: bool = True) -> str:
        d = self.to_dict()
        if not timings:
            for r in d["records"]:
                r["wall_times"] = {}
        return json.dumps(d, indent=2, sort_keys=True, allow_nan=False) + "\n"

    def save(self, path, timings: bool = True) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps(timings))

    @classmethod
    def from_dict(cls, d: dict) -> "CvReport":
        if not isinstance(d, dict):
            raise ReportError("report must be a JSON object")
        if d.get("schema") != SCHEMA:
            raise ReportError(f"not a CV report (schema={d.get('schema')!r})")
        if d.get("version") != VERSION:
            raise ReportError(f"unsupported report version {d.get('version')!r}; expected {VERSION}")
        top = {"schema", "version", "eta", "lambda_grid", "records", "argmin", "provenance"}
        extra = set(d) - top
        if extra:
            raise ReportError(f"unknown report fields: {sorted(extra)}")
        rec_fields = {f.name for f in fields(LambdaRecord)}
        records = []
        for r in d.get("records") or []:
            unknown = set(r) - rec_fields
            if unknown:
                raise ReportError(f"unknown record fields: {sorted(unknown)}")
            records.append(LambdaRecord(**r))
        if not records:
            raise ReportError("report has an empty lambda grid")
        return cls(
            lambda_grid=list(d["lambda_grid"]),
            eta=d["eta"],
            records=records,
            provenance=d.get("provenance", {}),
            argmin=d.get("argmin", {}),
        )

    @classmethod
    def load(cls, path) -> "CvReport":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ReportError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(d)


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return obj


def compute_argmin(records: List[LambdaRecord]) -> Dict[str, Optional[float]]:
    """lambda_tilde minimising each estimator over converged points."""
    out: Dict[str, Optional[float]] = {}
    for name, attr in (("training", "training_error"), ("acv", "eps_acv"),
                       ("saacv", "eps_saacv"), ("literal", "eps_literal")):
        best, best_lam = None, None
        for r in records:
            v = getattr(r, attr)
            if r.status != STATUS_CONVERGED or v is None:
                continue
            if best is None or v < best:
                best, best_lam = v, r.lambda_tilde
        out[name] = best_lam
    return out


CSV_COLUMNS = [
    "lambda_tilde", "status", "training_error", "eps_acv", "eps_saacv", "eps_literal",
    "ned_acv", "ned_saacv", "active_set_size", "zero_modes_removed",
    "argmin_acv", "argmin_saacv", "argmin_literal",
]


def to_csv(report: CvReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.records:
        row = []
        for c in CSV_COLUMNS:
            if c.startswith("argmin_"):
                lam = report.argmin.get(c[len("argmin_"):])
                row.append(int(lam is not None and lam == r.lambda_tilde))
                continue
            v = getattr(r, c)
            row.append("" if v is None else (repr(float(v)) if isinstance(v, float) else v))
        w.writerow(row)
    return buf.getvalue()


def parse_csv(text: str) -> List[dict]:
    """Inverse of :func:`to_csv` (numbers back to float/int, blanks to None)."""
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        out = {}
        for k, v in row.items():
            if k == "status":
                out[k] = v
            elif v == "":
                out[k] = None
            elif k in ("active_set_size", "zero_modes_removed") or k.startswith("argmin_"):
                out[k] = int(v)
            else:
                out[k] = float(v)
        rows.append(out)
    return rows


def to_table(report: CvReport) -> str:
    cols = ["lambda_tilde", "status", "training_error", "eps_acv", "eps_saacv",
            "eps_literal", "ned_acv", "ned_saacv", "active_set_size"]
    lines = ["  ".join(f"{c:>14}" for c in cols)]
    for r in report.records:
        cells = []
        for c in cols:
            v = getattr(r, c)
            if v is None:
                cells.append(f"{'-':>14}")
            elif isinstance(v, float):
                cells.append(f"{v:>14.6g}")
            else:
                cells.append(f"{v!s:>14}")
        lines.append("  ".join(cells))
    lines.append("")
    for k, v in report.argmin.items():
        lines.append(f"argmin {k:>9}: {'-' if v is None else f'{v:.6g}'}")
    return "\n".join(lines) + "\n"
