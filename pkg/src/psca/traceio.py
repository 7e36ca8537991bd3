"""CSV serialization of solver traces.

Layout::

    # psca-trace v1 instance=<sha256> key=value ...
    r,objective,gap_to_hstar,step,selected_blocks,update_norm_sq,prox_grad_norm,wall_clock_ns
    0,...
    ...
    <iterations>,<final objective>,<final gap>,,,,<final prox-grad norm>,<total ns>

The last row describes the final iterate and leaves the per-step columns
empty. Floats are written with ``repr`` so a round trip is exact.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

SCHEMA = "psca-trace"
SCHEMA_VERSION = 1
COLUMNS = ("r", "objective", "gap_to_hstar", "step", "selected_blocks", "update_norm_sq",
           "prox_grad_norm", "wall_clock_ns")


def _f(v):
    return "" if v is None else repr(float(v))


def write_trace_csv(path, trace, h_star=None, meta=()):
    """Write ``trace`` with a provenance header built from ``meta`` pairs."""
    head = " ".join(f"{k}={str(v).replace(' ', '_')}" for k, v in meta)
    gap = (lambda h: None) if h_star is None else (lambda h: h - h_star)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {SCHEMA} v{SCHEMA_VERSION} {head}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for rec in trace.records:
            w.writerow([rec.r, _f(rec.objective), _f(gap(rec.objective)), _f(rec.step),
                        rec.selected, _f(rec.update_norm_sq), _f(rec.prox_grad_norm),
                        rec.wall_clock_ns])
        total = trace.records[-1].wall_clock_ns if trace.records else 0
        w.writerow([trace.iterations, _f(trace.final_objective), _f(gap(trace.final_objective)),
                    "", "", "", _f(trace.final_prox_grad_norm), total])


@dataclass
class TraceTable:
    """A trace read back from CSV; exposes the arrays the audits need."""

    meta: dict
    r: np.ndarray
    objective: np.ndarray
    gap: np.ndarray
    step: np.ndarray
    selected: np.ndarray
    update_norm_sq: np.ndarray
    prox_grad_norm: np.ndarray
    wall_clock_ns: np.ndarray
    path: str = field(default="")

    @property
    def iterations(self):
        return int(self.r[-1])

    @property
    def instance_hash(self):
        return self.meta.get("instance", "")

    def objectives(self):
        return self.objective

    def steps(self):
        return self.step[:-1]

    def update_norms_sq(self):
        return self.update_norm_sq[:-1]


def _num(text, kind=float):
    return np.nan if text == "" else kind(text)


def read_trace_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        parts = first[1:].split() if first.startswith("#") else []
        if len(parts) < 2 or parts[0] != SCHEMA:
            raise InvalidArgumentError(f"{path}: not a {SCHEMA} file")
        if parts[1] != f"v{SCHEMA_VERSION}":
            raise InvalidArgumentError(f"{path}: unsupported schema version {parts[1]}")
        meta = dict(p.split("=", 1) for p in parts[2:] if "=" in p)
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != COLUMNS:
            raise InvalidArgumentError(f"{path}: unexpected columns {header}")
        rows = [row for row in reader if row]
    if not rows:
        raise InvalidArgumentError(f"{path}: no rows")
    cols = list(zip(*rows))
    try:
        arrays = [np.array([_num(v) for v in c], dtype=float) for c in cols]
    except ValueError as exc:
        raise InvalidArgumentError(f"{path}: malformed number ({exc})") from None
    return TraceTable(meta, arrays[0].astype(np.int64), *arrays[1:], path=str(path))
