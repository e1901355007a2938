"""Run records and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional

ALGOS = ("smc", "smc-is", "numeric", "numeric-is")

# fixed leading columns; the parameter caps and the message follow them
CSV_COLUMNS = ("model", "algo", "p", "n0", "epsilon", "delta", "seed", "lo", "hi", "mid",
               "certified", "n_samples", "states_expanded", "mean_path_len", "wall_ms", "status")
EXTRA_COLUMNS = ("step_cap", "budget", "timeout", "message")


@dataclass
class RunRecord:
    model: str
    algo: str
    p: Optional[float] = None
    n0: Optional[int] = None
    epsilon: Optional[float] = None
    delta: Optional[float] = None
    seed: Optional[int] = None
    lo: Optional[float] = None
    hi: Optional[float] = None
    mid: Optional[float] = None
    certified: bool = False
    n_samples: Optional[int] = None
    states_expanded: Optional[int] = None
    mean_path_len: Optional[float] = None
    wall_ms: Optional[float] = None
    status: str = "ok"
    step_cap: Optional[int] = None
    budget: Optional[int] = None
    timeout: Optional[float] = None
    message: str = ""

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algorithm {self.algo!r}")

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), sort_keys=False)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        d = json.loads(text)
        return cls(**{k: _from_json_value(v) for k, v in d.items()})

    def to_row(self) -> dict:
        return {k: _cell(getattr(self, k)) for k in CSV_COLUMNS + EXTRA_COLUMNS}

    @classmethod
    def from_row(cls, row: dict) -> "RunRecord":
        kinds = {f.name: f.type for f in fields(cls)}
        return cls(**{k: _parse_cell(row.get(k, ""), kinds[k]) for k in CSV_COLUMNS + EXTRA_COLUMNS})


# floats use repr so they survive the round trip bit for bit; non-finite
# values become strings because JSON has no literal for them

def _jsonable(d: dict) -> dict:
    return {k: (repr(v) if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def _from_json_value(v):
    if v in ("inf", "-inf", "nan"):
        return float(v)
    return v


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_cell(s: str, kind: str):
    if kind == "str":
        return s
    if kind == "bool":
        if s not in ("true", "false"):
            raise ValueError(f"bad boolean cell {s!r}")
        return s == "true"
    if s == "":
        return None
    if "int" in kind:
        return int(s)
    return float(s)


def write_csv(records: Iterable[RunRecord], stream) -> None:
    """Write a header and one row per record; open files with ``newline=""``.

    Rows end in CRLF so that a bare CR or LF inside a message gets quoted.
    """
    w = csv.DictWriter(stream, fieldnames=list(CSV_COLUMNS + EXTRA_COLUMNS), lineterminator="\r\n")
    w.writeheader()
    for r in records:
        w.writerow(r.to_row())


def read_csv(stream) -> list[RunRecord]:
    return [RunRecord.from_row(row) for row in csv.DictReader(stream)]


def csv_text(records: Iterable[RunRecord]) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()
