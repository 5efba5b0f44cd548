"""Reader and writer for the ``wsc-v1`` JSON-lines complex format.

The first line is a header ``{"format": "wsc-v1", "include_empty": bool,
"empty_weight": w}``; every further line is ``{"s": [v0, ..., vk], "m": w}``
with strictly increasing vertex ids.
"""

from __future__ import annotations

import io
import json
from pathlib import Path
from typing import IO

import numpy as np

from .complex import ComplexError, WeightedComplex

__all__ = ["FORMAT", "WSCFormatError", "dumps", "loads", "read_wsc", "write_wsc"]

FORMAT = "wsc-v1"


class WSCFormatError(ComplexError):
    pass


def _write(cx: WeightedComplex, fh: IO[str]) -> None:
    header = {"format": FORMAT, "include_empty": cx.include_empty, "empty_weight": cx.empty_weight}
    fh.write(json.dumps(header, sort_keys=True) + "\n")
    for k in range(cx.dim + 1):
        for row, w in zip(cx.table(k).tolist(), cx.weights(k).tolist()):
            fh.write(json.dumps({"m": w, "s": row}, sort_keys=True) + "\n")


def dumps(cx: WeightedComplex) -> str:
    buf = io.StringIO()
    _write(cx, buf)
    return buf.getvalue()


def write_wsc(cx: WeightedComplex, path: str | Path) -> None:
    with open(path, "w") as fh:
        _write(cx, fh)


def loads(text: str) -> WeightedComplex:
    """Parse ``wsc-v1`` text; rejects unsorted or duplicate simplices and broken closure."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise WSCFormatError("empty input")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise WSCFormatError(f"line 1: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise WSCFormatError(f"line 1: expected a {FORMAT} header")
    include_empty = bool(header.get("include_empty", False))
    empty_weight = float(header.get("empty_weight", 1.0))
    seen: set[tuple[int, ...]] = set()
    by_dim: dict[int, list[list[int]]] = {}
    w_dim: dict[int, list[float]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            s = rec["s"]
            m = float(rec["m"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise WSCFormatError(f"line {lineno}: malformed record ({exc})") from None
        if not isinstance(s, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in s):
            raise WSCFormatError(f"line {lineno}: vertex list must contain integers")
        if len(s) == 0:
            raise WSCFormatError(f"line {lineno}: the empty simplex is declared in the header")
        if any(a >= b for a, b in zip(s, s[1:])):
            raise WSCFormatError(f"line {lineno}: vertices {s} are not strictly increasing")
        key = tuple(s)
        if key in seen:
            raise WSCFormatError(f"line {lineno}: duplicate simplex {s}")
        seen.add(key)
        by_dim.setdefault(len(s) - 1, []).append(s)
        w_dim.setdefault(len(s) - 1, []).append(m)
    cells = {k: np.array(v, dtype=np.int64).reshape(-1, k + 1) for k, v in by_dim.items()}
    weights = {k: np.array(v) for k, v in w_dim.items()}
    return WeightedComplex(cells, weights, include_empty=include_empty, empty_weight=empty_weight)


def read_wsc(path: str | Path) -> WeightedComplex:
    return loads(Path(path).read_text())
