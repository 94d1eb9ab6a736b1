"""CSV tables with '#'-prefixed metadata lines and full double precision."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .. import __version__


@dataclass
class CsvTable:
    header: List[str]
    rows: List[List[float]] = field(default_factory=list)
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for r in self.rows:
            self._check(r)

    def _check(self, row: Sequence) -> None:
        if len(row) != len(self.header):
            raise ValueError(f"row has {len(row)} cells, header has {len(self.header)}")

    def append(self, row: Sequence) -> None:
        self._check(row)
        self.rows.append(list(row))

    def column(self, name: str) -> np.ndarray:
        i = self.header.index(name)
        return np.array([float(r[i]) for r in self.rows])

    def to_text(self) -> str:
        buf = io.StringIO()
        meta = {"version": __version__, **self.metadata}
        for k in meta:
            buf.write(f"# {k}: {meta[k]}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for r in self.rows:
            w.writerow([_cell(v) for v in r])
        return buf.getvalue()

    def write(self, path: str) -> str:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(self.to_text())
        return path

    @classmethod
    def from_text(cls, text: str) -> "CsvTable":
        meta, body = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(":")
                meta[key.strip()] = value.strip()
            elif line.strip():
                body.append(line)
        rows = list(csv.reader(body))
        header, data = rows[0], [[_parse(c) for c in r] for r in rows[1:]]
        return cls(header, data, meta)

    @classmethod
    def read(cls, path: str) -> "CsvTable":
        with open(path) as fh:
            return cls.from_text(fh.read())


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _parse(c: str):
    try:
        return float(c)
    except ValueError:
        return c
