"""Numeric datasets with named columns, and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import InputError, ParseError


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ``n x p`` matrix of finite reals with unique column names."""

    names: tuple[str, ...]
    values: np.ndarray
    provenance: str = ""
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2 or values.shape[1] != len(names):
            raise InputError(f"values of shape {values.shape} do not match {len(names)} names")
        if len(set(names)) != len(names):
            raise InputError("column names must be unique")
        if values.shape[0] < 2:
            raise InputError("a dataset needs at least two rows")
        if not np.all(np.isfinite(values)):
            bad = [names[j] for j in np.where(~np.isfinite(values).all(axis=0))[0]]
            raise InputError(f"non-finite values in columns {bad}")
        values.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise InputError(f"unknown column {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def columns(self, names: Sequence[str]) -> np.ndarray:
        return self.values[:, [self.index(n) for n in names]]

    def select(self, names: Sequence[str]) -> "Dataset":
        return Dataset(tuple(names), self.columns(names), self.provenance)


def read_csv(path_or_text, *, is_text: bool = False) -> Dataset:
    """Read a header-first, comma-separated numeric table.

    Missing or non-numeric cells are rejected with their line number.
    """
    if is_text:
        text, source = path_or_text, "<text>"
    else:
        source = str(path_or_text)
        try:
            text = Path(path_or_text).read_text(encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot read {source}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{source} is empty") from None
    header = [h.strip() for h in header]
    if not header or any(not h for h in header):
        raise ParseError("empty column name in header", 1)
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, got {len(row)}", lineno)
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise ParseError(f"non-numeric or missing cell in {row}", lineno) from None
        if not all(np.isfinite(vals)):
            raise ParseError("missing (NaN) or infinite value", lineno)
        rows.append(vals)
    if len(rows) < 2:
        raise ParseError(f"{source} has fewer than two data rows")
    return Dataset(tuple(header), np.array(rows), provenance=source)


def to_csv(data: Dataset) -> str:
    out = io.StringIO()
    out.write(",".join(data.names) + "\n")
    for row in data.values:
        out.write(",".join(repr(float(v)) for v in row) + "\n")
    return out.getvalue()


def write_csv(data: Dataset, path) -> None:
    Path(path).write_text(to_csv(data), encoding="utf-8", newline="\n")
