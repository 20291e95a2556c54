"""Multi-way contingency tables in a canonical cell order.

Cells are enumerated mixed-radix with the last factor varying fastest and
level index 0 (the baseline) first.  Every other module relies on this
ordering for the rows of the design matrix and for marginal vectors.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

import numpy as np


class TableError(ValueError):
    """Raised for malformed table input."""


@dataclass(frozen=True)
class FactorSpec:
    name: str
    levels: tuple[str, ...]

    def __post_init__(self):
        if len(self.levels) < 2:
            raise TableError(f"factor {self.name!r} needs at least 2 levels")
        if len(set(self.levels)) != len(self.levels):
            raise TableError(f"factor {self.name!r} has duplicate levels")

    @property
    def size(self) -> int:
        return len(self.levels)

    @property
    def baseline_index(self) -> int:
        return 0


@dataclass(frozen=True)
class MarginalTable:
    subset: tuple[str, ...]
    counts: np.ndarray


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    factors: tuple[FactorSpec, ...]
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size != int(np.prod(self.shape)):
            raise TableError(
                f"expected {int(np.prod(self.shape))} counts, got {counts.size}")
        if np.any(counts < 0):
            raise TableError("counts must be nonnegative")
        names = self.names
        if len(set(names)) != len(names):
            raise TableError("duplicate factor names")
        counts = counts.copy()
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.size for f in self.factors)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def total(self):
        return self.counts.sum()

    def factor(self, name: str) -> FactorSpec:
        for f in self.factors:
            if f.name == name:
                return f
        raise TableError(f"unknown factor {name!r}")

    def marginalize(self, subset: Iterable[str]) -> MarginalTable:
        return marginalize(self, subset)

    def to_csv(self) -> str:
        return serialize(self)


def _positions(factors: Sequence[FactorSpec], subset: Iterable[str]) -> list[int]:
    names = [f.name for f in factors]
    wanted = set(subset)
    unknown = wanted - set(names)
    if unknown:
        raise TableError(f"unknown factor(s): {', '.join(sorted(unknown))}")
    return [k for k, n in enumerate(names) if n in wanted]


def marginal_vector(values: np.ndarray, shape: Sequence[int],
                    positions: Sequence[int]) -> np.ndarray:
    """Sum a cell vector down to the cells of the factors at `positions`."""
    arr = np.asarray(values).reshape(tuple(shape))
    drop = tuple(k for k in range(len(shape)) if k not in set(positions))
    return arr.sum(axis=drop).ravel() if drop else arr.ravel().copy()


def marginalize(table: ContingencyTable, subset: Iterable[str]) -> MarginalTable:
    pos = _positions(table.factors, subset)
    counts = marginal_vector(table.counts, table.shape, pos)
    return MarginalTable(tuple(table.names[k] for k in pos), counts)


def enumerate_cells(factors: Sequence[FactorSpec],
                    subset: Iterable[str] | None = None) -> list[tuple[int, ...]]:
    """Level-index tuples of the cells of I_subset, in canonical order.

    The subset is taken in factor order regardless of how it is given;
    the empty subset yields the single empty cell.
    """
    pos = (range(len(factors)) if subset is None
           else _positions(factors, subset))
    return list(itertools.product(*(range(factors[k].size) for k in pos)))


def cell_index_array(factors: Sequence[FactorSpec]) -> np.ndarray:
    """|I| x |V| array of level indices, one row per cell in canonical order."""
    shape = tuple(f.size for f in factors)
    return np.indices(shape).reshape(len(shape), -1).T


def load_table(source) -> ContingencyTable:
    """Parse CSV text (or a text stream) into a canonically ordered table."""
    text = source if isinstance(source, str) else source.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise TableError("empty CSV") from None
    if header.count("freq") != 1:
        raise TableError("CSV must have exactly one 'freq' column")
    fcol = header.index("freq")
    names = [h for k, h in enumerate(header) if k != fcol]
    if not names:
        raise TableError("CSV has no factor columns")

    rows = []
    for lineno, raw in enumerate(reader, start=2):
        if not raw or all(not x.strip() for x in raw):
            continue
        if len(raw) != len(header):
            raise TableError(f"line {lineno}: expected {len(header)} fields")
        raw = [x.strip() for x in raw]
        try:
            freq = int(raw[fcol])
        except ValueError:
            raise TableError(f"line {lineno}: freq {raw[fcol]!r} is not an integer") from None
        if freq < 0:
            raise TableError(f"line {lineno}: negative freq")
        rows.append((tuple(x for k, x in enumerate(raw) if k != fcol), freq))

    levels = [sorted({r[0][k] for r in rows})
              for k in range(len(names))]
    factors = tuple(FactorSpec(n, tuple(lv)) for n, lv in zip(names, levels))
    lookup = [{lab: k for k, lab in enumerate(lv)} for lv in levels]
    shape = tuple(len(lv) for lv in levels)

    counts = np.zeros(shape, dtype=np.int64)
    seen = np.zeros(shape, dtype=bool)
    for labels, freq in rows:
        idx = tuple(lookup[k][lab] for k, lab in enumerate(labels))
        if seen[idx]:
            raise TableError(f"duplicate cell {dict(zip(names, labels))}")
        seen[idx] = True
        counts[idx] = freq
    if not seen.all():
        missing = np.argwhere(~seen)[0]
        cell = {n: levels[k][i] for k, (n, i) in enumerate(zip(names, missing))}
        raise TableError(f"missing cell {cell} ({int((~seen).sum())} missing)")
    return ContingencyTable(factors, counts.ravel())


def serialize(table: ContingencyTable) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(list(table.names) + ["freq"])
    for cell, n in zip(enumerate_cells(table.factors), table.counts):
        w.writerow([f.levels[i] for f, i in zip(table.factors, cell)] + [int(n)])
    return out.getvalue()


def read_table(path) -> ContingencyTable:
    with open(path, encoding="utf-8") as fh:
        return load_table(fh.read())


def load_czech() -> ContingencyTable:
    """The 2^6 Czech autoworkers table (1841 men, factors a..f)."""
    text = resources.files("loglin").joinpath("data/czech.csv").read_text("utf-8")
    return load_table(text)
