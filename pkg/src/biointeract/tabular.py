"""Two-exposure cohort data: 2x2 cell counts, CSV ingestion, record expansion,
and regeneration of the asbestos/smoking lung-cancer example.

Cells are keyed by ``(x, z)`` where ``x`` is the first exposure (smoking in the
example) and ``z`` the second (asbestos).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, TextIO

CELL_KEYS: tuple[tuple[int, int], ...] = ((0, 0), (1, 0), (0, 1), (1, 1))


class TableError(ValueError):
    """Raised for malformed or incomplete exposure data."""


@dataclass(frozen=True)
class CellCount:
    events: int
    total: int

    def __post_init__(self):
        for name in ("events", "total"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise TableError(f"{name} must be an integer, got {value!r}")
        if self.events < 0 or self.total < 0:
            raise TableError("counts must be non-negative")
        if self.events > self.total:
            raise TableError(f"events ({self.events}) exceed total ({self.total})")

    @property
    def proportion(self) -> float:
        return self.events / self.total


@dataclass(frozen=True)
class ExposureTable:
    """Event counts and totals for the four exposure combinations.

    ``cells`` maps ``(x, z)`` to a :class:`CellCount`; every cell must have at
    least one individual.
    """

    cells: Mapping[tuple[int, int], CellCount]
    labels: tuple[str, str, str] = ("x", "z", "y")

    def __post_init__(self):
        keys = set(self.cells)
        if keys != set(CELL_KEYS):
            missing = sorted(set(CELL_KEYS) - keys)
            extra = sorted(keys - set(CELL_KEYS))
            if missing:
                raise TableError(f"absent cell(s): {missing}")
            raise TableError(f"unexpected cell key(s): {extra}")
        for key, cell in self.cells.items():
            if not isinstance(cell, CellCount):
                raise TableError(f"cell {key} is not a CellCount")
            if cell.total < 1:
                raise TableError(f"cell {key} has no individuals")
        # freeze ordering so equality and iteration are canonical
        object.__setattr__(self, "cells", {k: self.cells[k] for k in CELL_KEYS})

    @classmethod
    def from_counts(cls, counts: Mapping[tuple[int, int], tuple[int, int]], labels=None):
        """Build from ``{(x, z): (events, total)}``."""
        cells = {k: CellCount(int(e), int(n)) for k, (e, n) in counts.items()}
        if labels is None:
            return cls(cells)
        return cls(cells, tuple(labels))

    def __eq__(self, other):
        if not isinstance(other, ExposureTable):
            return NotImplemented
        return dict(self.cells) == dict(other.cells)

    def __hash__(self):
        return hash(tuple(self.cells[k] for k in CELL_KEYS))

    def __getitem__(self, key: tuple[int, int]) -> CellCount:
        return self.cells[key]

    def risk(self, x: int, z: int) -> float:
        return self.cells[(x, z)].proportion

    def risks(self) -> dict[tuple[int, int], float]:
        return {k: c.proportion for k, c in self.cells.items()}

    @property
    def n(self) -> int:
        return sum(c.total for c in self.cells.values())

    def scaled(self, factor: int) -> "ExposureTable":
        """Multiply every count by an integer factor (proportions unchanged)."""
        return ExposureTable(
            {k: CellCount(c.events * factor, c.total * factor) for k, c in self.cells.items()},
            self.labels,
        )

    def swapped(self) -> "ExposureTable":
        """Exchange the roles of the two exposures."""
        x, z, y = self.labels
        return ExposureTable({(zz, xx): c for (xx, zz), c in self.cells.items()}, (z, x, y))


@dataclass(frozen=True)
class IndividualRecord:
    x: int
    z: int
    y: int
    weight: int = 1

    def __post_init__(self):
        for name in ("x", "z", "y"):
            if getattr(self, name) not in (0, 1):
                raise TableError(f"{name} must be 0 or 1, got {getattr(self, name)!r}")
        if isinstance(self.weight, bool) or not isinstance(self.weight, int) or self.weight < 1:
            raise TableError(f"weight must be a positive integer, got {self.weight!r}")


@dataclass(frozen=True)
class GeneratorInput:
    """Inputs for :func:`generate_hammond_dataset`.

    ``rates_per_100k`` is indexed ``2*z + x``: (x0z0, x1z0, x0z1, x1z1).
    ``group_sizes`` holds the cohort sizes for z=0 and z=1.
    """

    group_sizes: tuple[int, int] = (73763, 17800)
    rates_per_100k: tuple[float, float, float, float] = (11.3, 122.6, 58.4, 601.6)
    smoking_prevalence: float = 0.28

    def __post_init__(self):
        if len(self.group_sizes) != 2 or any(n < 1 for n in self.group_sizes):
            raise TableError("group_sizes must be two counts >= 1")
        if len(self.rates_per_100k) != 4:
            raise TableError("rates_per_100k needs four values")
        for r in self.rates_per_100k:
            if not (0.0 <= r <= 100000.0):
                raise TableError(f"rate {r} outside [0, 100000]")
        if not (0.0 < self.smoking_prevalence < 1.0):
            raise TableError(f"prevalence {self.smoking_prevalence} outside (0, 1)")


def round_half_away(value: float) -> int:
    """Round to the nearest integer, ties away from zero."""
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def generate_hammond_dataset(params: GeneratorInput | None = None) -> ExposureTable:
    """Synthesize the asbestos/smoking cohort from published rates.

    Each (z, x) stratum holds ``n_z * prev`` smokers or ``n_z * (1 - prev)``
    non-smokers. Deaths and survivors are rounded separately, so a cell's
    total can differ from the rounded stratum size by one.
    """
    params = params or GeneratorInput()
    prev = params.smoking_prevalence
    cells = {}
    for z in (0, 1):
        for x in (0, 1):
            stratum = params.group_sizes[z] * (prev if x == 1 else 1.0 - prev)
            rate = params.rates_per_100k[2 * z + x] / 100000.0
            events = round_half_away(stratum * rate)
            survivors = round_half_away(stratum * (1.0 - rate))
            cells[(x, z)] = CellCount(events, events + survivors)
    return ExposureTable(cells, ("smoking", "asbestos", "lung_cancer_death"))


def generator_discrepancy(params: GeneratorInput, table: ExposureTable) -> int:
    """Generated total minus the requested cohort total (rounding residue)."""
    return table.n - sum(params.group_sizes)


def _parse_binary(value: str, name: str, line: int) -> int:
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise TableError(f"line {line}: malformed {name} {value!r}") from None
    if v not in (0, 1):
        raise TableError(f"line {line}: non-binary {name} {value!r}")
    return v


def _parse_count(value: str, name: str, line: int) -> int:
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise TableError(f"line {line}: malformed {name} {value!r}") from None
    if v < 0:
        raise TableError(f"line {line}: negative {name}")
    return v


def read_table(source: TextIO | str, format: str = "aggregated") -> ExposureTable:
    """Read an :class:`ExposureTable` from CSV text.

    ``aggregated`` expects header ``x,z,events,total`` with one row per cell;
    ``individual`` expects ``x,z,y`` plus an optional ``weight`` column.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.DictReader(source)
    header = [h.strip() for h in (reader.fieldnames or [])]
    reader.fieldnames = header

    if format == "aggregated":
        required = {"x", "z", "events", "total"}
    elif format == "individual":
        required = {"x", "z", "y"}
    else:
        raise ValueError(f"unknown format {format!r}")
    if not required <= set(header):
        raise TableError(f"header must contain {sorted(required)}, got {header}")

    events = {k: 0 for k in CELL_KEYS}
    totals = {k: 0 for k in CELL_KEYS}
    seen: set[tuple[int, int]] = set()
    for lineno, row in enumerate(reader, start=2):
        if None in row or any(row.get(h) is None for h in required):
            raise TableError(f"line {lineno}: malformed row")
        x = _parse_binary(row["x"].strip(), "x", lineno)
        z = _parse_binary(row["z"].strip(), "z", lineno)
        if format == "aggregated":
            if (x, z) in seen:
                raise TableError(f"line {lineno}: duplicate cell ({x}, {z})")
            seen.add((x, z))
            e = _parse_count(row["events"].strip(), "events", lineno)
            n = _parse_count(row["total"].strip(), "total", lineno)
            if e > n:
                raise TableError(f"line {lineno}: events exceed total")
            events[(x, z)], totals[(x, z)] = e, n
        else:
            y = _parse_binary(row["y"].strip(), "y", lineno)
            w_raw = (row.get("weight") or "").strip()
            w = _parse_count(w_raw, "weight", lineno) if w_raw else 1
            if w < 1:
                raise TableError(f"line {lineno}: weight must be >= 1")
            totals[(x, z)] += w
            events[(x, z)] += w * y

    absent = [k for k in CELL_KEYS if totals[k] == 0 and (format == "individual" or k not in seen)]
    if absent:
        raise TableError(f"absent cell(s): {absent}")
    return ExposureTable({k: CellCount(events[k], totals[k]) for k in CELL_KEYS})


def write_table(table: ExposureTable, sink: TextIO) -> None:
    """Write the aggregated CSV form."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["x", "z", "events", "total"])
    for (x, z), cell in table.cells.items():
        writer.writerow([x, z, cell.events, cell.total])


def write_records(records: Iterable[IndividualRecord], sink: TextIO) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["x", "z", "y", "weight"])
    for r in records:
        writer.writerow([r.x, r.z, r.y, r.weight])


def expand_to_records(table: ExposureTable) -> Iterator[IndividualRecord]:
    """Yield one weight-1 record per individual, cell by cell."""
    for (x, z), cell in table.cells.items():
        death = IndividualRecord(x, z, 1)
        alive = IndividualRecord(x, z, 0)
        for _ in range(cell.events):
            yield death
        for _ in range(cell.total - cell.events):
            yield alive


def tally_records(records: Iterable[IndividualRecord]) -> ExposureTable:
    events = {k: 0 for k in CELL_KEYS}
    totals = {k: 0 for k in CELL_KEYS}
    for r in records:
        totals[(r.x, r.z)] += r.weight
        events[(r.x, r.z)] += r.weight * r.y
    absent = [k for k in CELL_KEYS if totals[k] == 0]
    if absent:
        raise TableError(f"absent cell(s): {absent}")
    return ExposureTable({k: CellCount(events[k], totals[k]) for k in CELL_KEYS})
