"""Seeded nonparametric bootstrap for the RERI and the interaction contrast.

Every replicate gets its own child stream spawned from the seed
(``numpy.random.SeedSequence.spawn``), so replicate ``r`` is the same whatever
the number of workers. Individuals are resampled by drawing uniform indices
into the stratum's records laid out cell by cell (events first); the cell
tallies are then read off by comparing the indices with the cell boundaries.
This is exactly record-level resampling, without materialising the records.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .effects import EffectError, reri_value
from .glm import ConvergenceFailure, ModelSpec, SingularDesignError, fit
from .tabular import CELL_KEYS, CellCount, ExposureTable, IndividualRecord, TableError
from .variance import CovarianceError

STATISTICS = ("reri_log", "reri_logit", "ic")
MAX_FAILED_FRACTION = 0.2

_STAT_SPECS = {
    "reri_log": ModelSpec("log"),
    "reri_logit": ModelSpec("logit"),
    "ic": ModelSpec("identity"),
}


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 500
    seed: int = 0
    statistic: str = "reri_log"
    stratify_by_z: bool = True
    level: float = 0.95

    def __post_init__(self):
        if isinstance(self.replicates, bool) or int(self.replicates) != self.replicates or self.replicates < 2:
            raise ValueError(f"replicates must be an integer >= 2, got {self.replicates!r}")
        if self.statistic not in STATISTICS:
            raise ValueError(f"unknown statistic {self.statistic!r}; choose from {STATISTICS}")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    statistic: str
    point_estimate: float
    replicate_values: np.ndarray
    ci_low: float
    ci_high: float
    n_failed: int
    seed: int
    replicates: int
    level: float
    stratified: bool
    failure_reasons: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "point_estimate": self.point_estimate,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "level": self.level,
            "quantile_rule": "nearest_rank",
            "replicates": self.replicates,
            "n_succeeded": int(len(self.replicate_values)),
            "n_failed": self.n_failed,
            "failure_reasons": dict(sorted(self.failure_reasons.items())),
            "seed": self.seed,
            "stratify_by_z": self.stratified,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


class BootstrapError(RuntimeError):
    """Too many replicates failed; ``partial`` holds what was computed."""

    def __init__(self, message: str, partial: BootstrapResult):
        super().__init__(message)
        self.partial = partial


def quantile(values: Sequence[float], q: float) -> float:
    """Nearest-rank quantile: the ``ceil(q * n)``-th smallest value (at least the first)."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("quantile of an empty sequence")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    rank = max(1, math.ceil(q * v.size - 1e-12))
    return float(v[rank - 1])


def _strata(table: ExposureTable, stratify: bool) -> list[list[tuple[int, int]]]:
    if stratify:
        return [[(0, 0), (1, 0)], [(0, 1), (1, 1)]]
    return [list(CELL_KEYS)]


def _boundaries(table: ExposureTable, keys) -> np.ndarray:
    # cumulative edges: [events_a, total_a, total_a + events_b, ...]
    edges, acc = [], 0
    for k in keys:
        c = table[k]
        edges += [acc + c.events, acc + c.total]
        acc += c.total
    return np.array(edges)


def resample_table(table: ExposureTable, rng: np.random.Generator, stratify_by_z: bool = True) -> ExposureTable:
    """One bootstrap draw of the individuals, returned as cell counts.

    A cell that receives nobody raises :class:`TableError`.
    """
    counts = {}
    for keys in _strata(table, stratify_by_z):
        edges = _boundaries(table, keys)
        size = int(edges[-1])
        idx = rng.integers(0, size, size=size)
        below = np.array([np.count_nonzero(idx < e) for e in edges[:-1]] + [size])
        prev = 0
        for j, k in enumerate(keys):
            ev = int(below[2 * j] - prev)
            tot = int(below[2 * j + 1] - prev)
            prev = int(below[2 * j + 1])
            counts[k] = (ev, tot)
    cells = {k: CellCount(*counts[k]) for k in CELL_KEYS}
    return ExposureTable(cells, table.labels)


def resample_records(records: Sequence[IndividualRecord], rng: np.random.Generator,
                     stratify_by_z: bool = True) -> list[IndividualRecord]:
    """Record-level reference resampler using the same stream discipline.

    ``records`` must be laid out as :func:`~biointeract.tabular.expand_to_records`
    produces them (cell by cell, events first).
    """
    if stratify_by_z:
        groups = [[r for r in records if r.z == 0], [r for r in records if r.z == 1]]
    else:
        groups = [list(records)]
    out: list[IndividualRecord] = []
    for group in groups:
        idx = rng.integers(0, len(group), size=len(group))
        out.extend(group[i] for i in idx)
    return out


def statistic_value(table: ExposureTable, statistic: str) -> float:
    result = fit(table, _STAT_SPECS[statistic])
    if statistic == "ic":
        return float(result.beta[3])
    return reri_value(result.beta)


def _replicate(table, config: BootstrapConfig, seq: np.random.SeedSequence):
    rng = np.random.default_rng(seq)
    try:
        sample = resample_table(table, rng, config.stratify_by_z)
        value = statistic_value(sample, config.statistic)
    except ConvergenceFailure as exc:
        return None, exc.reason
    except (TableError, SingularDesignError):
        return None, "empty_cell"
    except (EffectError, CovarianceError, FloatingPointError, OverflowError):
        return None, "undefined"
    if not math.isfinite(value):
        return None, "undefined"
    return value, None


def bootstrap(table: ExposureTable, config: BootstrapConfig = BootstrapConfig(), workers: int = 1) -> BootstrapResult:
    """Percentile bootstrap interval for ``config.statistic``.

    Failed replicates (e.g. a zero-event cell under the log link) are counted,
    not redrawn. Raises :class:`BootstrapError` when more than 20% fail.
    """
    point = statistic_value(table, config.statistic)
    children = np.random.SeedSequence(int(config.seed)).spawn(config.replicates)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda s: _replicate(table, config, s), children))
    else:
        outcomes = [_replicate(table, config, s) for s in children]

    values = np.array([v for v, _ in outcomes if v is not None], dtype=float)
    reasons = Counter(r for _, r in outcomes if r is not None)
    n_failed = sum(reasons.values())
    alpha = 1.0 - config.level
    if values.size:
        lo, hi = quantile(values, alpha / 2.0), quantile(values, 1.0 - alpha / 2.0)
    else:
        lo = hi = float("nan")
    result = BootstrapResult(config.statistic, point, values, lo, hi, n_failed, int(config.seed),
                             config.replicates, config.level, config.stratify_by_z, dict(reasons))
    if n_failed > MAX_FAILED_FRACTION * config.replicates:
        raise BootstrapError(f"{n_failed} of {config.replicates} replicates failed", result)
    return result


def write_replicates(result: BootstrapResult, sink: TextIO) -> None:
    """Successful replicate values, in replicate order, as a one-column CSV."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["value"])
    for v in result.replicate_values:
        writer.writerow([repr(float(v))])
