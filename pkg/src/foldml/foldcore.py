"""Generic data-parallel fold executor and the driver loop for multipass
algorithms.

Every algorithm in this package is expressed as a FoldSpec: an identity
state, a per-row transition, a merge of two partial states, and a final
step. run_parallel partitions the rows, folds each partition (possibly on
worker threads), merges the partial states in ascending partition order,
and finalizes. Iterative methods wrap per-pass folds in iterate(), which
keeps only small inter-iteration state in its ledger.
"""

from __future__ import annotations

import base64
import pickle
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple, Optional

import numpy as np

from .errors import DimensionError, IterationError, NumericError


class Row(NamedTuple):
    """One dataset row as seen by transition functions."""

    index: int
    x: np.ndarray
    y: Optional[float]


class Dataset:
    """Immutable columnar table: an (n, d) float feature matrix plus an
    optional length-n label vector.

    Instances are shared read-only across worker threads; treat them as
    frozen after construction.
    """

    def __init__(self, features, labels=None):
        features = np.ascontiguousarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise DimensionError(f"features must be 2-D, got shape {features.shape}")
        n, d = features.shape
        if d < 1:
            raise DimensionError("need at least one feature column")
        if not np.all(np.isfinite(features)):
            raise NumericError("features contain non-finite values")
        if labels is not None:
            labels = np.ascontiguousarray(labels, dtype=np.float64)
            if labels.shape != (n,):
                raise DimensionError(
                    f"labels must have shape ({n},), got {labels.shape}"
                )
            if not np.all(np.isfinite(labels)):
                raise NumericError("labels contain non-finite values")
        self.features = features
        self.labels = labels

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def __len__(self):
        return self.features.shape[0]

    def rows(self, start=0, end=None):
        """Yield Row tuples for row ids in [start, end)."""
        if end is None:
            end = len(self)
        feats = self.features
        labs = self.labels
        if labs is None:
            for i in range(start, end):
                yield Row(i, feats[i], None)
        else:
            for i in range(start, end):
                yield Row(i, feats[i], float(labs[i]))


@dataclass(frozen=True)
class FoldSpec:
    """Transition/merge/final triple with an identity-state factory.

    identity() returns a fresh identity state on every call. transition may
    mutate the state it is handed and return it (states are confined to a
    single worker until merged). merge must be pure and return a new state,
    so merging in any grouping never corrupts its inputs. final maps a
    fully merged state to the result.

    block_transition, when present, folds a contiguous row range of the
    source in one vectorized call; it must agree with repeated transition
    application up to float roundoff and is preferred by fold_partition.
    """

    identity: Callable[[], Any]
    transition: Callable[[Any, Any], Any]
    merge: Callable[[Any, Any], Any]
    final: Callable[[Any], Any]
    block_transition: Optional[Callable[[Any, Any, int, int], Any]] = None


@dataclass(frozen=True)
class Partition:
    """Contiguous row range [start, end) of a row source.

    The source is either a Dataset (rows() yields Row tuples) or any
    sequence; sequence elements are handed to the transition unchanged.
    """

    source: Any
    start: int
    end: int

    def __len__(self):
        return self.end - self.start

    def rows(self):
        rows = getattr(self.source, "rows", None)
        if rows is not None:
            return rows(self.start, self.end)
        return (self.source[i] for i in range(self.start, self.end))


def partition_ranges(n_rows, p):
    """Split [0, n_rows) into p contiguous equal ranges; remainder rows go
    to the last range."""
    if p < 1:
        raise ValueError(f"worker count must be >= 1, got {p}")
    base = n_rows // p
    return [
        (i * base, (i + 1) * base if i < p - 1 else n_rows)
        for i in range(p)
    ]


def fold_partition(spec, part):
    """Left fold of spec.transition over the partition's rows in ascending
    row order, starting from a fresh identity state."""
    state = spec.identity()
    if spec.block_transition is not None:
        return spec.block_transition(state, part.source, part.start, part.end)
    for row in part.rows():
        state = spec.transition(state, row)
    return state


def merge_states(spec, a, b):
    """Combine two partial states produced by the same spec."""
    return spec.merge(a, b)


def fold_source(spec, source, p):
    """Fold all rows of source with p workers and merge the partial states
    by a left fold in ascending partition index. No final step."""
    if p < 1:
        raise ValueError(f"worker count must be >= 1, got {p}")
    parts = [Partition(source, s, e) for s, e in partition_ranges(len(source), p)]
    if p == 1:
        return fold_partition(spec, parts[0])
    with ThreadPoolExecutor(max_workers=p) as pool:
        partials = list(pool.map(lambda pt: fold_partition(spec, pt), parts))
    state = partials[0]
    for other in partials[1:]:
        state = spec.merge(state, other)
    return state


def run_parallel(spec, data, p):
    """Partition, fold, merge ascending, finalize.

    The merge order is fixed, so the result is identical across repeated
    runs at the same p regardless of worker scheduling.
    """
    return spec.final(fold_source(spec, data, p))


def count_spec():
    """Fold that counts rows; handy identity-law and plumbing checks."""
    return FoldSpec(
        identity=lambda: 0,
        transition=lambda s, _row: s + 1,
        merge=lambda a, b: a + b,
        final=lambda s: s,
        block_transition=lambda s, _src, lo, hi: s + (hi - lo),
    )


DEFAULT_LEDGER_BUDGET = 256 * 1024 * 1024


class LedgerEntry(NamedTuple):
    index: int
    diagnostic: float
    state_nbytes: int


class IterationLedger:
    """Ordered record of inter-iteration state snapshots and diagnostics.

    Snapshot sizes are tracked (pickle bytes); once the in-memory total
    would exceed budget_bytes, further snapshots spill to a newline-
    delimited temp file, one base64 pickle per line.
    """

    def __init__(self, budget_bytes=DEFAULT_LEDGER_BUDGET):
        self.entries: list[LedgerEntry] = []
        self.budget_bytes = int(budget_bytes)
        self._in_memory: dict[int, Any] = {}
        self._memory_bytes = 0
        self._spill = None
        self._spill_offsets: dict[int, int] = {}

    def __len__(self):
        return len(self.entries)

    @property
    def spill_path(self):
        return None if self._spill is None else self._spill.name

    def append(self, state, diagnostic):
        blob = pickle.dumps(state, protocol=pickle.HIGHEST_PROTOCOL)
        index = len(self.entries) + 1
        if self._memory_bytes + len(blob) <= self.budget_bytes:
            self._in_memory[index] = state
            self._memory_bytes += len(blob)
        else:
            if self._spill is None:
                self._spill = tempfile.NamedTemporaryFile(
                    mode="w+b", prefix="foldml-ledger-", suffix=".ndjson"
                )
            self._spill.seek(0, 2)
            self._spill_offsets[index] = self._spill.tell()
            self._spill.write(base64.b64encode(blob) + b"\n")
            self._spill.flush()
        self.entries.append(LedgerEntry(index, float(diagnostic), len(blob)))

    def state(self, index):
        """Snapshot for 1-based iteration index, from memory or spill."""
        if index in self._in_memory:
            return self._in_memory[index]
        if index in self._spill_offsets:
            self._spill.seek(self._spill_offsets[index])
            line = self._spill.readline()
            return pickle.loads(base64.b64decode(line))
        raise KeyError(f"no ledger entry for iteration {index}")

    def diagnostics(self):
        return [entry.diagnostic for entry in self.entries]


def iterate(step, init, data, converged, max_iter, p=1,
            ledger_budget_bytes=DEFAULT_LEDGER_BUDGET):
    """Drive an iterative method, recording one ledger entry per iteration.

    step receives (state, data, p) and returns (new_state, diagnostic); the
    dataset crosses the boundary by reference only, so per-iteration state
    transfer stays O(size of the inter-iteration state). Stops as soon as
    converged(ledger) is true or max_iter is reached. A step failure raises
    IterationError carrying the ledger built so far, chained to the cause.
    """
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    ledger = IterationLedger(budget_bytes=ledger_budget_bytes)
    state = init
    for _ in range(max_iter):
        try:
            state, diagnostic = step(state, data, p)
        except Exception as exc:
            raise IterationError(
                f"iteration {len(ledger) + 1} failed: {exc}", ledger=ledger
            ) from exc
        ledger.append(state, diagnostic)
        if converged(ledger):
            break
    return state, ledger
