"""Mergeable streaming summaries: Count-Min point frequencies and
Flajolet-Martin distinct counts, both usable as FoldSpecs.

All hashing derives from one master seed (a seeded 64-bit mixing hash over
item bytes), so merge compatibility is a single integer comparison.
"""

from __future__ import annotations

import hashlib
import math
import struct

import numpy as np

from .foldcore import FoldSpec

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_FM_RHO_SALT = 0xD6E8FEB86659FD93
_FM_PHI = 0.77351
# below ~12 bits-per-bitmap worth of cardinality the plain bitmap formula
# is badly biased; switch to inverting expected cell occupancy
_FM_SMALL_RANGE_FACTOR = 12.0


def _mix64(z):
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _item_bytes(item):
    if isinstance(item, bytes):
        return item
    if isinstance(item, str):
        return item.encode("utf-8")
    if isinstance(item, (int, np.integer)):
        return str(int(item)).encode("ascii")
    raise TypeError(f"sketch items must be bytes, str or int, got {type(item).__name__}")


def _base_hash(item, seed):
    key = struct.pack("<Q", seed & _MASK64)
    digest = hashlib.blake2b(_item_bytes(item), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


class CountMinSketch:
    """depth x width counter grid; point estimates never undercount.

    width = ceil(e / eps) and depth = ceil(ln(1/delta)) give overestimates
    of at most eps * total with probability 1 - delta per query.
    """

    _MAGIC = b"CMSK"
    _VERSION = 1

    def __init__(self, eps=0.01, delta=0.01, master_seed=0, depth=None, width=None):
        if depth is None or width is None:
            if not 0.0 < eps < 1.0 or not 0.0 < delta < 1.0:
                raise ValueError("eps and delta must lie in (0, 1)")
            width = math.ceil(math.e / eps)
            depth = math.ceil(math.log(1.0 / delta))
        self.depth = int(depth)
        self.width = int(width)
        self.master_seed = int(master_seed) & _MASK64
        self.counters = np.zeros((self.depth, self.width), dtype=np.uint64)
        self.total = 0
        self._row_seeds = [
            _mix64(self.master_seed ^ (_GOLDEN * (r + 1))) for r in range(self.depth)
        ]

    def update(self, item, count=1):
        """Add count occurrences of item; count must be positive."""
        count = int(count)
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        base = _base_hash(item, self.master_seed)
        for r, row_seed in enumerate(self._row_seeds):
            self.counters[r, _mix64(base ^ row_seed) % self.width] += np.uint64(count)
        self.total += count
        return self

    def estimate(self, item):
        """Minimum counter across rows; always >= the true count."""
        base = _base_hash(item, self.master_seed)
        return int(
            min(
                int(self.counters[r, _mix64(base ^ row_seed) % self.width])
                for r, row_seed in enumerate(self._row_seeds)
            )
        )

    def compatible_with(self, other):
        return (
            self.depth == other.depth
            and self.width == other.width
            and self.master_seed == other.master_seed
        )

    def to_bytes(self):
        header = struct.pack(
            "<4sBIIQQ",
            self._MAGIC,
            self._VERSION,
            self.depth,
            self.width,
            self.master_seed,
            self.total,
        )
        return header + self.counters.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, blob):
        head = struct.calcsize("<4sBIIQQ")
        magic, version, depth, width, seed, total = struct.unpack("<4sBIIQQ", blob[:head])
        if magic != cls._MAGIC:
            raise ValueError("not a count-min sketch file")
        if version != cls._VERSION:
            raise ValueError(f"unsupported count-min version {version}")
        body = np.frombuffer(blob[head:], dtype="<u8")
        if body.size != depth * width:
            raise ValueError("count-min payload has the wrong size")
        out = cls(depth=depth, width=width, master_seed=seed)
        out.counters = body.reshape(depth, width).astype(np.uint64)
        out.total = int(total)
        return out

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def cm_update(s, item, count=1):
    return s.update(item, count)


def cm_estimate(s, item):
    return s.estimate(item)


def cm_merge(a, b):
    """Element-wise counter sum; pure. Parameters and seed must match."""
    if not a.compatible_with(b):
        raise ValueError("cannot merge count-min sketches with different parameters or seeds")
    out = CountMinSketch(depth=a.depth, width=a.width, master_seed=a.master_seed)
    out.counters = a.counters + b.counters
    out.total = a.total + b.total
    return out


def cm_fold_spec(eps=0.01, delta=0.01, master_seed=0):
    """Count-Min as a FoldSpec over a stream of items."""
    return FoldSpec(
        identity=lambda: CountMinSketch(eps, delta, master_seed),
        transition=lambda s, item: s.update(item),
        merge=cm_merge,
        final=lambda s: s,
    )


def _trailing_ones(value):
    flipped = (~value) & _MASK64
    if flipped == 0:
        return 64
    return ((flipped & -flipped).bit_length()) - 1


class FMSketch:
    """Bitmap sketch for distinct counts with stochastic averaging; merging
    two sketches is a bitwise OR."""

    _MAGIC = b"FMSK"
    _VERSION = 1

    def __init__(self, num_bitmaps=64, master_seed=0):
        if num_bitmaps < 1:
            raise ValueError(f"num_bitmaps must be >= 1, got {num_bitmaps}")
        self.num_bitmaps = int(num_bitmaps)
        self.master_seed = int(master_seed) & _MASK64
        self.bitmaps = np.zeros(self.num_bitmaps, dtype=np.uint64)
        self.items_seen = False

    def update(self, item):
        """Set the bit at the lowest-set-bit position of the item's hash in
        the bitmap the item routes to. Re-inserting is a no-op."""
        h = _base_hash(item, self.master_seed)
        j = h % self.num_bitmaps
        g = _mix64(h ^ _FM_RHO_SALT)
        rho = 63 if g == 0 else min((g & -g).bit_length() - 1, 63)
        self.bitmaps[j] |= np.uint64(1 << rho)
        self.items_seen = True
        return self

    def compatible_with(self, other):
        return (
            self.num_bitmaps == other.num_bitmaps
            and self.master_seed == other.master_seed
        )

    def estimate(self):
        """Distinct-count estimate, 0 for an empty sketch.

        In the well-populated regime this is (m/phi) * 2^mean(R_j) with R_j
        the lowest unset bit of bitmap j. Small cardinalities instead
        invert the expected number of occupied (bitmap, position) cells,
        which stays accurate down to a single item.
        """
        if not self.items_seen:
            return 0.0
        m = self.num_bitmaps
        mean_r = sum(_trailing_ones(int(b)) for b in self.bitmaps) / m
        raw = (m / _FM_PHI) * 2.0 ** mean_r
        if raw >= _FM_SMALL_RANGE_FACTOR * m:
            return float(raw)
        occupied = int(np.bitwise_count(self.bitmaps).sum())
        return _occupancy_inversion(occupied, m)

    def to_bytes(self):
        header = struct.pack(
            "<4sBIBQ",
            self._MAGIC,
            self._VERSION,
            self.num_bitmaps,
            1 if self.items_seen else 0,
            self.master_seed,
        )
        return header + self.bitmaps.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, blob):
        head = struct.calcsize("<4sBIBQ")
        magic, version, m, seen, seed = struct.unpack("<4sBIBQ", blob[:head])
        if magic != cls._MAGIC:
            raise ValueError("not a Flajolet-Martin sketch file")
        if version != cls._VERSION:
            raise ValueError(f"unsupported sketch version {version}")
        body = np.frombuffer(blob[head:], dtype="<u8")
        if body.size != m:
            raise ValueError("sketch payload has the wrong size")
        out = cls(num_bitmaps=m, master_seed=seed)
        out.bitmaps = body.astype(np.uint64)
        out.items_seen = bool(seen)
        return out

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _occupancy_inversion(occupied, m):
    """Cardinality for which the expected number of occupied cells equals
    the observed count. A cell is one (bitmap, bit position) pair, hit with
    probability 2^-(rho+1) / m per distinct item."""
    if occupied == 0:
        return 0.0
    cell_p = 2.0 ** -np.arange(1.0, 65.0) / m

    def expected(n):
        return float(m * (1.0 - np.exp(n * np.log1p(-cell_p))).sum())

    lo, hi = 0.0, 1.0
    while expected(hi) < occupied and hi < 2.0 ** 62:
        hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if expected(mid) < occupied:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fm_update(s, item):
    return s.update(item)


def fm_merge(a, b):
    """Bitwise OR of the bitmaps; pure. Parameters and seed must match."""
    if not a.compatible_with(b):
        raise ValueError("cannot merge sketches with different parameters or seeds")
    out = FMSketch(num_bitmaps=a.num_bitmaps, master_seed=a.master_seed)
    out.bitmaps = a.bitmaps | b.bitmaps
    out.items_seen = a.items_seen or b.items_seen
    return out


def fm_estimate(s):
    return s.estimate()


def fm_fold_spec(num_bitmaps=64, master_seed=0):
    """Flajolet-Martin as a FoldSpec over a stream of items."""
    return FoldSpec(
        identity=lambda: FMSketch(num_bitmaps, master_seed),
        transition=lambda s, item: s.update(item),
        merge=fm_merge,
        final=lambda s: s,
    )
