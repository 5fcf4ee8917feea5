#!/usr/bin/env python3
"""Mergeable sketches: Count-Min point frequencies, Flajolet-Martin
distinct counts.

Both are folds over item streams, so splitting a stream, sketching the
parts anywhere, and merging gives bit-identical state to sketching the
whole stream.
"""

from collections import Counter

import numpy as np

from foldml import CountMinSketch, FMSketch, cm_fold_spec, cm_merge, fm_merge, run_parallel

rng = np.random.default_rng(23)

# ---- a skewed stream -----------------------------------------------------
stream = [f"key{v}" for v in rng.zipf(1.3, size=50_000)]
truth = Counter(stream)

cm = CountMinSketch(eps=0.01, delta=0.01, master_seed=1)
for item in stream:
    cm.update(item)
print(f"count-min: depth={cm.depth} width={cm.width} total={cm.total}")
for item, count in truth.most_common(5):
    print(f"  {item:>8}: true {count:>6}  estimate {cm.estimate(item):>6}")
rare = [k for k, c in truth.items() if c == 1][:3]
print("  rare items (true count 1):", {k: cm.estimate(k) for k in rare})
print("  estimates never undercount:",
      all(cm.estimate(k) >= c for k, c in truth.items()))

# ---- sketching is a fold: partitioned runs merge exactly -----------------
merged = run_parallel(cm_fold_spec(master_seed=1), stream, p=4)
print("  4-worker fold == serial sketch:",
      bool(np.array_equal(merged.counters, cm.counters)))

# ---- distinct counting ----------------------------------------------------
fm = FMSketch(num_bitmaps=64, master_seed=1)
for item in stream:
    fm.update(item)
distinct = len(truth)
print(f"\nflajolet-martin: {distinct} distinct, estimate {fm.estimate():.0f} "
      f"({abs(fm.estimate() - distinct) / distinct:.1%} off)")

# merging two shards is a bitwise OR; re-inserts never change anything
half_a = FMSketch(num_bitmaps=64, master_seed=1)
half_b = FMSketch(num_bitmaps=64, master_seed=1)
for item in stream[:25_000]:
    half_a.update(item)
for item in stream[25_000:]:
    half_b.update(item)
print("merge(or) of halves == whole:",
      bool(np.array_equal(fm_merge(half_a, half_b).bitmaps, fm.bitmaps)))

# ---- sketches round-trip through a self-describing binary blob ----------
blob = cm.to_bytes()
print(f"\nserialized count-min: {len(blob)} bytes; "
      f"round trip ok: {np.array_equal(CountMinSketch.from_bytes(blob).counters, cm.counters)}")
other = CountMinSketch(eps=0.01, delta=0.01, master_seed=2)
try:
    cm_merge(cm, other)
except ValueError as err:
    print("merging different seeds refuses:", err)
