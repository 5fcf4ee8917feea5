from collections import Counter

import numpy as np
import pytest

from foldml import (
    CountMinSketch,
    FMSketch,
    cm_fold_spec,
    cm_merge,
    fm_fold_spec,
    fm_merge,
    fold_source,
    run_parallel,
)
from foldml.sketch import cm_estimate, cm_update, fm_estimate, fm_update


def zipf_stream(seed, n, alpha=1.2, universe=50_000):
    rng = np.random.default_rng(seed)
    ranks = rng.zipf(alpha, size=n)
    return [f"k{r % universe}" for r in ranks]


class TestCountMin:
    def test_default_parameters(self):
        s = CountMinSketch(eps=0.01, delta=0.01)
        assert s.width == 272      # ceil(e / 0.01)
        assert s.depth == 5        # ceil(ln 100)

    def test_single_item_exact(self):
        s = CountMinSketch(master_seed=3)
        cm_update(s, b"only", 5)
        assert cm_estimate(s, b"only") == 5

    def test_update_commutes_across_items(self):
        a = CountMinSketch(master_seed=1)
        b = CountMinSketch(master_seed=1)
        for item, count in [("x", 2), ("y", 1), ("z", 4)]:
            a.update(item, count)
        for item, count in [("z", 4), ("x", 2), ("y", 1)]:
            b.update(item, count)
        assert np.array_equal(a.counters, b.counters)
        assert a.total == b.total

    def test_every_row_sums_to_total(self, rng):
        s = CountMinSketch(master_seed=2)
        for _ in range(1000):
            s.update(int(rng.integers(0, 200)))
        assert s.total == 1000
        assert np.all(s.counters.sum(axis=1) == s.total)

    def test_empty_sketch_estimates_zero(self):
        assert CountMinSketch().estimate("never") == 0

    def test_exact_when_no_row_collisions(self):
        # audit collisions per row; items with a private bucket somewhere
        # must be estimated exactly
        s = CountMinSketch(master_seed=7)
        truth = {f"it{i}": i + 1 for i in range(40)}
        for item, count in truth.items():
            s.update(item, count)
        from foldml.sketch import _base_hash, _mix64
        buckets = {
            item: [
                _mix64(_base_hash(item, s.master_seed) ^ rs) % s.width
                for rs in s._row_seeds
            ]
            for item in truth
        }
        for item, count in truth.items():
            private = any(
                all(buckets[other][r] != buckets[item][r] for other in truth if other != item)
                for r in range(s.depth)
            )
            if private:
                assert s.estimate(item) == count

    def test_never_underestimates(self):
        stream = zipf_stream(0, 20_000)
        s = CountMinSketch(master_seed=5)
        truth = Counter()
        for item in stream:
            s.update(item)
            truth[item] += 1
        for item, count in truth.items():
            assert s.estimate(item) >= count

    def test_estimates_monotone_in_stream(self):
        s = CountMinSketch(master_seed=6)
        prev = 0
        for chunk in range(10):
            for i in range(500):
                s.update(f"i{(chunk * 7 + i) % 100}")
            est = s.estimate("i3")
            assert est >= prev
            prev = est

    def test_merge_identity_and_commutativity(self):
        fresh = CountMinSketch(master_seed=9)
        s = CountMinSketch(master_seed=9)
        for i in range(100):
            s.update(i % 11)
        merged = cm_merge(s, fresh)
        assert np.array_equal(merged.counters, s.counters)
        ab = cm_merge(s, merged)
        ba = cm_merge(merged, s)
        assert np.array_equal(ab.counters, ba.counters)
        assert ab.total == ba.total

    def test_split_stream_equals_single_stream(self):
        stream = zipf_stream(1, 5000)
        whole = CountMinSketch(master_seed=4)
        left = CountMinSketch(master_seed=4)
        right = CountMinSketch(master_seed=4)
        for item in stream:
            whole.update(item)
        for item in stream[:2500]:
            left.update(item)
        for item in stream[2500:]:
            right.update(item)
        merged = cm_merge(left, right)
        assert np.array_equal(merged.counters, whole.counters)
        assert merged.total == whole.total

    def test_merge_parameter_mismatch(self):
        with pytest.raises(ValueError):
            cm_merge(CountMinSketch(master_seed=1), CountMinSketch(master_seed=2))
        with pytest.raises(ValueError):
            cm_merge(CountMinSketch(eps=0.01), CountMinSketch(eps=0.1))

    def test_zero_count_rejected(self):
        with pytest.raises(ValueError):
            CountMinSketch().update("x", 0)

    def test_serialization_round_trip(self):
        s = CountMinSketch(master_seed=11)
        for i in range(500):
            s.update(i % 37)
        blob = s.to_bytes()
        back = CountMinSketch.from_bytes(blob)
        assert back.compatible_with(s)
        assert back.total == s.total
        assert np.array_equal(back.counters, s.counters)
        assert back.to_bytes() == blob

    def test_serialization_rejects_garbage(self):
        with pytest.raises(ValueError):
            CountMinSketch.from_bytes(b"XXXX" + b"\x00" * 40)

    def test_save_load_file(self, tmp_path):
        s = CountMinSketch(master_seed=12)
        s.update("a", 3)
        path = tmp_path / "cm.bin"
        s.save(path)
        back = CountMinSketch.load(path)
        assert back.estimate("a") == 3


class TestFlajoletMartin:
    def test_empty_estimates_zero(self):
        assert FMSketch().estimate() == 0.0

    def test_idempotent_reinsert(self):
        s = FMSketch(master_seed=1)
        s.update("same")
        bitmaps = s.bitmaps.copy()
        for _ in range(1000):
            s.update("same")
        assert np.array_equal(s.bitmaps, bitmaps)

    def test_single_item_within_factor_two_median(self):
        # one distinct item inserted many times, across 50 seeds
        estimates = []
        for seed in range(50):
            s = FMSketch(master_seed=seed)
            for _ in range(10):
                s.update(b"the-one")
            estimates.append(s.estimate())
        med = float(np.median(estimates))
        assert 0.5 <= med <= 2.0

    def test_distinct_count_accuracy_mid_range(self):
        errors = []
        for seed in range(20):
            s = FMSketch(master_seed=seed)
            for i in range(3000):
                s.update(f"v{i}")
            errors.append(abs(s.estimate() - 3000) / 3000)
        assert float(np.median(errors)) <= 0.2

    def test_merge_is_bitwise_or(self):
        a = FMSketch(master_seed=2)
        b = FMSketch(master_seed=2)
        for i in range(100):
            a.update(f"a{i}")
            b.update(f"b{i}")
        merged = fm_merge(a, b)
        assert np.array_equal(merged.bitmaps, a.bitmaps | b.bitmaps)
        assert merged.items_seen

    def test_split_stream_equals_single_stream(self):
        items = [f"u{i}" for i in range(2000)]
        whole = FMSketch(master_seed=3)
        left = FMSketch(master_seed=3)
        right = FMSketch(master_seed=3)
        for item in items:
            whole.update(item)
        for item in items[:1000]:
            left.update(item)
        for item in items[1000:]:
            right.update(item)
        merged = fm_merge(left, right)
        assert np.array_equal(merged.bitmaps, whole.bitmaps)
        assert merged.estimate() == whole.estimate()

    def test_merge_parameter_mismatch(self):
        with pytest.raises(ValueError):
            fm_merge(FMSketch(master_seed=0), FMSketch(master_seed=1))
        with pytest.raises(ValueError):
            fm_merge(FMSketch(num_bitmaps=64), FMSketch(num_bitmaps=32))

    def test_bits_only_gain(self):
        s = FMSketch(master_seed=4)
        prev = s.bitmaps.copy()
        for i in range(500):
            fm_update(s, i)
            assert np.all((prev & ~s.bitmaps) == 0)
            prev = s.bitmaps.copy()

    def test_serialization_round_trip(self):
        s = FMSketch(master_seed=5)
        for i in range(300):
            s.update(i)
        blob = s.to_bytes()
        back = FMSketch.from_bytes(blob)
        assert back.compatible_with(s)
        assert back.items_seen == s.items_seen
        assert np.array_equal(back.bitmaps, s.bitmaps)
        assert fm_estimate(back) == fm_estimate(s)

    def test_save_load_file(self, tmp_path):
        s = FMSketch(master_seed=6)
        s.update("x")
        path = tmp_path / "fm.bin"
        s.save(path)
        assert FMSketch.load(path).estimate() == s.estimate()


class TestSketchFoldSpecs:
    @pytest.mark.parametrize("p", [1, 2, 3, 8])
    def test_cm_partition_invariance_bit_exact(self, p):
        stream = zipf_stream(2, 3000)
        spec = cm_fold_spec(master_seed=1)
        base = run_parallel(spec, stream, 1)
        got = run_parallel(spec, stream, p)
        assert np.array_equal(got.counters, base.counters)
        assert got.total == base.total

    @pytest.mark.parametrize("p", [1, 2, 3, 8])
    def test_fm_partition_invariance_bit_exact(self, p):
        stream = [f"d{i % 700}" for i in range(3000)]
        spec = fm_fold_spec(master_seed=1)
        base = run_parallel(spec, stream, 1)
        got = run_parallel(spec, stream, p)
        assert np.array_equal(got.bitmaps, base.bitmaps)

    def test_merge_associativity_bit_exact(self):
        stream = zipf_stream(3, 3000)
        spec = cm_fold_spec(master_seed=2)
        thirds = [
            fold_source(spec, stream[i::3], 1) for i in range(3)
        ]
        a, b, c = thirds
        left = cm_merge(cm_merge(a, b), c)
        right = cm_merge(a, cm_merge(b, c))
        assert np.array_equal(left.counters, right.counters)
        assert left.total == right.total

    def test_item_type_validation(self):
        with pytest.raises(TypeError):
            CountMinSketch().update(1.5)
