import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from querylens.exceptions import NoSamplesError
from querylens.metrics import LatencyRecorder, nearest_rank


class TestNearestRank:
    def test_ten_samples_p95_is_tenth_smallest(self):
        samples = [100 * i for i in range(1, 11)]  # 100..1000
        assert nearest_rank(samples, 0.95) == 1000  # ceil(9.5) = 10th

    def test_single_sample_any_quantile(self):
        for q in (0.01, 0.5, 0.95, 1.0):
            assert nearest_rank([250], q) == 250

    def test_four_samples_median_is_second_smallest(self):
        assert nearest_rank([1, 2, 3, 4], 0.5) == 2  # ceil(2) = 2nd

    def test_unsorted_input_handled(self):
        assert nearest_rank([30, 10, 20], 1.0) == 30

    def test_no_samples_raises(self):
        with pytest.raises(NoSamplesError):
            nearest_rank([], 0.5)

    def test_quantile_bounds(self):
        with pytest.raises(ValueError):
            nearest_rank([1], 0.0)
        with pytest.raises(ValueError):
            nearest_rank([1], 1.5)

    def test_float_dust_does_not_shift_rank(self):
        # 0.2 * 15 = 3.0000000000000004 in floats; the rank must stay 3.
        samples = list(range(1, 16))
        assert nearest_rank(samples, 0.2) == 3

    @given(
        st.lists(st.floats(min_value=0, max_value=1e6, allow_nan=False), min_size=1, max_size=60),
        st.integers(min_value=1, max_value=100),
    )
    def test_matches_counting_definition(self, samples, q_percent):
        q = q_percent / 100
        value = nearest_rank(samples, q)
        ordered = sorted(samples)
        rank = ordered.index(value) + 1
        # value is the smallest order statistic with rank >= ceil(q*n)
        import math

        target = math.ceil(round(q * len(samples), 9))
        assert ordered[target - 1] == value


class TestLatencyRecorder:
    def test_percentile_per_stage(self):
        recorder = LatencyRecorder()
        for ms in [5, 1, 3]:
            recorder.record("plan_ms", ms)
        assert recorder.percentile("plan_ms", 1.0) == 5
        assert recorder.percentile("plan_ms", 0.5) == 3

    def test_unknown_stage_has_no_samples(self):
        with pytest.raises(NoSamplesError):
            LatencyRecorder().percentile("nope", 0.5)

    def test_ring_buffer_drops_oldest(self):
        recorder = LatencyRecorder(capacity=3)
        for ms in [1, 2, 3, 4, 5]:
            recorder.record("s", ms)
        assert sorted(recorder.samples("s")) == [3, 4, 5]

    def test_snapshot_shape(self):
        recorder = LatencyRecorder()
        for ms in range(1, 101):
            recorder.record("total_ms", float(ms))
        snap = recorder.snapshot()
        assert snap["total_ms"]["count"] == 100
        assert snap["total_ms"]["p50_ms"] == 50
        assert snap["total_ms"]["p95_ms"] == 95
        assert snap["total_ms"]["p99_ms"] == 99

    def test_concurrent_writers_lose_nothing(self):
        recorder = LatencyRecorder()
        per_thread = 500

        def write(base):
            for i in range(per_thread):
                recorder.record("s", base + i)

        threads = [threading.Thread(target=write, args=(t * per_thread,)) for t in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(recorder.samples("s")) == 4 * per_thread
        assert sorted(recorder.samples("s")) == list(range(4 * per_thread))
