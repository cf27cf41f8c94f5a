import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geossl.errors import ConfigurationError, ValidationError
from geossl.negqueue import NegativeQueue

from conftest import unit_rows


def basis(*indices, d=6):
    """Stack of standard basis rows, 1-based to read like e1..e6."""
    return np.eye(d)[[i - 1 for i in indices]]


class ListOracle:
    """Reference FIFO: plain list append, trim from the front past capacity."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.rows = []

    def enqueue(self, keys):
        self.rows.extend(np.asarray(keys))
        self.rows = self.rows[-self.capacity:]

    def snapshot(self):
        return np.array(self.rows)


class TestEnqueue:
    def test_partial_fill_preserves_order(self):
        q = NegativeQueue(capacity=4, dim=6)
        q.enqueue_batch(basis(1, 2))
        assert q.fill == 2
        np.testing.assert_array_equal(q.snapshot(), basis(1, 2))

    def test_overflow_evicts_oldest(self):
        q = NegativeQueue(capacity=4, dim=6)
        q.enqueue_batch(basis(1, 2, 3, 4))
        q.enqueue_batch(basis(5, 6))
        assert q.fill == 4
        np.testing.assert_array_equal(q.snapshot(), basis(3, 4, 5, 6))

    def test_empty_batch_is_noop(self):
        q = NegativeQueue(capacity=3, dim=2)
        q.enqueue_batch(basis(1, d=2))
        q.enqueue_batch(np.zeros((0, 2)))
        assert q.fill == 1

    def test_batch_larger_than_capacity_rejected(self):
        q = NegativeQueue(capacity=2, dim=4)
        with pytest.raises(ConfigurationError):
            q.enqueue_batch(basis(1, 2, 3, d=4))

    def test_non_unit_rows_rejected(self):
        q = NegativeQueue(capacity=4, dim=3)
        with pytest.raises(ValidationError):
            q.enqueue_batch(np.array([[0.5, 0.0, 0.0]]))

    def test_wrong_dim_rejected(self):
        q = NegativeQueue(capacity=4, dim=3)
        with pytest.raises(ValidationError):
            q.enqueue_batch(basis(1, d=5))

    def test_bad_construction(self):
        with pytest.raises(ConfigurationError):
            NegativeQueue(capacity=0, dim=3)
        with pytest.raises(ConfigurationError):
            NegativeQueue(capacity=3, dim=0)


class TestSnapshot:
    def test_three_rows_in_insertion_order(self, rng):
        q = NegativeQueue(capacity=8, dim=5)
        rows = unit_rows(rng, 3, 5)
        q.enqueue_batch(rows)
        np.testing.assert_array_equal(q.snapshot(), rows)

    def test_copy_semantics(self):
        """Enqueues after a snapshot must not reach into it."""
        q = NegativeQueue(capacity=2, dim=4)
        q.enqueue_batch(basis(1, 2, d=4))
        snap = q.snapshot()
        before = snap.copy()
        q.enqueue_batch(basis(3, 4, d=4))
        np.testing.assert_array_equal(snap, before)

    def test_empty_queue_names_warmup(self):
        q = NegativeQueue(capacity=4, dim=3)
        with pytest.raises(ValidationError, match="warm"):
            q.snapshot()


class TestRingBufferOracle:
    def test_thousand_random_ops_match_oracle(self, rng):
        """Contents must equal the list oracle's after every single step."""
        capacity, d = 16, 3
        q = NegativeQueue(capacity=capacity, dim=d)
        oracle = ListOracle(capacity)
        for _ in range(1000):
            b = int(rng.integers(1, capacity + 1))
            keys = unit_rows(rng, b, d)
            q.enqueue_batch(keys)
            oracle.enqueue(keys)
            assert q.fill == len(oracle.rows)
            np.testing.assert_array_equal(q.snapshot(), oracle.snapshot())

    @given(
        capacity=st.integers(1, 9),
        seed=st.integers(0, 2**32 - 1),
        batches=st.lists(st.integers(1, 9), min_size=1, max_size=30),
    )
    def test_fill_law_and_eviction_order(self, capacity, seed, batches):
        local = np.random.default_rng(seed)
        q = NegativeQueue(capacity=capacity, dim=4)
        oracle = ListOracle(capacity)
        total = 0
        for b in batches:
            b = min(b, capacity)
            keys = unit_rows(local, b, 4)
            q.enqueue_batch(keys)
            oracle.enqueue(keys)
            total += b
            assert q.fill == min(total, capacity)
            np.testing.assert_array_equal(q.snapshot(), oracle.snapshot())


class TestRestore:
    def test_round_trip(self, rng):
        q = NegativeQueue(capacity=6, dim=4)
        q.enqueue_batch(unit_rows(rng, 5, 4))
        snap = q.snapshot()
        restored = NegativeQueue.from_entries(snap, capacity=6)
        assert restored.fill == 5
        assert restored.capacity == 6
        np.testing.assert_array_equal(restored.snapshot(), snap)

    def test_restored_queue_keeps_fifo_semantics(self, rng):
        q = NegativeQueue(capacity=4, dim=3)
        rows = unit_rows(rng, 4, 3)
        q.enqueue_batch(rows)
        restored = NegativeQueue.from_entries(q.snapshot(), capacity=4)
        extra = unit_rows(rng, 2, 3)
        restored.enqueue_batch(extra)
        np.testing.assert_array_equal(
            restored.snapshot(), np.vstack([rows[2:], extra])
        )

    def test_more_entries_than_capacity_rejected(self, rng):
        with pytest.raises(ConfigurationError):
            NegativeQueue.from_entries(unit_rows(rng, 5, 3), capacity=4)

    def test_non_2d_rejected(self):
        with pytest.raises(ValidationError):
            NegativeQueue.from_entries(np.ones(3), capacity=4)
