import math

import numpy as np
import pytest

from wavemc.noise import NoiseStreams, coarse_from_fine


def make_streams(**kwargs):
    defaults = dict(seed=12345, finest_dt=0.01, n_members=8, n_member_channels=2, n_shared_channels=2)
    defaults.update(kwargs)
    return NoiseStreams(**defaults)


class TestDeterminism:
    def test_same_query_twice(self):
        ns = make_streams()
        a = ns.gaussian_increment(("dV", 3, 1), 17, 0.01)
        b = ns.gaussian_increment(("dV", 3, 1), 17, 0.01)
        assert a == b

    def test_order_independent(self):
        ns = make_streams()
        late_first = ns.gaussian_increment(("dW", 0), 90, 0.01)
        early = ns.gaussian_increment(("dW", 0), 2, 0.01)
        fresh = make_streams()
        assert fresh.gaussian_increment(("dW", 0), 2, 0.01) == early
        assert fresh.gaussian_increment(("dW", 0), 90, 0.01) == late_first

    def test_scalar_matches_block_queries(self):
        ns = make_streams()
        members = ns.member_increments(1, 5, 0.01)
        for n in range(8):
            assert ns.gaussian_increment(("dV", n, 1), 5, 0.01) == members[n]
        shared = ns.shared_increments(0, 3, 4, 0.01)
        for s in range(4):
            assert ns.gaussian_increment(("dW", 0), 3 + s, 0.01) == shared[s]

    def test_independent_of_member_count_padding(self):
        # the same (member, channel, step) value regardless of ensemble size
        # is NOT required across different n_members; but within one object
        # repeated construction must agree
        a = make_streams().member_increments(0, 7, 0.01)
        b = make_streams().member_increments(0, 7, 0.01)
        np.testing.assert_array_equal(a, b)

    def test_unknown_stream_ids(self):
        ns = make_streams()
        for bad in [("dW", 5), ("dV", 99, 0), ("dV", 0, 7), ("dX", 0), ("dW",), "dW0", ("dV", 0)]:
            with pytest.raises(ValueError):
                ns.gaussian_increment(bad, 0, 0.01)

    def test_invalid_dt(self):
        ns = make_streams()
        with pytest.raises(ValueError, match="2\\*\\*m"):
            ns.shared_increments(0, 0, 1, 0.03)
        with pytest.raises(ValueError):
            ns.member_increments(0, 0, 0.005)  # finer than finest


class TestMarginals:
    def test_mean_and_variance(self):
        dt = 0.01
        ns = make_streams(n_members=10_000, n_member_channels=1, n_shared_channels=0, finest_dt=dt)
        draws = np.concatenate([ns.member_increments(0, s, dt) for s in range(100)])
        n = draws.size
        assert n == 1_000_000
        assert abs(draws.mean()) <= 4.0 * math.sqrt(dt / n)
        assert draws.var() == pytest.approx(dt, rel=0.02)

    def test_variance_at_coarse_step(self):
        dt = 0.01
        ns = make_streams(n_members=10_000, n_member_channels=1, n_shared_channels=0, finest_dt=dt / 2)
        draws = np.concatenate([ns.member_increments(0, s, dt) for s in range(100)])
        assert draws.var() == pytest.approx(dt, rel=0.02)


class TestCoarseFromFine:
    def test_zeros(self):
        np.testing.assert_array_equal(coarse_from_fine(np.zeros(10)), np.zeros(5))

    def test_cancellation(self):
        assert coarse_from_fine([0.1, -0.1]) == pytest.approx([0.0])

    def test_odd_length_rejected(self):
        with pytest.raises(ValueError, match="even"):
            coarse_from_fine([1.0, 2.0, 3.0])

    def test_pair_sum_variance(self):
        rng = np.random.default_rng(5)
        fine = rng.normal(0.0, math.sqrt(0.005), 2_000_000)
        coarse = coarse_from_fine(fine)
        assert coarse.var() == pytest.approx(0.01, rel=0.02)

    def test_block_queries_are_pair_sums(self):
        # dt = 2 * finest is exactly the pair sum of the two fine increments
        ns = make_streams(finest_dt=0.005)
        for step in (0, 3):
            coarse = ns.member_increments(0, step, 0.01)
            fine0 = ns.member_increments(0, 2 * step, 0.005)
            fine1 = ns.member_increments(0, 2 * step + 1, 0.005)
            np.testing.assert_array_equal(coarse, coarse_from_fine(np.ravel(np.column_stack([fine0, fine1]))).reshape(-1))
        shared_coarse = ns.shared_increments(1, 0, 3, 0.01)
        shared_fine = ns.shared_increments(1, 0, 6, 0.005)
        np.testing.assert_array_equal(shared_coarse, coarse_from_fine(shared_fine))


class TestIndependence:
    def corr(self, a, b):
        a = a - a.mean()
        b = b - b.mean()
        return float(np.dot(a, b) / math.sqrt(np.dot(a, a) * np.dot(b, b)))

    def test_cross_stream_correlations(self):
        ns = make_streams(n_members=1000, finest_dt=0.01)
        n_steps = 100  # 1e5 paired samples
        ch0 = np.concatenate([ns.member_increments(0, s, 0.01) for s in range(n_steps)])
        ch1 = np.concatenate([ns.member_increments(1, s, 0.01) for s in range(n_steps)])
        bound = 4.0 / math.sqrt(ch0.size)
        assert abs(self.corr(ch0, ch1)) <= bound
        dw = np.repeat(np.concatenate([ns.shared_increments(0, 0, n_steps, 0.01)]), 1000)
        assert abs(self.corr(ch0, dw)) <= bound
        # two members of the same channel, paired across steps
        m0 = ch0.reshape(n_steps, 1000)[:, 0]
        m1 = ch0.reshape(n_steps, 1000)[:, 1]
        assert abs(self.corr(m0, m1)) <= 4.0 / math.sqrt(n_steps)


class TestFork:
    def test_shared_streams_unchanged(self):
        ns = make_streams()
        before = ns.shared_increments(0, 0, 1000, 0.01)
        forked = ns.fork_dv(0)
        np.testing.assert_array_equal(forked.shared_increments(0, 0, 1000, 0.01), before)
        # and querying the parent again after forking is unaffected
        np.testing.assert_array_equal(ns.shared_increments(0, 0, 1000, 0.01), before)

    def test_member_streams_differ_from_parent(self):
        ns = make_streams(n_members=100)
        forked = ns.fork_dv(0)
        parent = np.concatenate([ns.member_increments(0, s, 0.01) for s in range(100)])
        child = np.concatenate([forked.member_increments(0, s, 0.01) for s in range(100)])
        assert np.all(parent != child)

    def test_replicates_mutually_independent(self):
        ns = make_streams(n_members=1000)
        a = np.concatenate([ns.fork_dv(0).member_increments(0, s, 0.01) for s in range(100)])
        b = np.concatenate([ns.fork_dv(1).member_increments(0, s, 0.01) for s in range(100)])
        corr = TestIndependence().corr(a, b)
        assert abs(corr) <= 4.0 / math.sqrt(a.size)

    def test_fork_is_pure(self):
        ns = make_streams()
        x = ns.fork_dv(2).member_increments(1, 9, 0.01)
        y = ns.fork_dv(2).member_increments(1, 9, 0.01)
        np.testing.assert_array_equal(x, y)


class TestValidation:
    def test_bad_seed(self):
        with pytest.raises(ValueError, match="64-bit"):
            make_streams(seed=2**64)
        with pytest.raises(ValueError):
            make_streams(seed=-1)

    def test_bad_finest_dt(self):
        with pytest.raises(ValueError):
            make_streams(finest_dt=0.0)
