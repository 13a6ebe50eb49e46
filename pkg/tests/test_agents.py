import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmfees.agents import (
    AgentConfig,
    AgentState,
    apply_skew,
    decode_joint,
    encode_joint,
    encode_state,
    epsilon,
    format_q_table,
    n_side_buckets,
    parse_q_table,
    q_update,
    select_action,
    side_bucket,
)
from mmfees.market import MarketParams, aggregate_side, make_quote_curve

K = 4
CFG = AgentConfig()


@pytest.mark.parametrize("ask, bid, joint", [(1, 1, 1), (1, 4, 4), (2, 2, 6), (4, 1, 13), (4, 4, 16)])
def test_joint_codec(ask, bid, joint):
    assert encode_joint(ask, bid, K) == joint
    assert decode_joint(joint, K) == (ask, bid)


def test_codec_rejects_out_of_range():
    with pytest.raises(ValueError):
        encode_joint(0, 1, K)
    with pytest.raises(ValueError):
        decode_joint(17, K)


class TestEpsilon:
    @pytest.mark.parametrize(
        "t, expected",
        [(0, 1.0), (1e5, math.exp(-1)), (1e6, math.exp(-10))],
    )
    def test_values(self, t, expected):
        assert epsilon(t, 1e-5) == pytest.approx(expected, rel=1e-12)

    def test_spot_values(self):
        assert epsilon(1e5, 1e-5) == pytest.approx(0.36788, abs=1e-5)
        assert epsilon(1e6, 1e-5) == pytest.approx(4.54e-5, abs=1e-7)

    @given(st.floats(0, 1e6), st.floats(1e-3, 1e5))
    def test_strictly_decreasing(self, t, dt):
        assert epsilon(t + dt, 1e-5) < epsilon(t, 1e-5)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            epsilon(-1, 1e-5)
        with pytest.raises(ValueError):
            epsilon(1, 0)


class TestEncodeState:
    def test_all_at_level_two(self):
        side = np.array([0, 40.0, 0, 0])
        assert encode_state(side, side) == 6

    def test_seventy_ten_level_one_rounds_up(self):
        side = aggregate_side([make_quote_curve(1, MarketParams())] * 2)
        assert side_bucket(side) == 2
        assert encode_state(side, side) == 6

    def test_empty_book_is_widest(self):
        z = np.zeros(4)
        assert encode_state(z, z) == 16

    @pytest.mark.parametrize("mean, bucket", [(1.0, 1), (1.49, 1), (1.5, 2), (2.5, 3), (3.5, 4), (4.0, 4)])
    def test_half_up(self, mean, bucket):
        # two-level book with the requested volume-weighted mean
        lo = math.floor(mean) if mean < 4 else 3
        w = mean - lo
        side = np.zeros(4)
        side[lo - 1] = 1 - w
        side[lo] = w
        assert side_bucket(side) == bucket

    def test_resolution_buckets(self):
        assert n_side_buckets(4) == 4
        assert n_side_buckets(4, 0.5) == 7
        assert side_bucket(np.array([1, 1, 0, 0.0]), 0.5) == 2

    def test_ids_in_range(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a, b = rng.random(4) * rng.integers(0, 2, 4), rng.random(4)
            assert 1 <= encode_state(a, b) <= 16


class TestSelectAction:
    def test_greedy_unique(self):
        q = np.zeros(16)
        q[5] = 1.0
        rng = np.random.default_rng(0)
        assert all(select_action(q, 0.0, rng) == 6 for _ in range(100))

    def test_uniform_when_fully_exploring(self):
        rng = np.random.default_rng(1)
        q = np.arange(16.0)
        draws = np.array([select_action(q, 1.0, rng) for _ in range(100_000)])
        freq = np.bincount(draws, minlength=17)[1:] / draws.size
        assert np.all(np.abs(freq - 1 / 16) < 0.005)

    def test_ties_uniform_across_seeds(self):
        picks = {select_action(np.zeros(16), 0.0, np.random.default_rng(s)) for s in range(400)}
        assert picks == set(range(1, 17))

    def test_ties_restricted_to_maximisers(self):
        q = np.zeros(16)
        q[[2, 9]] = 3.0
        picks = {select_action(q, 0.0, np.random.default_rng(s)) for s in range(100)}
        assert picks == {3, 10}

    def test_rejects_bad_eps(self):
        with pytest.raises(ValueError):
            select_action(np.zeros(16), 1.5, np.random.default_rng(0))


class TestQUpdate:
    def test_worked_value(self):
        q = np.zeros((16, 16))
        q[0, 2] = 10.0
        q[4, 7] = 20.0
        out = q_update(q, 1, 3, 5.0, 5, 0.05, 0.95)
        assert out[0, 2] == pytest.approx(10.7, abs=1e-12)

    def test_alpha_zero_is_identity(self):
        q = np.random.default_rng(0).normal(size=(16, 16))
        np.testing.assert_array_equal(q_update(q, 3, 4, 99.0, 7, 0.0, 0.95), q)

    @given(st.floats(-100, 100), st.integers(1, 16), st.integers(1, 16), st.integers(1, 16))
    def test_myopic_overwrite(self, r, s, c, s2):
        q = np.random.default_rng(s).normal(size=(16, 16))
        out = q_update(q, s, c, r, s2, 1.0, 0.0)
        assert out[s - 1, c - 1] == r
        mask = np.ones_like(q, dtype=bool)
        mask[s - 1, c - 1] = False
        np.testing.assert_array_equal(out[mask], q[mask])

    def test_input_not_mutated(self):
        q = np.zeros((16, 16))
        q_update(q, 1, 1, 1.0, 1, 0.5, 0.9)
        assert not q.any()


class TestSkew:
    @pytest.mark.parametrize("inv, expected", [(0, 6), (600, 4), (-600, 13), (500, 6), (-500, 6)])
    def test_examples(self, inv, expected):
        assert apply_skew(6, inv, CFG, K) == expected

    @given(st.integers(1, 4), st.integers(1, 4), st.floats(-2000, 2000))
    def test_antisymmetric(self, ask, bid, inv):
        a1, b1 = decode_joint(apply_skew(encode_joint(ask, bid, K), inv, CFG, K), K)
        a2, b2 = decode_joint(apply_skew(encode_joint(bid, ask, K), -inv, CFG, K), K)
        assert (a1, b1) == (b2, a2)

    @given(st.integers(1, 16), st.floats(-500, 500))
    def test_identity_inside_band(self, action, inv):
        assert apply_skew(action, inv, CFG, K) == action


def test_agent_state_defaults():
    ag = AgentState(K, np.random.default_rng(0))
    assert ag.q.shape == (16, 16) and not ag.q.any()
    assert ag.greedy_policy().tolist() == [1] * 16
    with pytest.raises(ValueError):
        AgentState(K, np.random.default_rng(0), q=np.zeros((3, 3)))


@pytest.mark.parametrize("kwargs", [{"alpha": 0}, {"gamma": 1.0}, {"mu": 0}, {"skew_upper": -1, "skew_lower": 1}])
def test_agent_config_validation(kwargs):
    with pytest.raises(ValueError):
        AgentConfig(**kwargs)


def test_q_dump_round_trip():
    q = np.random.default_rng(3).normal(scale=30, size=(16, 16))
    back = parse_q_table(format_q_table(q))
    np.testing.assert_allclose(back, q, rtol=1e-9)
    assert len(format_q_table(q).splitlines()) == 16
