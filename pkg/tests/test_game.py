import itertools
import math

import numpy as np
import pytest
from scipy.stats import binom

from mmfees.game import (
    RewardMatrix,
    analyze,
    build_reward_matrix,
    expected_reward,
    expected_side_fills,
    find_cooperative,
    find_pure_nash,
    format_matrix,
)
from mmfees.market import FeeSchedule, MarketParams, PriceGrid
from oracles import monte_carlo_reward, sampled_side

BASE = MarketParams()
NOFEE = FeeSchedule(0.0, 0.0)


@pytest.fixture(scope="module")
def baseline():
    return build_reward_matrix(BASE, NOFEE)


class TestExpectedFills:
    def test_certain_arrival_fills_everything(self):
        # zero weights give p = 1, so m = M = total quoted volume
        f = expected_side_fills((1, 1), "ask", MarketParams(c1=0.0), NOFEE)
        np.testing.assert_allclose(f, [[14, 2, 2, 2], [14, 2, 2, 2]], atol=1e-12)

    def test_zero_arrival(self):
        # huge weights push p to zero
        params = MarketParams(c1=1e6)
        assert np.abs(expected_side_fills((16, 16), "bid", params, NOFEE)).max() < 1e-12

    def test_both_at_two_closed_form(self):
        p = math.exp(-1.0)
        pmf = binom.pmf(np.arange(41), 40, p)
        per_agent = sum(pmf[m] * min(m, 40) / 2 for m in range(41))
        f = expected_side_fills((6, 6), "ask", BASE, NOFEE)
        assert f.sum(axis=1) == pytest.approx([per_agent, per_agent], abs=1e-12)

    def test_both_at_two_monte_carlo(self):
        rng = np.random.default_rng(5)
        q = np.array([[2.0, 14, 2, 2]] * 2)
        m = rng.binomial(40, math.exp(-1.0), size=1_000_000).astype(float)
        mc = sampled_side(q, m).sum(axis=2).mean(axis=0)
        exact = expected_side_fills((6, 6), "ask", BASE, NOFEE).sum(axis=1)
        assert np.all(np.abs(mc - exact) < 0.05)

    def test_bad_side(self):
        with pytest.raises(ValueError):
            expected_side_fills((1, 1), "mid", BASE, NOFEE)


@pytest.mark.parametrize("seed", range(10))
def test_expected_reward_matches_monte_carlo(seed):
    rng = np.random.default_rng(1000 + seed)
    profile = tuple(int(x) for x in rng.integers(1, 17, size=2))
    beta = float(rng.choice([0.0, 0.2, -0.45]))
    fees = FeeSchedule.with_margin(beta)
    exact = expected_reward(profile, BASE, fees)
    mean, se = monte_carlo_reward(profile, BASE, fees, 1_000_000, rng)
    assert np.all(np.abs(exact - mean) <= 3 * se), (profile, exact, mean, se)


def test_profile_length_checked():
    with pytest.raises(ValueError):
        expected_reward((1, 2, 3), BASE, NOFEE)


class TestRewardMatrix:
    def test_shape(self, baseline):
        assert baseline.entries.shape == (2, 16, 16)

    def test_symmetry(self, baseline):
        np.testing.assert_allclose(baseline.entries[0], baseline.entries[1].T, atol=1e-9)

    def test_matches_direct_evaluation(self, baseline):
        for prof in [(1, 1), (6, 6), (3, 14), (16, 2)]:
            np.testing.assert_allclose(
                [baseline.reward(0, prof), baseline.reward(1, prof)],
                expected_reward(prof, BASE, NOFEE),
                atol=1e-9,
            )

    def test_three_agents_symmetric(self):
        params = MarketParams(n_agents=3)
        m = build_reward_matrix(params, NOFEE)
        for prof in [(1, 6, 11), (2, 2, 9)]:
            direct = expected_reward(prof, params, NOFEE)
            got = [m.reward(i, prof) for i in range(3)]
            np.testing.assert_allclose(got, direct, atol=1e-9)
            swapped = (prof[1], prof[0], prof[2])
            assert m.reward(0, swapped) == pytest.approx(m.reward(1, prof), abs=1e-9)

    def test_enumeration_cap(self):
        with pytest.raises(ValueError):
            build_reward_matrix(MarketParams(n_agents=6), NOFEE)

    def test_penalty_heavy_settings_go_negative(self):
        m = build_reward_matrix(MarketParams(xi=0.3), FeeSchedule(0.2, 0.25))
        own_vs_six = [m.reward(0, (c, 6)) for c in (3, 4)]
        assert all(v < 0 for v in own_vs_six)

    def test_format(self, baseline):
        text = format_matrix(baseline, 0).splitlines()
        assert text[0] == "agent 1"
        assert len(text) == 18
        assert float(text[7].split()[6]) == pytest.approx(baseline.reward(0, (6, 6)), abs=0.05)


def brute_force_nash(m: RewardMatrix):
    A, N = m.n_actions, m.n_agents
    out = []
    for prof in itertools.product(range(1, A + 1), repeat=N):
        ok = True
        for i in range(N):
            here = m.reward(i, prof)
            for dev in range(1, A + 1):
                alt = prof[:i] + (dev,) + prof[i + 1 :]
                if m.reward(i, alt) > here + 1e-9:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            out.append(prof)
    return out


class TestClassification:
    @pytest.mark.parametrize("beta", [0.0, 0.1, 0.2, -0.45])
    def test_nash_matches_definition(self, beta):
        m = build_reward_matrix(BASE, FeeSchedule.with_margin(beta))
        assert find_pure_nash(m) == brute_force_nash(m)

    @pytest.mark.parametrize("seed", range(5))
    def test_nash_random_games(self, seed):
        rng = np.random.default_rng(seed)
        # small integer payoffs make weak ties common
        m = RewardMatrix(2, 2, rng.integers(0, 3, size=(2, 4, 4)).astype(float))
        assert find_pure_nash(m) == brute_force_nash(m)

    def test_constant_shift_invariance(self, baseline):
        shifted = RewardMatrix(2, 4, baseline.entries + 123.456)
        assert find_pure_nash(shifted) == find_pure_nash(baseline)
        assert find_cooperative(shifted) == find_cooperative(baseline)

    def test_constant_matrix(self):
        m = RewardMatrix(2, 4, np.full((2, 16, 16), 7.0))
        assert len(find_cooperative(m)) == 256
        assert len(find_pure_nash(m)) == 256

    def test_cooperative_is_joint_argmax(self, baseline):
        J = baseline.joint_profit()
        coop = find_cooperative(baseline)
        assert all(J[a - 1, b - 1] == pytest.approx(J.max()) for a, b in coop)

    def test_report(self, baseline):
        rep = analyze(baseline)
        for prof in rep.pure_nash:
            assert rep.is_nash(prof)
        assert rep.joint_profit.shape == (16, 16)


def test_custom_grid_runs():
    params = MarketParams(grid=PriceGrid((1.0, 2.5, 4.0)))
    m = build_reward_matrix(params, NOFEE)
    assert m.entries.shape == (2, 9, 9)
