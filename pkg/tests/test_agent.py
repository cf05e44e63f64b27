import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from octx import agent
from octx.agent import Policy
from octx.errors import ConsistencyError, InitError, NoRewardError
from oracles import central_difference, rel_error


# rewards

def test_reward_examples():
    assert agent.compute_reward([0.80, 0.85], alpha=100, i=1).value == pytest.approx(5.0)
    assert agent.compute_reward([0.7] * 8, i=6).value == 0
    r = agent.compute_reward([.5, .6, .7, .8, .9, .9], alpha=1, i=5)
    assert r.value == pytest.approx(0.78 - 0.70)
    with pytest.raises(NoRewardError):
        agent.compute_reward([0.5, 0.6], i=0)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=20), st.floats(0.1, 100), st.data())
def test_reward_sign_matches_smoothed_delta(h, alpha, data):
    i = data.draw(st.integers(1, len(h) - 1))
    k = min(5, i)
    delta = np.mean(h[i - k + 1:i + 1]) - np.mean(h[i - k:i])
    r = agent.compute_reward(h, alpha, i)
    assert r.value == pytest.approx(alpha * delta, abs=1e-9)
    if abs(delta) > 1e-12:
        assert np.sign(r.value) == np.sign(delta)


# set initialization

def _feats(n, d=4, seed=0):
    return np.random.default_rng(seed).normal(size=(n, d))


def test_init_sets_ten_to_one():
    X = _feats(210)
    st_ = agent.init_sets(np.arange(10), np.arange(10, 210), X, seed=1)
    pl = st_.stream("PL")
    assert len(pl.p_train_ori) + len(pl.p_val_ori) == 10
    assert len(pl.n_train_ori) + len(pl.n_val_ori) == 100
    assert len(pl.n_train_ori) == 10 * len(pl.p_train_ori)
    nl = st_.stream("NL")
    assert len(nl.n_train_ori) + len(nl.n_val_ori) == 200
    assert len(nl.p_train_ori) + len(nl.p_val_ori) == 10  # clamped
    # train and validation never overlap
    assert not set(st_.train_ids()) & set(st_.val_ids())


def test_init_sets_clamps_with_warning(caplog):
    X = _feats(60)
    with caplog.at_level(logging.WARNING, logger="octx.agent"):
        st_ = agent.init_sets(np.arange(10), np.arange(10, 60), X, seed=0)
    pl = st_.stream("PL")
    assert len(pl.n_train_ori) + len(pl.n_val_ori) == 50
    assert any("clamp" in r.getMessage().lower() for r in caplog.records)


def test_init_sets_deterministic_and_guarded():
    X = _feats(100)
    a = agent.init_sets(np.arange(20), np.arange(20, 100), X, seed=7)
    b = agent.init_sets(np.arange(20), np.arange(20, 100), X, seed=7)
    for k in agent.STREAMS:
        for f in ("p_train_ori", "n_train_ori", "p_val_ori", "n_val_ori"):
            assert np.array_equal(getattr(a.stream(k), f), getattr(b.stream(k), f))
    with pytest.raises(InitError):
        agent.init_sets([], np.arange(10), X)


# removals

def _stream(n_pos=10, n_neg=20, d=4):
    X = _feats(n_pos + n_neg, d)
    s = agent.init_sets(np.arange(n_pos), np.arange(n_pos, n_pos + n_neg), X, imbalance=2,
                        train_ratio=1.0 - 1e-9)
    return s.stream("PL"), X


def test_sample_removals_extremes():
    s, X = _stream()
    rng = np.random.default_rng(0)
    s0 = s.__class__(**{**s.__dict__, "policy": Policy.constant(4, 0.0)})
    assert agent.sample_removals(s0, X, rng).size == 0
    s1 = s.__class__(**{**s.__dict__, "policy": Policy.constant(4, 1.0)})
    assert np.array_equal(agent.sample_removals(s1, X, rng), np.sort(s.candidates()))


def test_sample_removals_binomial():
    n = 10_000
    X = _feats(n + 1, 2)
    s = agent.init_sets(np.arange(n), [n], X, train_ratio=1.0 - 1e-9).stream("PL")
    s = s.__class__(**{**s.__dict__, "policy": Policy.constant(2, 0.5)})
    fracs = [agent.sample_removals(s, X, np.random.default_rng(k)).size / len(s.candidates())
             for k in range(10)]
    assert 0.48 <= np.mean(fracs) <= 0.52
    # 4 standard deviations of a binomial proportion
    assert all(abs(f - 0.5) < 4 * np.sqrt(0.25 / len(s.candidates())) for f in fracs)
    a = agent.sample_removals(s, X, np.random.default_rng(3))
    b = agent.sample_removals(s, X, np.random.default_rng(3))
    assert np.array_equal(a, b)


def test_apply_removals_examples():
    s, _ = _stream()
    assert agent.apply_removals(s, []).train_size == s.train_size
    assert np.array_equal(agent.apply_removals(s, []).p_train, s.p_train)
    psi = s.p_train[:3]
    moved = agent.apply_removals(s, psi)
    assert len(moved.p_train) == len(s.p_train) - 3
    assert len(moved.n_train) == len(s.n_train) + 3
    assert moved.train_size == s.train_size
    assert set(psi) <= set(moved.n_train)
    with pytest.raises(ConsistencyError):
        agent.apply_removals(moved, psi)
    with pytest.raises(ConsistencyError):
        agent.apply_removals(s, [psi[0], psi[0]])


# policy update

def test_zero_reward_is_noop():
    p = Policy(np.ones(5), 0.3, np.zeros(4), np.ones(4))
    S = np.random.default_rng(0).normal(size=(6, 5))
    q = agent.update_policy(p, S, np.ones(6), 0.0)
    assert np.array_equal(q.weights, p.weights) and q.bias == p.bias


def test_positive_reward_raises_removal_prob_of_planted_noise():
    rng = np.random.default_rng(2)
    n = 40
    noise = np.zeros(n, bool)
    noise[:8] = True
    X = rng.normal(size=(n, 3))
    X[noise, 0] += 6.0
    p = Policy(rng.normal(scale=0.1, size=4), 0.0, np.zeros(3), np.ones(3))
    S = p.states(X, np.ones(n))
    before = p.prob_from_states(S)
    after = agent.update_policy(p, S, noise.astype(float), reward=1.0, lr=0.5).prob_from_states(S)
    assert np.all(after[noise] > before[noise])
    after_neg = agent.update_policy(p, S, noise.astype(float), reward=-1.0, lr=0.5)
    assert np.all(after_neg.prob_from_states(S)[noise] < before[noise])


def test_policy_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    for _ in range(10):
        S = rng.normal(size=(30, 6))
        t = (rng.random(30) < 0.4).astype(float)
        p = Policy(rng.normal(size=6), float(rng.normal()), np.zeros(5), np.ones(5))
        gw, gb = agent.objective_grad(p, S, t)

        def f(theta):
            return agent.objective_j(Policy(theta[:6], theta[6], p.mean, p.scale), S, t)

        num = central_difference(f, np.r_[p.weights, p.bias])
        assert rel_error(np.r_[gw, gb], num) < 1e-5


def test_noise_removal_prob_rises_under_positive_rewards():
    # Reward is the oracle's signal: positive when the sampled removals hit
    # more planted noise than clean instances, proportionally.
    n, d = 60, 3
    means = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        noise = np.arange(n) < 12
        X = rng.normal(size=(n, d))
        X[noise, 0] += 2.5
        p = Policy(np.zeros(d + 1), -1.0, np.zeros(d), np.ones(d))
        S = p.states(X, np.ones(n))
        traj = [p.prob_from_states(S)[noise].mean()]
        for _ in range(8):
            a = rng.random(n) < p.prob_from_states(S)
            r = a[noise].mean() - a[~noise].mean()
            if r > 0:
                p = agent.update_policy(p, S, a.astype(float), r, lr=1.0)
            traj.append(p.prob_from_states(S)[noise].mean())
        means.append(traj)
    m = np.mean(means, axis=0)
    assert np.all(np.diff(m) >= -1e-12)
    assert m[-1] > m[0]


# full loop

class _Centroid:
    """Tiny nearest-centroid classifier over the fixture features."""

    def __init__(self, X):
        self.X = X

    def fit(self, ids, labels):
        ids, y = np.asarray(ids), np.asarray(labels, bool)
        self.mu = [self.X[ids[~y]].mean(0), self.X[ids[y]].mean(0)]
        return self

    def predict(self, ids):
        Z = self.X[np.asarray(ids)]
        return (np.linalg.norm(Z - self.mu[1], axis=1) < np.linalg.norm(Z - self.mu[0], axis=1))


def _loop_fixture(seed=0, n=300, flip=0.2):
    rng = np.random.default_rng(seed)
    y = rng.random(n) < 0.3
    X = rng.normal(size=(n, 4)) + np.where(y, 1.5, -1.5)[:, None]
    noisy = y.copy()
    f = rng.choice(n, int(flip * n), replace=False)
    noisy[f] = ~noisy[f]
    ids = np.arange(n)
    return agent.init_sets(ids[noisy], ids[~noisy], X, imbalance=3, seed=seed), X


def test_zero_epochs_unchanged_empty_trace():
    state, X = _loop_fixture()
    res = agent.run_agent(state, lambda: _Centroid(X), epochs=0)
    assert res.trace == []
    assert all(res.cleaned[int(i)] for i in state.stream("PL").p_train_ori)
    assert not any(res.cleaned[int(i)] for i in state.stream("NL").n_train_ori)


def test_loop_deterministic_constant_size_and_parallel_equals_serial():
    state, X = _loop_fixture(1)
    a = agent.run_agent(state, lambda: _Centroid(X), epochs=4, seed=3)
    b = agent.run_agent(state, lambda: _Centroid(X), epochs=4, seed=3)
    c = agent.run_agent(state, lambda: _Centroid(X), epochs=4, seed=3, workers=2)
    assert a.trace == b.trace == c.trace
    assert a.cleaned == b.cleaned == c.cleaned
    assert len(a.trace) == 8
    assert [row[1] for row in a.trace[:2]] == ["PL", "NL"]
    assert a.trace[0][4] is None and a.trace[2][4] is not None
    for k in agent.STREAMS:
        s = a.state.stream(k)
        assert s.train_size == state.stream(k).train_size


def test_loop_trace_rewards_follow_history():
    state, X = _loop_fixture(2)
    res = agent.run_agent(state, lambda: _Centroid(X), epochs=5, seed=0)
    for k in agent.STREAMS:
        rows = [r for r in res.trace if r[1] == k]
        hist = [r[3] for r in rows]
        for i, r in enumerate(rows[1:], start=1):
            assert r[4] == pytest.approx(agent.compute_reward(hist, state.alpha, i).value)


@pytest.mark.slow
def test_noise_recovery_single_seed(default_table):
    t = default_table
    base, ag, _ = agent.noise_recovery_run(t.fplus, t.fminus, t.gt, 0.2, seed=0)
    assert ag > base
