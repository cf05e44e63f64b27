"""Reward-driven noise-filtering agent for the PL and NL streams.

The PL stream filters suspected mislabeled instances out of its positive
training set, and the NL stream does the same for its negative set. Every
epoch, each stream:

1. resets its training sets to the originals and samples a removal set from
   the policy ``pi(remove | s)``,
2. moves the removed instances to the opposite set with flipped working
   labels, so the training-set size stays constant,
3. retrains the classifier, filters the validation candidates with the
   deterministic policy (``pi > 0.5``), and scores F1 on that set,
4. turns the smoothed F1 change into a reward and takes one reward-weighted
   cross-entropy step on the policy.

A policy state is the instance's standardized feature vector plus its
working label.
"""

from __future__ import annotations

import copy
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .errors import ConsistencyError, InitError, NoRewardError, ParameterError
from .metrics import f1_score

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 10.0
DEFAULT_IMBALANCE = 10
# Small steps: the reward is noisy and the pretrained policy is already good.
DEFAULT_POLICY_LR = 0.01
SMOOTHING_WINDOW = 5
STREAMS = ("PL", "NL")


@dataclass
class Policy:
    """Logistic remove/retain scorer over ``[standardized features, working label]``."""

    weights: np.ndarray
    bias: float = 0.0
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None

    @classmethod
    def zeros(cls, n_features, bias=0.0):
        return cls(np.zeros(n_features + 1), bias, np.zeros(n_features), np.ones(n_features))

    @classmethod
    def constant(cls, n_features, p_remove):
        """Policy that removes every instance with probability ``p_remove``."""
        if p_remove <= 0.0:
            b = -np.inf
        elif p_remove >= 1.0:
            b = np.inf
        else:
            b = float(np.log(p_remove / (1.0 - p_remove)))
        return cls.zeros(n_features, b)

    def copy(self):
        return Policy(self.weights.copy(), self.bias, self.mean.copy(), self.scale.copy())

    def states(self, X, labels):
        Z = (np.asarray(X, dtype=np.float64) - self.mean) / self.scale
        lab = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
        return np.hstack([Z, lab])

    def prob_from_states(self, S):
        return expit(S @ self.weights + self.bias)

    def prob_remove(self, X, labels):
        return self.prob_from_states(self.states(X, labels))

    def to_dict(self):
        return {"weights": self.weights.tolist(), "bias": float(self.bias),
                "mean": self.mean.tolist(), "scale": self.scale.tolist()}


def objective_j(policy, S, targets):
    """Cross-entropy objective J = sum t log pi + (1 - t) log(1 - pi)."""
    z = S @ policy.weights + policy.bias
    t = np.asarray(targets, dtype=np.float64)
    # log(pi) = -log1p(exp(-z)), log(1 - pi) = -log1p(exp(z))
    return float(np.sum(-t * np.logaddexp(0.0, -z) - (1.0 - t) * np.logaddexp(0.0, z)))


def objective_grad(policy, S, targets):
    """``(dJ/dweights, dJ/dbias)``."""
    r = np.asarray(targets, dtype=np.float64) - policy.prob_from_states(S)
    return S.T @ r, float(r.sum())


def update_policy(policy, states, actions, reward, lr=DEFAULT_POLICY_LR):
    """One ascent step on the reward-weighted objective.

    ``actions`` are the sampled decisions (1 = removed). With a positive
    reward they are the targets; with a negative reward the targets are
    inverted; a zero reward leaves the policy unchanged. The step is scaled
    by ``|reward|`` and averaged over the instances.
    """
    if reward == 0 or len(actions) == 0:
        return policy.copy()
    a = np.asarray(actions, dtype=np.float64)
    targets = a if reward > 0 else 1.0 - a
    gw, gb = objective_grad(policy, states, targets)
    step = lr * abs(reward) / len(a)
    new = policy.copy()
    new.weights = new.weights + step * gw
    new.bias = new.bias + step * gb
    return new


@dataclass(frozen=True)
class Reward:
    value: float
    epoch: int
    stream: str


def compute_reward(f1_history, alpha=DEFAULT_ALPHA, i=None, stream="PL"):
    """Smoothed reward ``alpha * (mean F1 window at i - mean F1 window at i-1)``.

    Both windows have length ``min(5, i)`` so early epochs compare windows of
    equal size; with a window of one this is the plain adjacent difference.
    """
    h = np.asarray(f1_history, dtype=np.float64)
    i = len(h) - 1 if i is None else int(i)
    if i < 1:
        raise NoRewardError("reward needs at least two epochs of history (i >= 1)")
    if i >= len(h):
        raise ParameterError(f"epoch {i} is beyond the F1 history")
    k = min(SMOOTHING_WINDOW, i)
    cur = h[i - k + 1: i + 1].mean()
    prev = h[i - k: i].mean()
    return Reward(float(alpha * (cur - prev)), i, stream)


@dataclass
class StreamState:
    """Sets of one stream; ids index rows of the shared feature table.

    ``target`` is the label the stream filters: True (positives) for PL,
    False (negatives) for NL.
    """

    name: str
    target: bool
    p_train_ori: np.ndarray
    n_train_ori: np.ndarray
    p_val_ori: np.ndarray
    n_val_ori: np.ndarray
    p_train: np.ndarray
    n_train: np.ndarray
    policy: Policy
    psi: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    f1_history: list = field(default_factory=list)

    @property
    def train_size(self):
        return len(self.p_train) + len(self.n_train)

    def candidates(self):
        return self.p_train if self.target else self.n_train

    def candidates_ori(self):
        return self.p_train_ori if self.target else self.n_train_ori

    def reset(self):
        return replace(self, p_train=self.p_train_ori.copy(), n_train=self.n_train_ori.copy(),
                       psi=np.zeros(0, np.int64))

    def train_ids_labels(self):
        ids = np.concatenate([self.p_train, self.n_train])
        y = np.concatenate([np.ones(len(self.p_train), bool), np.zeros(len(self.n_train), bool)])
        return ids, y


@dataclass
class AgentState:
    features: np.ndarray
    streams: dict
    alpha: float = DEFAULT_ALPHA
    seed: int = 0

    def stream(self, name):
        return self.streams[name]

    def train_ids(self):
        return np.unique(np.concatenate([np.concatenate([s.p_train_ori, s.n_train_ori])
                                         for s in self.streams.values()]))

    def val_ids(self):
        return np.unique(np.concatenate([np.concatenate([s.p_val_ori, s.n_val_ori])
                                         for s in self.streams.values()]))


def _split(ids, rng, ratio):
    ids = np.asarray(ids, dtype=np.int64)
    perm = rng.permutation(ids)
    n_train = int(round(ratio * len(ids)))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _subsample(ids, k, rng):
    if k >= len(ids):
        return np.sort(ids)
    return np.sort(rng.choice(ids, size=k, replace=False))


def _stream_sets(minority_tr, minority_va, majority_tr, majority_va, imbalance, rng, name):
    want_tr, want_va = imbalance * len(minority_tr), imbalance * len(minority_va)
    if len(majority_tr) < want_tr or len(majority_va) < want_va:
        log.warning("%s stream: only %d/%d majority instances for a 1:%d ratio; clamping",
                    name, len(majority_tr) + len(majority_va), want_tr + want_va, imbalance)
    return _subsample(majority_tr, want_tr, rng), _subsample(majority_va, want_va, rng)


def init_sets(rp, ns, features, imbalance=DEFAULT_IMBALANCE, seed=0, alpha=DEFAULT_ALPHA,
              train_ratio=0.7):
    """Build PL and NL stream sets from reliable positives and negative samples.

    ``rp`` and ``ns`` are split 7:3 into train/validation once, so both
    streams share the same split. The PL stream keeps every positive and
    subsamples negatives to ``imbalance`` times as many; NL does the reverse.
    When the majority side is too small it is used whole and a warning is
    logged.
    """
    rp = np.unique(np.asarray(rp, dtype=np.int64))
    ns = np.unique(np.asarray(ns, dtype=np.int64))
    if len(rp) == 0 or len(ns) == 0:
        raise InitError("both the positive and the negative set must be non-empty")
    X = np.asarray(features, dtype=np.float64)
    ss = np.random.SeedSequence(seed)
    split_rng, pl_rng, nl_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    rp_tr, rp_va = _split(rp, split_rng, train_ratio)
    ns_tr, ns_va = _split(ns, split_rng, train_ratio)
    if len(rp_tr) == 0 or len(ns_tr) == 0:
        raise InitError("training split is empty; need more instances")

    train_ids = np.concatenate([rp_tr, ns_tr])
    mean = X[train_ids].mean(axis=0)
    sd = X[train_ids].std(axis=0)
    scale = np.where(sd > 1e-12, sd, 1.0)

    def fresh_policy():
        return Policy(np.zeros(X.shape[1] + 1), 0.0, mean.copy(), scale.copy())

    n_tr, n_va = _stream_sets(rp_tr, rp_va, ns_tr, ns_va, imbalance, pl_rng, "PL")
    pl = StreamState("PL", True, rp_tr, n_tr, rp_va, n_va, rp_tr.copy(), n_tr.copy(),
                     fresh_policy())
    p_tr, p_va = _stream_sets(ns_tr, ns_va, rp_tr, rp_va, imbalance, nl_rng, "NL")
    nl = StreamState("NL", False, p_tr, ns_tr, p_va, ns_va, p_tr.copy(), ns_tr.copy(),
                     fresh_policy())
    return AgentState(X, {"PL": pl, "NL": nl}, alpha, seed)


def pretrain_policy(stream, features, iters=200, l2=1e-3):
    """Fit the policy as a binary classifier on the stream's original labels.

    The target is "remove" for instances carrying the label opposite to the
    stream's target (negatives in PL, positives in NL) and "retain" for the
    rest. The label column of the state is held at zero weight here, since
    it would trivially predict the target.
    """
    X = np.asarray(features, dtype=np.float64)
    ids = np.concatenate([stream.p_train_ori, stream.n_train_ori])
    is_pos = np.concatenate([np.ones(len(stream.p_train_ori), bool),
                             np.zeros(len(stream.n_train_ori), bool)])
    remove = (~is_pos if stream.target else is_pos).astype(np.float64)
    pol = stream.policy.copy()
    S = pol.states(X[ids], is_pos)
    d = S.shape[1] - 1
    n = len(ids)

    def fun(theta):
        pol.weights = np.r_[theta[:d], 0.0]
        pol.bias = theta[d]
        j = objective_j(pol, S, remove) / n - 0.5 * l2 * np.sum(theta[:d] ** 2)
        gw, gb = objective_grad(pol, S, remove)
        g = np.r_[gw[:d] / n - l2 * theta[:d], gb / n]
        return -j, -g

    res = minimize(fun, np.zeros(d + 1), jac=True, method="L-BFGS-B",
                   options={"maxiter": iters})
    pol.weights = np.r_[res.x[:d], 0.0]
    pol.bias = float(res.x[d])
    return replace(stream, policy=pol)


def sample_removals(stream, features, rng):
    """Each candidate is removed independently with probability ``pi(remove | s)``."""
    cand = stream.candidates()
    if len(cand) == 0:
        return np.zeros(0, np.int64)
    labels = np.full(len(cand), stream.target)
    p = stream.policy.prob_remove(np.asarray(features)[cand], labels)
    return np.sort(cand[rng.random(len(cand)) < p])


def apply_removals(stream, psi):
    """Move ``psi`` from the stream's candidate set to the opposite set."""
    psi = np.asarray(psi, dtype=np.int64)
    cand = stream.candidates()
    if not np.all(np.isin(psi, cand)) or len(np.unique(psi)) != len(psi):
        raise ConsistencyError("removal set is not a subset of the current training candidates")
    if len(psi) == 0:
        return replace(stream, psi=psi)
    kept = np.setdiff1d(cand, psi)
    if stream.target:
        out = replace(stream, p_train=kept, n_train=np.union1d(stream.n_train, psi), psi=psi)
    else:
        out = replace(stream, n_train=kept, p_train=np.union1d(stream.p_train, psi), psi=psi)
    return out


def filter_validation(stream, features):
    """Deterministic policy on validation candidates: returns ``(ids, labels)``."""
    X = np.asarray(features)
    cand = stream.p_val_ori if stream.target else stream.n_val_ori
    other = stream.n_val_ori if stream.target else stream.p_val_ori
    p = stream.policy.prob_remove(X[cand], np.full(len(cand), stream.target))
    moved = p > 0.5
    ids = np.concatenate([cand, other])
    labels = np.concatenate([np.where(moved, not stream.target, stream.target),
                             np.full(len(other), not stream.target)])
    return ids, labels


def stream_f1(classifier, stream, features):
    ids, labels = filter_validation(stream, features)
    pred = classifier.predict(ids)
    if stream.target:
        return f1_score(pred, labels)
    return f1_score(~np.asarray(pred, bool), ~labels)


def final_removals(stream, features):
    """Deterministic cleaning of the original candidates (``pi > 0.5``)."""
    cand = stream.candidates_ori()
    p = stream.policy.prob_remove(np.asarray(features)[cand], np.full(len(cand), stream.target))
    return np.sort(cand[p > 0.5])


@dataclass
class AgentResult:
    state: AgentState
    cleaned: dict  # id -> working label after final cleaning
    trace: list    # (epoch, stream, removed, f1, reward)


def _new_classifier(classifier):
    if callable(classifier) and not hasattr(classifier, "fit"):
        return classifier()
    return copy.deepcopy(classifier)


def _run_stream_epoch(stream, epoch, features, classifier, rng, alpha, lr):
    expected = stream.reset().train_size
    stream = stream.reset()
    psi = sample_removals(stream, features, rng)
    cand = stream.candidates()
    actions = np.isin(cand, psi).astype(np.float64)
    states = stream.policy.states(np.asarray(features)[cand], np.full(len(cand), stream.target))
    stream = apply_removals(stream, psi)
    if stream.train_size != expected:
        raise ConsistencyError(f"{stream.name} training set size changed "
                               f"({expected} -> {stream.train_size})")
    clf = _new_classifier(classifier)
    clf.fit(*stream.train_ids_labels())
    f1 = stream_f1(clf, stream, features)
    history = stream.f1_history + [f1]
    reward = None
    policy = stream.policy
    if epoch >= 1:
        reward = compute_reward(history, alpha, epoch, stream.name).value
        policy = update_policy(policy, states, actions, reward, lr)
    stream = replace(stream, f1_history=history, policy=policy)
    return stream, (epoch, stream.name, int(len(psi)), float(f1), reward)


def run_agent(state, classifier, epochs=10, seed=0, lr=DEFAULT_POLICY_LR, pretrain=True, workers=1):
    """Run the two-stream filtering loop and return the cleaned labels.

    ``classifier`` is a factory returning an object with ``fit(ids, labels)``
    and ``predict(ids)``, or such an object (deep-copied per use). The two
    streams use independent seeded generators, so ``workers=2`` (threads)
    gives the same result as the serial schedule.
    """
    X = state.features
    if epochs <= 0:
        return AgentResult(state, _cleaned_labels(state, X, apply_policy=False), [])
    streams = dict(state.streams)
    if pretrain:
        streams = {k: pretrain_policy(s, X) for k, s in streams.items()}
    rngs = dict(zip(STREAMS, (np.random.default_rng(s)
                              for s in np.random.SeedSequence(seed).spawn(len(STREAMS)))))
    trace = []
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for epoch in range(int(epochs)):
            jobs = [(k, streams[k]) for k in STREAMS]
            if pool is None:
                results = [_run_stream_epoch(s, epoch, X, classifier, rngs[k], state.alpha, lr)
                           for k, s in jobs]
            else:
                futs = [pool.submit(_run_stream_epoch, s, epoch, X, classifier, rngs[k],
                                    state.alpha, lr) for k, s in jobs]
                results = [f.result() for f in futs]
            for (k, _), (s, row) in zip(jobs, results):
                streams[k] = s
                trace.append(row)
            log.debug("agent epoch %d: %s", epoch, trace[-2:])
    finally:
        if pool is not None:
            pool.shutdown()
    final = replace(state, streams={k: s.reset() for k, s in streams.items()})
    return AgentResult(final, _cleaned_labels(final, X, apply_policy=True), trace)


def _cleaned_labels(state, X, apply_policy):
    """Working labels over all training ids.

    Each stream is authoritative for its own candidates: PL decides on the
    original positives, NL on the original negatives.
    """
    labels = {}
    pl, nl = state.streams["PL"], state.streams["NL"]
    for pid in pl.p_train_ori:
        labels[int(pid)] = True
    for pid in nl.n_train_ori:
        labels[int(pid)] = False
    if apply_policy:
        for pid in final_removals(pl, X):
            labels[int(pid)] = False
        for pid in final_removals(nl, X):
            labels[int(pid)] = True
    return dict(sorted(labels.items()))


def noise_recovery_run(feat_plus, feat_minus, true_labels, noise_rate, seed, epochs=10,
                       classifier_epochs=100, lr=DEFAULT_POLICY_LR):
    """One controlled-noise experiment: ``(baseline_f1, agent_f1, result)``.

    Labels are flipped at ``noise_rate``; the noisy positives and negatives
    seed the two streams. The baseline classifier trains on the noisy labels
    of the training ids, the agent classifier on the cleaned labels. Both are
    scored by F1 against the true labels of the held-out validation ids.
    """
    from .core import TwinCrossClassifier
    from .synth import plant_noise

    y = np.asarray(true_labels, dtype=bool)
    noisy, _ = plant_noise(y, noise_rate, seed)
    ids = np.arange(len(y))
    state = init_sets(ids[noisy], ids[~noisy], feat_plus, seed=seed)

    def factory():
        return TwinCrossClassifier(feat_plus, feat_minus, epochs=classifier_epochs, seed=seed)

    train_ids, val_ids = state.train_ids(), state.val_ids()
    base = factory().fit(train_ids, noisy[train_ids])
    base_f1 = f1_score(base.predict(val_ids), y[val_ids])

    res = run_agent(state, factory, epochs=epochs, seed=seed, lr=lr)
    cleaned = np.array([res.cleaned[int(i)] for i in train_ids])
    clf = factory().fit(train_ids, cleaned)
    agent_f1 = f1_score(clf.predict(val_ids), y[val_ids])
    return base_f1, agent_f1, res
