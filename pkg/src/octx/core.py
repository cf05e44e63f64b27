"""Twin-cross learning: twin transforms, four compound classes, fusion.

Each patch ``x`` yields two views: ``x+`` (identity) and ``x-`` (intensity
complement ``255 - x``). A 4-way classifier is trained on compound labels
``{P+, P-, N+, N-}`` built from the binary label and the view sign, and the
two 4-vectors ``theta`` (for ``x+``) and ``psi`` (for ``x-``) are fused into a
single P/N decision:

* argmax theta = N+ and argmax psi = N-  ->  N
* argmax theta = P+ and argmax psi = P-  ->  P
* otherwise N iff the largest N-component of theta or psi is strictly larger
  than the largest P-component, else P.

The printed form of the last rule compares an expression with itself; the
reading above (N-maxima against P-maxima) is the one consistent with the two
agreement rules.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_softmax, softmax

from .errors import MalformedFileError, ParameterError, TrainingError
from .glcm import N_FEATURES, catalog_hash
from .patching import LESION_CLASSES

COMPOUND = ("P+", "P-", "N+", "N-")
P_PLUS, P_MINUS, N_PLUS, N_MINUS = range(4)
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TwinPair:
    x_plus: np.ndarray
    x_minus: np.ndarray
    origin_id: int = 0


def make_twins(img, origin_id=0):
    a = np.asarray(img)
    if a.min() < 0 or a.max() > 255:
        raise ParameterError("intensities must lie in [0, 255]")
    return TwinPair(a.copy(), (255 - a.astype(np.int64)).astype(a.dtype), origin_id)


def compound_label(y, sign):
    """``("P", "+") -> "P+"``; ``y`` may also be a bool (True is P)."""
    if isinstance(y, (bool, np.bool_)):
        y = "P" if y else "N"
    if y not in ("P", "N") or sign not in ("+", "-"):
        raise ParameterError(f"bad compound label parts {y!r}, {sign!r}")
    return y + sign


def compound_index(y, sign):
    """Vectorized compound class index for boolean labels ``y``."""
    y = np.asarray(y, dtype=bool)
    base = np.where(y, P_PLUS, N_PLUS)
    return base + (0 if sign == "+" else 1)


@dataclass(frozen=True)
class TwinPrediction:
    theta: np.ndarray
    psi: np.ndarray
    fused: str
    confidence: float


def fuse(theta, psi):
    """Fused label ``"P"``/``"N"`` and its confidence for one twin pair."""
    t = np.asarray(theta, dtype=np.float64)
    p = np.asarray(psi, dtype=np.float64)
    at, ap = int(np.argmax(t)), int(np.argmax(p))
    n_max = max(t[N_PLUS], t[N_MINUS], p[N_PLUS], p[N_MINUS])
    p_max = max(t[P_PLUS], t[P_MINUS], p[P_PLUS], p[P_MINUS])
    if at == N_PLUS and ap == N_MINUS:
        return "N", float(n_max)
    if at == P_PLUS and ap == P_MINUS:
        return "P", float(p_max)
    if n_max > p_max:
        return "N", float(n_max)
    return "P", float(p_max)


def fuse_batch(theta, psi):
    """Row-wise ``fuse``: returns ``(is_positive bool array, confidence array)``."""
    t = np.asarray(theta, dtype=np.float64)
    p = np.asarray(psi, dtype=np.float64)
    at, ap = t.argmax(axis=1), p.argmax(axis=1)
    n_max = np.max(np.stack([t[:, N_PLUS], t[:, N_MINUS], p[:, N_PLUS], p[:, N_MINUS]]), axis=0)
    p_max = np.max(np.stack([t[:, P_PLUS], t[:, P_MINUS], p[:, P_PLUS], p[:, P_MINUS]]), axis=0)
    agree_n = (at == N_PLUS) & (ap == N_MINUS)
    agree_p = (at == P_PLUS) & (ap == P_MINUS)
    pos = np.where(agree_n, False, np.where(agree_p, True, ~(n_max > p_max)))
    return pos, np.where(pos, p_max, n_max)


def positive_mass(theta, psi):
    """Continuous lesion score: mean P-mass of the two views (used for ROC)."""
    t = np.asarray(theta)
    p = np.asarray(psi)
    return 0.5 * (t[..., P_PLUS] + t[..., P_MINUS] + p[..., P_PLUS] + p[..., P_MINUS])


class SoftmaxClassifier:
    """Linear soft-max model over standardized features.

    ``weights`` is ``(d, k)`` and ``bias`` is ``(k,)``. Standardization
    statistics are fixed at the first ``fit`` and then kept, so repeated fits
    continue from the same input scale.
    """

    def __init__(self, n_features=N_FEATURES, n_classes=4, seed=0, init_scale=0.01):
        rng = np.random.default_rng(seed)
        self.weights = init_scale * rng.standard_normal((n_features, n_classes))
        self.bias = np.zeros(n_classes)
        self.mean = np.zeros(n_features)
        self.scale = np.ones(n_features)
        self.seed = seed
        self.loss_history = []

    @property
    def n_features(self):
        return self.weights.shape[0]

    def copy(self):
        m = SoftmaxClassifier.__new__(SoftmaxClassifier)
        m.weights = self.weights.copy()
        m.bias = self.bias.copy()
        m.mean = self.mean.copy()
        m.scale = self.scale.copy()
        m.seed = self.seed
        m.loss_history = list(self.loss_history)
        return m

    def standardize(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def logits(self, X):
        return self.standardize(X) @ self.weights + self.bias

    def predict_proba(self, X):
        return softmax(self.logits(X), axis=1)

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def loss_and_grad(self, Z, y, l2=0.0, sample_weight=None):
        """Mean cross-entropy on standardized inputs ``Z`` and its gradient.

        Returns ``(loss, grad_weights, grad_bias)``.
        """
        n = Z.shape[0]
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        w = w / w.sum()
        logp = log_softmax(Z @ self.weights + self.bias, axis=1)
        loss = -(w * logp[np.arange(n), y]).sum() + 0.5 * l2 * (self.weights**2).sum()
        delta = np.exp(logp)
        delta[np.arange(n), y] -= 1.0
        delta *= w[:, None]
        gw = Z.T @ delta + l2 * self.weights
        gb = delta.sum(axis=0)
        return float(loss), gw, gb

    def fit(self, X, y, epochs=200, lr="auto", l2=1e-3, balanced=False, refit_scaler=None,
            solver="lbfgs"):
        """Minimize the mean cross-entropy for ``epochs`` iterations.

        ``solver="gd"`` is plain full-batch gradient descent; ``lr="auto"``
        then uses ``1 / L`` with ``L`` an upper bound on the Hessian norm, so
        the loss sequence is non-increasing. ``solver="lbfgs"`` runs L-BFGS
        on the same loss and gradient and converges in far fewer iterations.
        """
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] == 0:
            raise TrainingError("empty training set")
        if X.shape[1] != self.n_features:
            raise ParameterError(f"expected {self.n_features} features, got {X.shape[1]}")
        if solver not in ("gd", "lbfgs"):
            raise ParameterError(f"unknown solver {solver!r}")
        if int(epochs) <= 0:
            return self
        if refit_scaler or (refit_scaler is None and not self.loss_history):
            self.mean = X.mean(axis=0)
            sd = X.std(axis=0)
            self.scale = np.where(sd > 1e-12, sd, 1.0)
        Z = self.standardize(X)
        sw = None
        if balanced:
            counts = np.bincount(y, minlength=self.weights.shape[1]).astype(np.float64)
            sw = 1.0 / counts[y]
        if solver == "lbfgs":
            return self._fit_lbfgs(Z, y, int(epochs), l2, sw)
        if lr == "auto":
            lr = 1.0 / lipschitz_bound(Z, sw, l2)
        for _ in range(int(epochs)):
            loss, gw, gb = self.loss_and_grad(Z, y, l2, sw)
            self.loss_history.append(loss)
            self.weights -= lr * gw
            self.bias -= lr * gb
        return self

    def _fit_lbfgs(self, Z, y, iters, l2, sw):
        d, k = self.weights.shape

        def unpack(theta):
            self.weights = theta[: d * k].reshape(d, k).copy()
            self.bias = theta[d * k:].copy()

        def fun(theta):
            unpack(theta)
            loss, gw, gb = self.loss_and_grad(Z, y, l2, sw)
            return loss, np.concatenate([gw.ravel(), gb])

        res = minimize(fun, np.concatenate([self.weights.ravel(), self.bias]), jac=True,
                       method="L-BFGS-B", options={"maxiter": iters},
                       callback=lambda th: self.loss_history.append(fun(th)[0]))
        unpack(res.x)
        return self

    def to_dict(self):
        return {"format_version": MODEL_FORMAT_VERSION,
                "feature_catalog": catalog_hash(),
                "seed": int(self.seed),
                "weights": self.weights.tolist(),
                "bias": self.bias.tolist(),
                "mean": self.mean.tolist(),
                "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d, path=None):
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise MalformedFileError(f"unsupported model version {d.get('format_version')}", path)
        if d.get("feature_catalog") != catalog_hash():
            raise MalformedFileError("model was trained on a different feature catalog", path)
        m = cls.__new__(cls)
        m.weights = np.array(d["weights"], dtype=np.float64)
        m.bias = np.array(d["bias"], dtype=np.float64)
        m.mean = np.array(d["mean"], dtype=np.float64)
        m.scale = np.array(d["scale"], dtype=np.float64)
        m.seed = d["seed"]
        m.loss_history = []
        return m


def lipschitz_bound(Z, sample_weight=None, l2=0.0):
    """Upper bound on the curvature of the weighted soft-max loss in (W, b).

    The soft-max Hessian block is dominated by ``0.5 * I``, so
    ``L <= 0.5 * lambda_max(Z1^T D Z1) + l2`` with ``Z1 = [Z, 1]``.
    """
    n = Z.shape[0]
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    w = w / w.sum()
    Z1 = np.hstack([Z, np.ones((n, 1))])
    G = (Z1 * w[:, None]).T @ Z1
    return 0.5 * float(np.linalg.eigvalsh(G)[-1]) + l2


def compound_training_set(feat_plus, feat_minus, labels):
    """Stack both views: label y on x+ becomes y+, on x- becomes y-."""
    y = np.asarray(labels, dtype=bool)
    X = np.vstack([feat_plus, feat_minus])
    c = np.concatenate([compound_index(y, "+"), compound_index(y, "-")])
    return X, c


def train_classifier(model, rp_plus, rp_minus, ns_plus, ns_minus, epochs=200, lr="auto",
                     seed=None, l2=1e-3, balanced=True, solver="lbfgs"):
    """Fit ``model`` in place on reliable positives (P) and negative samples (N).

    ``seed`` (if given) resets the model to a fresh seeded initialization
    first, which makes the result a function of the data and seed alone.
    """
    n_rp, n_ns = len(rp_plus), len(ns_plus)
    if n_rp + n_ns == 0:
        raise TrainingError("empty training set")
    if seed is not None:
        fresh = SoftmaxClassifier(model.n_features, model.weights.shape[1], seed)
        model.__dict__.update(fresh.__dict__)
    d = model.n_features
    fp = np.vstack([np.reshape(rp_plus, (n_rp, d)), np.reshape(ns_plus, (n_ns, d))])
    fm = np.vstack([np.reshape(rp_minus, (n_rp, d)), np.reshape(ns_minus, (n_ns, d))])
    labels = np.concatenate([np.ones(n_rp, bool), np.zeros(n_ns, bool)])
    X, c = compound_training_set(fp, fm, labels)
    return model.fit(X, c, epochs=epochs, lr=lr, l2=l2, balanced=balanced, solver=solver)


class TwinCrossModel:
    """A 4-way classifier applied to both views, with fused decisions."""

    def __init__(self, classifier=None, seed=0):
        self.classifier = classifier or SoftmaxClassifier(seed=seed)

    def fit(self, feat_plus, feat_minus, labels, epochs=200, lr="auto", seed=None, l2=1e-3,
            balanced=True, solver="lbfgs"):
        y = np.asarray(labels, dtype=bool)
        fp, fm = np.asarray(feat_plus), np.asarray(feat_minus)
        train_classifier(self.classifier, fp[y], fm[y], fp[~y], fm[~y], epochs, lr, seed, l2,
                         balanced, solver)
        return self

    def predict_twin(self, feat_plus, feat_minus):
        """``(theta, psi)`` probability matrices, one row per patch."""
        return (self.classifier.predict_proba(feat_plus),
                self.classifier.predict_proba(feat_minus))

    def predict(self, feat_plus, feat_minus):
        """``(is_positive, confidence, lesion_score)`` arrays."""
        theta, psi = self.predict_twin(feat_plus, feat_minus)
        pos, conf = fuse_batch(theta, psi)
        return pos, conf, positive_mass(theta, psi)

    def predict_one(self, f_plus, f_minus):
        theta, psi = self.predict_twin(np.atleast_2d(f_plus), np.atleast_2d(f_minus))
        label, conf = fuse(theta[0], psi[0])
        return TwinPrediction(theta[0], psi[0], label, conf)

    def to_dict(self):
        return {"kind": "twin_cross", "classifier": self.classifier.to_dict()}

    @classmethod
    def from_dict(cls, d, path=None):
        if d.get("kind") != "twin_cross":
            raise MalformedFileError("not a twin-cross model file", path)
        return cls(SoftmaxClassifier.from_dict(d["classifier"], path))


class TwinCrossClassifier:
    """Adapter exposing ``fit(ids, labels)`` / ``predict(ids)`` over a feature table.

    This is the classifier interface the noise-filtering agent consumes.
    """

    def __init__(self, feat_plus, feat_minus, epochs=100, lr="auto", seed=0, l2=1e-3):
        self.fp = np.asarray(feat_plus)
        self.fm = np.asarray(feat_minus)
        self.epochs, self.lr, self.seed, self.l2 = epochs, lr, seed, l2
        self.model = None

    def fit(self, ids, labels):
        ids = np.asarray(ids, dtype=np.int64)
        self.model = TwinCrossModel(seed=self.seed).fit(
            self.fp[ids], self.fm[ids], labels, self.epochs, self.lr, seed=self.seed, l2=self.l2)
        return self

    def predict(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        return self.model.predict(self.fp[ids], self.fm[ids])[0]


@dataclass(frozen=True)
class ClassPosterior:
    p: np.ndarray
    d: tuple


def posterior_from_decisions(positive, confidence):
    """Normalize positive confidences across subnets; uniform if none fires."""
    pos = np.asarray(positive, dtype=bool)
    conf = np.asarray(confidence, dtype=np.float64)
    mass = np.where(pos, conf, 0.0)
    total = mass.sum(axis=-1, keepdims=True)
    k = pos.shape[-1]
    p = np.where(total > 0, mass / np.where(total > 0, total, 1.0), 1.0 / k)
    return p


class SubnetEnsemble:
    """Four one-vs-rest twin-cross models, one per lesion class."""

    def __init__(self, models=None, seed=0):
        self.models = models or [TwinCrossModel(seed=seed + k) for k in range(len(LESION_CLASSES))]

    def fit(self, feat_plus, feat_minus, class_idx, epochs=200, lr="auto", seed=0):
        """``class_idx`` is 0 for background and ``k`` for ``LESION_CLASSES[k-1]``."""
        c = np.asarray(class_idx)
        for k, m in enumerate(self.models):
            m.fit(feat_plus, feat_minus, c == k + 1, epochs, lr, seed=seed + k)
        return self

    def decisions(self, feat_plus, feat_minus):
        res = [m.predict(feat_plus, feat_minus) for m in self.models]
        pos = np.stack([r[0] for r in res], axis=-1)
        conf = np.stack([r[1] for r in res], axis=-1)
        return pos, conf

    def to_dict(self):
        return {"kind": "subnets", "models": [m.to_dict() for m in self.models]}

    @classmethod
    def from_dict(cls, d, path=None):
        if d.get("kind") != "subnets" or len(d.get("models", [])) != len(LESION_CLASSES):
            raise MalformedFileError("not a four-subnet model file", path)
        return cls([TwinCrossModel.from_dict(m, path) for m in d["models"]])


def predict_subnets(subnets, feat_plus, feat_minus):
    """Class posterior (P1..P4) and per-subnet decisions (D1..D4) for each patch.

    With 1-D inputs a single ``ClassPosterior`` is returned; with 2-D inputs a
    list, one per row.
    """
    single = np.ndim(feat_plus) == 1
    fp, fm = np.atleast_2d(feat_plus), np.atleast_2d(feat_minus)
    if isinstance(subnets, SubnetEnsemble):
        pos, conf = subnets.decisions(fp, fm)
    else:
        pos, conf = SubnetEnsemble(list(subnets)).decisions(fp, fm)
    p = posterior_from_decisions(pos, conf)
    out = [ClassPosterior(p[r], tuple("P" if v else "N" for v in pos[r])) for r in range(len(p))]
    return out[0] if single else out


def heatmap(grid_shape, grid_xy, posteriors):
    """Per-class field ``(4, rows, cols)``: P_k where subnet k fires, else 0."""
    nr, nc = grid_shape
    field = np.zeros((len(LESION_CLASSES), nr, nc))
    filled = np.zeros((nr, nc), dtype=bool)
    for (c, r), post in zip(grid_xy, posteriors):
        fired = np.array([v == "P" for v in post.d])
        field[:, r, c] = np.where(fired, post.p, 0.0)
        filled[r, c] = True
    if not filled.all():
        raise ParameterError("heatmap needs a posterior for every grid cell")
    return field


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1, sort_keys=True)


def load_model(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedFileError(str(exc), path, exc.lineno) from exc
    if d.get("kind") == "subnets":
        return SubnetEnsemble.from_dict(d, path)
    return TwinCrossModel.from_dict(d, path)
