"""Neural estimates of system-optimal generalized costs and the resulting tolls.

One small regressor per tolled border pair maps a snapshot of the network
(split rates, transfer flows, congestion levels) to the generalized cost of
that pair. Trained on user-equilibrium data and fed system-optimal snapshots,
the predictions give target costs ``C*``; the toll is the positive part of
``C - C*``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import MinMaxScaler
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .demand import DemandProfile
from .network import NetworkSpec
from .plant import NetworkState, Trajectory
from .qdue import ChoiceSpec, run_qdue

FORMAT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    def __init__(self, history):
        super().__init__("training loss became non-finite")
        self.history = history


# -- features -----------------------------------------------------------------


def feature_names(spec: NetworkSpec) -> list[str]:
    names = [f"theta_{i}{h}{j}" for i, h, j in spec.triples]
    names += [f"m_{i}{h}" for i, h in spec.border_pairs]
    names += [f"nc_{i}" for i in spec.ids]
    return names


def feature_vector(spec: NetworkSpec, theta, m_ih, totals) -> np.ndarray:
    """Splits over allowed triples, transfer flows per border pair, ``N / N_crit``."""
    th = np.array([theta[i - 1, h - 1, j - 1] for i, h, j in spec.triples])
    m = np.array([m_ih[i - 1, h - 1] for i, h in spec.border_pairs])
    nc = np.asarray(totals, dtype=float) / spec.n_crit
    return np.concatenate([th, m, nc])


def trajectory_features(spec: NetworkSpec, traj: Trajectory) -> np.ndarray:
    """One feature row per plant step, using the step-start state."""
    m_ih = traj.m_ih
    tot = traj.totals
    return np.array(
        [feature_vector(spec, traj.theta[k], m_ih[k], tot[k]) for k in range(traj.horizon)]
    )


@dataclass
class Dataset:
    X_train: np.ndarray
    y_train: np.ndarray  # (samples, pairs)
    X_test: np.ndarray
    y_test: np.ndarray
    pairs: list
    order: np.ndarray


def build_dataset(spec: NetworkSpec, qdue: Trajectory, seed: int, train_fraction=0.7) -> Dataset:
    """Samples from a user-equilibrium run, shuffled then split train/test."""
    if "costs" not in qdue.extras:
        raise ValueError("trajectory carries no cost matrices")
    X = trajectory_features(spec, qdue)
    if len(X) < 10:
        raise ValueError(f"need at least 10 samples, got {len(X)}")
    pairs = spec.border_pairs
    costs = qdue.extras["costs"]
    y = np.array([[c[i - 1, h - 1] for i, h in pairs] for c in costs])
    order = np.random.default_rng(seed).permutation(len(X))
    n_train = int(round(train_fraction * len(X)))
    tr, te = order[:n_train], order[n_train:]
    return Dataset(X[tr], y[tr], X[te], y[te], pairs, order)


def scaler_fit_transform(data):
    scaler = MinMaxScaler()
    return scaler.fit_transform(np.asarray(data, dtype=float)), scaler


def feature_coverage(scaler: MinMaxScaler, X, tol=1e-9) -> np.ndarray:
    """Per-feature share of rows of ``X`` inside the scaler's training range."""
    X = np.asarray(X, dtype=float)
    inside = (X >= scaler.data_min_ - tol) & (X <= scaler.data_max_ + tol)
    return inside.mean(axis=0)


# -- network ------------------------------------------------------------------


def init_params(sizes, rng) -> list:
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        params.append([rng.uniform(-lim, lim, (fan_in, fan_out)), np.zeros(fan_out)])
    return params


def mlp_forward(params, X) -> np.ndarray:
    """Rectifier hidden layers, identity output; returns a 1-d prediction."""
    a = np.atleast_2d(np.asarray(X, dtype=float))
    if a.shape[1] != params[0][0].shape[0]:
        raise ValueError(f"expected {params[0][0].shape[0]} features, got {a.shape[1]}")
    for W, b in params[:-1]:
        a = np.maximum(a @ W + b, 0.0)
    W, b = params[-1]
    return (a @ W + b)[:, 0]


def mae_loss_and_grad(params, X, y):
    """Mean absolute error and its gradient (subgradient 0 at zero residual)."""
    acts = [np.asarray(X, dtype=float)]
    pre = []
    for W, b in params[:-1]:
        z = acts[-1] @ W + b
        pre.append(z)
        acts.append(np.maximum(z, 0.0))
    W, b = params[-1]
    out = (acts[-1] @ W + b)[:, 0]
    r = out - y
    n = len(y)
    loss = float(np.abs(r).mean())
    delta = (np.sign(r) / n)[:, None]
    grads = [None] * len(params)
    for li in range(len(params) - 1, -1, -1):
        W = params[li][0]
        grads[li] = [acts[li].T @ delta, delta.sum(axis=0)]
        if li:
            delta = (delta @ W.T) * (pre[li - 1] > 0)
    return loss, grads


class MlpCostRegressor(RegressorMixin, BaseEstimator):
    """Fully connected ReLU regressor trained with Adam on mean absolute error.

    The last ``validation_split`` fraction of the training rows is held out
    for monitoring; mini-batches are reshuffled every epoch and the learning
    rate decays as ``initial_lr * decay_rate ** (step / decay_steps)``.
    """

    def __init__(
        self,
        hidden=(50, 50),
        epochs=100,
        batch_size=64,
        validation_split=0.2,
        initial_lr=0.01,
        decay_steps=10000,
        decay_rate=0.9,
        beta1=0.9,
        beta2=0.999,
        epsilon=1e-8,
        random_state=0,
    ):
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.validation_split = validation_split
        self.initial_lr = initial_lr
        self.decay_steps = decay_steps
        self.decay_rate = decay_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.random_state = random_state

    def _check_config(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0 <= self.validation_split < 1:
            raise ValueError("validation_split must lie in [0, 1)")
        if min(self.initial_lr, self.decay_steps, self.decay_rate) <= 0:
            raise ValueError("learning-rate schedule parameters must be positive")

    def fit(self, X, y):
        self._check_config()
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        rng = np.random.default_rng(self.random_state)
        sizes = [X.shape[1], *self.hidden, 1]
        self.params_ = init_params(sizes, rng)
        self.n_features_in_ = X.shape[1]
        n_val = int(len(X) * self.validation_split)
        n_fit = len(X) - n_val
        if n_fit < 1:
            raise ValueError("validation split leaves no training rows")
        Xf, yf, Xv, yv = X[:n_fit], y[:n_fit], X[n_fit:], y[n_fit:]

        m = [[np.zeros_like(p) for p in layer] for layer in self.params_]
        v = [[np.zeros_like(p) for p in layer] for layer in self.params_]
        step = 0
        hist = {"loss": [], "val_loss": []}
        # a blow-up surfaces as a non-finite loss below; numpy's own warnings add nothing
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(self.epochs):
                perm = rng.permutation(n_fit)
                for start in range(0, n_fit, self.batch_size):
                    idx = perm[start : start + self.batch_size]
                    _, grads = mae_loss_and_grad(self.params_, Xf[idx], yf[idx])
                    step += 1
                    lr = self.initial_lr * self.decay_rate ** ((step - 1) / self.decay_steps)
                    c1 = 1.0 - self.beta1**step
                    c2 = 1.0 - self.beta2**step
                    for layer, gl, ml, vl in zip(self.params_, grads, m, v):
                        for q in range(2):
                            ml[q] = self.beta1 * ml[q] + (1 - self.beta1) * gl[q]
                            vl[q] = self.beta2 * vl[q] + (1 - self.beta2) * gl[q] ** 2
                            layer[q] -= lr * (ml[q] / c1) / (np.sqrt(vl[q] / c2) + self.epsilon)
                loss = float(np.abs(mlp_forward(self.params_, Xf) - yf).mean())
                val = float(np.abs(mlp_forward(self.params_, Xv) - yv).mean()) if n_val else np.nan
                hist["loss"].append(loss)
                hist["val_loss"].append(val)
                if not np.isfinite(loss):
                    self.history_ = hist
                    raise TrainingDivergedError(hist)
        self.history_ = hist
        self.n_iter_ = step
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        return mlp_forward(self.params_, X)


def make_model(train_cfg: dict | None = None, random_state: int = 0) -> Pipeline:
    cfg = dict(train_cfg or {})
    return Pipeline(
        [("scale", MinMaxScaler()), ("mlp", MlpCostRegressor(random_state=random_state, **cfg))]
    )


# -- model set ----------------------------------------------------------------


@dataclass
class ModelSet:
    """One scaler + regressor pipeline per tolled ordered pair ``(I, H)``."""

    models: dict

    @property
    def pairs(self):
        return list(self.models)

    def predict_costs(self, spec: NetworkSpec, features) -> np.ndarray:
        """``C*`` for every border pair; ``nan`` on pairs that carry no toll."""
        x = np.asarray(features, dtype=float).reshape(1, -1)
        out = np.full((spec.k, spec.k), np.nan)
        for pair in spec.border_pairs:
            if pair not in self.models:
                raise KeyError(f"no model for pair {pair}")
            out[pair[0] - 1, pair[1] - 1] = self.models[pair].predict(x)[0]
        return out

    def histories(self) -> dict:
        return {p: m.named_steps["mlp"].history_ for p, m in self.models.items()}

    def to_dict(self) -> dict:
        out = {"version": FORMAT_VERSION, "models": []}
        for (i, h), pipe in self.models.items():
            sc, mlp = pipe.named_steps["scale"], pipe.named_steps["mlp"]
            out["models"].append(
                {
                    "pair": [i, h],
                    "params": mlp.get_params(),
                    "scaler_min": sc.data_min_.tolist(),
                    "scaler_max": sc.data_max_.tolist(),
                    "weights": [[W.tolist(), b.tolist()] for W, b in mlp.params_],
                }
            )
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSet":
        if data.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {data.get('version')!r}")
        models = {}
        for rec in data["models"]:
            params = dict(rec["params"])
            params["hidden"] = tuple(params["hidden"])
            mlp = MlpCostRegressor(**params)
            mlp.params_ = [[np.array(W, dtype=float), np.array(b, dtype=float)] for W, b in rec["weights"]]
            mlp.n_features_in_ = mlp.params_[0][0].shape[0]
            lo, hi = np.array(rec["scaler_min"]), np.array(rec["scaler_max"])
            sc = MinMaxScaler().fit(np.vstack([lo, hi]))
            models[tuple(rec["pair"])] = Pipeline([("scale", sc), ("mlp", mlp)])
        return cls(models)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "ModelSet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def child_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def train_models(dataset: Dataset, train_cfg: dict | None = None, seed: int = 0) -> ModelSet:
    """Fit one pipeline per pair on the training part of ``dataset``."""
    seeds = child_seeds(seed, len(dataset.pairs))
    models = {}
    for col, (pair, s) in enumerate(zip(dataset.pairs, seeds)):
        models[pair] = make_model(train_cfg, s).fit(dataset.X_train, dataset.y_train[:, col])
    return ModelSet(models)


def test_mae(models: ModelSet, dataset: Dataset) -> dict:
    return {
        p: float(np.abs(models.models[p].predict(dataset.X_test) - dataset.y_test[:, c]).mean())
        for c, p in enumerate(dataset.pairs)
    }


# -- tolls --------------------------------------------------------------------


def price_matrix(c_qdue, c_star) -> np.ndarray:
    """``max(0, C - C*)``; entries without a finite pair of costs are 0."""
    c_qdue = np.asarray(c_qdue, dtype=float)
    c_star = np.asarray(c_star, dtype=float)
    if c_qdue.shape != c_star.shape:
        raise ValueError("cost matrices differ in shape")
    ok = np.isfinite(c_qdue) & np.isfinite(c_star)
    diff = np.subtract(c_qdue, c_star, out=np.zeros_like(c_qdue), where=ok)
    return np.maximum(diff, 0.0)


CostPredictor = Callable[[int, NetworkState, np.ndarray], np.ndarray]


def dso_cost_predictor(spec: NetworkSpec, models: ModelSet, dso: Trajectory) -> CostPredictor:
    """``C*`` at step ``k`` from the system-optimal run's snapshot at ``k``."""
    m_ih, tot = dso.m_ih, dso.totals

    def predict(k, _state, _costs):
        x = feature_vector(spec, dso.theta[k], m_ih[k], tot[k])
        return models.predict_costs(spec, x)

    return predict


def run_priced(
    spec: NetworkSpec,
    demand: DemandProfile,
    predictor: CostPredictor,
    horizon: int,
    control_cycle: int,
    choice: ChoiceSpec = ChoiceSpec(),
    step_seconds: float = 20.0,
) -> Trajectory:
    """User-equilibrium plant with tolls refreshed every ``control_cycle`` steps.

    Tolls are zero during the first cycle and held constant within a cycle.
    """
    if control_cycle < 1:
        raise ValueError("control_cycle must be at least 1")
    held = np.zeros((spec.k, spec.k))

    def prices(k, state, costs):
        nonlocal held
        if k % control_cycle == 0:
            held = np.zeros_like(costs) if k == 0 else price_matrix(costs, predictor(k, state, costs))
        return held

    return run_qdue(spec, demand, horizon, choice, prices, step_seconds)


def average_active_prices(traj: Trajectory, spec: NetworkSpec) -> dict:
    """Mean toll per pair over the steps where it is positive (``nan`` if never)."""
    p = traj.extras["prices"]
    out = {}
    for i, h in spec.border_pairs:
        s = p[:, i - 1, h - 1]
        act = s[s > 0]
        out[(i, h)] = float(act.mean()) if act.size else float("nan")
    return out
