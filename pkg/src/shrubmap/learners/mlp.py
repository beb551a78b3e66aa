"""Feed-forward binary classifier trained by SGD with momentum.

Architecture: dense ReLU layers of widths 256/128/64/32/16, dropout on
the last hidden activation (training only), then a single sigmoid
output. Weights are He-uniform initialized; inputs are one-hot encoded
(categorical columns) and standardized with training-set statistics.
After every epoch the validation metric (PR-AUC by default) is recorded
and the returned weights are the argmax epoch's (earliest on ties).

RNG draw order, for reproducibility: layer weights in order at init,
then per epoch one permutation, then one uniform dropout array per
batch. All math is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, DivergenceError
from ..evaluation import pr_auc
from .common import OneHotEncoder, Standardizer, check_features, sigmoid

DEFAULT_WIDTHS = (256, 128, 64, 32, 16)


@dataclass(frozen=True)
class MlpParams:
    widths: tuple = DEFAULT_WIDTHS
    dropout: float = 0.2
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 256
    epochs: int = 1000


def _softplus(z):
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)


class Network:
    """Dense ReLU stack with sigmoid output; float64 throughout."""

    def __init__(self, weights, biases):
        self.weights = weights
        self.biases = biases

    @classmethod
    def init(cls, n_inputs: int, widths, rng) -> "Network":
        sizes = [n_inputs, *widths, 1]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    def _hidden(self, x, drop_mask=None):
        a = np.asarray(x, dtype=np.float64)
        pre = []
        acts = [a]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = a @ w + b
            a = np.maximum(z, 0.0)
            pre.append(z)
            acts.append(a)
        if drop_mask is not None:
            a = a * drop_mask
            acts[-1] = a
        return pre, acts

    def raw_scores(self, x, drop_mask=None):
        _, acts = self._hidden(x, drop_mask)
        return (acts[-1] @ self.weights[-1] + self.biases[-1])[:, 0]

    def predict(self, x) -> np.ndarray:
        return sigmoid(self.raw_scores(x))

    def loss(self, x, y, drop_mask=None) -> float:
        z = self.raw_scores(x, drop_mask)
        y = np.asarray(y, dtype=np.float64)
        return float(np.mean(_softplus(z) - y * z))

    def loss_and_grads(self, x, y, drop_mask=None):
        """(loss, weight grads, bias grads) of the mean cross entropy."""
        y = np.asarray(y, dtype=np.float64)
        pre, acts = self._hidden(x, drop_mask)
        z = (acts[-1] @ self.weights[-1] + self.biases[-1])[:, 0]
        n = y.size
        loss = float(np.mean(_softplus(z) - y * z))
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        delta = ((sigmoid(z) - y) / n)[:, None]
        gw[-1] = acts[-1].T @ delta
        gb[-1] = delta.sum(axis=0)
        da = delta @ self.weights[-1].T
        if drop_mask is not None:
            da = da * drop_mask
        for l in range(len(self.weights) - 2, -1, -1):
            dz = da * (pre[l] > 0)
            gw[l] = acts[l].T @ dz
            gb[l] = dz.sum(axis=0)
            if l:
                da = dz @ self.weights[l].T
        return loss, gw, gb

    def copy_state(self):
        return [w.copy() for w in self.weights], [b.copy() for b in self.biases]


@dataclass
class MlpModel:
    params: MlpParams
    seed: int
    feature_names: tuple
    categorical_columns: tuple
    encoder: OneHotEncoder
    scaler: Standardizer
    network: Network
    best_epoch: int
    metric_history: list = field(default_factory=list)

    def encode(self, x) -> np.ndarray:
        x = check_features(x, len(self.feature_names))
        return self.scaler.transform(self.encoder.transform(x))

    def predict_proba(self, x) -> np.ndarray:
        return self.network.predict(self.encode(x))


def categorical_column_indices(feature_names, categorical_features) -> tuple:
    return tuple(i for i, n in enumerate(feature_names) if n in categorical_features)


def train_mlp(train, validation, params: MlpParams = MlpParams(), seed: int = 0,
              epoch_metric=None, categorical_features=("LCSEC",)) -> MlpModel:
    """Train on `train`, selecting the epoch that maximizes the
    validation metric. `epoch_metric(labels, probs)` defaults to PR-AUC."""
    if len(validation) == 0:
        raise DataError("validation split must be non-empty")
    if epoch_metric is None:
        epoch_metric = pr_auc
    feature_names = tuple(train.feature_names)
    cat_cols = categorical_column_indices(feature_names, categorical_features)
    encoder = OneHotEncoder.fit(train.features, cat_cols)
    enc_train = encoder.transform(train.features)
    scaler = Standardizer.fit(enc_train)
    x = scaler.transform(enc_train)
    y = train.labels.astype(np.float64)
    x_val = scaler.transform(encoder.transform(validation.features))
    y_val = validation.labels.astype(bool)

    rng = np.random.default_rng(seed)
    net = Network.init(x.shape[1], params.widths, rng)
    vel_w = [np.zeros_like(w) for w in net.weights]
    vel_b = [np.zeros_like(b) for b in net.biases]
    keep = 1.0 - params.dropout

    best_metric = -np.inf
    best_epoch = 0
    best_state = net.copy_state()
    history = []
    n = y.size
    for epoch in range(1, params.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, params.batch_size):
            idx = perm[start:start + params.batch_size]
            mask = None
            if params.dropout > 0:
                u = rng.random((idx.size, params.widths[-1]))
                mask = (u < keep).astype(np.float64) / keep
            loss, gw, gb = net.loss_and_grads(x[idx], y[idx], mask)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}")
            for l in range(len(net.weights)):
                vel_w[l] = params.momentum * vel_w[l] - params.learning_rate * gw[l]
                vel_b[l] = params.momentum * vel_b[l] - params.learning_rate * gb[l]
                net.weights[l] += vel_w[l]
                net.biases[l] += vel_b[l]
        metric = float(epoch_metric(y_val, net.predict(x_val)))
        history.append(metric)
        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_state = net.copy_state()
    net.weights, net.biases = best_state
    return MlpModel(
        params=params,
        seed=seed,
        feature_names=feature_names,
        categorical_columns=cat_cols,
        encoder=encoder,
        scaler=scaler,
        network=net,
        best_epoch=best_epoch,
        metric_history=history,
    )
