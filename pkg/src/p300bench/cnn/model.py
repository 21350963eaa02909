"""CNN classifier: architecture, training loop, Adam, early stopping.

Architecture (defaults in parentheses), applied to raw epochs shaped
channels x time (3 x 1200):

    conv (6 filters, 3x3, valid, stride 1) + activation (ELU)
    batch normalization per filter map
    dropout (p = 0.5)
    average pooling over time (width 8, stride 8, floor semantics)
    flatten
    [ dense (100) + activation, batch normalization, dropout ] per dense layer
    dense (2) + softmax

The pooling layer is the 4th layer, which is the one exposed by default
for activation-map introspection.  Batch normalization uses batch
statistics while training (momentum 0.9 running updates) and running
statistics at inference; dropout is inverted and disabled at inference.
"""

from __future__ import annotations

import json
import logging

import numpy as np

from ..base import BaseEstimator, check_binary_labels, check_is_fitted
from ..rng import SeededRng, ensure_rng
from . import layers as L

logger = logging.getLogger(__name__)

_BN_EPS = 1e-5
_BN_MOMENTUM = 0.9


class AdamOptimizer:
    """Adam with bias correction; updates a dict of parameter arrays in place.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
    theta <- theta - lr * mhat / (sqrt(vhat) + eps)
    """

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-7):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for key, g in grads.items():
            m = self._m.setdefault(key, np.zeros_like(params[key]))
            v = self._v.setdefault(key, np.zeros_like(params[key]))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[key] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class EarlyStopping:
    """Track the best validation loss; stop after `patience` flat epochs.

    An epoch "improves" only if its loss is strictly below the best seen.
    With the minimum at epoch e and no later improvement, training halts
    after epoch e + patience.
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch: int | None = None
        self.epochs_since_best = 0

    def update(self, epoch: int, loss: float) -> bool:
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.epochs_since_best = 0
            return True
        self.epochs_since_best += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.epochs_since_best >= self.patience


def _truncated_normal(rng, shape, std):
    # fan-in scaled init, resampling anything beyond 2 std
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out


class CnnClassifier(BaseEstimator):
    """Binary CNN trained with Adam, mini-batches and early stopping.

    Parameters mirror the benchmark configuration; the defaults are the
    baseline settings.  ``dense_units`` accepts an int or a sequence of
    widths (e.g. ``(120, 60)`` for two dense layers).  ``activation`` is
    "elu" or "relu", ``pooling`` "avg" or "max".

    ``fit(X, y, validation_data=(Xv, yv))`` expects raw epochs shaped
    (n, channels, time); the filter height must equal the channel count.
    Without validation data, early stopping is disabled.
    """

    def __init__(
        self,
        n_filters=6,
        filter_h=3,
        filter_w=3,
        pool_w=8,
        dense_units=100,
        dropout_p=0.5,
        elu_alpha=1.0,
        batch_size=16,
        max_epochs=30,
        patience=5,
        lr=1e-3,
        beta1=0.9,
        beta2=0.999,
        adam_eps=1e-7,
        activation="elu",
        pooling="avg",
        batchnorm=True,
        seed=0,
    ):
        self.n_filters = n_filters
        self.filter_h = filter_h
        self.filter_w = filter_w
        self.pool_w = pool_w
        self.dense_units = dense_units
        self.dropout_p = dropout_p
        self.elu_alpha = elu_alpha
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.activation = activation
        self.pooling = pooling
        self.batchnorm = batchnorm
        self.seed = seed

    # -- configuration helpers -------------------------------------------

    def _dense_widths(self) -> tuple[int, ...]:
        units = self.dense_units
        widths = (units,) if isinstance(units, int) else tuple(int(u) for u in units)
        if not widths or any(u < 1 for u in widths):
            raise ValueError(f"dense_units must be positive, got {self.dense_units}")
        return widths

    def _validate_config(self):
        for name in ("n_filters", "filter_h", "filter_w", "pool_w", "batch_size", "max_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.elu_alpha <= 0:
            raise ValueError("elu_alpha must be positive")
        if self.activation not in ("elu", "relu"):
            raise ValueError(f"activation must be 'elu' or 'relu', got {self.activation!r}")
        if self.pooling not in ("avg", "max"):
            raise ValueError(f"pooling must be 'avg' or 'max', got {self.pooling!r}")
        self._dense_widths()

    def layer_shapes(self, n_channels=3, n_samples=1200) -> list[tuple[int, ...]]:
        """Per-stage output shapes for one input, conv through softmax."""
        self._validate_config()
        t_conv = n_samples - self.filter_w + 1
        t_pool = t_conv // self.pool_w
        shapes = [
            (n_channels, n_samples),
            (n_channels - self.filter_h + 1, t_conv, self.n_filters),
            (n_channels - self.filter_h + 1, t_pool, self.n_filters),
            (t_pool * self.n_filters,),
        ]
        shapes.extend((u,) for u in self._dense_widths())
        shapes.append((2,))
        return shapes

    def layer_names(self) -> list[str]:
        """1-based forward slot names used by :meth:`layer_outputs`."""
        names = ["conv_act", "batchnorm_conv", "dropout_conv", "pool", "flatten"]
        for i in range(len(self._dense_widths())):
            names += [f"dense{i}_act", f"batchnorm_dense{i}", f"dropout_dense{i}"]
        names += ["output_dense", "softmax"]
        return names

    def _act(self, x):
        return L.elu(x, self.elu_alpha) if self.activation == "elu" else L.relu(x)

    def _act_grad(self, x):
        return L.elu_grad(x, self.elu_alpha) if self.activation == "elu" else L.relu_grad(x)

    # -- forward / backward ------------------------------------------------

    def _init_params(self, n_channels, n_samples, rng):
        widths = self._dense_widths()
        params: dict[str, np.ndarray] = {}
        state: dict[str, np.ndarray] = {}
        fan_in = self.filter_h * self.filter_w
        params["conv_w"] = _truncated_normal(
            rng, (self.n_filters, n_channels, self.filter_w), 1.0 / np.sqrt(fan_in)
        )
        params["conv_b"] = np.zeros(self.n_filters)
        if self.batchnorm:
            params["bn_conv_gamma"] = np.ones(self.n_filters)
            params["bn_conv_beta"] = np.zeros(self.n_filters)
            state["bn_conv_mean"] = np.zeros(self.n_filters)
            state["bn_conv_var"] = np.ones(self.n_filters)
        t_pool = (n_samples - self.filter_w + 1) // self.pool_w
        prev = t_pool * self.n_filters
        for i, units in enumerate(widths):
            params[f"dense{i}_w"] = _truncated_normal(rng, (prev, units), 1.0 / np.sqrt(prev))
            params[f"dense{i}_b"] = np.zeros(units)
            if self.batchnorm:
                params[f"bn_dense{i}_gamma"] = np.ones(units)
                params[f"bn_dense{i}_beta"] = np.zeros(units)
                state[f"bn_dense{i}_mean"] = np.zeros(units)
                state[f"bn_dense{i}_var"] = np.ones(units)
            prev = units
        params["out_w"] = _truncated_normal(rng, (prev, 2), 1.0 / np.sqrt(prev))
        params["out_b"] = np.zeros(2)
        return params, state

    def _bn_train(self, x, params, state, key, update_running):
        out, cache, mu, var = L.batchnorm_forward(
            x, params[f"{key}_gamma"], params[f"{key}_beta"], _BN_EPS
        )
        if update_running:
            state[f"{key}_mean"] = _BN_MOMENTUM * state[f"{key}_mean"] + (1 - _BN_MOMENTUM) * mu
            state[f"{key}_var"] = _BN_MOMENTUM * state[f"{key}_var"] + (1 - _BN_MOMENTUM) * var
        return out, cache

    def _forward(
        self,
        params,
        state,
        X,
        *,
        train,
        dropout_rng=None,
        update_running=False,
        collect=False,
    ):
        """Run the network; returns (probs, caches, activations).

        ``caches`` is None-free only in train mode; ``activations`` is a
        list of forward-slot arrays when ``collect`` is set, else None.
        """
        B = X.shape[0]
        acts: list[np.ndarray] | None = [] if collect else None
        caches: dict = {}

        def record(a):
            if acts is not None:
                acts.append(a)

        def check(a, slot):
            if not np.all(np.isfinite(a)):
                raise FloatingPointError(f"numeric overflow at layer {slot}")

        z, c_conv = L.conv_forward(X, params["conv_w"], params["conv_b"])
        check(z, "1 (conv)")
        a = self._act(z)
        caches["conv"] = (c_conv, z)
        record(a)

        if self.batchnorm:
            flat = a.reshape(-1, self.n_filters)
            if train:
                h, c_bn = self._bn_train(flat, params, state, "bn_conv", update_running)
            else:
                h = L.batchnorm_eval(
                    flat,
                    params["bn_conv_gamma"],
                    params["bn_conv_beta"],
                    state["bn_conv_mean"],
                    state["bn_conv_var"],
                    _BN_EPS,
                )
                c_bn = None
            caches["bn_conv"] = c_bn
            a = h.reshape(a.shape)
        record(a)

        a, mask = L.dropout_forward(a, self.dropout_p, dropout_rng, train)
        caches["drop_conv"] = mask
        record(a)

        pool_fwd = L.avgpool_forward if self.pooling == "avg" else L.maxpool_forward
        a, c_pool = pool_fwd(a, self.pool_w)
        caches["pool"] = c_pool
        record(a)

        a = a.reshape(B, -1)
        caches["flatten"] = None
        record(a)

        dense_caches = []
        for i in range(len(self._dense_widths())):
            z, c_d = L.dense_forward(a, params[f"dense{i}_w"], params[f"dense{i}_b"])
            check(z, f"dense {i}")
            a = self._act(z)
            record(a)
            if self.batchnorm:
                if train:
                    a, c_bn = self._bn_train(a, params, state, f"bn_dense{i}", update_running)
                else:
                    a = L.batchnorm_eval(
                        a,
                        params[f"bn_dense{i}_gamma"],
                        params[f"bn_dense{i}_beta"],
                        state[f"bn_dense{i}_mean"],
                        state[f"bn_dense{i}_var"],
                        _BN_EPS,
                    )
                    c_bn = None
            else:
                c_bn = None
            record(a)
            a, mask = L.dropout_forward(a, self.dropout_p, dropout_rng, train)
            record(a)
            dense_caches.append((c_d, z, c_bn, mask))
        caches["dense"] = dense_caches

        logits, c_out = L.dense_forward(a, params["out_w"], params["out_b"])
        check(logits, "output")
        caches["out"] = c_out
        record(logits)
        probs = L.softmax(logits)
        record(probs)
        return probs, (caches, logits), acts

    def _backward(self, params, caches_and_logits, dlogits):
        caches, _ = caches_and_logits
        grads: dict[str, np.ndarray] = {}
        dh, grads["out_w"], grads["out_b"] = L.dense_backward(dlogits, caches["out"])

        for i in reversed(range(len(self._dense_widths()))):
            c_d, z, c_bn, mask = caches["dense"][i]
            dh = L.dropout_backward(dh, mask)
            if self.batchnorm:
                dh, grads[f"bn_dense{i}_gamma"], grads[f"bn_dense{i}_beta"] = L.batchnorm_backward(
                    dh, c_bn
                )
            dh = dh * self._act_grad(z)
            dh, grads[f"dense{i}_w"], grads[f"dense{i}_b"] = L.dense_backward(dh, c_d)

        c_conv, z = caches["conv"]
        B = z.shape[0]
        t_pool = z.shape[1] // self.pool_w
        d4 = dh.reshape(B, t_pool, self.n_filters)
        pool_bwd = L.avgpool_backward if self.pooling == "avg" else L.maxpool_backward
        d3 = pool_bwd(d4, caches["pool"])
        d3 = L.dropout_backward(d3, caches["drop_conv"])
        if self.batchnorm:
            flat = d3.reshape(-1, self.n_filters)
            dflat, grads["bn_conv_gamma"], grads["bn_conv_beta"] = L.batchnorm_backward(
                flat, caches["bn_conv"]
            )
            d3 = dflat.reshape(d3.shape)
        d1 = d3 * self._act_grad(z)
        _, grads["conv_w"], grads["conv_b"] = L.conv_backward(d1, c_conv)
        return grads

    def _loss_and_grads(self, params, state, X, y, *, dropout_rng=None):
        """Train-mode loss and parameter gradients (no running-stat update).

        Used by the training loop and by finite-difference checks; with
        ``dropout_p == 0`` the pass is deterministic.
        """
        probs, caches, _ = self._forward(
            params, state, X, train=True, dropout_rng=dropout_rng, update_running=False
        )
        loss, _, dlogits = L.softmax_cross_entropy(caches[1], y)
        grads = self._backward(params, caches, dlogits)
        return loss, grads

    def _dataset_loss(self, params, state, X, y, batch=256) -> float:
        total = 0.0
        for start in range(0, X.shape[0], batch):
            stop = min(start + batch, X.shape[0])
            probs, (_, logits), _ = self._forward(params, state, X[start:stop], train=False)
            loss, _, _ = L.softmax_cross_entropy(logits, y[start:stop])
            total += loss * (stop - start)
        return total / X.shape[0]

    # -- fit / predict -----------------------------------------------------

    def fit(self, X, y, validation_data=None):
        self._validate_config()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3:
            raise ValueError(f"X must be (epochs, channels, samples), got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        n, n_channels, n_samples = X.shape
        if n_channels != self.filter_h:
            raise ValueError(
                f"filter_h={self.filter_h} must equal the channel count ({n_channels})"
            )
        y = check_binary_labels(y, n=n)
        if len(np.unique(y)) < 2:
            raise ValueError("need two classes")

        if validation_data is not None:
            X_val = np.asarray(validation_data[0], dtype=np.float64)
            y_val = check_binary_labels(validation_data[1], n=X_val.shape[0])
            if X_val.shape[0] == 0:
                validation_data = None
        if validation_data is None:
            logger.warning("no validation data: early stopping disabled")

        root = ensure_rng(self.seed)
        init_rng = root.child(0).generator
        shuffle_rng = root.child(1).generator
        dropout_rng = root.child(2).generator

        params, state = self._init_params(n_channels, n_samples, init_rng)
        adam = AdamOptimizer(self.lr, self.beta1, self.beta2, self.adam_eps)
        stopper = EarlyStopping(self.patience) if validation_data is not None else None
        best: tuple | None = None

        log: list[dict] = []
        for epoch in range(1, self.max_epochs + 1):
            order = shuffle_rng.permutation(n)
            total = 0.0
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                probs, caches, _ = self._forward(
                    params,
                    state,
                    X[idx],
                    train=True,
                    dropout_rng=dropout_rng,
                    update_running=True,
                )
                loss, _, dlogits = L.softmax_cross_entropy(caches[1], y[idx])
                grads = self._backward(params, caches, dlogits)
                adam.step(params, grads)
                total += loss * idx.shape[0]
            train_loss = total / n

            val_loss = None
            if validation_data is not None:
                val_loss = self._dataset_loss(params, state, X_val, y_val)
            log.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})

            if stopper is not None:
                if stopper.update(epoch, val_loss):
                    best = (
                        {k: v.copy() for k, v in params.items()},
                        {k: v.copy() for k, v in state.items()},
                    )
                if stopper.should_stop:
                    break

        if best is not None:
            params, state = best
            self.best_epoch_ = stopper.best_epoch
        else:
            self.best_epoch_ = log[-1]["epoch"] if log else None
        self.params_ = params
        self.state_ = state
        self.training_log_ = log
        self.stopped_epoch_ = log[-1]["epoch"] if log else 0
        self.n_channels_ = n_channels
        self.n_samples_ = n_samples
        return self

    def predict_proba(self, X, batch=256) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = self._check_inference_input(X)
        out = np.empty((X.shape[0], 2))
        for start in range(0, X.shape[0], batch):
            stop = min(start + batch, X.shape[0])
            probs, _, _ = self._forward(self.params_, self.state_, X[start:stop], train=False)
            out[start:stop] = probs
        return out

    def decision_function(self, X) -> np.ndarray:
        """Target-class probability in [0, 1]; threshold at 0.5."""
        return self.predict_proba(X)[:, 1]

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0.5).astype(np.int64)

    def layer_outputs(self, X, layer_index: int = 4) -> np.ndarray:
        """Mean activation of a forward slot (1-based) over all inputs.

        The default slot 4 is the pooling output: one row per pooled time
        index, one column per convolutional filter.
        """
        check_is_fitted(self, "params_")
        names = self.layer_names()
        if not 1 <= layer_index <= len(names):
            raise ValueError(f"layer_index must be in [1, {len(names)}], got {layer_index}")
        X = self._check_inference_input(X)
        mean: np.ndarray | None = None
        weight = 0
        for start in range(0, X.shape[0], 256):
            stop = min(start + 256, X.shape[0])
            _, _, acts = self._forward(
                self.params_, self.state_, X[start:stop], train=False, collect=True
            )
            part = acts[layer_index - 1].mean(axis=0) * (stop - start)
            mean = part if mean is None else mean + part
            weight += stop - start
        return mean / weight

    def _check_inference_input(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1] != self.n_channels_ or X.shape[2] != self.n_samples_:
            raise ValueError(
                f"expected input shaped (n, {self.n_channels_}, {self.n_samples_}), "
                f"got {X.shape}"
            )
        return X

    # -- checkpointing -----------------------------------------------------

    def to_json(self) -> str:
        check_is_fitted(self, "params_")
        config = self.get_params()
        if isinstance(config["seed"], SeededRng):
            config["seed"] = config["seed"].seed
        if not isinstance(config["dense_units"], int):
            config["dense_units"] = list(config["dense_units"])
        return json.dumps(
            {
                "format": "p300bench-cnn",
                "version": 1,
                "config": config,
                "input_shape": [self.n_channels_, self.n_samples_],
                "params": {k: v.tolist() for k, v in self.params_.items()},
                "state": {k: v.tolist() for k, v in self.state_.items()},
                "training_log": self.training_log_,
                "best_epoch": self.best_epoch_,
                "stopped_epoch": self.stopped_epoch_,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "CnnClassifier":
        doc = json.loads(text)
        if doc.get("format") != "p300bench-cnn" or doc.get("version") != 1:
            raise ValueError("not a p300bench CNN checkpoint")
        config = dict(doc["config"])
        if isinstance(config.get("dense_units"), list):
            config["dense_units"] = tuple(config["dense_units"])
        model = cls(**config)
        model.params_ = {k: np.asarray(v, dtype=np.float64) for k, v in doc["params"].items()}
        model.state_ = {k: np.asarray(v, dtype=np.float64) for k, v in doc["state"].items()}
        model.training_log_ = doc["training_log"]
        model.best_epoch_ = doc["best_epoch"]
        model.stopped_epoch_ = doc["stopped_epoch"]
        model.n_channels_, model.n_samples_ = doc["input_shape"]
        return model

    def training_log_csv(self, path) -> None:
        check_is_fitted(self, "training_log_")
        import csv

        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "train_loss", "val_loss"])
            for row in self.training_log_:
                val = "" if row["val_loss"] is None else repr(row["val_loss"])
                writer.writerow([row["epoch"], repr(row["train_loss"]), val])
