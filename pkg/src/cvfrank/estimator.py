"""scikit-learn compatible wrapper around the numpy network and trainer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from cvfrank.errors import ConfigurationError
from cvfrank.mlp import init_model, load_model, save_model
from cvfrank.mlp import predict as mlp_predict
from cvfrank.parallel import PRESETS, ParallelConfig, TrainConfig, evaluate, fit


class MLPRankRegressor(RegressorMixin, BaseEstimator):
    """Feedforward rank regressor trained with (optionally data-parallel) Adam.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int
        Hidden widths. Dropout follows the first hidden layer and batch
        normalization the second.
    dropout : float
        Dropout rate; 0 disables dropout.
    batch_norm : bool
        Whether to batch-normalize the second hidden layer.
    learning_rate, epochs, batch_size : training schedule.
    n_workers : int
        Number of synchronous data-parallel workers.
    random_state : int
        Seeds initialization, shuffling and dropout masks.
    """

    def __init__(self, hidden_layer_sizes=(128, 64, 64), dropout=0.2, batch_norm=True,
                 learning_rate=1e-3, epochs=300, batch_size=32, n_workers=1,
                 bn_momentum=0.99, random_state=0, verbose=False):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.dropout = dropout
        self.batch_norm = batch_norm
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.n_workers = n_workers
        self.bn_momentum = bn_momentum
        self.random_state = random_state
        self.verbose = verbose

    @classmethod
    def from_preset(cls, name: str, **params) -> "MLPRankRegressor":
        if name not in PRESETS:
            raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        p = PRESETS[name]
        base = {"epochs": p["epochs"], "batch_size": p["batch_size"], "learning_rate": p["lr"]}
        return cls(**{**base, **params})

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = validate_data(self, X, y, y_numeric=True, dtype=np.float64)
        seed = 0 if self.random_state is None else int(self.random_state)
        widths = (X.shape[1], *self.hidden_layer_sizes, 1)
        self.model_ = init_model(widths, seed, dropout_rate=self.dropout,
                                 use_dropout=self.dropout > 0, use_batchnorm=self.batch_norm,
                                 bn_momentum=self.bn_momentum)
        config = TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.learning_rate,
                             seed=seed, dropout=self.dropout > 0, batchnorm=self.batch_norm)
        callback = (lambda m: print(f"epoch {m.epoch}: loss={m.loss:.5f} val_mae={m.val_mae}")) \
            if self.verbose else None
        self.history_ = fit(self.model_, X, y, config, ParallelConfig(self.n_workers),
                            X_val, y_val, callback)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return mlp_predict(self.model_, X)

    def evaluate(self, X, y) -> tuple[float, float]:
        """Return ``(mse, mae)`` on the given rows."""
        check_is_fitted(self, "model_")
        return evaluate(self.model_, X, y)

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        save_model(self.model_, path)

    @classmethod
    def load(cls, path) -> "MLPRankRegressor":
        model = load_model(path)
        est = cls(hidden_layer_sizes=tuple(model.widths[1:-1]), dropout=model.dropout_rate
                  if model.use_dropout else 0.0, batch_norm=model.use_batchnorm,
                  bn_momentum=model.bn_momentum)
        est.model_ = model
        est.n_features_in_ = model.widths[0]
        est.history_ = []
        return est

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.regressor_tags.poor_score = True
        return tags


def rounded_rank(pred) -> np.ndarray:
    """Nearest nonnegative integer, the binning used for predicted rank counts."""
    return np.maximum(np.rint(np.asarray(pred, dtype=np.float64)), 0).astype(np.int64)
