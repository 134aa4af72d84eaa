"""Array-in, array-out classifier wrapper around the training engine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .data import Dataset, SplitSpec, split_dataset, standardize
from .exceptions import ShapeError
from .training import RunConfig, fit_model, predict_probabilities
from .validation import check_groups, check_labels, check_series_array


class ResoGraphClassifier(ClassifierMixin, BaseEstimator):
    """Multi-resolution graph classifier for multichannel time series.

    Expects X of shape [n_samples, n_timesteps, n_channels]. Channels are
    standardized with statistics of the fitting data; training runs the
    full graph network (difference attention + spectral filtering, then a
    per-resolution graph encoder).

    Parameters mirror the training config: with validation_fraction > 0 a
    slice of the fitting data (grouped by `groups` when given) is held out
    and the epoch with the best validation macro F1 wins; otherwise the
    final epoch's weights are kept.
    """

    def __init__(self, kernel_sizes=(2, 4, 8), embed_dim=64, heads=4, head_dim=16,
                 attn_dim=32, layers=2, epochs=10, batch_size=32,
                 learning_rate=1e-4, validation_fraction=0.0,
                 disable_difference_attention=False,
                 disable_frequency_convolution=False,
                 single_resolution=False, random_state=0):
        self.kernel_sizes = kernel_sizes
        self.embed_dim = embed_dim
        self.heads = heads
        self.head_dim = head_dim
        self.attn_dim = attn_dim
        self.layers = layers
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.validation_fraction = validation_fraction
        self.disable_difference_attention = disable_difference_attention
        self.disable_frequency_convolution = disable_frequency_convolution
        self.single_resolution = single_resolution
        self.random_state = random_state

    def _config(self) -> RunConfig:
        frac = float(self.validation_fraction)
        return RunConfig(
            kernel_sizes=tuple(self.kernel_sizes),
            embed_dim=self.embed_dim,
            heads=self.heads,
            head_dim=self.head_dim,
            attn_dim=self.attn_dim,
            layers=self.layers,
            batch_size=self.batch_size,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            disable_da=self.disable_difference_attention,
            disable_fcn=self.disable_frequency_convolution,
            single_resolution=self.single_resolution,
            seed=self.random_state,
            split_seed=self.random_state,
            train_ratio=1.0 - frac,
            val_ratio=frac,
            test_ratio=0.0,
        )

    def fit(self, X, y, groups=None):
        """Train on X [N, T, C] and integer or string labels y."""
        X = check_series_array(X)
        y = check_labels(y, len(X))
        groups = check_groups(groups, len(X))
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("fit needs at least two classes")
        config = self._config()
        subjects = groups if groups is not None else [f"s{i}" for i in range(len(X))]
        dataset = Dataset.from_arrays(
            X, encoded, subjects, [f"r{i}" for i in range(len(X))], len(self.classes_)
        )
        if config.val_ratio > 0:
            mode = "subject_based" if groups is not None else "sample_based"
            spec = SplitSpec(mode, (config.train_ratio, config.val_ratio, 0.0),
                             config.split_seed)
            train_ds, val_ds, _ = split_dataset(dataset, spec)
            train_ds, val_ds, stats = standardize(train_ds, val_ds)
        else:
            val_ds = None
            train_ds, stats = standardize(dataset)
        result = fit_model(train_ds, val_ds, config)
        self.params_ = result.params
        self.stats_ = stats
        self.best_epoch_ = result.best_epoch
        self.history_ = result.history
        self.n_features_in_ = X.shape[2]
        self.n_timesteps_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise RuntimeError("this classifier is not fitted yet; call fit first")

    def predict_proba(self, X):
        self._check_fitted()
        X = check_series_array(X)
        if X.shape[1] != self.n_timesteps_ or X.shape[2] != self.n_features_in_:
            raise ShapeError(
                f"X has shape {X.shape}, expected "
                f"[*, {self.n_timesteps_}, {self.n_features_in_}]"
            )
        config = self._config()
        return predict_probabilities(
            self.params_, self.stats_.apply(X), config.batch_size,
            config.disable_da, config.disable_fcn,
        )

    def predict(self, X):
        probs = self.predict_proba(X)
        return self.classes_[probs.argmax(axis=-1)]
