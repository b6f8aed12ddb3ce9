"""scikit-learn style front end.

``X`` is always the ``(n, 6)`` leg-displacement array ``l_os``; targets and
predictions are ``(n, 4, 4)`` poses. Estimators follow the usual contract:
hyper-parameters are stored untouched in ``__init__``, learned state gets a
trailing underscore and ``fit`` returns ``self``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import datagen, nrsolver
from ._validation import check_consistent_length, check_los, check_poses, check_positive
from .gnn import disgnet, mlp
from .gnn import train as gtrain
from .liegroup import se3_log
from .platform import build_distance_matrix, default_config, vectorize_distance


def _config(cfg):
    return default_config() if cfg is None else cfg


class DistanceGraphTransformer(TransformerMixin, BaseEstimator):
    """Map leg displacements to row-vectorised ``12 x 12`` distance matrices."""

    def __init__(self, config=None, edge_mode=None):
        self.config = config
        self.edge_mode = edge_mode

    def fit(self, X=None, y=None):
        self.config_ = _config(self.config)
        self.n_features_in_ = 6
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        los = check_los(X)
        lbar = los + self.config_.l0
        return vectorize_distance(build_distance_matrix(self.config_, lbar, self.edge_mode))


class _NetRegressor(RegressorMixin, BaseEstimator):
    arch = ""

    def _train_config(self) -> gtrain.TrainConfig:
        return gtrain.TrainConfig(learning_rate=self.learning_rate, beta=self.beta,
                                  batch_size=self.batch_size, epochs=self.epochs,
                                  seed=self.random_state)

    def _dataset(self, X, y=None):
        cfg = _config(self.config)
        los = check_los(X)
        poses = np.tile(np.eye(4), (los.shape[0], 1, 1)) if y is None else check_poses(y)
        check_consistent_length(los, poses)
        return datagen.from_arrays(cfg, poses, los + cfg.l0)

    def fit(self, X, y, validation_data=None):
        """Train from scratch; ``validation_data=(X_val, y_val)`` feeds the epoch log."""
        check_positive(self.learning_rate, "learning_rate")
        data = self._dataset(X, y)
        val = None if validation_data is None else self._dataset(*validation_data)
        params = gtrain.default_params(self.arch, data, self.random_state, self.hidden)
        self.params_, self.log_ = gtrain.train(data, self._train_config(), self.arch, params, val)
        self.config_ = data.config
        self.n_features_in_ = 6
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        return gtrain.predict_poses(self.params_, self._dataset(X))

    def score(self, X, y, sample_weight=None):
        """Negative mean translation error (mm), so that larger is better."""
        from .evalbench import e_trans

        return -e_trans(self.predict(X), check_poses(y))


class DisGNetRegressor(_NetRegressor):
    """Distance-matrix graph network over node-pair features."""

    arch = "disgnet"

    def __init__(self, config=None, hidden=16, learning_rate=1e-3, beta=disgnet.BETA,
                 batch_size=64, epochs=200, random_state=0):
        self.config = config
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.beta = beta
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state


class PlainMLPRegressor(_NetRegressor):
    """``l_os -> (x, y, z, alpha, beta, gamma)`` MLP baseline with batch norm."""

    arch = "plain-mlp"

    def __init__(self, config=None, hidden=64, learning_rate=1e-3, beta=disgnet.BETA,
                 batch_size=64, epochs=200, random_state=0):
        self.config = config
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.beta = beta
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state


class TwoStageSolver(RegressorMixin, BaseEstimator):
    """Network initialisation followed by Newton-Raphson refinement.

    With ``initializer=None`` every solve starts from the zero twist. After
    :meth:`predict`, ``reports_`` holds one :class:`SolveReport` per sample.
    """

    def __init__(self, initializer=None, config=None, gamma=nrsolver.GAMMA,
                 z_max=nrsolver.Z_MAX, n_jobs=1):
        self.initializer = initializer
        self.config = config
        self.gamma = gamma
        self.z_max = z_max
        self.n_jobs = n_jobs

    def fit(self, X, y):
        if self.initializer is not None:
            self.initializer.fit(X, y)
        self.config_ = _config(self.config)
        self.n_features_in_ = 6
        return self

    def initial_poses(self, X):
        los = check_los(X)
        if self.initializer is None:
            return np.tile(np.eye(4), (los.shape[0], 1, 1))
        return self.initializer.predict(los)

    def predict(self, X):
        check_is_fitted(self, "config_")
        check_positive(self.gamma, "gamma")
        los = check_los(X)
        xi0 = [se3_log(p) for p in self.initial_poses(los)]
        objs = [nrsolver.FkObjective(self.config_, row) for row in los]
        self.reports_ = nrsolver.refine_batch(objs, xi0, gamma=self.gamma, z_max=self.z_max,
                                              n_jobs=self.n_jobs)
        return np.stack([r.pose for r in self.reports_])

    def score(self, X, y, sample_weight=None):
        from .evalbench import e_trans

        return -e_trans(self.predict(X), check_poses(y))
