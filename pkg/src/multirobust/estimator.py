"""Scikit-learn style estimator around the robust-training pipeline.

``RobustImageClassifier`` exposes fit/predict/predict_proba/score plus a
robustness report, so the trainers compose with the usual sklearn tooling
(get_params/set_params, clone, pipelines operating on 4-d image arrays).
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from multirobust.attacks import PerturbationSet, make_attack
from multirobust.evaluation import evaluate
from multirobust.models import NoiseGenerator, make_classifier
from multirobust.training import METHODS, LrSchedule, TrainState, lr_at, train_step
from multirobust.data import batch_indices
from multirobust.validation import check_image_array, check_labels


class RobustImageClassifier(ClassifierMixin, BaseEstimator):
    """Adversarially robust image classifier with a sklearn interface.

    Parameters mirror the experiment configuration: ``method`` picks the
    training scheme, ``attacks`` the perturbation set by registry name, and
    ``beta`` weighs the consistency loss for the meta-noise scheme.
    """

    def __init__(
        self,
        method: str = "sat",
        attacks=("pgd-linf", "pgd-l2"),
        epsilon: dict | None = None,
        arch: str = "small_cnn",
        epochs: int = 10,
        batch_size: int = 64,
        max_lr: float = 0.21,
        beta: float = 12.0,
        generator_enabled: bool = True,
        generator_hidden: int = 32,
        seed: int = 0,
    ):
        self.method = method
        self.attacks = attacks
        self.epsilon = epsilon
        self.arch = arch
        self.epochs = epochs
        self.batch_size = batch_size
        self.max_lr = max_lr
        self.beta = beta
        self.generator_enabled = generator_enabled
        self.generator_hidden = generator_hidden
        self.seed = seed

    def _build_attacks(self, input_dim, for_eval=False):
        overrides = self.epsilon or {}
        return [
            make_attack(name, input_dim, epsilon=overrides.get(name), for_eval=for_eval)
            for name in self.attacks
        ]

    def fit(self, X, y):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}, expected one of {METHODS}")
        X = check_image_array(X)
        labels, classes = check_labels(y, n_samples=X.shape[0])
        if len(classes) < 2:
            raise ValueError("need at least two classes")
        self.classes_ = np.asarray(classes)
        self.n_features_in_ = int(X[0].numel())
        in_shape = tuple(X.shape[1:])

        model = make_classifier(self.arch, in_shape, len(classes), seed=self.seed)
        gen = None
        if self.method == "mng_ac" and self.generator_enabled:
            gen = NoiseGenerator(in_shape[0], hidden=self.generator_hidden, seed=self.seed + 1)
        pset = PerturbationSet(self._build_attacks(self.n_features_in_), seed=self.seed + 2)
        state = TrainState(
            model=model, gen=gen, pset=pset, generator_enabled=self.generator_enabled
        )
        state.rng_noise.manual_seed(self.seed + 3)

        n = X.shape[0]
        steps_per_epoch = (n + self.batch_size - 1) // self.batch_size
        schedule = LrSchedule(self.max_lr, self.epochs)
        for step in range(self.epochs * steps_per_epoch):
            epoch = step // steps_per_epoch
            if step % steps_per_epoch == 0:
                batches = batch_indices(n, self.batch_size, self.seed + 4, epoch)
            idx = batches[step % steps_per_epoch]
            lr = lr_at(schedule, (step + 0.5) / steps_per_epoch)
            train_step(state, self.method, X[idx], labels[idx], pset, self.beta, lr)
        self.state_ = state
        self.model_ = model
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("fit must be called before prediction")

    def predict_proba(self, X):
        self._check_fitted()
        X = check_image_array(X)
        with torch.no_grad():
            return torch.softmax(self.model_(X), dim=1).numpy()

    def predict(self, X):
        self._check_fitted()
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def evaluate_robustness(self, X, y, attack_names=None, seed: int = 0):
        """MetricsReport over the given attack suite (defaults to the
        training attacks at evaluation strength)."""
        self._check_fitted()
        X = check_image_array(X)
        labels, _ = check_labels(y, n_samples=X.shape[0], classes=self.classes_)
        names = tuple(attack_names) if attack_names is not None else tuple(self.attacks)
        suite = [
            make_attack(n, int(X[0].numel()), epsilon=(self.epsilon or {}).get(n), for_eval=True)
            for n in names
        ]
        report, _ = evaluate(self.model_, X, labels, suite, seed=seed)
        return report
