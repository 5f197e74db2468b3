import numpy as np
import pytest
import torch
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from multirobust.data import make_blobs
from multirobust.estimator import RobustImageClassifier
from multirobust.validation import check_image_array, check_labels


@pytest.fixture(scope="module")
def blob_arrays():
    ds = make_blobs(96, 48, 1, 8, 8, classes=3, seed=0)
    return (
        ds.train_x.numpy(),
        ds.train_y.numpy(),
        ds.test_x.numpy(),
        ds.test_y.numpy(),
    )


class TestValidationHelpers:
    def test_image_array_happy_path(self):
        x = np.random.default_rng(0).random((4, 1, 8, 8), dtype=np.float32)
        t = check_image_array(x)
        assert t.shape == (4, 1, 8, 8) and t.dtype == torch.float32

    def test_image_array_rejects_bad_inputs(self):
        with pytest.raises(ValueError, match="shape"):
            check_image_array(np.zeros((4, 8, 8)))
        with pytest.raises(ValueError, match="0, 1"):
            check_image_array(np.full((1, 1, 2, 2), 2.0))
        with pytest.raises(ValueError, match="non-finite"):
            check_image_array(np.full((1, 1, 2, 2), np.nan))
        with pytest.raises(ValueError, match="empty"):
            check_image_array(np.zeros((0, 1, 2, 2)))

    def test_labels_encoding(self):
        encoded, classes = check_labels(np.array([5, 9, 5, 7]))
        assert classes.tolist() == [5, 7, 9]
        assert encoded.tolist() == [0, 2, 0, 1]

    def test_labels_outside_classes_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            check_labels(np.array([1, 2]), classes=np.array([1]))


class TestEstimator:
    def test_fit_predict_shapes(self, blob_arrays):
        X, y, Xt, yt = blob_arrays
        clf = RobustImageClassifier(method="nat", epochs=3, batch_size=32, max_lr=0.1, seed=0)
        assert clf.fit(X, y) is clf
        proba = clf.predict_proba(Xt)
        assert proba.shape == (len(yt), 3)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-5)
        preds = clf.predict(Xt)
        assert set(np.unique(preds)).issubset(set(np.unique(y)))

    def test_score_beats_chance(self, blob_arrays):
        X, y, Xt, yt = blob_arrays
        clf = RobustImageClassifier(method="nat", epochs=10, batch_size=32, max_lr=0.15, seed=1)
        clf.fit(X, y)
        assert clf.score(Xt, yt) > 0.5

    def test_sklearn_clone_and_params(self):
        clf = RobustImageClassifier(method="sat", beta=4.0, epochs=2)
        cloned = clone(clf)
        assert cloned.get_params()["beta"] == 4.0
        cloned.set_params(beta=8.0, method="mng_ac")
        assert cloned.beta == 8.0 and cloned.method == "mng_ac"
        assert clf.beta == 4.0

    def test_unfitted_raises(self):
        clf = RobustImageClassifier()
        with pytest.raises(NotFittedError):
            clf.predict(np.zeros((1, 1, 8, 8), dtype=np.float32))

    def test_unknown_method_rejected(self, blob_arrays):
        X, y, _, _ = blob_arrays
        clf = RobustImageClassifier(method="trades")
        with pytest.raises(ValueError, match="method"):
            clf.fit(X, y)

    def test_preserves_original_label_values(self):
        ds = make_blobs(48, 24, 1, 8, 8, classes=2, seed=3)
        X = ds.train_x.numpy()
        y = np.where(ds.train_y.numpy() == 0, -7, 13)  # non-contiguous labels
        clf = RobustImageClassifier(method="nat", epochs=2, batch_size=16, max_lr=0.1)
        clf.fit(X, y)
        preds = clf.predict(X)
        assert set(np.unique(preds)).issubset({-7, 13})

    def test_seed_determinism(self, blob_arrays):
        X, y, Xt, _ = blob_arrays
        a = RobustImageClassifier(method="sat", epochs=2, batch_size=32, seed=5).fit(X, y)
        b = RobustImageClassifier(method="sat", epochs=2, batch_size=32, seed=5).fit(X, y)
        np.testing.assert_array_equal(a.predict_proba(Xt), b.predict_proba(Xt))

    def test_evaluate_robustness_report(self, blob_arrays):
        X, y, Xt, yt = blob_arrays
        clf = RobustImageClassifier(method="sat", epochs=2, batch_size=32, seed=6)
        clf.fit(X, y)
        report = clf.evaluate_robustness(Xt, yt)
        assert set(report.per_attack) == {"pgd-linf", "pgd-l2"}
        assert 0.0 <= report.acc_union <= min(report.per_attack.values())

    def test_mng_ac_method_runs(self, blob_arrays):
        X, y, _, _ = blob_arrays
        clf = RobustImageClassifier(
            method="mng_ac", epochs=1, batch_size=48, beta=4.0, generator_hidden=8, seed=7
        )
        clf.fit(X, y)
        assert clf.state_.gen is not None
        assert clf.state_.global_step == 2
