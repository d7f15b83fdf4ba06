"""Estimator-interface tests: sklearn conventions over the trainers."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from clarinet.datasets import MOONS_ROTATE, DomainPairSpec, make_synthetic_pair
from clarinet.estimators import (
    ClarinetCC,
    ClarinetPC,
    GACClassifier,
    TwoStepClassifier,
)
from clarinet.labels import LabelSpace, generate_complementary_dataset

SPACE2 = LabelSpace(num_classes=2)

FAST = dict(batch_size=32, epochs=2, lr_classifier=0.02, random_state=7,
            deterministic=True, hidden_width=8, feature_dim=8, predictor_hidden=8)


@pytest.fixture(scope="module")
def moons():
    spec = DomainPairSpec(
        kind=MOONS_ROTATE, n_source=96, n_target=96, n_target_eval=64,
        rotation_degrees=30.0,
    )
    (Xs, ys), eval_pair, Xt = make_synthetic_pair(spec, seed=5)
    comp = generate_complementary_dataset(Xs, ys, SPACE2, rng_seed=3)
    return Xs, ys, comp.ybar, Xt, eval_pair


def test_get_set_params_round_trip():
    est = ClarinetCC(**FAST, adversarial_start_epoch=1)
    params = est.get_params()
    assert params["epochs"] == 2
    assert params["random_state"] == 7
    est.set_params(epochs=5)
    assert est.get_params()["epochs"] == 5
    cloned = clone(est)
    assert cloned.get_params() == est.get_params()


def test_gac_fit_predict(moons):
    Xs, ys, ybar, _, eval_pair = moons
    est = GACClassifier(**FAST).fit(Xs, ybar, y_true_hidden=ys)
    assert list(est.classes_) == [0, 1]
    assert est.n_features_in_ == 2
    pred = est.predict(eval_pair[0])
    assert pred.shape == (len(eval_pair[1]),)
    assert set(pred) <= {0, 1}
    proba = est.predict_proba(eval_pair[0])
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-5)
    assert 0.0 <= est.score(*eval_pair) <= 1.0
    assert len(est.metrics_) == 2


def test_unfitted_predict_raises(moons):
    _, _, _, _, eval_pair = moons
    with pytest.raises(NotFittedError, match="not fitted"):
        GACClassifier(**FAST).predict(eval_pair[0])


def test_cc_requires_target(moons):
    Xs, _, ybar, _, _ = moons
    with pytest.raises(ValueError, match="target_X"):
        ClarinetCC(**FAST).fit(Xs, ybar)


def test_cc_fit_is_deterministic(moons):
    Xs, ys, ybar, Xt, eval_pair = moons
    kw = dict(FAST, adversarial_start_epoch=1)
    a = ClarinetCC(**kw).fit(Xs, ybar, target_X=Xt)
    b = ClarinetCC(**kw).fit(Xs, ybar, target_X=Xt)
    np.testing.assert_array_equal(a.predict(eval_pair[0]), b.predict(eval_pair[0]))
    np.testing.assert_array_equal(
        a.metrics_.column("comp_loss"), b.metrics_.column("comp_loss")
    )


def test_pc_true_mask(moons):
    Xs, ys, ybar, Xt, eval_pair = moons
    mask = np.zeros(len(ys), dtype=bool)
    mask[:24] = True
    y_mixed = np.where(mask, ys, ybar)
    est = ClarinetPC(**FAST, adversarial_start_epoch=1).fit(
        Xs, y_mixed, true_mask=mask, target_X=Xt, y_true_hidden=ys,
    )
    assert est.metrics_.extras["alpha"] == pytest.approx(24 / 96)
    assert est.predict(eval_pair[0]).shape == (64,)
    with pytest.raises(ValueError, match="true_mask"):
        ClarinetPC(**FAST).fit(Xs, y_mixed, true_mask=mask[:-1], target_X=Xt)


def test_two_step_extras(moons):
    Xs, ys, ybar, Xt, eval_pair = moons
    est = TwoStepClassifier(**FAST, adversarial_start_epoch=1).fit(
        Xs, ybar, target_X=Xt, y_true_hidden=ys,
    )
    assert 0.0 <= est.metrics_.extras["pseudo_label_noise_rate"] <= 1.0
    assert est.predict(eval_pair[0]).shape == (64,)


def test_num_classes_inferred_and_overridable(moons):
    Xs, ys, ybar, _, _ = moons
    est = GACClassifier(**FAST).fit(Xs, ybar)
    assert len(est.classes_) == 2
    est3 = GACClassifier(**dict(FAST, num_classes=3)).fit(Xs, ybar)
    assert len(est3.classes_) == 3
    with pytest.raises(ValueError, match="num_classes"):
        GACClassifier(**dict(FAST, num_classes=1)).fit(Xs, ybar)


def test_image_input_selects_conv_net():
    rng = np.random.default_rng(0)
    X = rng.random((24, 1, 16, 16)).astype(np.float32)
    y = rng.integers(0, 2, size=24)
    ybar = 1 - y
    est = GACClassifier(**dict(FAST, epochs=1)).fit(X, ybar)
    assert est.model_.config.kind == "small_cnn"
    assert est.predict(X).shape == (24,)
    with pytest.raises(ValueError, match="shape"):
        GACClassifier(**FAST).fit(X[:, 0], ybar)  # 3-D input unsupported
