import warnings

import pytest
import numpy as np
from sklearn.linear_model import LogisticRegression

from triggerxai import evaluation
from triggerxai.errors import DegenerateFitWarning
from triggerxai.evaluation import CurvePoints, GateReport, GateThresholds
from triggerxai.fixtures import ConstantBackend, LinearPixelBackend
from triggerxai.micronet import build_micro_net
from triggerxai.numeric import softmax


def test_pointing_game():
    mask = np.zeros((4, 4))
    mask[2, 2] = 1
    hit = np.zeros((4, 4))
    hit[2, 2] = 1
    assert evaluation.pointing_game([hit], [mask]) == 1.0
    assert evaluation.pointing_game([np.zeros((4, 4))], [mask]) == 0.0

    maps = [hit] * 7 + [np.zeros((4, 4))] * 3
    assert evaluation.pointing_game(maps, [mask] * 10) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        evaluation.pointing_game([], [])
    with pytest.raises(ValueError):
        evaluation.pointing_game([hit], [mask[:2]])


def test_mean_iou():
    a = np.zeros((4, 4))
    a[:2, :2] = 1
    b = np.zeros((4, 4))
    b[:2, 1:3] = 1
    assert evaluation.mean_iou([a], [a]) == 1.0
    assert evaluation.mean_iou([a], [1 - a]) == 0.0
    assert evaluation.mean_iou([a, a], [a, b]) == pytest.approx(2 / 3)


def test_curve_points_validation():
    CurvePoints(fractions=[0, 0.5, 1], scores=[1, 0.5, 0])
    with pytest.raises(ValueError):
        CurvePoints(fractions=[0, 1], scores=[1])
    with pytest.raises(ValueError):
        CurvePoints(fractions=[0.1, 1], scores=[1, 0])
    with pytest.raises(ValueError):
        CurvePoints(fractions=[0, 0.6, 0.5, 1], scores=[1, 1, 1, 1])
    assert evaluation.auc_trapezoid(CurvePoints(fractions=[0, 1], scores=[1, 0])) == pytest.approx(0.5)


def test_perturbation_flat_for_constant_model():
    model = ConstantBackend(logits=(2.0, 0.0))
    img = np.random.default_rng(0).random((3, 8, 8))
    g = np.random.default_rng(1).random((8, 8))
    p0 = softmax([2.0, 0.0])[0]
    for mode in ('deletion', 'insertion'):
        curve, area = evaluation.perturbation_curve(model, img, 0, g, mode, step=0.25)
        assert curve.fractions == [0, 0.25, 0.5, 0.75, 1]
        assert np.allclose(curve.scores, p0)
        assert area == pytest.approx(p0)


def test_perturbation_linear_pixel_model():
    model = LinearPixelBackend.single_pixel((8, 8), 0, 0)
    img = np.full((3, 8, 8), 0.9)
    g = np.zeros((8, 8))
    g[0, 0] = 1
    curve, del_auc = evaluation.perturbation_curve(model, img, 0, g, 'deletion')
    assert curve.scores[0] == pytest.approx(softmax([2.7, 0])[0])
    assert curve.scores[1] == pytest.approx(0.5)
    _, ins_auc = evaluation.perturbation_curve(model, img, 0, g, 'insertion')
    assert del_auc < ins_auc
    with pytest.raises(ValueError):
        evaluation.perturbation_curve(model, img, 0, g, 'blur')
    with pytest.raises(ValueError):
        evaluation.perturbation_curve(model, img, 0, g[:4], 'deletion')


def test_aic_bic():
    assert evaluation.aic(0, -3.5) == 7.0
    assert evaluation.bic(1, np.e ** 2, 0.0) == pytest.approx(2.0)
    assert evaluation.aic(5, -10) == 30
    with pytest.raises(ValueError):
        evaluation.aic(-1, 0)
    with pytest.raises(ValueError):
        evaluation.bic(1, 0, 0)


def test_brier():
    assert evaluation.brier([[1, 0, 0]], [0]) == 0
    assert evaluation.brier([[0.5, 0.5]], [1]) == pytest.approx(0.5)
    assert evaluation.brier([[0.8, 0.2]], [0]) == pytest.approx(0.08)
    assert evaluation.brier([[0.8, 0.2], [1, 0]], [0, 0]) == pytest.approx(0.04)
    with pytest.raises(ValueError):
        evaluation.brier([[0.8, 0.2]], [2])
    with pytest.raises(ValueError):
        evaluation.brier([], [])


def test_surrogate_fit_likelihood():
    net = build_micro_net(4)
    rng = np.random.default_rng(5)
    img = rng.random((3, 16, 16))
    g = rng.random((16, 16))
    fit = evaluation.surrogate_fit(net, img, 1, g, patch=4)
    assert fit.n == 16 and fit.k == 5
    assert not fit.degenerate

    X, y = evaluation.surrogate_features(net, img, 1, g, patch=4)
    assert X.shape == (16, 4) and y.sum() == 8

    def _ll(clf):
        p = np.clip(clf.fit(X, y).predict_proba(X)[:, 1], 1e-12, 1 - 1e-12)
        return float(np.sum(y * np.log(p) + (1 - y) * np.log(1 - p)))

    ll = _ll(LogisticRegression(C=evaluation.SURROGATE_C, solver='lbfgs', random_state=0, max_iter=1000))
    assert fit.log_likelihood == pytest.approx(ll)
    # the default L2 penalty gives a lower likelihood than the unpenalized fit
    assert fit.log_likelihood >= _ll(LogisticRegression(solver='lbfgs', random_state=0, max_iter=1000)) - 1e-9
    assert fit.aic == pytest.approx(2 * 5 - 2 * ll)
    assert fit.bic == pytest.approx(5 * np.log(16) - 2 * ll)


def test_surrogate_fit_degenerate():
    with pytest.warns(DegenerateFitWarning):
        fit = evaluation.surrogate_fit(ConstantBackend(), np.full((3, 8, 8), 0.5), 0, np.ones((8, 8)), patch=4)
    assert fit.degenerate and fit.log_likelihood == 0
    assert fit.aic == 2 * fit.k
    with pytest.raises(ValueError):
        evaluation.surrogate_fit(ConstantBackend(), np.full((3, 8, 8), 0.5), 0, np.ones((8, 8)), patch=3)


@pytest.mark.parametrize('inputs, failed', [
    ((150, 200, 0.1, 0.9, 0.7), None),
    ((200, 200, 0.1, 0.9, 0.7), 'aic_pass'),
    ((150, 250, 0.1, 0.9, 0.7), 'bic_pass'),
    ((150, 200, 0.2, 0.9, 0.7), 'brier_pass'),
    ((150, 200, 0.1, 0.85, 0.7), 'confidence_pass'),
    ((150, 200, 0.1, 0.9, 0.59), 'iou_pass'),
    ((150, 200, 0.1, 0.9, 0.6), None),
])
def test_gate_boundaries(inputs, failed):
    report = evaluation.validate_explanation(*inputs)
    flags = {k: v for k, v in report.dict().items() if k.endswith('_pass')}
    if failed is None:
        assert report.passed and all(flags.values())
    else:
        assert not report.passed
        assert [k for k, v in flags.items() if not v] == [failed]


def test_gate_thresholds_are_configurable():
    t = GateThresholds(aic=300)
    assert evaluation.validate_explanation(250, 200, 0.1, 0.9, 0.7, t).passed
    with pytest.raises(ValueError):
        GateThresholds(mape=1)


def test_gate_report_consistency():
    with pytest.raises(ValueError):
        evaluation.validate_explanation(float('nan'), 200, 0.1, 0.9, 0.7)
    fields = dict(aic=1, bic=1, brier=0, confidence=1, iou=1,
                  aic_pass=True, bic_pass=True, brier_pass=True, confidence_pass=True, iou_pass=False)
    with pytest.raises(ValueError):
        GateReport(passed=True, **fields)
    with warnings.catch_warnings():
        warnings.simplefilter('error')
        assert not GateReport(passed=False, **fields).passed
