import pytest
import numpy as np

from triggerxai import labeling
from triggerxai.fixtures import gen_scene
from triggerxai.labeling import DiseaseLabel, LabelerSettings, LfWeights


A = DiseaseLabel.Abstain
settings = LabelerSettings()


def _solid(r, g, b, size=10):
    return np.stack([np.full((size, size), v) for v in (r, g, b)])


def _features(img):
    return labeling.extract_features(img, settings)


def test_lf_order():
    assert labeling.lf_names() == ['yellow_spots', 'silk_webbing', 'healthy', 'reddish_bronzing']


def test_lf_yellow_spots():
    assert labeling.lf_yellow_spots(_features(_solid(1, 1, 0)), settings) is DiseaseLabel.YellowSpots
    assert labeling.lf_yellow_spots(_features(_solid(0, 0, 1)), settings) is A
    img = _solid(0.2, 0.65, 0.2)
    img[:, 0, :] = np.array([0.9, 0.85, 0.1])[:, None]
    assert labeling.lf_yellow_spots(_features(img), settings) is DiseaseLabel.YellowSpots


def test_lf_silk_webbing():
    assert labeling.lf_silk_webbing(_features(_solid(0.5, 0.5, 0.5)), settings) is A
    checker = (np.indices((10, 10)).sum(axis=0) % 2) * 0.13
    assert labeling.lf_silk_webbing(_features(np.stack([checker] * 3)), settings) is A
    stripes = (np.arange(10) % 2 == 0).astype(np.float64)[None, :].repeat(10, axis=0)
    feats = _features(np.stack([stripes] * 3))
    assert feats.contrast > 1.5
    assert labeling.lf_silk_webbing(feats, settings) is DiseaseLabel.SilkWebbing


def test_lf_healthy():
    assert labeling.lf_healthy(_features(_solid(0, 1, 0)), settings) is DiseaseLabel.Healthy
    assert labeling.lf_healthy(_features(_solid(1, 0, 0)), settings) is A
    img = _solid(0.2, 0.65, 0.2)
    img[:, :2, :] = np.array([0.9, 0.85, 0.1])[:, None, None]
    assert labeling.lf_healthy(_features(img), settings) is A


def test_lf_reddish_bronzing():
    assert labeling.lf_reddish_bronzing(_features(_solid(0.5, 0.5, 0.5)), settings) is A
    assert labeling.lf_reddish_bronzing(_features(_solid(1, 0, 0)), settings) is DiseaseLabel.ReddishBronzing
    assert labeling.lf_reddish_bronzing(_features(_solid(0.655, 0.5, 0.5)), settings) is DiseaseLabel.ReddishBronzing


def test_aggregate():
    assert labeling.aggregate([DiseaseLabel.YellowSpots, A, A, A]) == (DiseaseLabel.YellowSpots, 1.0, False)
    assert labeling.aggregate([A, A, A, A]) == (A, 0.0, False)
    w = LfWeights(weights=(2, 1, 1, 1))
    assert labeling.aggregate([DiseaseLabel.YellowSpots, DiseaseLabel.SilkWebbing, A, A], w) == (DiseaseLabel.YellowSpots, 2.0, False)
    assert labeling.aggregate([DiseaseLabel.YellowSpots, DiseaseLabel.SilkWebbing, A, A]) == (A, 1.0, True)
    assert labeling.aggregate(['Healthy', 'Abstain', 'Healthy', 'Abstain'])[0] is DiseaseLabel.Healthy
    with pytest.raises(ValueError):
        labeling.aggregate([A, A])
    with pytest.raises(ValueError):
        LfWeights(weights=(1, 0, 1, 1))


def test_estimate_weights():
    Y, S = DiseaseLabel.YellowSpots, DiseaseLabel.SilkWebbing
    dev = [
        ([Y, A, S, A], Y),
        ([Y, A, S, A], Y),
        ([Y, A, S, A], Y),
        ([Y, A, A, A], S),
    ]
    w = labeling.estimate_weights(dev).weights
    assert w[0] == pytest.approx(0.75)
    assert w[1] == labeling.WEIGHT_FLOOR
    assert w[2] == labeling.WEIGHT_FLOOR
    assert w[3] == labeling.WEIGHT_FLOOR
    w = labeling.estimate_weights([([Y, A, A, A], Y)]).weights
    assert w[0] == 1.0
    with pytest.raises(ValueError):
        labeling.estimate_weights([])


@pytest.mark.parametrize('label', labeling.VOTING_LABELS)
def test_scenes_are_labeled(label):
    hits = 0
    for seed in range(15):
        record = labeling.label_image(gen_scene(label, seed).image, f'{label.value}_{seed}')
        hits += record.label is label
    assert hits / 15 == pytest.approx(1.0)


def test_only_matching_lf_votes_on_scenes():
    for label in labeling.VOTING_LABELS:
        for seed in range(15):
            votes = labeling.apply_lfs(_features(gen_scene(label, seed).image))
            assert [v for v in votes if v is not A] == [label]


def test_lf_summary():
    Y, S, H = DiseaseLabel.YellowSpots, DiseaseLabel.SilkWebbing, DiseaseLabel.Healthy
    rows = [[Y, A, A, A], [Y, S, A, A], [A, A, H, A], [A, A, A, A]]
    s = labeling.lf_summary(rows)
    assert s['coverage']['yellow_spots'] == 0.5
    assert s['coverage']['reddish_bronzing'] == 0
    assert s['overlap']['silk_webbing'] == 0.25
    assert s['overlap']['healthy'] == 0
    assert s['conflict'] == {'yellow_spots': 0.25, 'silk_webbing': 0.25, 'healthy': 0, 'reddish_bronzing': 0}
    assert s['label_coverage'] == 0.75
    with pytest.raises(ValueError):
        labeling.lf_summary([])


def test_label_matrix_matches_apply_lfs():
    features = [
        _features(gen_scene(label, seed).image)
        for label in labeling.VOTING_LABELS for seed in range(2)
    ]
    L = labeling.label_matrix(features, settings)
    assert L.shape == (len(features), 4)
    expected = labeling.votes_to_matrix([labeling.apply_lfs(f, settings) for f in features])
    assert np.array_equal(L, expected)
    assert set(np.unique(L)) <= {labeling.ABSTAIN, 0, 1, 2, 3}
    assert labeling.votes_to_matrix([[A, DiseaseLabel.Healthy, A, A]]).tolist() == [[-1, 0, -1, -1]]


def test_settings_validation():
    with pytest.raises(ValueError):
        LabelerSettings(tau_y=1.5)
    with pytest.raises(ValueError):
        LabelerSettings(levels=1)
    with pytest.raises(ValueError):
        LabelerSettings(tau_x=1)
