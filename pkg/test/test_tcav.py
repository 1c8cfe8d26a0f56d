import pytest
import numpy as np

from triggerxai import tcav
from triggerxai.fixtures import (
    CenteredEnergyBackend,
    PlantedConceptBackend,
    gen_scene,
    planted_micro_net,
)
from triggerxai.labeling import DiseaseLabel
from triggerxai.saliency import explain_method
from triggerxai.tcav import ConceptActivationVector, ConceptSet


def _unit(shape, seed):
    v = np.random.default_rng(seed).normal(size=shape)
    return v / np.linalg.norm(v)


def test_planted_concept_is_recovered():
    u = _unit((3, 8, 8), 0)
    rng = np.random.default_rng(1)
    positives = [0.5 + 0.3 * u + rng.normal(0, 0.01, u.shape) for _ in range(50)]
    randoms = [0.5 + rng.normal(0, 0.01, u.shape) for _ in range(50)]
    model = PlantedConceptBackend(u)
    cav = tcav.train_cav(model, 'features', ConceptSet(concept_id='planted', positives=positives, randoms=randoms))
    assert cav.accuracy >= 0.95
    assert float(cav.direction @ u.ravel()) > 0
    images = [rng.random(u.shape) for _ in range(30)]
    assert tcav.tcav_score(model, images, 0, cav) >= 0.9


def test_random_cav_scores_near_half():
    model = CenteredEnergyBackend()
    cav = ConceptActivationVector(concept_id='random', layer='features', direction=_unit(3 * 8 * 8, 2), accuracy=0.5)
    rng = np.random.default_rng(3)
    images = [rng.random((3, 8, 8)) for _ in range(200)]
    score = tcav.tcav_score(model, images, 0, cav)
    assert 0.2 <= score <= 0.8
    assert tcav.tcav_score(model, images, 0, cav.negated()) == pytest.approx(1 - score)


def test_same_distribution_cav_is_chance():
    rng = np.random.default_rng(4)
    positives = [rng.random((3, 8, 8)) for _ in range(250)]
    randoms = [rng.random((3, 8, 8)) for _ in range(250)]
    cav = tcav.train_cav(CenteredEnergyBackend(), 'features', ConceptSet(concept_id='noise', positives=positives, randoms=randoms))
    assert 0.3 <= cav.accuracy <= 0.7


def test_cav_validation():
    with pytest.raises(ValueError):
        ConceptActivationVector(concept_id='c', layer='l', direction=np.ones(4), accuracy=0.5)
    with pytest.raises(ValueError):
        ConceptActivationVector(concept_id='c', layer='l', direction=np.array([1.0, 0]), accuracy=1.5)
    small = [np.zeros((3, 8, 8))] * 5
    with pytest.raises(ValueError):
        ConceptSet(concept_id='c', positives=small, randoms=small)
    with pytest.raises(ValueError):
        tcav.tcav_score(CenteredEnergyBackend(), [], 0, ConceptActivationVector(
            concept_id='c', layer='features', direction=_unit(192, 0), accuracy=0.5))


def test_degenerate_features():
    same = [np.full((3, 8, 8), 0.5)] * 10
    with pytest.raises(ValueError, match='degenerate'):
        tcav.train_cav(CenteredEnergyBackend(), 'features', ConceptSet(concept_id='c', positives=same, randoms=same))


def test_concept_masks_match_scene_masks():
    for label, concept in [(DiseaseLabel.YellowSpots, 'yellowing'), (DiseaseLabel.ReddishBronzing, 'bronzing')]:
        scene = gen_scene(label, 7)
        assert np.array_equal(tcav.concept_mask(scene.image, concept), scene.mask)
    with pytest.raises(ValueError):
        tcav.concept_mask(scene.image, 'mildew')


def test_tcav_concept_map():
    mask = np.zeros((4, 4))
    mask[1:3, 1:3] = 1
    m = tcav.tcav_concept_map(mask, 0.75)
    assert m.method == 'tcav-concept'
    assert m.grid.max() == 0.75 and m.grid.sum() == 3
    assert m.extras['tcav_score'] == 0.75
    assert tcav.tcav_concept_map(mask, 0.0).empty
    with pytest.raises(ValueError):
        tcav.tcav_concept_map(mask, 1.5)


def test_tcav_method_on_micro_net():
    scene = gen_scene(DiseaseLabel.ReddishBronzing, 0)
    m = explain_method('tcav', planted_micro_net(), scene.image, 0, concept='bronzing', set_size=10, batch_size=5)
    assert m.method == 'tcav-concept'
    assert 0 <= m.extras['tcav_score'] <= 1
    assert 0 <= m.extras['cav_accuracy'] <= 1
    assert np.all((m.grid > 0) <= (scene.mask > 0))


def test_tcav_directional():
    u = _unit((3, 8, 8), 5)
    model = PlantedConceptBackend(u)
    cav = ConceptActivationVector(concept_id='planted', layer='features', direction=u, accuracy=1.0)
    flat = np.full(u.shape, 0.5)
    assert tcav.tcav_directional(model, flat, 0, cav) == pytest.approx(0.5)
    assert tcav.tcav_directional(model, flat, 1, cav) == 0
    assert tcav.tcav_directional(model, flat, 0, cav.negated()) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        tcav.tcav_directional(model, flat, 0, cav.copy(update={'layer': 'conv1'}))
    short = ConceptActivationVector(concept_id='c', layer='features', direction=_unit(4, 6), accuracy=1.0)
    with pytest.raises(ValueError):
        tcav.tcav_directional(model, flat, 0, short)
