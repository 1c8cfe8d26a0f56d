import numpy as np
import pytest

from triggerxai import pipeline, trigger
from triggerxai.config import RunConfig
from triggerxai.fixtures import gen_scene
from triggerxai.labeling import DiseaseLabel
from triggerxai.report import ExplanationReport, load_report, write_report


def _config(**sections):
    tree = {
        'explain': {'size': 32},
        'rise': {'n_masks': 200, 'batch_size': 50},
        'tcav': {'set_size': 10, 'batch_size': 5},
    }
    for k, v in sections.items():
        tree.setdefault(k, {}).update(v)
    return RunConfig.parse_obj(tree)


@pytest.fixture(scope='module')
def scene():
    return gen_scene(DiseaseLabel.YellowSpots, 0)


@pytest.fixture(scope='module')
def result(scene):
    return pipeline.explain(scene.image, _config(), image_id='leaf')


def test_explain_is_deterministic(scene, result):
    again = pipeline.explain(scene.image, _config(), image_id='leaf')
    assert again.report.to_json() == result.report.to_json()
    assert list(again.overlays) == list(result.overlays)
    for key, o in result.overlays.items():
        assert np.array_equal(again.overlays[key], o)


def test_explain_is_independent_of_rise_workers(scene, result):
    threaded = pipeline.explain(scene.image, _config(rise={'workers': 4}), image_id='leaf')
    assert threaded.report.to_json() == result.report.to_json()
    assert list(threaded.overlays) == list(result.overlays)
    for key, o in result.overlays.items():
        assert np.array_equal(threaded.overlays[key], o)


def test_explain_report(result):
    report = result.report
    assert report.size == (32, 32)
    assert report.class_index == int(np.argmax(report.probs))
    assert sum(report.probs) == pytest.approx(1)
    assert [s.backend for s in report.streams] == ['micro-cnn']
    assert report.maia['cnn'] == ['gradcam', 'tcav']
    assert [m.method for m in report.streams[0].maps] == ['gradcam', 'fullgrad', 'rise', 'tcav']
    assert report.errors == []
    assert report.fusion.final == 'fused-weighted'
    assert sum(report.fusion.weights.values()) == pytest.approx(1)
    assert report.his.selected in report.his.candidates
    assert len(report.consistency.matrix) == 4
    assert report.surrogate.k == 5 and report.surrogate.n == 16
    assert report.metrics.iou_source == 'concept'
    assert report.timing is None
    assert 'fused' in result.overlays
    assert all(o.shape == (3, 32, 32) and o.dtype == np.uint8 for o in result.overlays.values())


def test_trigger_block_matches_decision(result):
    report = result.report
    expected = trigger.trigger_decide(np.asarray(report.probs), 1.0, False)
    assert report.trigger == expected


def test_report_round_trip(tmp_path, result):
    path = tmp_path / 'report.json'
    write_report(result.report, path)
    text = path.read_text()
    assert '"timing"' not in text
    loaded = load_report(path)
    assert loaded.to_json() == result.report.to_json()
    with pytest.raises(ValueError):
        ExplanationReport.parse_raw(text.replace('"v1"', '"v0"'))


def test_explain_with_mask_and_timing(scene):
    res = pipeline.explain(scene.image, _config(report={'timing': True}), mask=scene.mask)
    assert res.report.metrics.iou_source == 'mask'
    assert set(res.report.timing) == {'classify', 'assign', 'saliency', 'fusion', 'decide', 'evaluate'}
    assert '"timing"' in res.report.to_json()


def test_gate_skips_methods_when_untriggered(scene):
    cfg = _config(trigger={'gate': True, 'entropy': 2.0, 'agreement': 0.0, 'margin': 0.0})
    res = pipeline.explain(scene.image, cfg)
    assert not res.report.trigger.triggered
    assert [m.method for m in res.report.streams[0].maps] == ['gradcam']
    assert res.report.consistency.matrix == []
    assert res.report.fusion.weights['gradcam'] == 1


def test_all_backends_fuse_across_models(scene):
    res = pipeline.explain(scene.image, _config(model={'backend': 'all'}))
    report = res.report
    assert [s.backend for s in report.streams] == ['micro-cnn', 'vit-proxy', 'yolo-proxy']
    assert report.fusion.final == 'fused-inter'
    assert 'fused-inter' in res.maps
    assert 0 <= report.trigger.agreement <= 1
