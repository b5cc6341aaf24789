import json

import numpy as np
import pytest

from movi.config import PipelineConfig
from movi.errors import UnboundObjectError
from movi.pipeline import dynamic_degree, generate, metric_occupancy, metrics_report
from movi.sampler import dirac_target
from movi.trajectory import BoxTrack, ScenePlan

LAT = (40, 64)
FAST = {"schedule": {"steps": 10}, "reinit": {"iterations": 1}}


def test_occupancy_blob_inside_box():
    track = BoxTrack("a", 0, [(0, 0, 256, 160)], (512, 320))
    video = np.zeros((1, 2, 8, 8))
    video[0, 1, 1:3, 1:3] = 5.0
    assert metric_occupancy(video, track, (8, 8)).tolist() == [1.0]


def test_occupancy_uniform_half():
    track = BoxTrack("a", 0, [(0, 0, 256, 320)], (512, 320))
    assert metric_occupancy(np.ones((1, 3, 8, 8)), track, (8, 8))[0] == pytest.approx(0.5)


def test_occupancy_zero_frame():
    track = BoxTrack("a", 0, [(0, 0, 256, 320)] * 2, (512, 320))
    assert metric_occupancy(np.zeros((2, 1, 8, 8)), track, (8, 8)).tolist() == [0.0, 0.0]


def test_occupancy_of_dirac_target(two_object_plan):
    target = dirac_target(two_object_plan, LAT)
    for i, track in enumerate(two_object_plan.tracks):
        assert metric_occupancy(target, track, LAT, [i]).min() > 0.99


def test_dynamic_degree():
    assert dynamic_degree(np.ones((4, 1, 2, 2))) == 0.0
    v = np.zeros((2, 1, 1, 2))
    v[0, 0, 0, 0] = v[1, 0, 0, 1] = 1.0
    assert dynamic_degree(v) == pytest.approx(2.0)


def test_zero_object_plan_is_finite():
    out = generate(ScenePlan("nothing", [], 16), PipelineConfig(**FAST))
    assert np.isfinite(out.video).all() and out.masks == [] and out.bindings == []


def test_generate_same_seed_is_identical(two_object_plan):
    cfg = PipelineConfig(**FAST, backend="toy-attention")
    assert np.array_equal(generate(two_object_plan, cfg).video, generate(two_object_plan, cfg).video)
    assert not np.array_equal(generate(two_object_plan, cfg).video, generate(two_object_plan, cfg, seed=1).video)


def test_dirac_generation_occupancy(two_object_plan):
    cfg = PipelineConfig(**FAST)
    report = metrics_report(two_object_plan, generate(two_object_plan, cfg), cfg)
    assert min(report["mean_occupancy"].values()) > 0.9
    assert report["dynamic_degree"] > 0
    assert "rejection_score" not in report
    json.dumps(report)


def test_attention_neutral_and_suppressing(two_object_plan):
    base = PipelineConfig(**FAST, backend="toy-attention")
    off = generate(two_object_plan, base.model_copy(update={"attention": base.attention.model_copy(update={"enabled": False})}))
    neutral = generate(two_object_plan, base.model_copy(update={"attention": base.attention.model_copy(update={"scale": 1.0})}))
    suppress = generate(two_object_plan, base)
    assert np.array_equal(off.video, neutral.video)
    assert np.any(off.video != suppress.video)
    assert [b.tokens for b in suppress.bindings] == [{1}, {4}]


def test_unbound_object_surfaces(two_object_plan):
    plan = ScenePlan("a fox and a hen", two_object_plan.tracks, 16)
    with pytest.raises(UnboundObjectError):
        generate(plan, PipelineConfig(**FAST, backend="toy-attention"))


def test_binding_override_file(tmp_path, two_object_plan):
    p = tmp_path / "b.json"
    p.write_text('{"objects": [{"label": "cat", "tokens": [0, 1], "scale": 0.5}]}')
    cfg = PipelineConfig(**FAST, backend="toy-attention", attention={"bindings_file": str(p)})
    cat, dog = generate(two_object_plan, cfg).bindings
    assert cat.tokens == {0, 1} and cat.scale == 0.5 and dog.tokens == {4}


def test_reinject_changes_only_with_flag(two_object_plan):
    cfg = PipelineConfig(**FAST, backend="toy-attention")
    again = cfg.model_copy(update={"reinit": cfg.reinit.model_copy(update={"reinject": True})})
    assert not np.array_equal(generate(two_object_plan, cfg).video, generate(two_object_plan, again).video)


def test_stationary_dynamic_degree(stationary_plan):
    cfg = PipelineConfig(**FAST)
    assert dynamic_degree(generate(stationary_plan, cfg).video) < 1e-6
