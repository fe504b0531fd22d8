import numpy as np
import pytest

from boxmeta.dataset import extract_table
from boxmeta.errors import ConfigError
from boxmeta.synthgen import SceneConfig, generate


def test_generation_is_deterministic():
    config = SceneConfig(num_images=12, seed=9)
    a_gts, a_cands = generate(config)
    b_gts, b_cands = generate(config)
    assert a_gts == b_gts
    assert a_cands == b_cands
    c_gts, _ = generate(SceneConfig(num_images=12, seed=10))
    assert a_gts != c_gts


def test_image_ids_and_counts():
    config = SceneConfig(num_images=5, seed=0)
    gts, cands = generate(config)
    assert list(gts) == [f"img_{i:05d}" for i in range(5)]
    assert list(cands) == list(gts)


def test_scene_contents_are_valid():
    config = SceneConfig(num_images=20, seed=3)
    gts, cands = generate(config)
    for image_id in gts:
        objects = gts[image_id]
        assert config.objects_min <= len(objects) <= config.objects_max
        for gt in objects:
            assert 1 <= gt.class_index <= config.num_classes
            assert 0.0 <= gt.box.r_min <= gt.box.r_max <= config.rows
            assert 0.0 <= gt.box.c_min <= gt.box.c_max <= config.cols
            side_r = gt.box.r_max - gt.box.r_min
            side_c = gt.box.c_max - gt.box.c_min
            assert config.side_min <= side_r <= config.side_max
            assert config.side_min <= side_c <= config.side_max
        base = [c for c in cands[image_id] if c.dropout_run == 0]
        assert len(base) >= len(objects)  # every object emits a cluster
        anchors = [c.anchor_id for c in base]
        assert anchors == list(range(len(base)))
        for c in base:
            assert 0.0 <= c.score <= 1.0
            assert abs(sum(c.probs) - 1.0) < 1e-9
            assert len(c.probs) == config.num_classes


def test_dropout_passes_repeat_every_anchor():
    config = SceneConfig(num_images=6, seed=4, dropout_passes=3)
    _, cands = generate(config)
    for image_id, boxes in cands.items():
        base = [c for c in boxes if c.dropout_run == 0]
        for run in (1, 2, 3):
            repeats = [c for c in boxes if c.dropout_run == run]
            assert sorted(c.anchor_id for c in repeats) == [c.anchor_id for c in base]
        # repeats are re-jittered, not copies
        first = [c for c in boxes if c.dropout_run == 1]
        assert any(r.box != b.box for r, b in zip(first, base))


def test_noiseless_scene_scores_objects_at_point_nine():
    config = SceneConfig(
        num_images=8,
        seed=5,
        jitter_sigma=0.0,
        score_noise=0.0,
        clutter_rate=0.0,
    )
    gts, cands = generate(config)
    table = extract_table(
        cands, gts, threshold=0.5, tau=0.45, num_classes=config.num_classes, dropout=False
    )
    # every candidate coincides with its object: score = 0.8 * 1 + 0.1
    assert len(table) > 0
    assert np.allclose(table.features[:, table.feature_names.index("score")], 0.9)
    assert np.allclose(table.true_iou, 1.0)
    assert table.is_tp.all()


def test_clutter_only_scene_has_no_true_positives():
    config = SceneConfig(
        num_images=10,
        seed=6,
        score_slope=0.0,
        score_offset=0.6,
        score_noise=0.0,
        jitter_sigma=40.0,
    )
    gts, cands = generate(config)
    table = extract_table(cands, gts, threshold=0.5, tau=0.45, num_classes=3, dropout=False)
    # slope 0 erases the IoU signal; heavy jitter pushes IoU below 0.5
    assert len(table) > 0
    assert float(table.true_iou.max()) < 1.0
    assert not table.is_tp.all()


def test_config_validation():
    with pytest.raises(ConfigError):
        generate(SceneConfig(num_images=0))
    with pytest.raises(ConfigError):
        SceneConfig(rows=-1.0).validate()
    with pytest.raises(ConfigError):
        SceneConfig(num_classes=0).validate()
    with pytest.raises(ConfigError):
        SceneConfig(objects_min=3, objects_max=2).validate()
    with pytest.raises(ConfigError):
        SceneConfig(side_min=0.0).validate()
    with pytest.raises(ConfigError):
        SceneConfig(side_min=50.0, side_max=40.0).validate()
    with pytest.raises(ConfigError):
        SceneConfig(side_max=5000.0).validate()
    with pytest.raises(ConfigError):
        SceneConfig(cluster_mean=-1.0).validate()
    with pytest.raises(ConfigError):
        SceneConfig(jitter_sigma=-0.1).validate()
    with pytest.raises(ConfigError):
        SceneConfig(dropout_passes=-1).validate()


def test_score_tracks_overlap_quality():
    gts, cands = generate(SceneConfig(num_images=40, seed=7))
    table = extract_table(cands, gts, threshold=0.01, tau=0.45, num_classes=3, dropout=False)
    score = table.features[:, table.feature_names.index("score")]
    r = np.corrcoef(score, table.true_iou)[0, 1]
    assert r > 0.5
