import pytest

from ripeline.classifier import ClassifierConfig, init_model
from ripeline.detector import init_detector
from ripeline.imaging import write_png
from ripeline.pipeline import (
    ConfigError,
    PipelineConfig,
    PipelineError,
    match_planted,
    candidate_regions,
    process_image,
    run_pipeline,
)
from ripeline.synthetic import scene_corpus, tomato_scene
from recipes import desk_models


@pytest.fixture(scope="module")
def untrained():
    return init_detector(0), init_model(ClassifierConfig(side=8, d=4, layers=1))


def test_config_defaults_materialized():
    d = PipelineConfig().to_dict()
    assert set(d) == {"slic", "growth", "detector", "classifier", "augment", "run"}
    assert d["growth"]["similarity_threshold"] == 12.0 and d["slic"]["max_iters"] == 10


def test_config_rejects_unknown():
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"slick": {}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"slic": {"kk": 3}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"slic": {"k_target": 0}})


def test_config_toml_and_override(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('[slic]\nk_target = 50\n\n[run]\nseed = 4\n')
    cfg = PipelineConfig.from_toml(path)
    assert cfg.slic.k_target == 50 and cfg.run.seed == 4 and cfg.slic.compactness == 10.0
    over = cfg.override("slic", k_target=80, compactness=None)
    assert over.slic.k_target == 80 and cfg.slic.k_target == 50
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg


def test_no_accepted_regions_is_empty(untrained):
    det, cls = untrained
    cfg = PipelineConfig().override("run", detection_threshold=1.5)
    assert process_image(tomato_scene(1).image, cfg, det, cls) == []


def write_scenes(tmp_path, n=3):
    paths = []
    for i, s in enumerate(scene_corpus(n, seed=3)):
        paths.append(write_png(s.image, tmp_path / f"s{i}.png"))
    return paths


def test_failures_isolated(tmp_path, untrained):
    det, cls = untrained
    write_scenes(tmp_path, 2)
    (tmp_path / "s9.png").write_bytes(b"\x89PNG broken")
    (tmp_path / "notes.txt").write_text("ignored")
    results = list(run_pipeline(tmp_path, PipelineConfig(), det, cls))
    assert [r["image"].rsplit("/", 1)[-1] for r in results] == ["s0.png", "s1.png", "s9.png"]
    assert sum("error" in r for r in results) == 1 and "error" in results[-1]
    for r in results[:2]:
        for reg in r["regions"]:
            assert set(reg) == {"bbox", "pixel_count", "tomato_score", "class_probs", "class"}
            assert abs(sum(reg["class_probs"]) - 1) < 1e-9


def test_parallel_order_matches_serial(tmp_path, untrained):
    det, cls = untrained
    paths = write_scenes(tmp_path, 3)
    serial = list(run_pipeline(paths, PipelineConfig(), det, cls, jobs=1))
    parallel = list(run_pipeline(paths, PipelineConfig(), det, cls, jobs=2))
    assert serial == parallel


def test_missing_model(untrained):
    with pytest.raises(PipelineError):
        list(run_pipeline([], PipelineConfig(), None, untrained[1]))


def test_single_tomato_scene_end_to_end():
    detector, classifier = desk_models()
    scene = next(s for s in scene_corpus(20, seed=7) if len(s.tomatoes) == 1)
    out = process_image(scene.image, PipelineConfig(), detector, classifier)
    assert len(out) == 1
    assert out[0]["class"] == scene.tomatoes[0].cls.label


def test_match_planted():
    scene = tomato_scene(5, n_tomatoes=2)
    labels, regions, _ = candidate_regions(scene.image, PipelineConfig())
    matched = [m for m in match_planted(scene, labels, regions) if m is not None]
    assert sorted(matched) == [0, 1]
