import json

import pytest

from clayworks.config import SceneError, SceneConfig, load_scene, parse_scene, dump_scene


def test_minimal_scene_fills_defaults(tmp_path):
    doc = {"shapes": [{"type": "sphere", "center": [0.5, 0.5, 0.5], "radius": 0.3}]}
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(doc))
    cfg = load_scene(path)
    assert cfg.grid_resolution == 64
    assert cfg.particles_per_cell == 8
    assert cfg.substeps_per_frame == 5
    assert cfg.surfacing.resolution == 128
    assert cfg.surfacing.smooth_iterations == 5
    assert cfg.effective_dt() == pytest.approx(1e-4)


def test_empty_shape_list_is_valid():
    cfg = parse_scene({"shapes": []})
    assert cfg.shapes == []


def test_shape_outside_domain_names_field():
    doc = {"shapes": [{"type": "sphere", "center": [0.5, 0.5, 0.5], "radius": 0.9}]}
    with pytest.raises(SceneError, match="outside domain"):
        parse_scene(doc)


def test_malformed_json_reports_parse_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(SceneError, match="not valid JSON"):
        load_scene(path)


def test_invalid_dt_names_field():
    with pytest.raises(SceneError, match="dt"):
        parse_scene({"dt": -1.0})


def test_unknown_material_reference():
    doc = {"shapes": [{"type": "sphere", "center": [0.5, 0.5, 0.5], "radius": 0.1,
                       "material": "nope"}]}
    with pytest.raises(SceneError, match="unknown material"):
        parse_scene(doc)


def test_scene_roundtrip(tmp_path):
    cfg = parse_scene({
        "name": "round",
        "gravity": [0, -1, 0],
        "materials": [{"name": "clay", "mu": 10.0, "lambda": 20.0, "density": 500,
                       "plasticity": {"model": "von_mises", "tau_y": 1.0}}],
        "shapes": [{"type": "box", "center": [0.5, 0.5, 0.5], "size": [0.2, 0.2, 0.2],
                    "material": "clay", "category": 3}],
    })
    path = tmp_path / "scene.json"
    dump_scene(cfg, path)
    again = load_scene(path)
    assert again == cfg


def test_dt_scales_down_for_fine_grids():
    coarse = SceneConfig(grid_resolution=32)
    base = SceneConfig(grid_resolution=64)
    fine = SceneConfig(grid_resolution=128)
    assert coarse.effective_dt() == pytest.approx(1e-4)
    assert base.effective_dt() == pytest.approx(1e-4)
    assert fine.effective_dt() == pytest.approx(5e-5)


def test_unsupported_schema_version():
    with pytest.raises(SceneError, match="schema_version"):
        parse_scene({"schema_version": 99})
