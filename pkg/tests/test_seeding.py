import numpy as np

from clayworks.config import parse_scene
from clayworks.seeding import seed_particles


def test_full_cell_gets_exactly_ppc_particles():
    # box spanning exactly one grid cell
    dx = 1.0 / 64
    center = [(10 + 0.5) * dx, (20 + 0.5) * dx, (30 + 0.5) * dx]
    cfg = parse_scene({"shapes": [{"type": "box", "center": center, "size": [dx, dx, dx]}]})
    p = seed_particles(cfg)
    assert p.count == 8
    cell = np.floor(p.x / dx).astype(int)
    assert np.all(cell == [10, 20, 30])


def test_sphere_particle_count_matches_volume():
    cfg = parse_scene({"shapes": [{"type": "sphere", "center": [0.5, 0.5, 0.5],
                                   "radius": 0.3}]})
    p = seed_particles(cfg)
    dx = cfg.dx
    expected = 8.0 * (4.0 / 3.0) * np.pi * 0.3**3 / dx**3
    assert abs(p.count / expected - 1.0) < 0.02


def test_seeding_is_deterministic():
    doc = {"seed": 7, "shapes": [{"type": "sphere", "center": [0.5, 0.5, 0.5],
                                  "radius": 0.2}]}
    a = seed_particles(parse_scene(doc))
    b = seed_particles(parse_scene(doc))
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.m, b.m)


def test_seed_changes_jitter():
    base = {"shapes": [{"type": "sphere", "center": [0.5, 0.5, 0.5], "radius": 0.2}]}
    a = seed_particles(parse_scene({**base, "seed": 0}))
    b = seed_particles(parse_scene({**base, "seed": 1}))
    assert a.count > 0 and b.count > 0
    n = min(a.count, b.count)
    assert not np.array_equal(a.x[:n], b.x[:n])


def test_mass_and_volume_from_material():
    cfg = parse_scene({
        "materials": [{"name": "clay", "density": 500.0}],
        "shapes": [{"type": "box", "center": [0.5, 0.5, 0.5], "size": [0.25, 0.25, 0.25],
                    "material": "clay"}],
    })
    p = seed_particles(cfg)
    vol0 = cfg.dx**3 / cfg.particles_per_cell
    assert np.allclose(p.vol0, vol0)
    assert np.allclose(p.m, 500.0 * vol0)
    assert np.all(p.F[:, 0, 0] == 1.0)
    assert np.all(p.C == 0.0)
    # total mass approximates density * shape volume
    assert abs(p.m.sum() / (500.0 * 0.25**3) - 1.0) < 0.02


def test_empty_scene_gives_empty_set():
    p = seed_particles(parse_scene({"shapes": []}))
    assert p.count == 0


def test_particles_inside_shapes():
    cfg = parse_scene({"shapes": [
        {"type": "torus", "center": [0.5, 0.5, 0.5], "major_radius": 0.25,
         "minor_radius": 0.08, "category": 1},
        {"type": "cylinder", "center": [0.5, 0.2, 0.5], "radius": 0.1,
         "half_height": 0.05, "category": 2},
    ]})
    p = seed_particles(cfg)
    assert p.count > 0
    for shape, cat in zip(cfg.shapes, (1, 2)):
        sel = p.category_id == cat
        assert np.all(shape.contains(p.x[sel]))
        assert sel.sum() > 0
