import numpy as np
import pytest

from clayworks.appearance import (
    SplatFormatError,
    derive_particles,
    ingest_splats,
    load_splats,
    pack_symmetric,
    refresh_covariances,
    save_splats,
    splat_volumes,
    volume_ratio_metric,
)
from clayworks.config import parse_scene
from clayworks.engine import Simulation
from clayworks.types import AppearanceSet


def make_splat_file(tmp_path, n=1000, seed=0, bad=0):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0.3, 0.7, (n, 3))
    scales = rng.uniform(0.005, 0.02, (n, 3))
    cov = np.zeros((n, 3, 3))
    cov[:, 0, 0] = scales[:, 0] ** 2
    cov[:, 1, 1] = scales[:, 1] ** 2
    cov[:, 2, 2] = scales[:, 2] ** 2
    if bad:
        cov[:bad, 0, 0] = -1e-4  # non-PD, needs repair
    payload = rng.standard_normal((n, 4)).astype(np.float32)
    path = tmp_path / "splats.npz"
    np.savez(path, format_version=np.array([1], dtype=np.int32), positions=pos,
             covariances=pack_symmetric(cov), payload=payload,
             category=np.zeros(n, dtype=np.int32))
    return path, pos, cov, payload


def test_load_and_fixed_point_export(tmp_path):
    path, pos, cov, payload = make_splat_file(tmp_path)
    app, repaired = load_splats(path)
    assert repaired == 0
    np.testing.assert_allclose(app.x, pos)
    np.testing.assert_allclose(app.cov, cov)
    out = tmp_path / "out.npz"
    save_splats(app, out)
    again, _ = load_splats(out)
    np.testing.assert_array_equal(again.x, app.x)
    np.testing.assert_array_equal(again.payload, app.payload)


def test_nonpd_covariances_repaired(tmp_path):
    path, *_ = make_splat_file(tmp_path, n=100, bad=7)
    app, repaired = load_splats(path)
    assert repaired == 7
    w = np.linalg.eigvalsh(app.cov0)
    assert w.min() >= 1e-8 - 1e-12


def test_malformed_file_rejected(tmp_path):
    p = tmp_path / "bad.npz"
    np.savez(p, nonsense=np.zeros(3))
    with pytest.raises(SplatFormatError, match="positions"):
        load_splats(p)


def test_ratio_one_particles_coincide(tmp_path):
    path, pos, *_ = make_splat_file(tmp_path, n=500)
    app, particles, _ = ingest_splats(path, ratio=1.0, density=1000.0)
    np.testing.assert_array_equal(particles.x, app.x)


def test_subsample_count_exact(tmp_path):
    path, *_ = make_splat_file(tmp_path, n=100000, seed=3)
    app, _ = load_splats(path)
    p = derive_particles(app, ratio=0.125, density=1000.0, seed=11)
    assert p.count == 12500
    again = derive_particles(app, ratio=0.125, density=1000.0, seed=11)
    np.testing.assert_array_equal(p.x, again.x)
    # mass: total splat volume * density / count
    total_volume = splat_volumes(app.cov0).sum()
    np.testing.assert_allclose(p.m, 1000.0 * total_volume / 12500)


def sim_with_splats(tmp_path, n=200, **scene):
    doc = {"gravity": [0, 0, 0], "damping": 0.0, "boundary": "none", "shapes": []}
    doc.update(scene)
    cfg = parse_scene(doc)
    path, *_ = make_splat_file(tmp_path, n=n)
    app, particles, _ = ingest_splats(path, ratio=0.5, density=1000.0)
    sim = Simulation(cfg, particles=particles, appearance=app)
    return sim


def test_uniform_velocity_translates_splats(tmp_path):
    from clayworks.appearance import advect_appearance
    sim = sim_with_splats(tmp_path)
    u = np.array([0.2, -0.1, 0.3])
    x0 = sim.appearance.x.copy()
    cov0 = sim.appearance.cov.copy()
    sim.grid.velocity[:] = u
    advect_appearance(sim, None)
    np.testing.assert_allclose(sim.appearance.x, x0 + sim.dt * u, atol=1e-12)
    assert np.abs(sim.appearance.F - np.eye(3)).max() < 1e-12
    np.testing.assert_allclose(sim.appearance.cov, cov0, atol=1e-15)


def test_linear_field_updates_covariance(tmp_path):
    from clayworks.appearance import advect_appearance
    sim = sim_with_splats(tmp_path)
    A = np.array([[0.05, 0.2, 0.0], [-0.1, 0.0, 0.15], [0.0, 0.1, -0.05]])
    n, dx = sim.grid.n, sim.grid.dx
    coords = np.arange(n) * dx
    X, Y, Z = np.meshgrid(coords, coords, coords, indexing="ij")
    sim.grid.velocity[:] = np.stack([X, Y, Z], axis=-1) @ A.T
    cov_before = sim.appearance.cov0.copy()
    advect_appearance(sim, None)  # gathers C, then F <- (I + dt C) F next call
    advect_appearance(sim, None)
    expected_F = np.eye(3) + sim.dt * A
    np.testing.assert_allclose(sim.appearance.F, np.broadcast_to(expected_F, (sim.appearance.count, 3, 3)),
                               atol=1e-6)
    expected_cov = np.einsum("ij,njk,lk->nil", expected_F, cov_before, expected_F)
    np.testing.assert_allclose(sim.appearance.cov, expected_cov, atol=1e-7)


def test_twin_splat_follows_particle(tmp_path):
    # a splat starting identical to a physics particle follows it exactly
    cfg = parse_scene({
        "gravity": [0, -9.8, 0], "damping": 0.0, "boundary": "none",
        "shapes": [{"type": "sphere", "center": [0.5, 0.6, 0.5], "radius": 0.12}],
    })
    sim = Simulation(cfg)
    k = sim.particles.count // 2
    app = AppearanceSet(
        x=sim.particles.x[k:k + 1].copy(), v=sim.particles.v[k:k + 1].copy(),
        C=np.zeros((1, 3, 3)), F=np.eye(3)[None].copy(),
        cov0=np.eye(3)[None] * 1e-4, cov=np.eye(3)[None] * 1e-4,
        payload=np.zeros((1, 0), dtype=np.float32),
        material_id=np.zeros(1, dtype=np.int32), category_id=np.zeros(1, dtype=np.int32),
        active=np.ones(1, dtype=bool))
    sim.appearance = app
    for _ in range(100):
        sim.substep()
    err = np.abs(sim.appearance.x[0] - sim.particles.x[k]).max()
    assert err < 1e-6 * cfg.domain_size
    np.testing.assert_allclose(sim.appearance.F[0], sim.particles.F[k], atol=1e-9)


def test_reconstruction_identity_and_pd(tmp_path):
    sim = sim_with_splats(tmp_path)
    rng = np.random.default_rng(0)
    sim.appearance.F[:] = np.eye(3) + 0.2 * rng.standard_normal((sim.appearance.count, 3, 3))
    refresh_covariances(sim.appearance)
    a = sim.appearance
    expected = np.einsum("nij,njk,nlk->nil", a.F, a.cov0, a.F)
    assert np.abs(a.cov - expected).max() < 1e-9 * max(1.0, np.abs(expected).max())
    dets = np.linalg.det(a.F)
    pd = dets > 0
    w = np.linalg.eigvalsh(a.cov[pd])
    assert w.min() > 0


# ---------------------------------------------------------------------------
# volume ratio metric

def uniform_app(vols):
    n = len(vols)
    cov = np.zeros((n, 3, 3))
    # sphere of volume v: (4 pi / 3) r^3 = v with cov = r^2 I
    r = (np.asarray(vols) / (4 * np.pi / 3)) ** (1 / 3)
    for i in range(n):
        cov[i] = np.eye(3) * r[i] ** 2
    app = AppearanceSet(
        x=np.zeros((n, 3)), v=np.zeros((n, 3)), C=np.zeros((n, 3, 3)),
        F=np.broadcast_to(np.eye(3), (n, 3, 3)).copy(), cov0=cov, cov=cov.copy(),
        payload=np.zeros((n, 0), dtype=np.float32),
        material_id=np.zeros(n, dtype=np.int32), category_id=np.zeros(n, dtype=np.int32),
        active=np.ones(n, dtype=bool))
    return app


def test_uniform_volumes_give_zero():
    app = uniform_app([2.0] * 50)
    assert volume_ratio_metric(app, 0.1, r=2.0) == 0.0
    assert volume_ratio_metric(app, 0.5, r=1.0) == 0.0


def test_ratio_four_with_r_two():
    app = uniform_app([4.0] * 10 + [1.0] * 10)
    assert volume_ratio_metric(app, 0.5, r=2.0) == pytest.approx(2.0, rel=1e-9)


def test_matches_brute_force():
    rng = np.random.default_rng(9)
    vols = rng.uniform(0.5, 8.0, 333)
    app = uniform_app(vols)
    alpha = 0.1
    got = volume_ratio_metric(app, alpha, r=2.0)
    s = np.sort(splat_volumes(app.cov))
    k = max(1, int(np.floor(alpha * len(s))))
    expected = max(np.mean(s[-k:]) / np.mean(s[:k]), 2.0) - 2.0
    assert got == pytest.approx(expected, rel=1e-9)


def test_scale_covariant():
    rng = np.random.default_rng(10)
    vols = rng.uniform(0.5, 8.0, 100)
    app = uniform_app(vols)
    before = volume_ratio_metric(app, 0.1, r=2.0)
    app.cov *= 3.7**2
    after = volume_ratio_metric(app, 0.1, r=2.0)
    assert after == pytest.approx(before, rel=1e-9)


def test_empty_set_rejected():
    app = uniform_app([])
    with pytest.raises(ValueError):
        volume_ratio_metric(app)
