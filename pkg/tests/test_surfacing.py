import numpy as np
import pytest

from clayworks.config import parse_scene
from clayworks.seeding import seed_particles
from clayworks.surfacing import (
    SurfaceMesh,
    accumulate_density,
    connected_components,
    edge_incidence_counts,
    euler_characteristic,
    export_meshes,
    export_obj,
    extract_surfaces,
    import_obj,
    import_ply,
    laplacian_smooth,
    marching_cubes,
    surface_area,
    triangle_normals,
)
from clayworks.types import ParticleSet


def sphere_field(n=96, r0=0.3, center=0.5):
    dx = 1.0 / n
    g = np.arange(n) * dx
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    return r0 - np.sqrt((X - center) ** 2 + (Y - center) ** 2 + (Z - center) ** 2), dx


# ---------------------------------------------------------------------------
# density accumulation

def test_no_particles_zero_fields():
    fields = accumulate_density(ParticleSet.empty(), 32, 1.0)
    assert fields.fields == {}


def test_density_mass_consistency_per_category():
    cfg = parse_scene({"shapes": [
        {"type": "sphere", "center": [0.35, 0.5, 0.5], "radius": 0.15, "category": 0},
        {"type": "sphere", "center": [0.7, 0.5, 0.5], "radius": 0.1, "category": 1},
    ]})
    p = seed_particles(cfg)
    fields = accumulate_density(p, 64, 1.0)
    cell_vol = (1.0 / 64) ** 3
    for cat in (0, 1):
        total = fields.fields[cat].sum()
        expected = p.m[p.category_id == cat].sum() / cell_vol
        assert total == pytest.approx(expected, rel=1e-6)


def test_single_particle_peaks_at_node():
    p = ParticleSet.allocate(1)
    n = 32
    dx = 1.0 / n
    p.x[0] = (10 * dx, 12 * dx, 14 * dx)
    p.m[0] = 1.0
    p.vol0[0] = 1.0
    fields = accumulate_density(p, n, 1.0)
    f = fields.fields[0]
    assert np.unravel_index(np.argmax(f), f.shape) == (10, 12, 14)


def test_categories_have_disjoint_support():
    cfg = parse_scene({"shapes": [
        {"type": "sphere", "center": [0.3, 0.5, 0.5], "radius": 0.1, "category": 0},
        {"type": "sphere", "center": [0.7, 0.5, 0.5], "radius": 0.1, "category": 1},
    ]})
    p = seed_particles(cfg)
    fields = accumulate_density(p, 64, 1.0)
    overlap = (fields.fields[0] > 0) & (fields.fields[1] > 0)
    assert not np.any(overlap)


# ---------------------------------------------------------------------------
# marching cubes

def test_sphere_area_and_topology():
    f, dx = sphere_field()
    mesh = marching_cubes(f, 0.0, dx)
    assert abs(surface_area(mesh) / (4 * np.pi * 0.3**2) - 1.0) < 0.05
    assert euler_characteristic(mesh) == 2
    counts = edge_incidence_counts(mesh)
    assert counts.min() == counts.max() == 2
    assert connected_components(mesh) == 1


def test_outward_normals():
    f, dx = sphere_field()
    mesh = marching_cubes(f, 0.0, dx)
    nrm = triangle_normals(mesh)
    radial = mesh.vertices[mesh.triangles].mean(axis=1) - 0.5
    radial /= np.linalg.norm(radial, axis=1, keepdims=True)
    assert np.sum(nrm * radial, axis=1).min() > 0.5


def test_uniform_field_no_crossings():
    f = np.full((16, 16, 16), 2.0)
    mesh = marching_cubes(f, 1.0, 1 / 16)
    assert mesh.empty


def test_iso_outside_range_empty():
    f, dx = sphere_field(n=32)
    assert marching_cubes(f, 10.0, dx).empty
    assert marching_cubes(f, -10.0, dx).empty


def test_two_blobs_same_category_two_components():
    n = 64
    dx = 1.0 / n
    g = np.arange(n) * dx
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    f1 = 0.1 - np.sqrt((X - 0.3) ** 2 + (Y - 0.5) ** 2 + (Z - 0.5) ** 2)
    f2 = 0.1 - np.sqrt((X - 0.7) ** 2 + (Y - 0.5) ** 2 + (Z - 0.5) ** 2)
    mesh = marching_cubes(np.maximum(f1, f2), 0.0, dx)
    assert connected_components(mesh) == 2


def test_touching_blobs_merge_when_same_category():
    n = 64
    dx = 1.0 / n
    g = np.arange(n) * dx
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    f1 = 0.16 - np.sqrt((X - 0.38) ** 2 + (Y - 0.5) ** 2 + (Z - 0.5) ** 2)
    f2 = 0.16 - np.sqrt((X - 0.62) ** 2 + (Y - 0.5) ** 2 + (Z - 0.5) ** 2)
    merged = marching_cubes(np.maximum(f1, f2), 0.0, dx)
    assert connected_components(merged) == 1


def test_category_separation_of_touching_blobs():
    # two overlapping spheres in different categories stay two meshes with
    # no shared geometry, each a closed genus-0 surface
    cfg = parse_scene({"shapes": [
        {"type": "sphere", "center": [0.42, 0.5, 0.5], "radius": 0.14, "category": 0},
        {"type": "sphere", "center": [0.58, 0.5, 0.5], "radius": 0.14, "category": 1},
    ]})
    p = seed_particles(cfg)
    fields = accumulate_density(p, 96, 1.0)
    meshes = extract_surfaces(fields)
    assert len(meshes) == 2
    for m in meshes:
        assert not m.empty
        assert euler_characteristic(m) == 2
        assert connected_components(m) == 1
    a = {tuple(np.round(v, 12)) for v in meshes[0].vertices}
    b = {tuple(np.round(v, 12)) for v in meshes[1].vertices}
    assert not (a & b)


def test_single_category_extract_equals_direct():
    f, dx = sphere_field(n=48)
    fields = accumulate_density(ParticleSet.empty(), 48, 1.0)
    fields.fields[7] = f
    meshes = extract_surfaces(fields, iso=0.0)
    direct = marching_cubes(f, 0.0, dx, category_id=7)
    assert len(meshes) == 1
    np.testing.assert_array_equal(meshes[0].vertices, direct.vertices)
    np.testing.assert_array_equal(meshes[0].triangles, direct.triangles)
    assert meshes[0].category_id == 7


def test_random_fields_watertight():
    rng = np.random.default_rng(123)
    for _ in range(10):
        f = rng.standard_normal((12, 12, 12))
        f[0, :, :] = f[-1, :, :] = f[:, 0, :] = f[:, -1, :] = -3.0
        f[:, :, 0] = f[:, :, -1] = -3.0
        mesh = marching_cubes(f, 0.0171, 1 / 12)
        if mesh.empty:
            continue
        counts = edge_incidence_counts(mesh)
        assert counts.min() == counts.max() == 2


# ---------------------------------------------------------------------------
# smoothing

def test_smooth_zero_iterations_identity():
    f, dx = sphere_field(n=48)
    mesh = marching_cubes(f, 0.0, dx)
    out = laplacian_smooth(mesh, iterations=0)
    np.testing.assert_array_equal(out.vertices, mesh.vertices)
    np.testing.assert_array_equal(out.triangles, mesh.triangles)


def test_smooth_reduces_radial_noise():
    f, dx = sphere_field(n=64)
    mesh = marching_cubes(f, 0.0, dx)
    rng = np.random.default_rng(5)
    noisy = mesh.copy()
    radial = noisy.vertices - 0.5
    radial /= np.linalg.norm(radial, axis=1, keepdims=True)
    noisy.vertices = noisy.vertices + radial * rng.normal(0, 0.004, (len(noisy.vertices), 1))

    def radial_rms(m):
        r = np.linalg.norm(m.vertices - 0.5, axis=1)
        return float(np.sqrt(np.mean((r - r.mean()) ** 2)))

    smoothed = laplacian_smooth(noisy, iterations=5, strength=0.5)
    assert radial_rms(smoothed) < radial_rms(noisy)


def test_smooth_preserves_topology():
    f, dx = sphere_field(n=48)
    mesh = marching_cubes(f, 0.0, dx)
    out = laplacian_smooth(mesh, iterations=5, strength=0.5)
    assert out.triangles.shape == mesh.triangles.shape
    assert out.vertices.shape == mesh.vertices.shape
    assert euler_characteristic(out) == euler_characteristic(mesh)
    assert connected_components(out) == connected_components(mesh)


def test_smoothing_shrinks_volume():
    f, dx = sphere_field(n=48)
    mesh = marching_cubes(f, 0.0, dx)
    out = laplacian_smooth(mesh, iterations=5, strength=0.5)
    assert surface_area(out) < surface_area(mesh)


# ---------------------------------------------------------------------------
# export / import

def unit_tetrahedron():
    v = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [0.0, 0, 1]])
    t = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]], dtype=np.int64)
    return SurfaceMesh(v, t, category_id=0)


def test_obj_tetrahedron_lines(tmp_path):
    path = tmp_path / "tet.obj"
    export_obj([unit_tetrahedron()], path)
    lines = path.read_text().splitlines()
    assert sum(1 for l in lines if l.startswith("v ")) == 4
    assert sum(1 for l in lines if l.startswith("f ")) == 4


def test_obj_roundtrip_byte_identical(tmp_path):
    f, dx = sphere_field(n=32)
    mesh = marching_cubes(f, 0.0, dx)
    p1 = tmp_path / "a.obj"
    p2 = tmp_path / "b.obj"
    export_obj([mesh], p1)
    again = import_obj(p1)
    export_obj(again, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_ply_roundtrip_byte_identical(tmp_path):
    f, dx = sphere_field(n=32)
    mesh = marching_cubes(f, 0.0, dx)
    mesh.category_id = 3
    p1 = tmp_path / "a.ply"
    p2 = tmp_path / "b.ply"
    export_meshes([mesh], "ply", p1)
    again = import_ply(p1)
    export_meshes(again, "ply", p2)
    assert p1.read_bytes() == p2.read_bytes()
    # vertices survive the float32 narrowing
    np.testing.assert_allclose(again[0].vertices, mesh.vertices, atol=1e-6)


def test_obj_two_categories_two_groups(tmp_path):
    a = unit_tetrahedron()
    b = unit_tetrahedron()
    b.category_id = 5
    path = tmp_path / "two.obj"
    export_obj([a, b], path)
    text = path.read_text()
    assert "o category_0" in text
    assert "o category_5" in text
    again = import_obj(path)
    assert [m.category_id for m in again] == [0, 5]
    assert all(m.triangles.shape[0] == 4 for m in again)
