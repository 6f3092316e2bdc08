"""Acceptance suite: one test per criterion, each printing a PASS line
with the measured values (run with -s to see them inline).

The slow reproductions (localized ablation, spatial refinement) run the
exact protocols the bench CLI exposes.
"""

import numpy as np
import pytest

from clayworks import kernels
from clayworks.bench import bench_localized_ablation, bench_sweep, run_convergence
from clayworks.cli import main as cli_main
from clayworks.config import parse_scene
from clayworks.engine import Simulation
from clayworks.plasticity import apply_plasticity, hencky_strain
from clayworks.stress import piola_stress, strain_energy
from clayworks.types import (
    PLASTICITY_CLAMP,
    PLASTICITY_VON_MISES,
    STRESS_COROTATED,
    STRESS_NEOHOOKEAN,
    MaterialParams,
)


def report(name: str, detail: str) -> None:
    print(f"\n[ACCEPTANCE] {name}: PASS — {detail}")


def rest_scene(radius=0.12, n_extra=None):
    return parse_scene({
        "gravity": [0, 0, 0], "damping": 0.0, "boundary": "none",
        "shapes": [{"type": "sphere", "center": [0.5, 0.5, 0.5], "radius": radius}],
    })


# ---------------------------------------------------------------------------
# [PRIMARY] conservation suite

def test_conservation_suite():
    rng = np.random.default_rng(2024)
    cfg = rest_scene(radius=0.1)
    sim = Simulation(cfg)
    worst_mass = 0.0
    worst_mom = 0.0
    for _ in range(100):
        sim.particles.v[:] = rng.standard_normal((sim.particles.count, 3))
        sim.particles.x[:] = rng.uniform(0.2, 0.8, (sim.particles.count, 3))
        sim.particles.F[:] = np.eye(3)
        sim.particles.C[:] = 0.0
        sim.grid.clear()
        err = np.zeros(2, dtype=np.int64)
        kernels.p2g(sim.particles.x, sim.particles.v, sim.particles.C, sim.particles.F,
                    sim.particles.m, sim.particles.vol0, sim.particles.material_id,
                    sim.mat["mu"], sim.mat["lam"], sim.mat["stress_model"],
                    sim.particles.active, sim.grid.mass, sim.grid.momentum,
                    sim.grid.dx, sim.dt, err)
        mass_rel = abs(sim.grid.mass.sum() / sim.particles.m.sum() - 1.0)
        mom = sim.grid.momentum.sum(axis=(0, 1, 2))
        expected = np.einsum("p,pd->d", sim.particles.m, sim.particles.v)
        mom_rel = np.abs(mom - expected).max() / max(np.abs(expected).max(), 1e-30)
        worst_mass = max(worst_mass, mass_rel)
        worst_mom = max(worst_mom, mom_rel)
    assert worst_mass < 1e-6
    assert worst_mom < 1e-6

    # rigid-translation invariance
    sim2 = Simulation(rest_scene())
    u = np.array([0.4, -0.3, 0.2])
    sim2.particles.v[:] = u
    x0 = sim2.particles.x.copy()
    drift = 0.0
    for step in range(1, 6):
        sim2.substep()
        drift = max(drift, np.abs(sim2.particles.F - np.eye(3)).max())
        pos_err = np.abs(sim2.particles.x - (x0 + step * sim2.dt * u)).max()
        assert pos_err < 1e-9 * step
    assert drift < 1e-9
    report("conservation", f"mass rel {worst_mass:.2e}, momentum rel {worst_mom:.2e}, "
           f"F drift {drift:.2e} over 100 randomized states")


# ---------------------------------------------------------------------------
# [PRIMARY] constitutive suite

def test_constitutive_suite():
    rng = np.random.default_rng(7)
    mats = [MaterialParams(mu=3.0, lam=2.0, density=1e3, stress_model=m)
            for m in (STRESS_NEOHOOKEAN, STRESS_COROTATED)]
    for m in mats:
        assert np.abs(piola_stress(np.eye(3), m)).max() < 1e-9 * m.mu

    worst_fd = 0.0
    eps = 1e-6
    for m in mats:
        for _ in range(20):
            while True:
                F = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
                if np.linalg.det(F) > 0.5:
                    break
            D = rng.standard_normal((3, 3))
            D /= np.linalg.norm(D)
            de = (strain_energy(F + eps * D, m) - strain_energy(F - eps * D, m)) / (2 * eps)
            an = float(np.sum(piola_stress(F, m) * D))
            worst_fd = max(worst_fd, abs(de - an) / max(1.0, abs(an)))
    assert worst_fd < 1e-4

    vm = MaterialParams(mu=2.0, lam=1.0, density=1e3, plasticity=PLASTICITY_VON_MISES,
                        tau_y=0.3)
    cl = MaterialParams(mu=2.0, lam=1.0, density=1e3, plasticity=PLASTICITY_CLAMP,
                        clamp_min=0.75, clamp_max=1.3)
    worst_idem = 0.0
    for _ in range(1000):
        while True:
            F = np.eye(3) + 0.4 * rng.standard_normal((3, 3))
            if np.linalg.det(F) > 0.05:
                break
        for m in (vm, cl):
            once = apply_plasticity(F, m)
            twice = apply_plasticity(once, m)
            worst_idem = max(worst_idem, np.abs(twice - once).max())
        out = apply_plasticity(F, vm)
        e = hencky_strain(out)
        assert np.linalg.norm(e - e.sum() / 3) <= vm.tau_y / (2 * vm.mu) + 1e-8
        sig = np.linalg.svd(apply_plasticity(F, cl), compute_uv=False)
        assert np.all(sig >= cl.clamp_min - 1e-9) and np.all(sig <= cl.clamp_max + 1e-9)
    assert worst_idem < 1e-9
    report("constitutive", f"FD rel err {worst_fd:.2e}, idempotence {worst_idem:.2e} "
           f"on 1000 random F")


# ---------------------------------------------------------------------------
# [PRIMARY] contact suite

def test_contact_suite():
    from clayworks.medial import primitive_sdf
    rng = np.random.default_rng(5)
    worst = 0.0
    queries = 0
    # 10^4 queries against dense-sampling oracles
    for _ in range(40):
        c1, c2 = rng.uniform(0.25, 0.75, (2, 3))
        if np.linalg.norm(c2 - c1) < 5e-2:
            continue
        r1, r2 = rng.uniform(0.03, 0.25, 2)
        pts = rng.uniform(-0.2, 1.2, (125, 3))
        t = np.linspace(0, 1, 10001)
        cs = c1[None] + t[:, None] * (c2 - c1)[None]
        rs = r1 + t * (r2 - r1)
        dmat = np.linalg.norm(pts[:, None, :] - cs[None], axis=2) - rs[None]
        oracle = dmat.min(axis=1)
        for p, d_ref in zip(pts, oracle):
            got = primitive_sdf(p, "cone", [(c1, r1), (c2, r2)]).distance
            worst = max(worst, abs(got - d_ref))
            queries += 1
    for _ in range(40):
        cs3 = rng.uniform(0.25, 0.75, (3, 3))
        if np.linalg.norm(np.cross(cs3[1] - cs3[0], cs3[2] - cs3[0])) < 5e-3:
            continue
        rs3 = rng.uniform(0.03, 0.2, 3)
        u, v = np.meshgrid(np.linspace(0, 1, 121), np.linspace(0, 1, 121), indexing="ij")
        keep = (u + v) <= 1.0
        u, v = u[keep], v[keep]
        w = 1.0 - u - v
        centers = (w[:, None] * cs3[0] + u[:, None] * cs3[1] + v[:, None] * cs3[2])
        radii = w * rs3[0] + u * rs3[1] + v * rs3[2]
        pts = rng.uniform(-0.2, 1.2, (125, 3))
        dmat = np.linalg.norm(pts[:, None, :] - centers[None], axis=2) - radii[None]
        oracle = dmat.min(axis=1)
        for p, d_ref in zip(pts, oracle):
            got = primitive_sdf(p, "slab", [(cs3[0], rs3[0]), (cs3[1], rs3[1]),
                                            (cs3[2], rs3[2])]).distance
            worst = max(worst, abs(got - d_ref))
            queries += 1
    assert queries >= 10000
    assert worst < 1e-3

    # hash equals the exhaustive scan
    from tests.test_medial import scatter_world
    world = scatter_world(np.random.default_rng(77))
    pts = np.random.default_rng(78).uniform(0.0, 4.0, (10000, 3))
    d_h, n_h, _, i_h = world.query(pts)
    d_e, n_e, _, i_e = world.query_exhaustive(pts)
    near = d_e <= world.inflate
    np.testing.assert_array_equal(d_h[near], d_e[near])
    np.testing.assert_array_equal(i_h[near], i_e[near])

    # scripted 50-frame tool sweep: no residual penetration
    from clayworks import rigs as riglib
    cfg = parse_scene({
        "gravity": [0, 0, 0], "damping": 2.0, "boundary": "none",
        "shapes": [{"type": "box", "center": [0.5, 0.35, 0.5], "size": [0.4, 0.2, 0.4]}],
    })
    sim = Simulation(cfg)
    tool = riglib.make_cone_tool(length=0.2, tip_radius=0.015, base_radius=0.05)
    start = np.array([0.3, 0.52, 0.5])
    worst_pen = 0.0
    for frame in range(50):
        tool.pose({"tool": start + np.array([0.008 * frame, -0.0012 * frame, 0.0])},
                  frame_dt=cfg.frame_dt())
        world = sim.make_world([tool])
        for _ in range(cfg.substeps_per_frame):
            sim.substep(world)
            worst_pen = max(worst_pen, sim.max_penetration(world))
    assert worst_pen <= 1e-6
    report("contact", f"SDF oracle err {worst:.2e} on {queries} queries, hash exact, "
           f"sweep residual penetration {worst_pen:.2e}")


# ---------------------------------------------------------------------------
# [PRIMARY] localized-simulation ablation (slow)

def test_localized_ablation():
    import time
    t0 = time.perf_counter()
    r = bench_localized_ablation(particle_target=500_000, frames=40)
    wall = time.perf_counter() - t0
    assert r["particles"] >= 450_000
    assert r["region_volume_fraction"] <= (1.0 / 8.0) ** 3 + 1e-12
    assert r["frames"] * r["substeps"] >= 200
    assert r["speedup"] >= 2.0
    assert r["max_position_diff"] <= 1e-5
    assert wall < 300.0
    report("localized-ablation",
           f"{r['particles']} particles, speedup {r['speedup']:.1f}x "
           f"({r['fps_full']:.2f} -> {r['fps_localized']:.2f} FPS), near-tool diff "
           f"{r['max_position_diff']:.2e} after 200 substeps, wall {wall:.0f}s")


# ---------------------------------------------------------------------------
# [PRIMARY] refinement convergence (slow)

def test_refinement_convergence():
    r = run_convergence((32, 48, 64), frames=50)
    d1 = r["rms_diffs"]["32->48"]
    d2 = r["rms_diffs"]["48->64"]
    assert d2 < d1, r
    assert r["decreasing"]
    report("refinement-convergence",
           f"displacement diffs 32->48 {d1:.2e} > 48->64 {d2:.2e} (strictly decreasing)")


# ---------------------------------------------------------------------------
# [PRIMARY] surfacing suite

def test_surfacing_suite():
    from clayworks.seeding import seed_particles
    from clayworks.surfacing import (
        accumulate_density, edge_incidence_counts, euler_characteristic,
        extract_surfaces, laplacian_smooth, marching_cubes, surface_area,
    )
    n = 96
    dx = 1.0 / n
    g = np.arange(n) * dx
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    f = 0.3 - np.sqrt((X - 0.5) ** 2 + (Y - 0.5) ** 2 + (Z - 0.5) ** 2)
    mesh = marching_cubes(f, 0.0, dx)
    area_err = abs(surface_area(mesh) / (4 * np.pi * 0.3**2) - 1.0)
    assert area_err < 0.05
    assert euler_characteristic(mesh) == 2
    counts = edge_incidence_counts(mesh)
    assert counts.min() == counts.max() == 2

    cfg = parse_scene({"shapes": [
        {"type": "sphere", "center": [0.42, 0.5, 0.5], "radius": 0.14, "category": 0},
        {"type": "sphere", "center": [0.58, 0.5, 0.5], "radius": 0.14, "category": 1},
    ]})
    fields = accumulate_density(seed_particles(cfg), 96, 1.0)
    meshes = extract_surfaces(fields)
    assert len(meshes) == 2
    va = {tuple(np.round(v, 12)) for v in meshes[0].vertices}
    vb = {tuple(np.round(v, 12)) for v in meshes[1].vertices}
    assert not (va & vb)

    rng = np.random.default_rng(3)
    noisy = mesh.copy()
    radial = noisy.vertices - 0.5
    radial /= np.linalg.norm(radial, axis=1, keepdims=True)
    noisy.vertices = noisy.vertices + radial * rng.normal(0, 0.004, (len(noisy.vertices), 1))

    def rms(m):
        r = np.linalg.norm(m.vertices - 0.5, axis=1)
        return float(np.sqrt(np.mean((r - r.mean()) ** 2)))

    smoothed = laplacian_smooth(noisy, 5, 0.5)
    assert rms(smoothed) < rms(noisy)
    report("surfacing", f"sphere area err {area_err:.3f}, Euler 2, manifold, "
           f"2 disjoint category meshes, smoothing RMS {rms(noisy):.2e} -> {rms(smoothed):.2e}")


# ---------------------------------------------------------------------------
# [PRIMARY] separated appearance representation

def test_separated_representation_suite():
    from clayworks.appearance import splat_volumes, volume_ratio_metric
    from clayworks.types import AppearanceSet

    cfg = parse_scene({
        "gravity": [0, -9.8, 0], "damping": 0.0, "boundary": "none",
        "shapes": [{"type": "sphere", "center": [0.5, 0.6, 0.5], "radius": 0.12}],
    })
    sim = Simulation(cfg)
    k = sim.particles.count // 3
    n_tw = 1
    app = AppearanceSet(
        x=sim.particles.x[k:k + n_tw].copy(), v=sim.particles.v[k:k + n_tw].copy(),
        C=np.zeros((n_tw, 3, 3)), F=np.broadcast_to(np.eye(3), (n_tw, 3, 3)).copy(),
        cov0=np.broadcast_to(np.eye(3) * 1e-4, (n_tw, 3, 3)).copy(),
        cov=np.broadcast_to(np.eye(3) * 1e-4, (n_tw, 3, 3)).copy(),
        payload=np.zeros((n_tw, 0), dtype=np.float32),
        material_id=np.zeros(n_tw, dtype=np.int32),
        category_id=np.zeros(n_tw, dtype=np.int32), active=np.ones(n_tw, dtype=bool))
    sim.appearance = app
    worst_recon = 0.0
    for _ in range(100):
        sim.substep()
        expected = np.einsum("nij,njk,nlk->nil", app.F, app.cov0, app.F)
        worst_recon = max(worst_recon, np.abs(app.cov - expected).max()
                          / max(np.abs(expected).max(), 1e-30))
    twin_err = np.abs(app.x[0] - sim.particles.x[k]).max()
    assert twin_err < 1e-6 * cfg.domain_size
    assert worst_recon < 1e-9

    rng = np.random.default_rng(4)
    vols = rng.uniform(0.5, 9.0, 500)
    r3 = (vols / (4 * np.pi / 3)) ** (1 / 3)
    cov = np.einsum("n,ij->nij", r3**2, np.eye(3))
    app2 = AppearanceSet(
        x=np.zeros((500, 3)), v=np.zeros((500, 3)), C=np.zeros((500, 3, 3)),
        F=np.broadcast_to(np.eye(3), (500, 3, 3)).copy(), cov0=cov, cov=cov.copy(),
        payload=np.zeros((500, 0), dtype=np.float32),
        material_id=np.zeros(500, dtype=np.int32),
        category_id=np.zeros(500, dtype=np.int32), active=np.ones(500, dtype=bool))
    got = volume_ratio_metric(app2, 0.1, r=2.0)
    s = np.sort(splat_volumes(cov))
    kk = max(1, int(np.floor(0.1 * 500)))
    expected = max(np.mean(s[-kk:]) / np.mean(s[:kk]), 2.0) - 2.0
    assert got == pytest.approx(expected, rel=1e-9)
    uniform = AppearanceSet(
        x=np.zeros((50, 3)), v=np.zeros((50, 3)), C=np.zeros((50, 3, 3)),
        F=np.broadcast_to(np.eye(3), (50, 3, 3)).copy(),
        cov0=np.broadcast_to(np.eye(3), (50, 3, 3)).copy(),
        cov=np.broadcast_to(np.eye(3), (50, 3, 3)).copy(),
        payload=np.zeros((50, 0), dtype=np.float32),
        material_id=np.zeros(50, dtype=np.int32),
        category_id=np.zeros(50, dtype=np.int32), active=np.ones(50, dtype=bool))
    assert volume_ratio_metric(uniform, 0.1, r=2.0) == 0.0
    report("separated-representation",
           f"twin drift {twin_err:.2e} over 100 substeps, covariance identity "
           f"{worst_recon:.2e}, volume metric matches brute force")


# ---------------------------------------------------------------------------
# [PRIMARY] determinism

def test_determinism_suite(tmp_path):
    from clayworks.config import dump_scene
    from clayworks.interaction import JointPose, Trajectory, TrajectorySample, dump_trajectory

    doc = {
        "gravity": [0, 0, 0], "damping": 2.0, "boundary": "none",
        "surfacing": {"resolution": 64, "cadence": 2},
        "shapes": [{"type": "sphere", "center": [0.5, 0.5, 0.5], "radius": 0.14}],
    }
    scene_path = tmp_path / "scene.json"
    dump_scene(parse_scene(doc), scene_path)
    samples = [TrajectorySample(t=k * 5e-4,
                                joints={"tool/tool": JointPose(p=(0.5, 0.67 - 0.003 * k, 0.5))})
               for k in range(12)]
    traj = Trajectory(rigs={"tool": "sphere"}, samples=samples)
    traj_path = tmp_path / "traj.json"
    dump_trajectory(traj, traj_path)

    outs = []
    for name in ("d1", "d2"):
        out = tmp_path / name
        rc = cli_main(["simulate", "--scene", str(scene_path), "--trajectory",
                       str(traj_path), "--frames", "12", "--out", str(out)])
        assert rc == 0
        outs.append(out)
    identical = (outs[0] / "mesh_final.obj").read_bytes() == (outs[1] / "mesh_final.obj").read_bytes()
    metrics_identical = (outs[0] / "metrics.jsonl").read_bytes() == (outs[1] / "metrics.jsonl").read_bytes()
    assert identical and metrics_identical

    # wire replay matches the offline replay
    import threading
    import time as _time

    import uvicorn

    from clayworks.interaction import replay
    from clayworks.service.app import create_app
    from clayworks.service.client import replay_over_wire
    from clayworks.surfacing import accumulate_density, extract_surfaces, laplacian_smooth

    cfg = parse_scene(doc)
    result = replay(cfg, traj, 12)
    fields = accumulate_density(result.sim.particles, 64, cfg.domain_size)
    offline = [laplacian_smooth(m, 5, 0.5) for m in extract_surfaces(fields, None, 0.3)]

    app = create_app(cfg, mode="stepped")
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=0,
                                           log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        _time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    wire = replay_over_wire(f"ws://127.0.0.1:{port}/session", traj, 12, scene=doc)
    server.should_exit = True

    assert len(wire.meshes) == len(offline)
    worst_v = 0.0
    for mo, mw in zip(offline, wire.meshes):
        assert mo.vertices.shape == mw.vertices.shape
        np.testing.assert_array_equal(mo.triangles, mw.triangles)
        worst_v = max(worst_v, float(np.abs(mo.vertices - mw.vertices).max()))
    assert worst_v <= 1e-6
    report("determinism", f"byte-identical meshes+metrics across reruns; wire vs "
           f"offline vertex diff {worst_v:.2e}")


# ---------------------------------------------------------------------------
# [PRIMARY] throughput report (non-gating numbers, the run itself must work)

def test_throughput_report():
    rows = bench_sweep([48], [4], [5], frames=10)
    row = rows[0]
    assert row["particles"] > 0
    assert row["steps_per_s"] > 0
    phases = " ".join(f"{k}={v:.0f}ms" for k, v in row["phase_ms"].items())
    report("throughput",
           f"grid 48^3, {row['particles']} particles, 5 substeps/frame: "
           f"{row['steps_per_s']:.1f} steps/s, {row['fps']:.2f} FPS "
           f"(mean {row['mean_frame_ms']:.1f}ms, p95 {row['p95_frame_ms']:.1f}ms) | {phases}")
