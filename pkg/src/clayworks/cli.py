"""Command-line entry points.

Offline commands (simulate, bench, convergence, export, diff-mesh) drive
the engine in-process; serve boots the FastAPI session service; client
subcommands talk to a running service over the wire.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as benchmod
from .config import SceneConfig, SceneError, load_scene
from .engine import Simulation
from .interaction import Trajectory, TrajectoryError, load_trajectory, replay, dump_trajectory
from .snapshots import load_snapshot_file, save_snapshot_file, take_snapshot
from .surfacing import (
    accumulate_density,
    export_meshes,
    extract_surfaces,
    import_obj,
    import_ply,
    laplacian_smooth,
)


def _load_scene_arg(args) -> SceneConfig:
    cfg = load_scene(args.scene) if args.scene else SceneConfig(shapes=[])
    overrides = {}
    if getattr(args, "grid", None):
        overrides["grid_resolution"] = args.grid
    if getattr(args, "ppc", None):
        overrides["particles_per_cell"] = args.ppc
    if getattr(args, "substeps", None):
        overrides["substeps_per_frame"] = args.substeps
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = cfg.model_copy(update=overrides)
    if getattr(args, "localized", None) is True:
        cfg.localized.enabled = True
    elif getattr(args, "full", None) is True:
        cfg.localized.enabled = False
    return cfg


def _surface(sim: Simulation, cfg: SceneConfig):
    fields = accumulate_density(sim.particles, cfg.surfacing.resolution, cfg.domain_size)
    meshes = extract_surfaces(fields, cfg.surfacing.iso, cfg.surfacing.iso_fraction)
    return [laplacian_smooth(m, cfg.surfacing.smooth_iterations,
                             cfg.surfacing.smooth_strength) for m in meshes]


def cmd_simulate(args) -> int:
    cfg = _load_scene_arg(args)
    traj = load_trajectory(args.trajectory) if args.trajectory else Trajectory(samples=[])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fmt = args.format
    sim = Simulation(cfg)
    x0 = sim.particles.x.copy()

    exports: list[Path] = []

    def on_frame(k, s, world):
        if args.export_every and (k + 1) % args.export_every == 0:
            path = out / f"mesh_{k + 1:06d}.{fmt}"
            export_meshes(_surface(s, cfg), fmt, path)
            exports.append(path)

    result = replay(cfg, traj, args.frames, sim=sim, on_frame=on_frame)

    final = out / f"mesh_final.{fmt}"
    export_meshes(_surface(result.sim, cfg), fmt, final)
    exports.append(final)

    with (out / "metrics.jsonl").open("w") as f:
        for row in result.metrics_rows():
            f.write(json.dumps(row, sort_keys=True) + "\n")
    with (out / "timings.jsonl").open("w") as f:
        for k, sec in enumerate(result.frame_seconds):
            f.write(json.dumps({"frame": k, "frame_s": sec}) + "\n")

    if args.probes:
        probes = benchmod.probe_lattice()
        disp = benchmod.displacement_field(result.sim, x0, probes,
                                           kernel_radius=2.0 / 32)
        np.savez(args.probes, probes=probes, displacement=disp)

    snap_path = out / "final_state.snapshot"
    save_snapshot_file(take_snapshot(result.sim, 0, result.sim.time), snap_path)
    print(f"simulated {args.frames} frames, {result.sim.particles.count} particles")
    for p in exports:
        print(f"  wrote {p}")
    print(f"  wrote {out / 'metrics.jsonl'}")
    return 0


def cmd_bench(args) -> int:
    if args.ablation:
        report = benchmod.bench_localized_ablation(particle_target=args.particles,
                                                   frames=args.frames)
        print(json.dumps(report, indent=2))
    else:
        rows = benchmod.bench_sweep(args.grids, args.ppcs, args.substeps,
                                    frames=args.frames)
        report = {"sweep": rows}
        for r in rows:
            phase = " ".join(f"{k}={v:.0f}ms" for k, v in r["phase_ms"].items())
            print(f"grid={r['grid']} ppc={r['ppc']} substeps={r['substeps']} "
                  f"particles={r['particles']} mean={r['mean_frame_ms']:.1f}ms "
                  f"p95={r['p95_frame_ms']:.1f}ms steps/s={r['steps_per_s']:.1f} | {phase}")
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2))
        print(f"wrote {args.out}")
    return 0


def cmd_convergence(args) -> int:
    report = benchmod.run_convergence(tuple(args.grids), frames=args.frames)
    print(json.dumps(report, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2))
    return 0 if report["decreasing"] else 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    cfg = _load_scene_arg(args)
    app = create_app(cfg, mode=args.mode, fps=args.fps,
                     autosave_interval=args.autosave_interval,
                     snapshot_dir=args.snapshot_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    if args.record:
        dump_trajectory(app.state.session.recorded_trajectory(), args.record)
        print(f"recorded input timeline -> {args.record}")
    return 0


def cmd_export(args) -> int:
    snap = load_snapshot_file(args.snapshot)
    cfg = load_scene(args.scene) if args.scene else SceneConfig(shapes=[])
    if args.resolution:
        cfg.surfacing.resolution = args.resolution
    fields = accumulate_density(snap.particles, cfg.surfacing.resolution, cfg.domain_size)
    meshes = extract_surfaces(fields, args.iso if args.iso else cfg.surfacing.iso,
                              cfg.surfacing.iso_fraction)
    meshes = [laplacian_smooth(m, cfg.surfacing.smooth_iterations,
                               cfg.surfacing.smooth_strength) for m in meshes]
    export_meshes(meshes, args.format, args.out)
    print(f"wrote {args.out} ({sum(m.triangles.shape[0] for m in meshes)} triangles)")
    return 0


def _load_mesh_vertices(path: str) -> np.ndarray:
    p = Path(path)
    meshes = import_ply(p) if p.suffix.lower() == ".ply" else import_obj(p)
    if not meshes:
        return np.zeros((0, 3))
    return np.concatenate([m.vertices for m in meshes])


def cmd_diff_mesh(args) -> int:
    from scipy.spatial import cKDTree

    va = _load_mesh_vertices(args.mesh_a)
    vb = _load_mesh_vertices(args.mesh_b)
    if va.shape[0] == 0 and vb.shape[0] == 0:
        print("max vertex distance: 0 (both meshes empty)")
        return 0
    if va.shape[0] == 0 or vb.shape[0] == 0:
        print("one mesh is empty, the other is not")
        return 1
    d_ab = cKDTree(vb).query(va)[0].max()
    d_ba = cKDTree(va).query(vb)[0].max()
    worst = float(max(d_ab, d_ba))
    print(f"max vertex distance: {worst:.3e} (tolerance {args.tol:.3e})")
    return 0 if worst <= args.tol else 1


def cmd_client_replay(args) -> int:
    from .service.client import replay_over_wire

    traj = load_trajectory(args.trajectory)
    scene = json.loads(Path(args.scene).read_text()) if args.scene else None
    frames = args.frames if args.frames else len(traj.samples)
    result = replay_over_wire(args.url, traj, frames, scene=scene)
    export_meshes(result.meshes, args.format, args.out)
    print(f"replayed {result.frames} frames over the wire; "
          f"mesh from frame {result.mesh_frame_index} -> {args.out}")
    return 0


def cmd_demo(args) -> int:
    """Write a ready-to-run demo scene and press trajectory."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = benchmod.convergence_scene(64)
    (out / "scene.json").write_text(scene.model_dump_json(indent=2, by_alias=True))
    dump_trajectory(benchmod.press_trajectory(frames=60), out / "press.json")
    print(f"wrote {out / 'scene.json'} and {out / 'press.json'}")
    print("try: clayworks simulate --scene scene.json --trajectory press.json "
          "--frames 60 --out run/")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clayworks",
                                description="elastoplastic clay sculpting engine")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="offline trajectory replay with mesh export")
    sim.add_argument("--scene", help="scene JSON file")
    sim.add_argument("--trajectory", help="trajectory JSON file")
    sim.add_argument("--frames", type=int, required=True)
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--export-every", type=int, default=0,
                     help="export a mesh every N frames (0: final only)")
    sim.add_argument("--format", choices=("obj", "ply"), default="obj")
    sim.add_argument("--grid", type=int, help="override grid resolution")
    sim.add_argument("--ppc", type=int, help="override particles per cell")
    sim.add_argument("--substeps", type=int, help="override substeps per frame")
    sim.add_argument("--seed", type=int, help="override scene seed")
    sim.add_argument("--probes", help="write a displacement probe field (.npz)")
    mode = sim.add_mutually_exclusive_group()
    mode.add_argument("--localized", action="store_true", default=None)
    mode.add_argument("--full", action="store_true", default=None)
    sim.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="performance sweeps and the localized ablation")
    b.add_argument("--grids", type=int, nargs="+", default=[48])
    b.add_argument("--ppcs", type=int, nargs="+", default=[8])
    b.add_argument("--substeps", type=int, nargs="+", default=[5])
    b.add_argument("--frames", type=int, default=20)
    b.add_argument("--ablation", action="store_true",
                   help="run the localized-vs-full comparison instead of the sweep")
    b.add_argument("--particles", type=int, default=500_000,
                   help="particle count target for --ablation")
    b.add_argument("--out", help="write the JSON report here")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("convergence", help="palm press at several grid resolutions")
    c.add_argument("--grids", type=int, nargs="+", default=[32, 48, 64])
    c.add_argument("--frames", type=int, default=50)
    c.add_argument("--out")
    c.set_defaults(func=cmd_convergence)

    s = sub.add_parser("serve", help="run the live session service")
    s.add_argument("--scene")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8765)
    s.add_argument("--mode", choices=("realtime", "stepped"), default="realtime")
    s.add_argument("--fps", type=float, default=30.0)
    s.add_argument("--autosave-interval", type=float, default=10.0)
    s.add_argument("--record", help="write the session input timeline to this "
                   "trajectory file on shutdown")
    s.add_argument("--snapshot-dir", help="also persist autosaves/snapshots here "
                   "(restorable after a ring eviction)")
    s.add_argument("--grid", type=int)
    s.add_argument("--ppc", type=int)
    s.add_argument("--substeps", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_serve)

    e = sub.add_parser("export", help="snapshot file to mesh")
    e.add_argument("--snapshot", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--format", choices=("obj", "ply"), default="obj")
    e.add_argument("--scene", help="scene for surfacing parameters")
    e.add_argument("--resolution", type=int)
    e.add_argument("--iso", type=float)
    e.set_defaults(func=cmd_export)

    d = sub.add_parser("diff-mesh", help="max nearest-neighbor vertex distance")
    d.add_argument("mesh_a")
    d.add_argument("mesh_b")
    d.add_argument("--tol", type=float, default=1e-6)
    d.set_defaults(func=cmd_diff_mesh)

    cl = sub.add_parser("client", help="scripted clients for a running service")
    clsub = cl.add_subparsers(dest="client_command", required=True)
    cr = clsub.add_parser("replay", help="replay a trajectory over the wire")
    cr.add_argument("--url", default="ws://127.0.0.1:8765/session")
    cr.add_argument("--trajectory", required=True)
    cr.add_argument("--frames", type=int)
    cr.add_argument("--scene")
    cr.add_argument("--out", required=True)
    cr.add_argument("--format", choices=("obj", "ply"), default="obj")
    cr.set_defaults(func=cmd_client_replay)

    demo = sub.add_parser("demo", help="write a demo scene and trajectory")
    demo.add_argument("--out", default="demo")
    demo.set_defaults(func=cmd_demo)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SceneError, TrajectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
