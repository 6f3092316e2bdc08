"""Benchmark protocols: performance sweeps, the localized-simulation
ablation, and convergence under spatial refinement.

All reports are plain dicts ready for JSON; plotting stays external.
"""

from __future__ import annotations

import time

import numpy as np

from .config import SceneConfig, parse_scene
from .engine import Simulation
from .interaction import JointPose, Trajectory, TrajectorySample, replay
from .rigs import make_hand, make_sphere_tool
from .surfacing import accumulate_density, extract_surfaces, laplacian_smooth

BENCH_PHASES = ("p2g", "grid", "g2p", "adjust", "plasticity", "surfacing")


def bench_scene(grid: int, ppc: int, substeps: int) -> SceneConfig:
    """The reference sweep scene: one soft sphere, radius 0.3, centered."""
    return parse_scene({
        "grid_resolution": grid,
        "particles_per_cell": ppc,
        "substeps_per_frame": substeps,
        "gravity": [0.0, -9.8, 0.0],
        "boundary": "slip",
        "materials": [{"name": "clay", "mu": 1923.0, "lambda": 2885.0, "density": 1000.0,
                       "stress_model": "neo_hookean",
                       "plasticity": {"model": "von_mises", "tau_y": 200.0}}],
        "shapes": [{"type": "sphere", "center": [0.5, 0.5, 0.5], "radius": 0.3,
                    "material": "clay"}],
    })


def _make_hands() -> list:
    return [make_hand(), make_hand()]


def _pose_hands(hands: list, frame: int, frame_dt: float) -> list:
    """Bob the two hand rigs gently over the sphere."""
    for hand, (phase, x) in zip(hands, ((0.0, 0.35), (1.7, 0.65))):
        y = 0.82 + 0.01 * np.sin(0.3 * frame + phase)
        offset = np.array([x, y, 0.5])
        hand.pose({j: p + offset for j, p in hand.joints.items()}, frame_dt=frame_dt)
    return hands


def bench_sweep(grids: list[int], ppcs: list[int], substeps_list: list[int],
                frames: int = 20, surfacing: bool = True) -> list[dict]:
    """Cross-product performance sweep with phase breakdown."""
    rows = []
    for grid in grids:
        for ppc in ppcs:
            for substeps in substeps_list:
                cfg = bench_scene(grid, ppc, substeps)
                sim = Simulation(cfg)
                frame_dt = cfg.frame_dt()
                hands = _pose_hands(_make_hands(), 0, frame_dt)
                world = sim.make_world(hands)
                for _ in range(cfg.substeps_per_frame):  # warmup + kernel compile
                    sim.substep(world)
                sim.reset_phase_timers()
                frame_times = []
                surf_seconds = 0.0
                for k in range(frames):
                    t0 = time.perf_counter()
                    _pose_hands(hands, k + 1, frame_dt)
                    world = sim.make_world(hands)
                    for _ in range(cfg.substeps_per_frame):
                        sim.substep(world)
                    if surfacing and (k + 1) % cfg.surfacing.cadence == 0:
                        s0 = time.perf_counter()
                        fields = accumulate_density(sim.particles, cfg.surfacing.resolution,
                                                    cfg.domain_size)
                        meshes = extract_surfaces(fields, cfg.surfacing.iso,
                                                  cfg.surfacing.iso_fraction)
                        for m in meshes:
                            laplacian_smooth(m, cfg.surfacing.smooth_iterations,
                                             cfg.surfacing.smooth_strength)
                        surf_seconds += time.perf_counter() - s0
                    frame_times.append(time.perf_counter() - t0)
                phases = sim.reset_phase_timers()
                phases["surfacing"] = surf_seconds
                ft = np.asarray(frame_times)
                total_steps = frames * substeps
                rows.append({
                    "grid": grid, "ppc": ppc, "substeps": substeps,
                    "particles": sim.particles.count,
                    "frames": frames,
                    "mean_frame_ms": float(ft.mean() * 1e3),
                    "p95_frame_ms": float(np.percentile(ft, 95) * 1e3),
                    "fps": float(1.0 / max(ft.mean(), 1e-12)),
                    "steps_per_s": float(total_steps / ft.sum()),
                    "phase_ms": {k: float(v * 1e3) for k, v in phases.items()},
                })
    return rows


# ---------------------------------------------------------------------------
# localized-simulation ablation

def ablation_scene(particle_target: int = 500_000) -> SceneConfig:
    """Synthetic dense scene: a clay slab poked by a small sphere probe.

    Runs on a 128^3 grid so the (1/8)-side active region spans 16 cells
    and the probe's contact footprint stays >= 4 cells inside it, the
    condition under which localized and full runs must agree near the
    tool. Material and poke speed keep the elastic wave well inside the
    region for the 200-substep comparison window.
    """
    grid = 128
    ppc = 2
    side = min(0.8, (particle_target / ppc) ** (1.0 / 3.0) / grid)
    return parse_scene({
        "grid_resolution": grid,
        "particles_per_cell": ppc,
        "substeps_per_frame": 5,
        "gravity": [0.0, 0.0, 0.0],
        "damping": 5.0,
        "boundary": "slip",
        "localized": {"enabled": False, "half_side": 1.0 / 16.0},
        "materials": [{"name": "clay", "mu": 500.0, "lambda": 750.0, "density": 1000.0,
                       "stress_model": "neo_hookean",
                       "plasticity": {"model": "von_mises", "tau_y": 50.0}}],
        "shapes": [{"type": "box", "center": [0.5, 0.5, 0.5],
                    "size": [side, side, side], "material": "clay"}],
    })


ABLATION_TOOL_RADIUS = 0.015


def ablation_slab_top(cfg: SceneConfig) -> float:
    return cfg.shapes[0].center[1] + 0.5 * cfg.shapes[0].size[1]


def _pose_poke(tool, frame: int, frame_dt: float, slab_top: float) -> None:
    # start just above the surface, indent by well under one cell overall
    y = slab_top + ABLATION_TOOL_RADIUS + 0.0005 - 0.00015 * frame
    tool.pose({"tool": np.array([0.5, y, 0.5])}, frame_dt=frame_dt)


def _run_poke(cfg: SceneConfig, frames: int) -> tuple[Simulation, list[float]]:
    slab_top = ablation_slab_top(cfg)
    sim = Simulation(cfg)
    frame_dt = cfg.frame_dt()
    tool = make_sphere_tool(ABLATION_TOOL_RADIUS)
    _pose_poke(tool, 0, frame_dt, slab_top)
    world = sim.make_world([tool])
    sim.update_active_region([tool])
    sim.substep(world)  # warmup/compile outside the timed frames
    sim2 = Simulation(cfg)
    tool = make_sphere_tool(ABLATION_TOOL_RADIUS)
    times = []
    for k in range(frames):
        t0 = time.perf_counter()
        _pose_poke(tool, k, frame_dt, slab_top)
        sim2.update_active_region([tool])
        world = sim2.make_world([tool])
        for _ in range(cfg.substeps_per_frame):
            sim2.substep(world)
        times.append(time.perf_counter() - t0)
    return sim2, times


def bench_localized_ablation(particle_target: int = 500_000, frames: int = 40) -> dict:
    """Full vs localized run of the synthetic dense scene.

    Returns frame times for both modes, the speedup, and the maximum
    position difference near the tool after frames * substeps substeps.
    """
    cfg_full = ablation_scene(particle_target)
    sim_full, t_full = _run_poke(cfg_full, frames)

    cfg_loc = cfg_full.model_copy(deep=True)
    cfg_loc.localized.enabled = True
    sim_loc, t_loc = _run_poke(cfg_loc, frames)

    # compare particles near the tool (contact zone at the slab top)
    tool_center = np.array([0.5, ablation_slab_top(cfg_full), 0.5])
    near = np.linalg.norm(sim_full.particles.x - tool_center, axis=1) < 0.04
    diff = np.abs(sim_loc.particles.x[near] - sim_full.particles.x[near])
    region_cells = np.prod(sim_loc.region.hi - sim_loc.region.lo) if sim_loc.region else 0
    mean_full = float(np.mean(t_full))
    mean_loc = float(np.mean(t_loc))
    return {
        "particles": sim_full.particles.count,
        "frames": frames,
        "substeps": cfg_full.substeps_per_frame,
        "region_half_side": cfg_loc.localized.half_side,
        "region_volume_fraction": float((2 * cfg_loc.localized.half_side) ** 3),
        "active_particles_localized": int(sim_loc.particles.active.sum()),
        "mean_frame_s_full": mean_full,
        "mean_frame_s_localized": mean_loc,
        "fps_full": 1.0 / mean_full,
        "fps_localized": 1.0 / mean_loc,
        "speedup": mean_full / mean_loc,
        "near_tool_particles": int(near.sum()),
        "max_position_diff": float(diff.max()) if diff.size else 0.0,
        "region_cells": int(region_cells),
    }


# ---------------------------------------------------------------------------
# convergence under spatial refinement

def press_trajectory(frames: int = 50, descent: float = 0.0035) -> Trajectory:
    """Palm press: the articulated hand descends palm-first onto the sphere."""
    hand = make_hand()
    samples = []
    for k in range(frames):
        t = k * 5e-4
        y = 0.86 - descent * k
        joints = {f"hand/{j}": JointPose(p=tuple(p + np.array([0.5, y, 0.42])))
                  for j, p in hand.joints.items()}
        samples.append(TrajectorySample(t=t, joints=joints))
    return Trajectory(rigs={"hand": "hand"}, samples=samples)


def convergence_scene(grid: int) -> SceneConfig:
    return parse_scene({
        "grid_resolution": grid,
        "dt": 1e-4,  # pinned across grids so only spatial resolution varies
        "substeps_per_frame": 5,
        "gravity": [0.0, 0.0, 0.0],
        "damping": 2.0,
        "boundary": "none",
        "materials": [{"name": "clay", "mu": 1923.0, "lambda": 2885.0, "density": 1000.0,
                       "stress_model": "neo_hookean",
                       "plasticity": {"model": "von_mises", "tau_y": 150.0}}],
        "shapes": [{"type": "sphere", "center": [0.5, 0.5, 0.5], "radius": 0.3,
                    "material": "clay"}],
    })


def displacement_field(sim: Simulation, x0: np.ndarray, probes: np.ndarray,
                       kernel_radius: float) -> np.ndarray:
    """Kernel-weighted particle displacement sampled on a fixed probe lattice.

    Weights use initial particle positions, so fields from runs with
    different particle sets are directly comparable.
    """
    disp = sim.particles.x - x0
    out = np.zeros((probes.shape[0], 3))
    wsum = np.zeros(probes.shape[0])
    for i, q in enumerate(probes):
        d2 = np.sum((x0 - q) ** 2, axis=1)
        s2 = d2 / kernel_radius**2
        w = np.maximum(0.0, 1.0 - s2) ** 2
        ws = w.sum()
        if ws > 0:
            out[i] = (w[:, None] * disp).sum(axis=0) / ws
            wsum[i] = ws
    out[wsum == 0] = 0.0
    return out


def probe_lattice(n: int = 12, center=(0.5, 0.5, 0.5), half: float = 0.3) -> np.ndarray:
    g = np.linspace(-half, half, n)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1).reshape(-1, 3) + np.asarray(center)
    keep = np.linalg.norm(pts - np.asarray(center), axis=1) <= half
    return pts[keep]


def run_convergence(grids=(32, 48, 64), frames: int = 50) -> dict:
    """Replay the palm press at several grids; report successive
    displacement-field differences (they shrink as the grid refines)."""
    traj = press_trajectory(frames)
    probes = probe_lattice()
    fields = {}
    for grid in grids:
        cfg = convergence_scene(grid)
        sim0 = Simulation(cfg)
        x0 = sim0.particles.x.copy()
        result = replay(cfg, traj, frames, sim=sim0)
        fields[grid] = displacement_field(result.sim, x0, probes, kernel_radius=2.0 / 32)
    diffs = {}
    pairs = list(zip(grids[:-1], grids[1:]))
    for a, b in pairs:
        diffs[f"{a}->{b}"] = float(np.sqrt(np.mean((fields[b] - fields[a]) ** 2)))
    return {
        "grids": list(grids),
        "frames": frames,
        "probe_count": probes.shape[0],
        "rms_diffs": diffs,
        "decreasing": all(diffs[f"{pairs[i][0]}->{pairs[i][1]}"]
                          > diffs[f"{pairs[i + 1][0]}->{pairs[i + 1][1]}"]
                          for i in range(len(pairs) - 1)),
    }
