"""Procedurally authored tool and hand rigs.

The shipped tools: sphere probe, rod (capsule), tapered cone, plate (two
slabs over a quad) and scissors (two hinged slabs). The hand is a
simplified articulated skeleton: a two-slab palm plus one cone per
finger, posable joint by joint from trajectory or live tracking data.
Rest poses are authored around the origin; callers place them via joint
maps or rigid transforms.
"""

from __future__ import annotations

import numpy as np

from .medial import MedialRig, RigPrimitive, RigSphere


def make_sphere_tool(radius: float = 0.06) -> MedialRig:
    return MedialRig(
        name="sphere",
        joints={"tool": np.zeros(3)},
        spheres=[RigSphere("tool", (0.0, 0.0, 0.0), radius)],
        primitives=[RigPrimitive("sphere", (0,))],
    )


def make_rod(length: float = 0.3, radius: float = 0.02) -> MedialRig:
    h = 0.5 * length
    return MedialRig(
        name="rod",
        joints={"tool": np.zeros(3)},
        spheres=[RigSphere("tool", (0.0, -h, 0.0), radius),
                 RigSphere("tool", (0.0, h, 0.0), radius)],
        primitives=[RigPrimitive("cone", (0, 1))],
    )


def make_cone_tool(length: float = 0.25, tip_radius: float = 0.008,
                   base_radius: float = 0.05) -> MedialRig:
    h = 0.5 * length
    return MedialRig(
        name="cone",
        joints={"tool": np.zeros(3)},
        spheres=[RigSphere("tool", (0.0, -h, 0.0), tip_radius),
                 RigSphere("tool", (0.0, h, 0.0), base_radius)],
        primitives=[RigPrimitive("cone", (0, 1))],
    )


def make_plate(width: float = 0.25, thickness: float = 0.02) -> MedialRig:
    """Flat square plate in the local x-z plane: four corner spheres, two slabs."""
    h = 0.5 * width
    r = 0.5 * thickness
    corners = [(-h, 0.0, -h), (h, 0.0, -h), (h, 0.0, h), (-h, 0.0, h)]
    return MedialRig(
        name="plate",
        joints={"tool": np.zeros(3)},
        spheres=[RigSphere("tool", c, r) for c in corners],
        primitives=[RigPrimitive("slab", (0, 1, 2)), RigPrimitive("slab", (0, 2, 3))],
    )


def make_scissors(blade_length: float = 0.18, blade_width: float = 0.05,
                  thickness: float = 0.006) -> MedialRig:
    """Two thin triangular slabs hinged at a shared pivot joint.

    Each blade binds to its own joint so opening/closing is a rotation of
    blade_a / blade_b about the pivot.
    """
    r = 0.5 * thickness
    hw = 0.5 * blade_width

    def blade(joint: str) -> list[RigSphere]:
        return [RigSphere(joint, (0.0, 0.0, 0.0), r),
                RigSphere(joint, (blade_length, 0.0, -hw), r),
                RigSphere(joint, (blade_length, 0.0, hw), r)]

    return MedialRig(
        name="scissors",
        joints={"blade_a": np.zeros(3), "blade_b": np.zeros(3)},
        spheres=blade("blade_a") + blade("blade_b"),
        primitives=[RigPrimitive("slab", (0, 1, 2)), RigPrimitive("slab", (3, 4, 5))],
    )


_FINGERS = ("thumb", "index", "middle", "ring", "pinky")


def make_hand(scale: float = 1.0) -> MedialRig:
    """Simplified articulated hand: two palm slabs plus five finger cones.

    Joints: wrist, <finger>_mcp (knuckles) and <finger>_tip, all posable
    independently. Authored palm-down around the origin; x spans the
    knuckle row, fingers extend along +z.
    """
    s = scale
    palm_r = 0.016 * s
    knuckles = {
        "thumb": (-0.045, 0.0, 0.01),
        "index": (-0.025, 0.0, 0.045),
        "middle": (0.0, 0.0, 0.05),
        "ring": (0.025, 0.0, 0.045),
        "pinky": (0.045, 0.0, 0.035),
    }
    lengths = {"thumb": 0.05, "index": 0.07, "middle": 0.08, "ring": 0.07, "pinky": 0.055}
    joints: dict[str, np.ndarray] = {"wrist": np.array([0.0, 0.0, -0.05]) * s}
    spheres: list[RigSphere] = [RigSphere("wrist", (0.0, 0.0, 0.0), palm_r)]
    prims: list[RigPrimitive] = []
    tip_r = 0.009 * s
    for f in _FINGERS:
        kx, ky, kz = knuckles[f]
        joints[f + "_mcp"] = np.array([kx, ky, kz]) * s
        joints[f + "_tip"] = np.array([kx, ky, kz + lengths[f]]) * s
        spheres.append(RigSphere(f + "_mcp", (0.0, 0.0, 0.0), 0.012 * s))
        spheres.append(RigSphere(f + "_tip", (0.0, 0.0, 0.0), tip_r))
    # palm: wrist + knuckle fans (sphere indices: wrist=0, mcp of finger i = 1+2i)
    prims.append(RigPrimitive("slab", (0, 1, 5)))    # wrist, thumb_mcp, middle_mcp
    prims.append(RigPrimitive("slab", (0, 5, 9)))    # wrist, middle_mcp, pinky_mcp
    for i in range(5):
        prims.append(RigPrimitive("cone", (1 + 2 * i, 2 + 2 * i)))
    return MedialRig(name="hand", joints=joints, spheres=spheres, primitives=prims)


_BUILDERS = {
    "sphere": make_sphere_tool,
    "rod": make_rod,
    "cone": make_cone_tool,
    "plate": make_plate,
    "scissors": make_scissors,
    "hand": make_hand,
}


def make_rig(name: str) -> MedialRig:
    if name not in _BUILDERS:
        raise KeyError(f"unknown rig {name!r}; available: {sorted(_BUILDERS)}")
    return _BUILDERS[name]()


def available_rigs() -> list[str]:
    return sorted(_BUILDERS)
