"""Primitive-composed shape models of the lab objects and their meshes.

Each shape is a list of solid primitives with part-local poses; object frames
put the base of the object at z=0 with +z up.  Tessellation produces indexed
triangle meshes that are watertight per part (every edge shared by exactly
two triangles), which the depth renderer and collision margins rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from lucidlab.geometry import Frame, Pose6D, Symmetry

ML_PER_M3 = 1e6


class ShapeError(ValueError):
    """Raised for degenerate primitive dimensions."""


# ---------------------------------------------------------------------------
# primitives

@dataclass(frozen=True)
class Cylinder:
    """Solid cylinder, or an open-top cup when wall > 0 (hollow vessels)."""

    radius: float
    height: float
    wall: float = 0.0

    def _check(self):
        if self.radius <= 0 or self.height <= 0:
            raise ShapeError(f"degenerate cylinder: {self}")
        if self.wall < 0 or self.wall >= self.radius:
            raise ShapeError(f"cup wall must be within (0, radius): {self}")


@dataclass(frozen=True)
class ConeFrustum:
    """Solid cone frustum, or an open-top cup when wall > 0."""

    r_bottom: float
    r_top: float
    height: float
    wall: float = 0.0

    def _check(self):
        if self.r_bottom <= 0 or self.r_top <= 0 or self.height <= 0:
            raise ShapeError(f"degenerate frustum: {self}")
        if self.wall < 0 or self.wall >= min(self.r_bottom, self.r_top):
            raise ShapeError(f"cup wall must be within (0, min radius): {self}")


@dataclass(frozen=True)
class Box:
    dx: float
    dy: float
    dz: float

    def _check(self):
        if self.dx <= 0 or self.dy <= 0 or self.dz <= 0:
            raise ShapeError(f"degenerate box: {self}")


@dataclass(frozen=True)
class TubeRack:
    """Box body with a rows x cols grid of socket bosses on top."""

    dx: float
    dy: float
    dz: float
    rows: int
    cols: int
    hole_radius: float
    boss_height: float = 0.008

    def _check(self):
        if min(self.dx, self.dy, self.dz, self.hole_radius, self.boss_height) <= 0:
            raise ShapeError(f"degenerate tube rack: {self}")
        if self.rows < 1 or self.cols < 1:
            raise ShapeError("tube rack needs at least one hole")


Primitive = Cylinder | ConeFrustum | Box | TubeRack


@dataclass(frozen=True)
class ShapePart:
    primitive: Primitive
    pose: Pose6D = field(default_factory=lambda: Pose6D.identity(Frame.OBJECT))


@dataclass(frozen=True)
class ShapeModel:
    parts: tuple[ShapePart, ...]
    symmetry: Symmetry = field(default_factory=Symmetry.none)

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        for part in self.parts:
            part.primitive._check()


# ---------------------------------------------------------------------------
# tessellation

@dataclass(frozen=True)
class Mesh:
    """Indexed triangle mesh; faces are (M,3) vertex indices."""

    vertices: np.ndarray
    faces: np.ndarray

    def transformed(self, pose: Pose6D) -> "Mesh":
        return Mesh(pose.transform_points(self.vertices), self.faces)

    def triangles(self) -> np.ndarray:
        """(M, 3, 3) triangle vertex array for the rasterizer."""
        return np.ascontiguousarray(self.vertices[self.faces])


def _merge(meshes: list[Mesh]) -> Mesh:
    verts, faces, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += len(m.vertices)
    return Mesh(np.vstack(verts), np.vstack(faces).astype(np.int64))


def _frustum_mesh(r_bottom: float, r_top: float, height: float, n: int) -> Mesh:
    """Closed surface of revolution: base at z=0, top at z=height; 4n faces."""
    ang = 2.0 * np.pi * np.arange(n) / n
    cos, sin = np.cos(ang), np.sin(ang)
    bottom = np.column_stack([r_bottom * cos, r_bottom * sin, np.zeros(n)])
    top = np.column_stack([r_top * cos, r_top * sin, np.full(n, height)])
    verts = np.vstack([bottom, top, [[0, 0, 0]], [[0, 0, height]]])
    bc, tc = 2 * n, 2 * n + 1
    faces = []
    for i in range(n):
        j = (i + 1) % n
        faces.append([i, j, n + i])          # side lower
        faces.append([j, n + j, n + i])      # side upper
        faces.append([bc, j, i])             # bottom fan (faces -z)
        faces.append([tc, n + i, n + j])     # top fan (faces +z)
    return Mesh(verts, np.array(faces, dtype=np.int64))


def _cup_mesh(r_bottom: float, r_top: float, height: float, wall: float,
              n: int) -> Mesh:
    """Open-top vessel: outer shell, rim annulus, inner wall, inner floor."""
    ang = 2.0 * np.pi * np.arange(n) / n
    cos, sin = np.cos(ang), np.sin(ang)
    base = wall  # floor thickness
    ri_top = r_top - wall
    ri_bot = r_bottom - wall

    def ring(r, z):
        return np.column_stack([r * cos, r * sin, np.full(n, z)])

    rings = [ring(r_bottom, 0.0),            # 0: outer bottom
             ring(r_top, height),            # 1: outer top
             ring(ri_top, height),           # 2: inner top
             ring(ri_bot, base)]             # 3: inner floor edge
    verts = np.vstack(rings + [[[0, 0, 0]], [[0, 0, base]]])
    bc, fc = 4 * n, 4 * n + 1
    faces = []
    for i in range(n):
        j = (i + 1) % n
        for lower, upper in ((0, 1), (1, 2), (2, 3)):   # outer, rim, inner wall
            a, b = lower * n + i, lower * n + j
            c, d = upper * n + i, upper * n + j
            faces.append([a, b, c])
            faces.append([b, d, c])
        faces.append([bc, j, i])                       # outer bottom fan
        faces.append([fc, 3 * n + i, 3 * n + j])       # inner floor fan
    return Mesh(verts, np.array(faces, dtype=np.int64))


def _box_mesh(dx: float, dy: float, dz: float) -> Mesh:
    x, y = dx / 2.0, dy / 2.0
    verts = np.array([[-x, -y, 0], [x, -y, 0], [x, y, 0], [-x, y, 0],
                      [-x, -y, dz], [x, -y, dz], [x, y, dz], [-x, y, dz]])
    faces = np.array([
        [0, 2, 1], [0, 3, 2],              # bottom
        [4, 5, 6], [4, 6, 7],              # top
        [0, 1, 5], [0, 5, 4],              # -y
        [1, 2, 6], [1, 6, 5],              # +x
        [2, 3, 7], [2, 7, 6],              # +y
        [3, 0, 4], [3, 4, 7],              # -x
    ], dtype=np.int64)
    return Mesh(verts, faces)


def _rack_hole_centers(rack: TubeRack) -> np.ndarray:
    xs = (np.arange(rack.cols) - (rack.cols - 1) / 2.0) * (rack.dx * 0.8 / max(rack.cols - 1, 1) if rack.cols > 1 else 0.0)
    ys = (np.arange(rack.rows) - (rack.rows - 1) / 2.0) * (rack.dy * 0.8 / max(rack.rows - 1, 1) if rack.rows > 1 else 0.0)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def _rack_mesh(rack: TubeRack, n: int) -> Mesh:
    meshes = [_box_mesh(rack.dx, rack.dy, rack.dz)]
    for hx, hy in _rack_hole_centers(rack):
        boss = _frustum_mesh(rack.hole_radius, rack.hole_radius, rack.boss_height, n)
        meshes.append(Mesh(boss.vertices + np.array([hx, hy, rack.dz]), boss.faces))
    return _merge(meshes)


def tessellate(shape: ShapeModel, resolution: int = 16) -> Mesh:
    """Triangle mesh of all parts in the object frame.

    resolution = segments per revolution; must be >= 8.  Vertex count grows
    linearly with resolution for curved primitives.
    """
    if resolution < 8:
        raise ShapeError("resolution must be >= 8 segments per revolution")
    meshes = []
    for part in shape.parts:
        prim = part.primitive
        prim._check()
        if isinstance(prim, Cylinder):
            if prim.wall > 0:
                m = _cup_mesh(prim.radius, prim.radius, prim.height, prim.wall,
                              resolution)
            else:
                m = _frustum_mesh(prim.radius, prim.radius, prim.height, resolution)
        elif isinstance(prim, ConeFrustum):
            if prim.wall > 0:
                m = _cup_mesh(prim.r_bottom, prim.r_top, prim.height, prim.wall,
                              resolution)
            else:
                m = _frustum_mesh(prim.r_bottom, prim.r_top, prim.height, resolution)
        elif isinstance(prim, Box):
            m = _box_mesh(prim.dx, prim.dy, prim.dz)
        elif isinstance(prim, TubeRack):
            m = _rack_mesh(prim, resolution)
        else:
            raise ShapeError(f"unknown primitive {type(prim).__name__}")
        meshes.append(m.transformed(part.pose))
    return _merge(meshes)


def is_watertight(mesh: Mesh) -> bool:
    """True when every undirected edge is shared by exactly two faces."""
    edges = {}
    for a, b, c in mesh.faces:
        for e in ((a, b), (b, c), (c, a)):
            key = (min(e), max(e))
            edges[key] = edges.get(key, 0) + 1
    return all(v == 2 for v in edges.values())


def shape_height(shape: ShapeModel) -> float:
    return float(tessellate(shape, 8).vertices[:, 2].max())


def footprint_radius(shape: ShapeModel) -> float:
    """Max radial distance of the surface from the object z axis."""
    v = tessellate(shape, 32).vertices
    return float(np.hypot(v[:, 0], v[:, 1]).max())


def width_at_height(shape: ShapeModel, z: float) -> float:
    """Graspable width (m) of the outer surface at object-frame height z."""
    widths = []
    for part in shape.parts:
        prim = part.primitive
        z0 = part.pose.position[2]
        if isinstance(prim, (Cylinder, ConeFrustum)):
            h = prim.height
            if z0 <= z <= z0 + h:
                if isinstance(prim, Cylinder):
                    widths.append(2.0 * prim.radius)
                else:
                    t = (z - z0) / h
                    widths.append(2.0 * (prim.r_bottom + t * (prim.r_top - prim.r_bottom)))
        elif isinstance(prim, (Box, TubeRack)):
            if z0 <= z <= z0 + prim.dz:
                widths.append(min(prim.dx, prim.dy))
    if not widths:
        raise ShapeError(f"no part spans height {z}")
    return max(widths)


# ---------------------------------------------------------------------------
# cavity geometry (liquid volume <-> fill height)

def _cavity_segments(shape: ShapeModel) -> list[tuple[float, float, float, float]]:
    """(z0, z1, r0, r1) of the stacked axial cavities, sorted by z.

    Cavity geometry uses the primitive outer dimensions (wall thickness is a
    rendering detail); only the rim opening accounts for the wall.
    """
    segs = []
    for part in shape.parts:
        prim = part.primitive
        z0 = float(part.pose.position[2])
        if isinstance(prim, Cylinder):
            segs.append((z0, z0 + prim.height, prim.radius, prim.radius))
        elif isinstance(prim, ConeFrustum):
            segs.append((z0, z0 + prim.height, prim.r_bottom, prim.r_top))
    if not segs:
        raise ShapeError("shape has no axial cavity")
    return sorted(segs)


def cavity_height(shape: ShapeModel) -> float:
    segs = _cavity_segments(shape)
    return segs[-1][1] - segs[0][0]


def rim_radius(shape: ShapeModel) -> float:
    """Opening radius at the topmost cavity rim (inner radius for cups)."""
    best_z, best_r = None, None
    for part in shape.parts:
        prim = part.primitive
        if not isinstance(prim, (Cylinder, ConeFrustum)):
            continue
        top_z = float(part.pose.position[2]) + prim.height
        r_top = prim.radius if isinstance(prim, Cylinder) else prim.r_top
        if best_z is None or top_z > best_z:
            best_z, best_r = top_z, r_top - prim.wall
    if best_r is None:
        raise ShapeError("shape has no axial cavity")
    return best_r


def volume_at_height(shape: ShapeModel, height: float) -> float:
    """Liquid volume (ml) when filled to `height` above the cavity bottom."""
    segs = _cavity_segments(shape)
    zb = segs[0][0]
    level = zb + max(0.0, height)
    total = 0.0
    for z0, z1, r0, r1 in segs:
        t = min(level, z1)
        if t <= z0:
            continue
        rt = r0 + (r1 - r0) * (t - z0) / (z1 - z0)
        total += np.pi / 3.0 * (t - z0) * (r0 * r0 + r0 * rt + rt * rt)
    return float(total * ML_PER_M3)


def height_for_volume(shape: ShapeModel, volume_ml: float) -> float:
    """Fill height (m) above the cavity bottom holding volume_ml; inverse of
    volume_at_height to well below 1e-9 ml."""
    if volume_ml < 0:
        raise ShapeError("volume must be nonnegative")
    hmax = cavity_height(shape)
    vmax = volume_at_height(shape, hmax)
    if volume_ml > vmax + 1e-9:
        raise ShapeError(f"volume {volume_ml} ml exceeds cavity capacity {vmax:.3f} ml")
    lo, hi = 0.0, hmax
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if volume_at_height(shape, mid) < volume_ml:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# the seven object classes

class ObjectClass(IntEnum):
    FLASK = 1
    BEAKER = 2
    GRADUATED_CYLINDER = 3
    PIPETTE = 4
    TEST_TUBE = 5
    RACK_6 = 6
    RACK_25 = 7


OPEN_TOP_CLASSES = frozenset({ObjectClass.FLASK, ObjectClass.BEAKER,
                              ObjectClass.GRADUATED_CYLINDER, ObjectClass.TEST_TUBE})

TRANSLUCENT_CLASSES = frozenset({ObjectClass.FLASK, ObjectClass.BEAKER,
                                 ObjectClass.GRADUATED_CYLINDER, ObjectClass.PIPETTE,
                                 ObjectClass.TEST_TUBE})


def _part(prim: Primitive, z: float = 0.0) -> ShapePart:
    return ShapePart(prim, Pose6D.from_translation((0, 0, z), Frame.OBJECT))


def default_shape(cls: ObjectClass) -> ShapeModel:
    """Default primitive composition and symmetry for each object class."""
    if cls is ObjectClass.FLASK:
        return ShapeModel((_part(ConeFrustum(0.040, 0.015, 0.100)),
                           _part(Cylinder(0.011, 0.060, wall=0.0015), z=0.100)),
                          Symmetry.continuous_z())
    if cls is ObjectClass.BEAKER:
        return ShapeModel((_part(Cylinder(0.030, 0.075, wall=0.0025)),),
                          Symmetry.continuous_z())
    if cls is ObjectClass.GRADUATED_CYLINDER:
        return ShapeModel((_part(Cylinder(0.014, 0.200, wall=0.002)),),
                          Symmetry.continuous_z())
    if cls is ObjectClass.PIPETTE:
        # Side tab on the bulb keeps the silhouette spin-asymmetric.
        tab = ShapePart(Box(0.007, 0.024, 0.016),
                        Pose6D.from_translation((0.0, 0.022, 0.138), Frame.OBJECT))
        return ShapeModel((_part(Cylinder(0.005, 0.130)),
                           _part(Cylinder(0.011, 0.030), z=0.130), tab),
                          Symmetry.none())
    if cls is ObjectClass.TEST_TUBE:
        # Tapered bottom like real tubes (also disambiguates end-over-end flips).
        return ShapeModel((_part(ConeFrustum(0.004, 0.008, 0.010)),
                           _part(Cylinder(0.008, 0.090, wall=0.0015), z=0.010)),
                          Symmetry.continuous_z())
    if cls is ObjectClass.RACK_6:
        return ShapeModel((_part(TubeRack(0.120, 0.085, 0.050, rows=2, cols=3,
                                          hole_radius=0.009)),),
                          Symmetry.discrete_z(2))
    if cls is ObjectClass.RACK_25:
        return ShapeModel((_part(TubeRack(0.160, 0.140, 0.060, rows=5, cols=5,
                                          hole_radius=0.009)),),
                          Symmetry.discrete_z(2))
    raise ShapeError(f"unknown object class {cls}")


DEFAULT_CAPACITY_ML = {
    ObjectClass.FLASK: 250.0,
    ObjectClass.BEAKER: 200.0,
    ObjectClass.GRADUATED_CYLINDER: 120.0,
    ObjectClass.PIPETTE: 5.0,
    ObjectClass.TEST_TUBE: 15.0,
    ObjectClass.RACK_6: 0.0,
    ObjectClass.RACK_25: 0.0,
}


@dataclass(frozen=True)
class SceneObject:
    """One object instance: class, shape, ground-truth world pose, liquid."""

    id: int
    cls: ObjectClass
    shape: ShapeModel
    pose: Pose6D
    liquid_volume: float = 0.0
    liquid_capacity: float = 0.0

    def __post_init__(self):
        if self.pose.frame is not Frame.WORLD:
            raise ValueError("scene object poses are ground truth in the world frame")
        if not (0.0 <= self.liquid_volume <= self.liquid_capacity
                or (self.liquid_volume == 0.0 and self.liquid_capacity == 0.0)):
            raise ValueError(f"liquid volume {self.liquid_volume} outside "
                             f"[0, {self.liquid_capacity}]")

    def with_pose(self, pose: Pose6D) -> "SceneObject":
        return SceneObject(self.id, self.cls, self.shape, pose,
                           self.liquid_volume, self.liquid_capacity)

    def with_liquid(self, volume_ml: float) -> "SceneObject":
        return SceneObject(self.id, self.cls, self.shape, self.pose,
                           volume_ml, self.liquid_capacity)

    def world_mesh(self, resolution: int = 16) -> Mesh:
        return tessellate(self.shape, resolution).transformed(self.pose)

    @property
    def axis_world(self) -> np.ndarray:
        """Object z axis (symmetry/long axis) in world coordinates."""
        return self.pose.rotation[:, 2]
