"""Viewpoint codebooks: canonical depth templates indexed by view direction.

A codebook holds, per viewpoint on a subdivided icosahedron, the canonical
object->camera rotation, a normalized 32x32 depth template, and the offset
from the visible-surface centroid to the object origin.  Objects with
continuous z symmetry collapse to a single meridian arc of viewpoints.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from lucidlab._kernels import fill_triangles
from lucidlab.geometry import CameraModel, Symmetry, SymmetryKind
from lucidlab.perception.render import NEAR_PLANE
from lucidlab.shapes import ObjectClass, ShapeModel, tessellate

CODEBOOK_MAGIC = b"LGCB"
CODEBOOK_VERSION = 1
DESC_SIDE = 48

# Worst-case angular distance (deg) to the nearest icosphere vertex, per level.
_LEVEL_MAX_GAP = (37.4, 19.4, 9.8, 4.9, 2.5)

# Fixed template camera: square image, object centered at canonical distance.
TEMPLATE_CAMERA = dict(fx=140.0, fy=140.0, cx=48.0, cy=48.0, width=96, height=96)


def icosphere_vertices(level: int) -> np.ndarray:
    """Unit vertices of the icosahedron subdivided `level` times.

    Counts follow V' = V + E: 12, 42, 162, 642, ...
    """
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
             (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
             (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(level):
        midcache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in midcache:
                v = verts[i] + verts[j]
                verts.append(v / np.linalg.norm(v))
                midcache[key] = len(verts) - 1
            return midcache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts)


def _level_for_spacing(spacing_deg: float) -> int:
    for level, gap in enumerate(_LEVEL_MAX_GAP):
        if gap <= spacing_deg:
            return level
    return len(_LEVEL_MAX_GAP) - 1


def viewpoint_directions(spacing_deg: float, symmetry: Symmetry) -> np.ndarray:
    """Viewpoint set meeting the spacing bound, quotiented by symmetry."""
    if symmetry.kind is SymmetryKind.CONTINUOUS_Z:
        # One meridian arc (azimuth 0) covers the quotient sphere.
        n = int(np.ceil(180.0 / spacing_deg)) + 1
        polar = np.radians(np.linspace(0.0, 180.0, n))
        return np.column_stack([np.sin(polar), np.zeros(n), np.cos(polar)])
    return icosphere_vertices(_level_for_spacing(spacing_deg))


def canonical_rotation(direction: np.ndarray) -> np.ndarray:
    """Object->camera rotation placing `direction` (object frame, object to
    camera) on the camera -z axis, with a deterministic in-plane choice."""
    n = -np.asarray(direction, dtype=np.float64)
    n = n / np.linalg.norm(n)
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(np.dot(up, n))) > 0.99:
        up = np.array([1.0, 0.0, 0.0])
    r1 = np.cross(up, n)
    r1 /= np.linalg.norm(r1)
    r2 = np.cross(n, r1)
    return np.vstack([r1, r2, n])


@dataclass(frozen=True)
class CodebookEntry:
    direction: np.ndarray        # (3,) unit, object frame, object -> camera
    rotation: np.ndarray         # (3,3) canonical object->camera
    translation: np.ndarray      # (3,) canonical object origin, camera frame
    centroid_offset: np.ndarray  # (3,) surface centroid -> origin correction
    template: np.ndarray         # (32,32) float32 normalized depth
    descriptor: np.ndarray       # (1024,) float32, L2-normalized template


@dataclass(frozen=True)
class ViewpointCodebook:
    object_class: ObjectClass | None
    symmetry: Symmetry
    angular_spacing: float
    canonical_distance: float
    entries: tuple[CodebookEntry, ...]
    triangles: np.ndarray | None = None  # (M,3,3) object mesh, for refinement

    @property
    def descriptor_matrix(self) -> np.ndarray:
        return np.stack([e.descriptor for e in self.entries])


def template_camera() -> CameraModel:
    return CameraModel(**TEMPLATE_CAMERA)


def render_mesh_depth(triangles: np.ndarray, rotation: np.ndarray,
                      translation: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Rasterize object-frame triangles under a camera-frame pose."""
    tris = triangles @ rotation.T + translation
    depth = np.zeros((cam.height, cam.width), dtype=np.float64)
    fill_triangles(np.ascontiguousarray(tris), cam.fx, cam.fy, cam.cx, cam.cy,
                   NEAR_PLANE, depth)
    return depth


def normalized_template(depth: np.ndarray, mask: np.ndarray | None = None,
                        side: int = DESC_SIDE) -> np.ndarray | None:
    """Translation/scale-normalized depth patch.

    Crops the mask bounding box padded to a square, resamples to side x side
    (nearest), subtracts the masked mean and divides by the masked SD.
    Returns None for an empty mask or flat depth.
    """
    if mask is None:
        mask = depth > 0
    ys, xs = np.nonzero(mask & (depth > 0))
    if len(ys) == 0:
        return None
    cy, cx = (ys.min() + ys.max()) / 2.0, (xs.min() + xs.max()) / 2.0
    half = max(ys.max() - ys.min(), xs.max() - xs.min()) / 2.0 + 1.0
    grid = (np.arange(side) + 0.5) / side * 2.0 - 1.0   # [-1, 1]
    gy = np.clip(np.round(cy + grid[:, None] * half), 0, depth.shape[0] - 1).astype(int)
    gx = np.clip(np.round(cx + grid[None, :] * half), 0, depth.shape[1] - 1).astype(int)
    patch = np.where((mask & (depth > 0))[gy, gx], depth[gy, gx], 0.0)
    valid = patch > 0
    if valid.sum() < 4:
        return None
    mean = patch[valid].mean()
    sd = patch[valid].std()
    if sd < 1e-9:
        sd = 1e-9
    out = np.zeros((side, side), dtype=np.float32)
    out[valid] = ((patch[valid] - mean) / sd).astype(np.float32)
    return out


def _descriptor(template: np.ndarray) -> np.ndarray:
    flat = template.ravel().astype(np.float32)
    n = np.linalg.norm(flat)
    return flat / n if n > 0 else flat


def build_codebook(shape: ShapeModel, angular_spacing: float,
                   canonical_distance: float,
                   object_class: ObjectClass | None = None,
                   resolution: int = 16) -> ViewpointCodebook:
    """Render canonical depth templates over the viewpoint set.

    angular_spacing must be within [5, 45] degrees; the viewpoint set is the
    subdivided icosahedron whose worst nearest-viewpoint gap is below the
    spacing (single meridian arc for continuous z symmetry).
    """
    if not (5.0 <= angular_spacing <= 45.0):
        raise ValueError("angular spacing must be within [5, 45] degrees")
    cam = template_camera()
    mesh = tessellate(shape, resolution)
    tris = mesh.triangles()
    center = 0.5 * (mesh.vertices.min(axis=0) + mesh.vertices.max(axis=0))

    entries = []
    for direction in viewpoint_directions(angular_spacing, shape.symmetry):
        rot = canonical_rotation(direction)
        trans = np.array([0.0, 0.0, canonical_distance]) - rot @ center
        depth = render_mesh_depth(tris, rot, trans, cam)
        template = normalized_template(depth)
        if template is None:
            continue
        ys, xs = np.nonzero(depth > 0)
        z = depth[ys, xs]
        pts = np.column_stack([(xs + 0.5 - cam.cx) / cam.fx * z,
                               (ys + 0.5 - cam.cy) / cam.fy * z, z])
        centroid = pts.mean(axis=0)
        entries.append(CodebookEntry(
            direction=np.asarray(direction, dtype=np.float64),
            rotation=rot, translation=trans,
            centroid_offset=trans - centroid,
            template=template, descriptor=_descriptor(template)))
    return ViewpointCodebook(object_class, shape.symmetry, angular_spacing,
                             canonical_distance, tuple(entries), tris)


# ---------------------------------------------------------------------------
# binary cache (magic LGCB, version u16 LE, fixed-layout records)

_HEADER = struct.Struct("<4sHBBHddH")
_ENTRY_FIXED = struct.Struct("<" + "d" * 18)


def save_codebook(cb: ViewpointCodebook, path) -> None:
    kind_code = {SymmetryKind.NONE: 0, SymmetryKind.DISCRETE_Z: 1,
                 SymmetryKind.CONTINUOUS_Z: 2}[cb.symmetry.kind]
    with open(path, "wb") as f:
        f.write(_HEADER.pack(CODEBOOK_MAGIC, CODEBOOK_VERSION,
                             int(cb.object_class) if cb.object_class else 0,
                             kind_code, cb.symmetry.order,
                             cb.angular_spacing, cb.canonical_distance, DESC_SIDE))
        f.write(struct.pack("<I", len(cb.entries)))
        for e in cb.entries:
            f.write(_ENTRY_FIXED.pack(*e.direction, *e.rotation.ravel(),
                                      *e.translation, *e.centroid_offset))
            f.write(e.template.astype("<f4").tobytes())
        ntris = 0 if cb.triangles is None else len(cb.triangles)
        f.write(struct.pack("<I", ntris))
        if ntris:
            f.write(np.ascontiguousarray(cb.triangles, dtype="<f8").tobytes())


def load_codebook(path) -> ViewpointCodebook:
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        magic, version, cls_code, kind_code, order, spacing, dist, side = \
            _HEADER.unpack(head)
        if magic != CODEBOOK_MAGIC:
            raise ValueError("not a codebook cache file")
        if version != CODEBOOK_VERSION:
            raise ValueError(f"unsupported codebook version {version}")
        kind = {0: Symmetry.none(), 1: None, 2: Symmetry.continuous_z()}[kind_code]
        sym = Symmetry(SymmetryKind.DISCRETE_Z, order) if kind_code == 1 else kind
        (count,) = struct.unpack("<I", f.read(4))
        entries = []
        for _ in range(count):
            vals = _ENTRY_FIXED.unpack(f.read(_ENTRY_FIXED.size))
            template = np.frombuffer(f.read(side * side * 4), dtype="<f4") \
                .reshape(side, side).copy()
            entries.append(CodebookEntry(
                direction=np.array(vals[0:3]),
                rotation=np.array(vals[3:12]).reshape(3, 3),
                translation=np.array(vals[12:15]),
                centroid_offset=np.array(vals[15:18]),
                template=template, descriptor=_descriptor(template)))
        tri_raw = f.read(4)
        triangles = None
        if len(tri_raw) == 4:
            (ntris,) = struct.unpack("<I", tri_raw)
            if ntris:
                triangles = np.frombuffer(f.read(ntris * 72), dtype="<f8") \
                    .reshape(ntris, 3, 3).copy()
        return ViewpointCodebook(ObjectClass(cls_code) if cls_code else None,
                                 sym, spacing, dist, tuple(entries), triangles)
