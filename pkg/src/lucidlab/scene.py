"""Scene document: objects, camera, robot, and noise profile.

The on-disk form is a versioned JSON file (UTF-8) with poses encoded as
[x, y, z, qw, qx, qy, qz]; see scene_to_dict for the exact key layout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from lucidlab.geometry import CameraModel, Frame, Pose6D, Symmetry, SymmetryKind
from lucidlab.kinematics import DHTable, UR3_DH_ROWS
from lucidlab.perception.noise import ClassNoise, NoiseProfile
from lucidlab.shapes import (Box, ConeFrustum, Cylinder, DEFAULT_CAPACITY_ML,
                             ObjectClass, SceneObject, ShapeModel, ShapePart,
                             TubeRack, default_shape)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RobotModel:
    """Arm kinematics plus motion limits used by the planner."""

    dh: DHTable = field(default_factory=DHTable)
    vmax: float = 1.0   # rad/s, per joint
    amax: float = 2.0   # rad/s^2, per joint


@dataclass(frozen=True)
class Scene:
    objects: tuple[SceneObject, ...]
    camera: CameraModel
    robot_base_pose: Pose6D
    robot: RobotModel = field(default_factory=RobotModel)
    noise_profile: NoiseProfile = field(default_factory=NoiseProfile)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("scene object ids must be unique")

    def object_by_id(self, oid: int) -> SceneObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(f"no scene object with id {oid}")

    def by_class(self, cls: ObjectClass) -> SceneObject:
        for o in self.objects:
            if o.cls is cls:
                return o
        raise KeyError(f"no scene object of class {cls.name}")

    def with_objects(self, objects) -> "Scene":
        return replace(self, objects=tuple(objects))


# ---------------------------------------------------------------------------
# pose/shape codecs

def pose_to_list(p: Pose6D) -> list[float]:
    return [*map(float, p.position), *map(float, p.quat)]


def pose_from_list(vals, frame: Frame) -> Pose6D:
    return Pose6D(np.array(vals[:3]), np.array(vals[3:7]), frame)


def _part_to_dict(part: ShapePart) -> dict:
    prim = part.primitive
    d: dict = {"pose": pose_to_list(part.pose)}
    if isinstance(prim, Cylinder):
        d.update(kind="cylinder", radius=prim.radius, height=prim.height,
                 wall=prim.wall)
    elif isinstance(prim, ConeFrustum):
        d.update(kind="cone_frustum", r_bottom=prim.r_bottom, r_top=prim.r_top,
                 height=prim.height, wall=prim.wall)
    elif isinstance(prim, Box):
        d.update(kind="box", dx=prim.dx, dy=prim.dy, dz=prim.dz)
    elif isinstance(prim, TubeRack):
        d.update(kind="tube_rack", dx=prim.dx, dy=prim.dy, dz=prim.dz,
                 rows=prim.rows, cols=prim.cols, hole_radius=prim.hole_radius,
                 boss_height=prim.boss_height)
    else:
        raise ValueError(f"unknown primitive {type(prim).__name__}")
    return d


def _part_from_dict(d: dict) -> ShapePart:
    kind = d["kind"]
    pose = pose_from_list(d["pose"], Frame.OBJECT)
    if kind == "cylinder":
        prim = Cylinder(d["radius"], d["height"], d.get("wall", 0.0))
    elif kind == "cone_frustum":
        prim = ConeFrustum(d["r_bottom"], d["r_top"], d["height"], d.get("wall", 0.0))
    elif kind == "box":
        prim = Box(d["dx"], d["dy"], d["dz"])
    elif kind == "tube_rack":
        prim = TubeRack(d["dx"], d["dy"], d["dz"], d["rows"], d["cols"],
                        d["hole_radius"], d.get("boss_height", 0.008))
    else:
        raise ValueError(f"unknown primitive kind {kind!r}")
    return ShapePart(prim, pose)


def _symmetry_to_dict(s: Symmetry) -> dict:
    return {"kind": s.kind.value, "order": s.order}


def _symmetry_from_dict(d: dict) -> Symmetry:
    kind = SymmetryKind(d["kind"])
    if kind is SymmetryKind.DISCRETE_Z:
        return Symmetry.discrete_z(d["order"])
    return Symmetry(kind, d.get("order", 1))


def shape_to_dict(shape: ShapeModel) -> dict:
    return {"parts": [_part_to_dict(p) for p in shape.parts],
            "symmetry": _symmetry_to_dict(shape.symmetry)}


def shape_from_dict(d: dict) -> ShapeModel:
    return ShapeModel(tuple(_part_from_dict(p) for p in d["parts"]),
                      _symmetry_from_dict(d["symmetry"]))


def _noise_to_dict(p: NoiseProfile) -> dict:
    return {
        "per_class": {ObjectClass(c).name.lower(): {
            "position_mean_cm": cn.position_mean_cm,
            "position_sd_cm": cn.position_sd_cm,
            "rot_mean_deg": list(cn.rot_mean_deg),
            "rot_sd_deg": list(cn.rot_sd_deg),
        } for c, cn in sorted(p.per_class.items())},
        "occlusion_failure_threshold": p.occlusion_failure_threshold,
        "occlusion_error_scale": p.occlusion_error_scale,
        "detection_failure_prob": p.detection_failure_prob,
        "near_reference_m": p.near_reference_m,
        "near_scale": p.near_scale,
        "seed": p.seed,
    }


def noise_from_dict(d: dict) -> NoiseProfile:
    per_class = {}
    for name, cn in d.get("per_class", {}).items():
        per_class[ObjectClass[name.upper()]] = ClassNoise(
            position_mean_cm=cn["position_mean_cm"],
            position_sd_cm=cn["position_sd_cm"],
            rot_mean_deg=tuple(cn["rot_mean_deg"]),
            rot_sd_deg=tuple(cn["rot_sd_deg"]))
    return NoiseProfile(
        per_class=per_class,
        occlusion_failure_threshold=d.get("occlusion_failure_threshold", 0.60),
        occlusion_error_scale=d.get("occlusion_error_scale", 1.0),
        detection_failure_prob=d.get("detection_failure_prob", 0.5),
        near_reference_m=d.get("near_reference_m", 0.45),
        near_scale=d.get("near_scale", 1.0),
        seed=d.get("seed", 0))


# ---------------------------------------------------------------------------
# whole-scene codec

def scene_to_dict(scene: Scene) -> dict:
    cam = scene.camera
    return {
        "schema_version": SCHEMA_VERSION,
        "objects": [{
            "id": o.id,
            "class": o.cls.name.lower(),
            "shape": shape_to_dict(o.shape),
            "pose": pose_to_list(o.pose),
            "liquid_volume": o.liquid_volume,
            "liquid_capacity": o.liquid_capacity,
        } for o in scene.objects],
        "camera": {
            "intrinsics": {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
                           "width": cam.width, "height": cam.height},
            "extrinsics": pose_to_list(cam.extrinsics),
        },
        "robot_base_pose": pose_to_list(scene.robot_base_pose),
        "robot": {
            "dh": [list(r) for r in scene.robot.dh.rows],
            "tool": pose_to_list(scene.robot.dh.tool),
            "limits": [list(l) for l in scene.robot.dh.limits],
            "vmax": scene.robot.vmax,
            "amax": scene.robot.amax,
        },
        "noise_profile": _noise_to_dict(scene.noise_profile),
    }


def scene_from_dict(d: dict) -> Scene:
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported scene schema_version {version!r}")
    cam_d = d["camera"]
    camera = CameraModel(**cam_d["intrinsics"],
                         extrinsics=pose_from_list(cam_d["extrinsics"],
                                                   Frame.ROBOT_BASE))
    robot_d = d.get("robot", {})
    dh = DHTable(rows=tuple(tuple(r) for r in robot_d.get("dh", UR3_DH_ROWS)),
                 tool=pose_from_list(robot_d["tool"], Frame.OBJECT)
                 if "tool" in robot_d else DHTable().tool,
                 limits=tuple(tuple(l) for l in robot_d["limits"])
                 if "limits" in robot_d else DHTable().limits)
    robot = RobotModel(dh=dh, vmax=robot_d.get("vmax", 1.0),
                       amax=robot_d.get("amax", 2.0))
    objects = []
    for od in d["objects"]:
        objects.append(SceneObject(
            id=od["id"],
            cls=ObjectClass[od["class"].upper()],
            shape=shape_from_dict(od["shape"]),
            pose=pose_from_list(od["pose"], Frame.WORLD),
            liquid_volume=od.get("liquid_volume", 0.0),
            liquid_capacity=od.get("liquid_capacity", 0.0)))
    return Scene(objects=tuple(objects), camera=camera,
                 robot_base_pose=pose_from_list(d["robot_base_pose"], Frame.WORLD),
                 robot=robot,
                 noise_profile=noise_from_dict(d.get("noise_profile", {})))


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2,
                                     sort_keys=True) + "\n", encoding="utf-8")


def load_scene(path) -> Scene:
    return scene_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# default desk scene

def camera_look_at(eye, target, frame: Frame = Frame.ROBOT_BASE) -> Pose6D:
    """Camera pose at `eye` with +z (optical axis) toward `target`, +x kept
    horizontal (world), +y pointing downward."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    x = np.cross(fwd, up)
    n = np.linalg.norm(x)
    if n < 1e-9:
        x = np.array([0.0, -1.0, 0.0])
    else:
        x = x / n
    y = np.cross(fwd, x)
    if y[2] > 0:
        x, y = -x, -y
    rot = np.column_stack([x, y, fwd])
    m = np.eye(4)
    m[:3, :3] = rot
    m[:3, 3] = eye
    return Pose6D.from_matrix(m, frame)


def _obj(oid: int, cls: ObjectClass, pose: Pose6D, liquid: float = 0.0) -> SceneObject:
    return SceneObject(id=oid, cls=cls, shape=default_shape(cls), pose=pose,
                       liquid_volume=liquid,
                       liquid_capacity=DEFAULT_CAPACITY_ML[cls])


def default_noise_profile() -> NoiseProfile:
    """Default per-class error model (see data/default_scene.json for the
    serialized form); group levels follow small-translucent < opaque <
    large-translucent ordering, with errors growing at close camera range
    and under occlusion."""
    small = ClassNoise(0.0903, 0.0603, (0.1044, 0.1342, 0.1193),
                       (0.0696, 0.0891, 0.0799))
    large = ClassNoise(0.2063, 0.1374, (0.1740, 0.3578, 0.1640),
                       (0.1142, 0.2341, 0.1096))
    opaque = ClassNoise(0.1565, 0.1047, (0.1392, 0.2286, 0.1889),
                        (0.0891, 0.1496, 0.1245))
    return NoiseProfile(per_class={
        ObjectClass.FLASK: large,
        ObjectClass.BEAKER: large,
        ObjectClass.GRADUATED_CYLINDER: large,
        ObjectClass.PIPETTE: small,
        ObjectClass.TEST_TUBE: small,
        ObjectClass.RACK_6: opaque,
        ObjectClass.RACK_25: opaque,
    }, occlusion_failure_threshold=0.60, occlusion_error_scale=23.6,
        detection_failure_prob=0.5, near_reference_m=0.60, near_scale=6.1,
        seed=0)


def make_default_scene() -> Scene:
    """Desk-scale scene: all seven objects on the board in front of the arm,
    a tilted pipette resting in the small rack, liquid in the beaker.

    The camera placement keeps the three dispense-task objects (pipette,
    beaker, flask) unoccluded, the way a camera position is chosen for
    reliable recognition before running the task."""
    rack6_pos = np.array([0.36, -0.20, 0.0])
    objects = (
        _obj(1, ObjectClass.FLASK, Pose6D.from_translation((0.40, 0.12, 0.0))),
        _obj(2, ObjectClass.BEAKER, Pose6D.from_translation((0.33, 0.02, 0.0)),
             liquid=120.0),
        _obj(3, ObjectClass.GRADUATED_CYLINDER,
             Pose6D.from_translation((0.45, -0.06, 0.0))),
        _obj(4, ObjectClass.PIPETTE,
             Pose6D.from_rpy(np.radians(-28.0), 0.0, 0.0,
                             xyz=rack6_pos + [-0.048, 0.034, 0.035])),
        _obj(5, ObjectClass.TEST_TUBE,
             Pose6D.from_translation(rack6_pos + [0.048, -0.034, 0.035])),
        _obj(6, ObjectClass.RACK_6, Pose6D.from_translation(rack6_pos)),
        _obj(7, ObjectClass.RACK_25, Pose6D.from_translation((0.27, 0.24, 0.0))),
    )
    camera = CameraModel(fx=95.0, fy=95.0, cx=80.0, cy=60.0, width=160, height=120,
                         extrinsics=camera_look_at((-0.05, 0.0, 0.55),
                                                   (0.35, 0.0, 0.05)))
    return Scene(objects=objects, camera=camera,
                 robot_base_pose=Pose6D.identity(Frame.WORLD),
                 noise_profile=default_noise_profile())


def make_workspace_scene() -> Scene:
    """Sweep layout: the seven objects spread across the board so every one
    is clearly visible from the whole camera working range."""
    base = make_default_scene()
    objects = (
        _obj(1, ObjectClass.FLASK, Pose6D.from_translation((0.40, 0.12, 0.0))),
        _obj(2, ObjectClass.BEAKER, Pose6D.from_translation((0.33, 0.04, 0.0)),
             liquid=120.0),
        _obj(3, ObjectClass.GRADUATED_CYLINDER,
             Pose6D.from_translation((0.44, -0.02, 0.0))),
        _obj(4, ObjectClass.PIPETTE,
             Pose6D.from_rpy(np.radians(20.0), 0.0, 0.0, xyz=(0.29, -0.08, 0.0))),
        _obj(5, ObjectClass.TEST_TUBE,
             Pose6D.from_translation((0.31, -0.17, 0.0))),
        _obj(6, ObjectClass.RACK_6, Pose6D.from_translation((0.44, -0.26, 0.0))),
        _obj(7, ObjectClass.RACK_25, Pose6D.from_translation((0.28, 0.26, 0.0))),
    )
    return Scene(objects=objects, camera=base.camera,
                 robot_base_pose=base.robot_base_pose, robot=base.robot,
                 noise_profile=base.noise_profile)


def default_scene() -> Scene:
    """Packaged default scene (data/default_scene.json)."""
    data = Path(__file__).parent / "data" / "default_scene.json"
    return load_scene(data)
