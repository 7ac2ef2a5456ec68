"""Binary wire protocol and the perception/execution server pair.

Frame layout (all multibyte fields little-endian):

    magic   4 bytes  'LGRP'
    version u8       1
    type    u8       message type
    length  u32      payload byte count
    payload length bytes
    crc     u32      CRC-32 (IEEE 802.3 polynomial) over the payload

Message payloads:

    0x01 PoseUpdate        count u16, then per object:
                           id u16, position 3*f64 (m), quaternion 4*f64 (wxyz),
                           confidence f64, detected u8, timestamp_us u64
    0x02 TrajectoryCommand traj_id u32, count u16, then per point:
                           q 6*f64 (rad), t f64 (s), gripper_width f64 (m,
                           NaN = unchanged)
    0x03 GripperCommand    width f64, force f64, speed f64
    0x04 Ack               ref_id u32, status u8
    0x05 Error             code u16, UTF-8 text
    0x06 SceneRequest      (empty)

One client per server at a time; a second connection is refused with Error
code 0x0002.  Three consecutive decode errors close the session.
"""

from __future__ import annotations

import math
import socket
import struct
import threading
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from lucidlab.geometry import Frame, Pose6D
from lucidlab.perception.noise import noisy_oracle
from lucidlab.perception.types import PerceptionEstimate
from lucidlab.planning import JointTrajectory, TrajectoryPoint
from lucidlab.twin import TwinState, step

MAGIC = b"LGRP"
VERSION = 1
HEADER = struct.Struct("<4sBBI")

MSG_POSE_UPDATE = 0x01
MSG_TRAJECTORY = 0x02
MSG_GRIPPER = 0x03
MSG_ACK = 0x04
MSG_ERROR = 0x05
MSG_SCENE_REQUEST = 0x06

ERR_VALIDATION = 0x0001
ERR_BUSY = 0x0002
ERR_UNEXPECTED = 0x0003

_POSE_REC = struct.Struct("<H3d4ddBQ")
_TRAJ_HEAD = struct.Struct("<IH")
_TRAJ_REC = struct.Struct("<6ddd")
_GRIPPER = struct.Struct("<3d")
_ACK = struct.Struct("<IB")

DEFAULT_PERCEPTION_PORT = 7401
DEFAULT_EXECUTION_PORT = 7402
PERCEPTION_ADDR_ENV = "LUCID_PERCEPTION_ADDR"
EXECUTION_ADDR_ENV = "LUCID_EXEC_ADDR"


class ProtocolError(ValueError):
    """Malformed frame or message content."""


class CrcMismatch(ProtocolError):
    pass


class VersionMismatch(ProtocolError):
    pass


class UnknownMessageType(ProtocolError):
    pass


# ---------------------------------------------------------------------------
# messages

@dataclass(frozen=True)
class PoseRecord:
    object_id: int
    position: tuple[float, float, float]
    quat: tuple[float, float, float, float]
    confidence: float
    detected: bool
    timestamp_us: int


@dataclass(frozen=True)
class PoseUpdate:
    records: tuple[PoseRecord, ...]

    @classmethod
    def from_estimates(cls, estimates, timestamp_us: int = 0) -> "PoseUpdate":
        recs = []
        for e in estimates:
            if e.detected:
                recs.append(PoseRecord(e.object_id, tuple(map(float, e.pose.position)),
                                       tuple(map(float, e.pose.quat)),
                                       float(e.confidence), True, timestamp_us))
            else:
                recs.append(PoseRecord(e.object_id, (0.0, 0.0, 0.0),
                                       (1.0, 0.0, 0.0, 0.0), 0.0, False,
                                       timestamp_us))
        return cls(tuple(recs))

    def to_estimates(self) -> list[PerceptionEstimate]:
        out = []
        for r in self.records:
            if r.detected:
                out.append(PerceptionEstimate(
                    object_id=r.object_id, detected=True,
                    pose=Pose6D(np.array(r.position), np.array(r.quat),
                                Frame.ROBOT_BASE),
                    confidence=r.confidence))
            else:
                out.append(PerceptionEstimate.missed(r.object_id))
        return out


@dataclass(frozen=True)
class TrajectoryCommand:
    traj_id: int
    points: tuple[tuple[tuple[float, ...], float, float], ...]  # (q6, t, width)

    @classmethod
    def from_trajectory(cls, traj_id: int, traj: JointTrajectory) -> "TrajectoryCommand":
        return cls(traj_id, tuple((tuple(map(float, p.q)), float(p.t),
                                   float(p.gripper_width)) for p in traj.points))

    def trajectory_points(self) -> list[TrajectoryPoint]:
        return [TrajectoryPoint(np.array(q), t, w) for q, t, w in self.points]


@dataclass(frozen=True)
class GripperCommand:
    width: float
    force: float
    speed: float


@dataclass(frozen=True)
class Ack:
    ref_id: int
    status: int


@dataclass(frozen=True)
class ErrorMessage:
    code: int
    text: str


@dataclass(frozen=True)
class SceneRequest:
    pass


Message = PoseUpdate | TrajectoryCommand | GripperCommand | Ack | ErrorMessage | SceneRequest


# ---------------------------------------------------------------------------
# encode / decode

def _frame(msg_type: int, payload: bytes) -> bytes:
    return HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload \
        + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def encode(message: Message) -> bytes:
    """Byte-exact frame for a message (layouts in the module docstring)."""
    if isinstance(message, PoseUpdate):
        payload = struct.pack("<H", len(message.records))
        for r in message.records:
            payload += _POSE_REC.pack(r.object_id, *r.position, *r.quat,
                                      r.confidence, 1 if r.detected else 0,
                                      r.timestamp_us)
        return _frame(MSG_POSE_UPDATE, payload)
    if isinstance(message, TrajectoryCommand):
        payload = _TRAJ_HEAD.pack(message.traj_id, len(message.points))
        for q, t, w in message.points:
            payload += _TRAJ_REC.pack(*q, t, w)
        return _frame(MSG_TRAJECTORY, payload)
    if isinstance(message, GripperCommand):
        return _frame(MSG_GRIPPER, _GRIPPER.pack(message.width, message.force,
                                                 message.speed))
    if isinstance(message, Ack):
        return _frame(MSG_ACK, _ACK.pack(message.ref_id, message.status))
    if isinstance(message, ErrorMessage):
        return _frame(MSG_ERROR, struct.pack("<H", message.code)
                      + message.text.encode("utf-8"))
    if isinstance(message, SceneRequest):
        return _frame(MSG_SCENE_REQUEST, b"")
    raise ProtocolError(f"cannot encode {type(message).__name__}")


def _parse_payload(msg_type: int, payload: bytes) -> Message:
    if msg_type == MSG_POSE_UPDATE:
        (count,) = struct.unpack_from("<H", payload, 0)
        expected = 2 + count * _POSE_REC.size
        if len(payload) != expected:
            raise ProtocolError(f"pose update payload length {len(payload)} != "
                                f"{expected}")
        recs = []
        off = 2
        for _ in range(count):
            vals = _POSE_REC.unpack_from(payload, off)
            off += _POSE_REC.size
            quat = vals[4:8]
            detected = bool(vals[9])
            if detected:
                norm = math.sqrt(sum(c * c for c in quat))
                if abs(norm - 1.0) > 1e-6:
                    raise ProtocolError(f"non-unit quaternion (norm {norm})")
            recs.append(PoseRecord(vals[0], vals[1:4], quat, vals[8], detected,
                                   vals[10]))
        return PoseUpdate(tuple(recs))
    if msg_type == MSG_TRAJECTORY:
        traj_id, count = _TRAJ_HEAD.unpack_from(payload, 0)
        expected = _TRAJ_HEAD.size + count * _TRAJ_REC.size
        if len(payload) != expected:
            raise ProtocolError("trajectory payload length mismatch")
        pts = []
        off = _TRAJ_HEAD.size
        for _ in range(count):
            vals = _TRAJ_REC.unpack_from(payload, off)
            off += _TRAJ_REC.size
            pts.append((vals[:6], vals[6], vals[7]))
        return TrajectoryCommand(traj_id, tuple(pts))
    if msg_type == MSG_GRIPPER:
        if len(payload) != _GRIPPER.size:
            raise ProtocolError("gripper payload length mismatch")
        return GripperCommand(*_GRIPPER.unpack(payload))
    if msg_type == MSG_ACK:
        if len(payload) != _ACK.size:
            raise ProtocolError("ack payload length mismatch")
        return Ack(*_ACK.unpack(payload))
    if msg_type == MSG_ERROR:
        if len(payload) < 2:
            raise ProtocolError("error payload too short")
        (code,) = struct.unpack_from("<H", payload, 0)
        return ErrorMessage(code, payload[2:].decode("utf-8"))
    if msg_type == MSG_SCENE_REQUEST:
        if payload:
            raise ProtocolError("scene request carries no payload")
        return SceneRequest()
    raise UnknownMessageType(f"unknown message type 0x{msg_type:02x}")


class StreamDecoder:
    """Incremental frame decoder that resynchronizes on the magic bytes.

    feed() returns a list of events: decoded Message instances or
    ProtocolError values for frames that failed (CRC/version/type); partial
    trailing data stays buffered until more bytes arrive.
    """

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Message | ProtocolError]:
        self._buf.extend(data)
        out: list[Message | ProtocolError] = []
        while True:
            idx = self._buf.find(MAGIC)
            if idx < 0:
                # keep a tail shorter than the magic for split-magic arrivals
                keep = len(MAGIC) - 1
                del self._buf[:max(0, len(self._buf) - keep)]
                return out
            if idx > 0:
                del self._buf[:idx]
            if len(self._buf) < HEADER.size:
                return out
            _, version, msg_type, length = HEADER.unpack_from(self._buf, 0)
            total = HEADER.size + length + 4
            if len(self._buf) < total:
                return out
            payload = bytes(self._buf[HEADER.size:HEADER.size + length])
            (crc,) = struct.unpack_from("<I", self._buf, HEADER.size + length)
            del self._buf[:total]
            if version != VERSION:
                out.append(VersionMismatch(f"version {version} != {VERSION}"))
                continue
            if zlib.crc32(payload) & 0xFFFFFFFF != crc:
                out.append(CrcMismatch("payload CRC mismatch"))
                continue
            try:
                out.append(_parse_payload(msg_type, payload))
            except ProtocolError as exc:
                out.append(exc)


def decode_exact(data: bytes) -> Message:
    """Decode exactly one frame; raises on errors or leftovers."""
    dec = StreamDecoder()
    events = dec.feed(data)
    if len(events) != 1:
        raise ProtocolError(f"expected one frame, got {len(events)}")
    ev = events[0]
    if isinstance(ev, ProtocolError):
        raise ev
    return ev


# ---------------------------------------------------------------------------
# servers

class _BaseServer:
    """One accept loop, one client session at a time."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(4)
        self._sock.settimeout(0.2)
        self.address = self._sock.getsockname()
        self._stop = threading.Event()
        self._busy = threading.Lock()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self._stop.set()
        self._thread.join(timeout=5.0)
        self._sock.close()

    def _accept_loop(self):
        # Sessions run on their own thread so a busy server can still accept
        # (and refuse) further clients.
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            if not self._busy.acquire(blocking=False):
                try:
                    conn.sendall(encode(ErrorMessage(ERR_BUSY, "server busy")))
                finally:
                    conn.close()
                continue
            threading.Thread(target=self._run_session, args=(conn,),
                             daemon=True).start()

    def _run_session(self, conn: socket.socket):
        try:
            self._session(conn)
        except (ConnectionError, OSError):
            pass
        finally:
            self._busy.release()
            conn.close()

    def _session(self, conn: socket.socket):
        raise NotImplementedError


class PerceptionServer(_BaseServer):
    """Streams PoseUpdate frames at a fixed rate and answers SceneRequest."""

    def __init__(self, scene, profile=None, rate_hz: float = 10.0,
                 host: str = "127.0.0.1", port: int = 0):
        super().__init__(host, port)
        self.scene = scene
        self.profile = profile if profile is not None else scene.noise_profile
        self.rate_hz = rate_hz

    def _estimates(self):
        return noisy_oracle(list(self.scene.objects), self.scene.camera,
                            self.profile, self.scene.robot_base_pose)

    def _session(self, conn: socket.socket):
        conn.settimeout(0.05)
        decoder = StreamDecoder()
        errors = 0
        interval = 1.0 / self.rate_hz if self.rate_hz > 0 else None
        next_push = time.monotonic() + (interval or 0.0)
        while not self._stop.is_set():
            if interval is not None and time.monotonic() >= next_push:
                conn.sendall(encode(PoseUpdate.from_estimates(self._estimates())))
                next_push += interval
            try:
                data = conn.recv(4096)
            except socket.timeout:
                continue
            if not data:
                return
            for ev in decoder.feed(data):
                if isinstance(ev, ProtocolError):
                    errors += 1
                    conn.sendall(encode(ErrorMessage(ERR_UNEXPECTED, str(ev))))
                    if errors >= 3:
                        return
                    continue
                errors = 0
                if isinstance(ev, SceneRequest):
                    conn.sendall(encode(PoseUpdate.from_estimates(self._estimates())))
                else:
                    conn.sendall(encode(ErrorMessage(
                        ERR_UNEXPECTED, f"unexpected {type(ev).__name__}")))


class ExecutionServer(_BaseServer):
    """Owns the twin; executes TrajectoryCommand/GripperCommand."""

    def __init__(self, twin: TwinState, robot, host: str = "127.0.0.1",
                 port: int = 0):
        super().__init__(host, port)
        self._twin_lock = threading.Lock()
        self.twin = twin
        self.robot = robot

    def twin_snapshot(self) -> TwinState:
        with self._twin_lock:
            return self.twin

    def _session(self, conn: socket.socket):
        conn.settimeout(0.05)
        decoder = StreamDecoder()
        errors = 0
        while not self._stop.is_set():
            try:
                data = conn.recv(65536)
            except socket.timeout:
                continue
            if not data:
                return
            for ev in decoder.feed(data):
                if isinstance(ev, ProtocolError):
                    errors += 1
                    conn.sendall(encode(ErrorMessage(ERR_UNEXPECTED, str(ev))))
                    if errors >= 3:
                        return
                    continue
                errors = 0
                self._handle(conn, ev)

    def _handle(self, conn: socket.socket, msg: Message):
        if isinstance(msg, TrajectoryCommand):
            conn.sendall(encode(Ack(msg.traj_id, 0)))
            try:
                with self._twin_lock:
                    state = self.twin
                    for point in msg.trajectory_points():
                        state = step(state, point, self.robot)
                    self.twin = state
            except Exception as exc:
                conn.sendall(encode(ErrorMessage(ERR_VALIDATION, str(exc))))
                return
            conn.sendall(encode(Ack(msg.traj_id, 1)))
        elif isinstance(msg, GripperCommand):
            try:
                with self._twin_lock:
                    t = self.twin.clock + 1e-3
                    point = TrajectoryPoint(self.twin.q, t, msg.width)
                    self.twin = step(self.twin, point, self.robot)
            except Exception as exc:
                conn.sendall(encode(ErrorMessage(ERR_VALIDATION, str(exc))))
                return
            conn.sendall(encode(Ack(0, 1)))
        else:
            conn.sendall(encode(ErrorMessage(ERR_UNEXPECTED,
                                             f"unexpected {type(msg).__name__}")))


class Client:
    """Blocking client for either server (one connection)."""

    def __init__(self, address):
        self._sock = socket.create_connection(address, timeout=10.0)
        self._decoder = StreamDecoder()
        self._pending: list[Message | ProtocolError] = []

    def close(self):
        self._sock.close()

    def send(self, message: Message):
        self._sock.sendall(encode(message))

    def recv(self, timeout: float = 10.0) -> Message:
        deadline = time.monotonic() + timeout
        while not self._pending:
            self._sock.settimeout(max(0.01, deadline - time.monotonic()))
            data = self._sock.recv(65536)
            if not data:
                raise ConnectionError("server closed the connection")
            self._pending.extend(self._decoder.feed(data))
        ev = self._pending.pop(0)
        if isinstance(ev, ProtocolError):
            raise ev
        return ev

    def recv_type(self, msg_type, timeout: float = 10.0) -> Message:
        deadline = time.monotonic() + timeout
        while True:
            msg = self.recv(timeout=max(0.01, deadline - time.monotonic()))
            if isinstance(msg, msg_type):
                return msg
            if isinstance(msg, ErrorMessage):
                raise ProtocolError(f"server error 0x{msg.code:04x}: {msg.text}")
