"""Human motion sequences and canonical-space normalization.

Joint order is the first 22 body joints of the SMPL-X skeleton. Coordinates
are meters in a y-up world. The canonical frame puts the frame-0 pelvis at
the origin and the frame-0 facing direction on +z.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geom import rotation_y

JOINT_NAMES = (
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
)
JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}
PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19)
BONES = tuple((p, c) for c, p in enumerate(PARENTS) if p >= 0)
NUM_JOINTS = 22
PELVIS, LEFT_HIP, RIGHT_HIP = 0, 1, 2
UP = np.array([0.0, 1.0, 0.0])

MOTION_FILE_VERSION = 1


class DegeneratePose(ValueError):
    """Raised when a facing direction cannot be derived from the hips."""


class InvalidMotion(ValueError):
    pass


@dataclass
class MotionSequence:
    """``joints`` is ``(f, 22, 3)`` in meters; ``fps`` frames per second."""

    joints: np.ndarray
    fps: float = 8.0

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        j = self.joints
        if j.ndim != 3 or j.shape[1:] != (NUM_JOINTS, 3):
            raise InvalidMotion(f"joints must be (f, 22, 3), got {j.shape}")
        if len(j) < 4:
            raise InvalidMotion("motion needs at least 4 frames")
        if not np.all(np.isfinite(j)):
            raise InvalidMotion("motion contains non-finite values")
        step = np.linalg.norm(np.diff(j[:, PELVIS], axis=0), axis=1)
        if np.any(step >= 1.0):
            raise InvalidMotion(f"pelvis jumps {step.max():.3f} m in one frame")

    def __len__(self) -> int:
        return len(self.joints)

    @property
    def pelvis(self) -> np.ndarray:
        return self.joints[:, PELVIS]

    def transformed(self, R, t) -> "MotionSequence":
        R = np.asarray(R, dtype=np.float64)
        return MotionSequence(self.joints @ R.T + np.asarray(t, dtype=np.float64), self.fps)

    def facing(self) -> np.ndarray:
        """Per-frame unit facing directions, ``(f, 3)``."""
        return np.stack([forward_direction(fr) for fr in self.joints])


class CanonicalMotion(MotionSequence):
    """A motion whose frame 0 is at the origin, facing +z."""

    def __post_init__(self):
        super().__post_init__()
        if np.abs(self.joints[0, PELVIS]).max() > 1e-9:
            raise InvalidMotion("frame-0 pelvis is not at the origin")
        if np.abs(forward_direction(self.joints[0]) - [0.0, 0.0, 1.0]).max() > 1e-9:
            raise InvalidMotion("frame-0 facing is not +z")


@dataclass(frozen=True)
class RigidTransform:
    """``X -> R @ X + t``."""

    R: np.ndarray
    t: np.ndarray

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.R.T + self.t

    @property
    def is_identity(self) -> bool:
        return bool(np.abs(self.R - np.eye(3)).max() <= 1e-12 and np.abs(self.t).max() <= 1e-12)


def forward_direction(frame) -> np.ndarray:
    """Facing direction of one ``(22, 3)`` frame.

    ``up x r`` where ``r`` is the horizontal part of ``left_hip - right_hip``.
    """
    frame = np.asarray(frame, dtype=np.float64)
    r = frame[LEFT_HIP] - frame[RIGHT_HIP]
    r = np.array([r[0], 0.0, r[2]])
    n = math.hypot(r[0], r[2])
    if n < 1e-9:
        raise DegeneratePose("hips coincide or are vertically aligned")
    r /= n
    return np.array([r[2], 0.0, -r[0]])  # == np.cross(UP, r)


def yaw_of(direction) -> float:
    """Heading angle of a horizontal direction; 0 for +z, pi/2 for +x."""
    return math.atan2(direction[0], direction[2])


def canonicalize(m: MotionSequence) -> tuple[CanonicalMotion, RigidTransform]:
    fwd = forward_direction(m.joints[0])
    R = rotation_y(-yaw_of(fwd))
    t = -(R @ m.joints[0, PELVIS]) + 0.0  # + 0.0 clears negative zeros
    joints = m.joints @ R.T + t
    joints[0, PELVIS] = 0.0  # exact despite rounding
    return CanonicalMotion(joints, m.fps), RigidTransform(R, t)


def temporal_resample(x, factor: int = 4) -> np.ndarray:
    """Window-mean downsampling along axis 0 to ``ceil(f / factor)`` frames.

    Accepts a :class:`MotionSequence` or any array with time on axis 0.
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    arr = x.joints if isinstance(x, MotionSequence) else np.asarray(x, dtype=np.float64)
    f = len(arr)
    n_out = -(-f // factor)
    return np.stack([arr[i * factor : min((i + 1) * factor, f)].mean(axis=0) for i in range(n_out)])


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------


def round_sig(arr, digits: int = 10):
    """Nested lists with every float rounded to ``digits`` significant digits.

    NaN becomes ``None`` so records stay strict JSON.
    """
    arr = np.asarray(arr)
    if arr.dtype == bool:
        return arr.tolist()
    fmt = f"{{:.{digits}g}}"
    flat = [None if v != v else float(fmt.format(v)) for v in arr.ravel().tolist()]
    out = np.empty(arr.size, dtype=object)
    out[:] = flat
    return out.reshape(arr.shape).tolist()


def from_json_array(data) -> np.ndarray:
    return np.array(data, dtype=np.float64)  # None -> nan


def motion_to_record(m: MotionSequence) -> dict:
    return {
        "version": MOTION_FILE_VERSION,
        "fps": m.fps,
        "joint_names": list(JOINT_NAMES),
        "joints": round_sig(m.joints),
    }


def motion_from_record(rec: dict) -> MotionSequence:
    if rec.get("version") != MOTION_FILE_VERSION:
        raise InvalidMotion(f"unsupported motion version {rec.get('version')!r}")
    if tuple(rec.get("joint_names", ())) != JOINT_NAMES:
        raise InvalidMotion("joint names do not match the 22-joint layout")
    return MotionSequence(from_json_array(rec["joints"]), float(rec["fps"]))


def write_motion(m: MotionSequence, path) -> None:
    Path(path).write_text(json.dumps(motion_to_record(m)))


def read_motion(path) -> MotionSequence:
    return motion_from_record(json.loads(Path(path).read_text()))
