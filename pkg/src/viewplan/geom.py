"""Rotation algebra, camera extrinsics and pinhole projection.

Conventions used throughout the package:

* World frame is y-up, meters.
* A :class:`CameraPose` stores camera-to-world extrinsics: ``X_w = R @ X_c + t``.
  ``t`` is the camera center, the columns of ``R`` are the camera axes in world
  coordinates. The camera looks along its local +z and its local +y maps to
  image rows growing downward.
* The 6D rotation representation is the first two *rows* of ``R``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

EPS_DEGENERATE = 1e-12


class DegenerateRotation(ValueError):
    """Raised when a 6D rotation cannot be orthogonalized."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"{message} (frame {index})")
        self.index = index


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------


def orthogonalize_6d(r) -> np.ndarray:
    """Gram-Schmidt a 6D rotation (first two rows) back into a rotation matrix.

    Accepts ``(6,)`` or any ``(..., 6)`` batch and returns ``(..., 3, 3)``.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != 6:
        raise ValueError(f"expected trailing dimension 6, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise DegenerateRotation("non-finite 6D rotation")
    a, b = r[..., 0:3], r[..., 3:6]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(na < EPS_DEGENERATE):
        raise DegenerateRotation("first row has zero length", _first_bad(na))
    row1 = a / na
    b_perp = b - np.sum(row1 * b, axis=-1, keepdims=True) * row1
    nb = np.linalg.norm(b_perp, axis=-1, keepdims=True)
    if np.any(nb < EPS_DEGENERATE):
        raise DegenerateRotation("rows are parallel or second row is zero", _first_bad(nb))
    row2 = b_perp / nb
    row3 = np.cross(row1, row2)
    return np.stack([row1, row2, row3], axis=-2)


def _first_bad(norms: np.ndarray) -> int | None:
    flat = norms.reshape(-1)
    if flat.size <= 1:
        return None
    return int(np.argmax(flat < EPS_DEGENERATE))


def rotmat_to_6d(R) -> np.ndarray:
    """First two rows of ``R`` flattened to ``(..., 6)``."""
    R = np.asarray(R, dtype=np.float64)
    return R[..., :2, :].reshape(R.shape[:-2] + (6,))


def skew(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -w[..., 2], w[..., 1]
    out[..., 1, 0], out[..., 1, 2] = w[..., 2], -w[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -w[..., 1], w[..., 0]
    return out


def axis_angle_to_matrix(w) -> np.ndarray:
    """Rodrigues formula for ``(..., 3)`` rotation vectors."""
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w, axis=-1)[..., None, None]
    K = skew(w)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    s = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    c = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    return np.eye(3) + s * K + c * (K @ K)


def matrix_to_axis_angle(R) -> np.ndarray:
    """Inverse of :func:`axis_angle_to_matrix`, angle in ``[0, pi]``."""
    R = np.asarray(R, dtype=np.float64)
    batch = R.shape[:-2]
    R = R.reshape(-1, 3, 3)
    out = np.zeros((R.shape[0], 3))
    for i, M in enumerate(R):
        cos = np.clip((np.trace(M) - 1.0) / 2.0, -1.0, 1.0)
        vee = np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
        sin = 0.5 * np.linalg.norm(vee)
        theta = np.arctan2(sin, cos)
        if theta < 1e-8:
            out[i] = 0.5 * vee
        elif np.pi - theta > 1e-4:
            out[i] = theta / (2.0 * np.sin(theta)) * vee
        else:
            # near pi: axis from the symmetric part
            S = 0.5 * (M + M.T) - cos * np.eye(3)
            j = int(np.argmax(np.diag(S)))
            axis = S[j] / np.sqrt(max(S[j, j], 1e-300))
            if axis @ vee < 0:
                axis = -axis
            out[i] = theta * axis / np.linalg.norm(axis)
    return out.reshape(batch + (3,))


def geodesic_angle(R1, R2) -> np.ndarray:
    """Angle in radians of ``R1^T R2``; broadcasts over leading axes."""
    R1 = np.asarray(R1, dtype=np.float64)
    R2 = np.asarray(R2, dtype=np.float64)
    M = np.swapaxes(R1, -1, -2) @ R2
    cos = (np.trace(M, axis1=-2, axis2=-1) - 1.0) / 2.0
    vee = np.stack([M[..., 2, 1] - M[..., 1, 2], M[..., 0, 2] - M[..., 2, 0], M[..., 1, 0] - M[..., 0, 1]], -1)
    return np.arctan2(0.5 * np.linalg.norm(vee, axis=-1), cos)


def rotation_y(angle: float) -> np.ndarray:
    """Rotation about the world up axis by ``angle`` radians."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def slerp(R0, R1, alpha: float) -> np.ndarray:
    w = matrix_to_axis_angle(np.asarray(R0).T @ np.asarray(R1))
    return np.asarray(R0) @ axis_angle_to_matrix(alpha * w)


def look_at(position, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Camera-to-world rotation looking from ``position`` at ``target``.

    Image "down" (camera +y) is aligned with world ``-up`` as far as possible.
    """
    z = np.asarray(target, dtype=np.float64) - np.asarray(position, dtype=np.float64)
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise DegenerateRotation("camera position coincides with target")
    z = z / nz
    x = np.cross(-np.asarray(up, dtype=np.float64), z)
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        raise DegenerateRotation("viewing direction parallel to up vector")
    x = x / nx
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=np.float64)
    return bool(
        np.linalg.norm(R.T @ R - np.eye(3)) < tol and abs(np.linalg.det(R) - 1.0) < tol
    )


# ---------------------------------------------------------------------------
# cameras
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels. Defaults: 672x384, focal 384, centered."""

    width_px: int = 672
    height_px: int = 384
    focal_px: float = 384.0
    cx: float | None = None
    cy: float | None = None

    def __post_init__(self):
        if self.cx is None:
            object.__setattr__(self, "cx", self.width_px / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", self.height_px / 2.0)
        if min(self.width_px, self.height_px, self.focal_px) <= 0:
            raise ValueError("intrinsics must be positive")
        if not (0 < self.cx < self.width_px and 0 < self.cy < self.height_px):
            raise ValueError("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.focal_px, 0.0, self.cx], [0.0, self.focal_px, self.cy], [0.0, 0.0, 1.0]]
        )


DEFAULT_INTRINSICS = Intrinsics()


@dataclass(frozen=True)
class CameraPose:
    """Camera-to-world extrinsics: center ``t`` and orientation ``rot``."""

    t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rot: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(3))
        object.__setattr__(self, "rot", np.asarray(self.rot, dtype=np.float64).reshape(3, 3))

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.zeros(3), np.eye(3))

    def world_to_camera(self) -> tuple[np.ndarray, np.ndarray]:
        """``(R_wc, t_wc)`` such that ``X_c = R_wc @ X_w + t_wc``."""
        Rwc = self.rot.T
        return Rwc, -Rwc @ self.t

    def to_9d(self) -> np.ndarray:
        return np.concatenate([self.t, rotmat_to_6d(self.rot)])

    @classmethod
    def from_9d(cls, v) -> "CameraPose":
        v = np.asarray(v, dtype=np.float64)
        return cls(v[:3], orthogonalize_6d(v[3:9]))


def compose(a: CameraPose, b: CameraPose) -> CameraPose:
    """Pose ``b`` (expressed in frame ``a``) mapped to the world: ``a * b``."""
    return CameraPose(a.rot @ b.t + a.t, a.rot @ b.rot)


def relative_pose(a: CameraPose, b: CameraPose) -> CameraPose:
    """``b`` expressed in the frame of ``a``, so ``compose(a, rel) == b``."""
    return CameraPose(a.rot.T @ (b.t - a.t), a.rot.T @ b.rot)


def transform_pose(pose: CameraPose, R: np.ndarray, t: np.ndarray) -> CameraPose:
    """Apply the world rigid transform ``X -> R X + t`` to a pose."""
    return CameraPose(R @ pose.t + t, R @ pose.rot)


@dataclass
class CameraTrajectory:
    """Per-frame camera-to-world extrinsics stored as stacked arrays."""

    translations: np.ndarray
    rotations: np.ndarray
    fps: float = 8.0

    def __post_init__(self):
        self.translations = np.asarray(self.translations, dtype=np.float64).reshape(-1, 3)
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(-1, 3, 3)
        if len(self.translations) < 1 or len(self.translations) != len(self.rotations):
            raise ValueError("trajectory needs f >= 1 matching translations and rotations")

    def __len__(self) -> int:
        return len(self.translations)

    def __getitem__(self, i: int) -> CameraPose:
        return CameraPose(self.translations[i], self.rotations[i])

    def __iter__(self) -> Iterator[CameraPose]:
        return (self[i] for i in range(len(self)))

    @property
    def poses(self) -> list[CameraPose]:
        return list(self)

    @classmethod
    def from_poses(cls, poses, fps: float = 8.0) -> "CameraTrajectory":
        poses = list(poses)
        return cls(np.stack([p.t for p in poses]), np.stack([p.rot for p in poses]), fps)

    def to_9d(self) -> np.ndarray:
        """``(f, 9)``: translation then the two 6D rows."""
        return np.concatenate([self.translations, rotmat_to_6d(self.rotations)], axis=1)

    @classmethod
    def from_9d(cls, arr, fps: float = 8.0) -> "CameraTrajectory":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 9:
            raise ValueError(f"expected (f, 9) camera array, got {arr.shape}")
        rots = np.empty((len(arr), 3, 3))
        for i, row in enumerate(arr):
            try:
                rots[i] = orthogonalize_6d(row[3:])
            except DegenerateRotation as exc:
                raise DegenerateRotation(str(exc), i) from None
        return cls(arr[:, :3], rots, fps)

    def transformed(self, R, t) -> "CameraTrajectory":
        R = np.asarray(R, dtype=np.float64)
        return CameraTrajectory(
            self.translations @ R.T + np.asarray(t, dtype=np.float64), R @ self.rotations, self.fps
        )


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------


def project_points(points, pose: CameraPose, K: Intrinsics = DEFAULT_INTRINSICS):
    """Project world points through a pinhole camera.

    Returns ``(uv, visible)`` with ``uv`` of shape ``(n, 2)``. A point is
    visible when it lies in front of the camera (z > 1e-6) and inside
    ``[0, W) x [0, H)``. Points behind the camera get NaN pixel coordinates.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    Xc = (pts - pose.t) @ pose.rot  # == R^T (X - t) row-wise
    return _pinhole(Xc, K)


def project_trajectory(points, traj: CameraTrajectory, K: Intrinsics = DEFAULT_INTRINSICS):
    """Per-frame projection of ``(f, n, 3)`` points; returns ``(f, n, 2)``, ``(f, n)``."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] != len(traj):
        raise ValueError("frame counts differ")
    Xc = np.einsum("fnk,fkj->fnj", pts - traj.translations[:, None, :], traj.rotations)
    return _pinhole(Xc, K)


def _pinhole(Xc: np.ndarray, K: Intrinsics):
    z = Xc[..., 2]
    front = z > 1e-6
    safe = np.where(front, z, 1.0)
    u = K.cx + K.focal_px * Xc[..., 0] / safe
    v = K.cy + K.focal_px * Xc[..., 1] / safe
    uv = np.stack([np.where(front, u, np.nan), np.where(front, v, np.nan)], axis=-1)
    with np.errstate(invalid="ignore"):
        inside = (u >= 0) & (u < K.width_px) & (v >= 0) & (v < K.height_px)
    return uv, front & inside
