"""Absolute camera pose from 2D-3D joint correspondences with known intrinsics.

Linear DLT initialization followed by Gauss-Newton refinement of the pixel
reprojection error; the rotation is updated by left-multiplied axis-angle
increments so every iterate stays a rotation matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import (
    DEFAULT_INTRINSICS,
    CameraPose,
    CameraTrajectory,
    Intrinsics,
    axis_angle_to_matrix,
    skew,
    slerp,
)

MIN_POINTS = 6


class PnPError(ValueError):
    pass


class TooFewPoints(PnPError):
    pass


class Coplanar(PnPError):
    pass


class IllConditioned(PnPError):
    pass


class SingularNormalEquations(PnPError):
    pass


class TooFewVisible(PnPError):
    pass


@dataclass
class Correspondences:
    points3d: np.ndarray
    points2d: np.ndarray
    K: Intrinsics = DEFAULT_INTRINSICS

    def __post_init__(self):
        self.points3d = np.asarray(self.points3d, dtype=np.float64).reshape(-1, 3)
        self.points2d = np.asarray(self.points2d, dtype=np.float64).reshape(-1, 2)
        if len(self.points3d) != len(self.points2d):
            raise ValueError("2D and 3D point counts differ")
        if len(self.points3d) < MIN_POINTS:
            raise TooFewPoints(f"need at least {MIN_POINTS} correspondences, got {len(self.points3d)}")


@dataclass
class PoseEstimate:
    pose: CameraPose
    mean_error: float  # mean reprojection error, pixels
    cost: float  # sum of squared pixel residuals
    iterations: int = 0


def reprojection_residuals(pose: CameraPose, c: Correspondences) -> np.ndarray:
    Rwc, twc = pose.world_to_camera()
    Xc = c.points3d @ Rwc.T + twc
    z = Xc[:, 2]
    uv = np.stack([c.K.cx + c.K.focal_px * Xc[:, 0] / z, c.K.cy + c.K.focal_px * Xc[:, 1] / z], axis=1)
    return (uv - c.points2d).ravel()


def _estimate(pose: CameraPose, c: Correspondences, iterations: int = 0) -> PoseEstimate:
    r = reprojection_residuals(pose, c).reshape(-1, 2)
    return PoseEstimate(pose, float(np.linalg.norm(r, axis=1).mean()), float(np.sum(r**2)), iterations)


def solve_frame_dlt(c: Correspondences) -> PoseEstimate:
    """Linear DLT on normalized image coordinates, then polar decomposition."""
    X = c.points3d
    centroid = X.mean(axis=0)
    sv = np.linalg.svd(X - centroid, compute_uv=False)
    if sv[-1] / np.sqrt(len(X)) < 1e-6:
        raise Coplanar("3D points are (nearly) coplanar; DLT is degenerate")
    scale = np.sqrt(3.0) / np.mean(np.linalg.norm(X - centroid, axis=1))
    Xn = (X - centroid) * scale
    K = c.K
    xn = (c.points2d - [K.cx, K.cy]) / K.focal_px

    n = len(X)
    Xh = np.hstack([Xn, np.ones((n, 1))])
    A = np.zeros((2 * n, 12))
    A[0::2, 0:4] = Xh
    A[0::2, 8:12] = -xn[:, 0:1] * Xh
    A[1::2, 4:8] = Xh
    A[1::2, 8:12] = -xn[:, 1:2] * Xh
    _, s, Vt = np.linalg.svd(A)
    # the null vector is s[-1]; the next one must be clearly nonzero
    if s[-2] / s[0] < 1e-12:
        raise IllConditioned(f"design matrix singular value ratio {s[-2] / s[0]:.3e}")
    P = Vt[-1].reshape(3, 4)
    # undo the 3D normalization: P_world = P_norm @ T
    T = np.eye(4)
    T[:3, :3] *= scale
    T[:3, 3] = -scale * centroid
    P = P @ T
    M, p4 = P[:, :3], P[:, 3]
    if np.linalg.det(M) < 0:
        M, p4 = -M, -p4
    U, sm, Vt2 = np.linalg.svd(M)
    Rwc = U @ Vt2
    twc = p4 / sm.mean()
    pose = CameraPose(-Rwc.T @ twc, Rwc.T)
    return _estimate(pose, c)


def refine_gauss_newton(initial: CameraPose, c: Correspondences, max_iters: int = 20,
                        tol: float = 1e-12) -> PoseEstimate:
    """Minimize the squared pixel reprojection error starting at ``initial``.

    Steps that do not lower the cost are rejected, so the returned cost never
    exceeds the initial one.
    """
    if not (np.all(np.isfinite(initial.t)) and np.all(np.isfinite(initial.rot))):
        raise ValueError("initial pose must be finite")
    Rwc, twc = initial.world_to_camera()
    f = c.K.focal_px
    best = _estimate(initial, c)
    it = 0
    for it in range(1, max_iters + 1):
        RX = c.points3d @ Rwc.T
        Xc = RX + twc
        x, y, z = Xc[:, 0], Xc[:, 1], Xc[:, 2]
        if np.any(z <= 1e-9):
            break
        r = reprojection_residuals(CameraPose(-Rwc.T @ twc, Rwc.T), c)
        # d(pixel)/d(X_c)
        Jp = np.zeros((len(x), 2, 3))
        Jp[:, 0, 0] = f / z
        Jp[:, 0, 2] = -f * x / z**2
        Jp[:, 1, 1] = f / z
        Jp[:, 1, 2] = -f * y / z**2
        # X_c = exp(w) R X + t  ->  dX_c/dw = -[R X]_x , dX_c/dt = I
        J = np.concatenate([Jp @ -skew(RX), Jp], axis=2).reshape(-1, 6)
        H = J.T @ J
        g = J.T @ r
        try:
            delta = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            delta = None
        if delta is None or not np.all(np.isfinite(delta)):
            try:
                delta = -np.linalg.solve(H + 1e-6 * np.eye(6), g)
            except np.linalg.LinAlgError as exc:
                raise SingularNormalEquations("normal equations singular even with damping") from exc
        if np.linalg.norm(delta) < tol:
            break
        R_new = axis_angle_to_matrix(delta[:3]) @ Rwc
        t_new = twc + delta[3:]
        cand = _estimate(CameraPose(-R_new.T @ t_new, R_new.T), c, it)
        if not cand.cost < best.cost:
            break
        Rwc, twc, best = R_new, t_new, cand
    best.iterations = it
    return best


def solve_frame(c: Correspondences, max_iters: int = 20) -> PoseEstimate:
    init = solve_frame_dlt(c)
    return refine_gauss_newton(init.pose, c, max_iters=max_iters)


@dataclass
class TrajectoryEstimate:
    trajectory: CameraTrajectory
    interpolated: np.ndarray  # bool per frame
    errors: np.ndarray  # mean pixel error per frame, NaN when interpolated


def solve_trajectory(sample, K: Intrinsics = DEFAULT_INTRINSICS, max_iters: int = 20) -> TrajectoryEstimate:
    """Per-frame PnP over visible joints; unsolvable frames are interpolated.

    ``sample`` needs ``motion``, ``obs2d`` and ``vis`` (a :class:`SceneSample`).
    Interior gaps get linear translation / spherical rotation interpolation
    between the nearest solved neighbors; leading and trailing gaps copy the
    nearest solved pose.
    """
    joints = sample.motion.joints
    f = len(joints)
    poses: list[CameraPose | None] = [None] * f
    errors = np.full(f, np.nan)
    for i in range(f):
        mask = np.asarray(sample.vis[i], dtype=bool)
        if mask.sum() < MIN_POINTS:
            continue
        try:
            est = solve_frame(Correspondences(joints[i, mask], sample.obs2d[i, mask], K), max_iters)
        except (Coplanar, IllConditioned, SingularNormalEquations):
            continue
        poses[i], errors[i] = est.pose, est.mean_error
    solved = [i for i, p in enumerate(poses) if p is not None]
    if len(solved) * 2 < f:
        raise TooFewVisible(f"only {len(solved)} of {f} frames could be solved")
    interpolated = np.array([p is None for p in poses])
    for i in range(f):
        if poses[i] is not None:
            continue
        prev = max((j for j in solved if j < i), default=None)
        nxt = min((j for j in solved if j > i), default=None)
        if prev is None or nxt is None:
            poses[i] = poses[nxt if prev is None else prev]
            continue
        a = (i - prev) / (nxt - prev)
        pa, pb = poses[prev], poses[nxt]
        poses[i] = CameraPose((1 - a) * pa.t + a * pb.t, slerp(pa.rot, pb.rot, a))
    fps = getattr(sample.motion, "fps", 8.0)
    return TrajectoryEstimate(CameraTrajectory.from_poses(poses, fps), interpolated, errors)
