"""Rule-based trajectory evaluation: HMR, jerk, shot diversity, reprojection
accuracy, geometric shot classification and label-entropy diversity.

Distances are meters, angles radians, jerks per unit frame spacing.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geom import (
    DEFAULT_INTRINSICS,
    CameraTrajectory,
    Intrinsics,
    geodesic_angle,
    matrix_to_axis_angle,
    project_trajectory,
)
from .motion import NUM_JOINTS, MotionSequence
from .synth import DIRECTIONS, DISTANCES, ELEVATIONS, MOVEMENTS, VIEWPOINTS

RASTER_SIZE = (84, 48)

# distance / elevation bins
CLOSE_UP_MAX = 2.0
LONG_MIN = 4.0
EYE_LEVEL_MAX = 0.5
HIGH_ANGLE_MIN = 1.0
LOW_ANGLE_MAX = -0.3
# movement rules
STATIC_MAX_DISPLACEMENT = 0.1
STATIC_MAX_ROTATION = math.radians(2.0)
ORBIT_MIN_SWEEP = math.radians(30.0)
ORBIT_MAX_DISTANCE_VARIATION = 0.2
PUSH_IN_MIN_RATIO = 1.33
PULL_OUT_MAX_RATIO = 0.75
CRANE_MIN_VERTICAL_SHARE = 0.6
ROTATION_MIN_SWEEP = math.radians(20.0)
ROTATION_MAX_DISPLACEMENT = 0.3

CATEGORY_COUNTS = {"viewpoint": len(VIEWPOINTS), "distance": len(DISTANCES), "movement": len(MOVEMENTS)}


class TooShort(ValueError):
    pass


def _check_frames(camera: CameraTrajectory, motion: MotionSequence) -> None:
    if len(camera) != len(motion):
        raise ValueError(f"camera has {len(camera)} frames, motion has {len(motion)}")


# ---------------------------------------------------------------------------
# human missing rate
# ---------------------------------------------------------------------------


def missing_frames(camera: CameraTrajectory, motion: MotionSequence, K: Intrinsics = DEFAULT_INTRINSICS) -> np.ndarray:
    """Boolean per frame: fewer than half of the joints project inside the image."""
    _check_frames(camera, motion)
    _, vis = project_trajectory(motion.joints, camera, K)
    return vis.sum(axis=1) < 0.5 * NUM_JOINTS


def hmr(camera: CameraTrajectory, motion: MotionSequence, K: Intrinsics = DEFAULT_INTRINSICS) -> float:
    return float(missing_frames(camera, motion, K).mean())


# ---------------------------------------------------------------------------
# jerk
# ---------------------------------------------------------------------------


def angular_velocity(camera: CameraTrajectory) -> np.ndarray:
    """``(f-1, 3)`` axis-angle of ``R_i^T R_{i+1}``."""
    R = camera.rotations
    return matrix_to_axis_angle(np.swapaxes(R[:-1], -1, -2) @ R[1:])


def jerk(camera: CameraTrajectory) -> tuple[float, float]:
    """Mean third-difference magnitude of translation and of orientation."""
    if len(camera) < 4:
        raise TooShort("jerk needs at least 4 frames")
    d3 = np.diff(camera.translations, n=3, axis=0)
    jerk_t = float(np.linalg.norm(d3, axis=1).mean())
    w = angular_velocity(camera)
    jerk_r = float(np.linalg.norm(np.diff(w, n=2, axis=0), axis=1).mean())
    return jerk_t, jerk_r


# ---------------------------------------------------------------------------
# shot diversity
# ---------------------------------------------------------------------------


def subject_relative(camera: CameraTrajectory, motion: MotionSequence):
    """Per-frame camera distance to the pelvis and azimuth in the subject frame.

    Azimuth is 0 when the camera is in front of the subject, +-pi behind.
    """
    _check_frames(camera, motion)
    rel = camera.translations - motion.pelvis
    dist = np.linalg.norm(rel, axis=1)
    fwd = motion.facing()
    right = np.stack([fwd[:, 2], np.zeros(len(fwd)), -fwd[:, 0]], axis=1)  # fwd x up
    az = np.arctan2(np.sum(rel * right, axis=1), np.sum(rel * fwd, axis=1))
    return dist, az


def circular_mean(angles) -> float:
    angles = np.asarray(angles, dtype=np.float64)
    return math.atan2(float(np.mean(np.sin(angles))), float(np.mean(np.cos(angles))))


def circular_std(angles) -> float:
    """``sqrt(-2 ln R)`` with ``1 - R`` accumulated as half-angle sines for accuracy."""
    angles = np.asarray(angles, dtype=np.float64)
    dev = angles - circular_mean(angles)
    one_minus_r = float(np.mean(2.0 * np.sin(0.5 * dev) ** 2))
    one_minus_r = min(one_minus_r, 1.0 - 1e-300)
    return math.sqrt(max(-2.0 * math.log1p(-one_minus_r), 0.0))


def shot_diversity(camera: CameraTrajectory, motion: MotionSequence) -> tuple[float, float]:
    dist, az = subject_relative(camera, motion)
    return float(np.std(dist)), circular_std(az)


# ---------------------------------------------------------------------------
# reprojection accuracy
# ---------------------------------------------------------------------------


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull (monotone chain); collinear points dropped."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=np.float64).tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=np.float64).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def rasterize_hull(points, width: int, height: int) -> np.ndarray:
    """``(height, width)`` mask of pixel centers inside the filled hull."""
    mask = np.zeros((height, width), dtype=bool)
    hull = convex_hull(points)
    if len(hull) < 3:
        return mask
    xs = np.arange(width) + 0.5
    ys = np.arange(height) + 0.5
    px, py = np.meshgrid(xs, ys)
    mask[:] = True
    for a, b in zip(hull, np.roll(hull, -1, axis=0)):
        mask &= (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]) >= 0
    return mask


def human_masks(camera: CameraTrajectory, motion: MotionSequence, K: Intrinsics = DEFAULT_INTRINSICS,
                raster=RASTER_SIZE) -> np.ndarray:
    """``(f, H_r, W_r)`` hull masks of the visible projected joints."""
    _check_frames(camera, motion)
    uv, vis = project_trajectory(motion.joints, camera, K)
    wr, hr = raster
    sx, sy = wr / K.width_px, hr / K.height_px
    masks = np.zeros((len(camera), hr, wr), dtype=bool)
    for i in range(len(camera)):
        pts = uv[i, vis[i]] * [sx, sy]
        masks[i] = rasterize_hull(pts, wr, hr)
    return masks


def reproject_acc(estimated: CameraTrajectory, truth: CameraTrajectory, motion: MotionSequence,
                  K: Intrinsics = DEFAULT_INTRINSICS, raster=RASTER_SIZE) -> tuple[float, float]:
    """(MSE, IoU) between human masks rendered with the two trajectories."""
    a = human_masks(estimated, motion, K, raster)
    b = human_masks(truth, motion, K, raster)
    mse = float(np.mean((a.astype(np.float64) - b) ** 2))
    inter = (a & b).sum(axis=(1, 2))
    union = (a | b).sum(axis=(1, 2))
    nonempty = union > 0
    iou = float(np.mean(inter[nonempty] / union[nonempty])) if nonempty.any() else 1.0
    return mse, iou


# ---------------------------------------------------------------------------
# shot classification
# ---------------------------------------------------------------------------


def distance_class(mean_distance: float) -> str:
    if mean_distance < CLOSE_UP_MAX:
        return "close-up"
    if mean_distance > LONG_MIN:
        return "long"
    return "medium"


def elevation_class(mean_height: float) -> str:
    if mean_height > HIGH_ANGLE_MIN:
        return "high-angle"
    if mean_height < LOW_ANGLE_MAX:
        return "low-angle"
    return "eye-level"


def direction_class(mean_azimuth: float) -> str:
    a = abs(math.remainder(mean_azimuth, 2 * math.pi))
    if a < math.radians(45.0):
        return "front"
    if a > math.radians(135.0):
        return "back"
    return "side"


@dataclass
class MovementFeatures:
    max_displacement: float
    max_rotation: float
    azimuth_sweep: float
    distance_variation: float
    distance_ratio: float
    vertical_range: float
    path_length: float


def movement_features(camera: CameraTrajectory, motion: MotionSequence) -> MovementFeatures:
    """Quantities the movement rules threshold on.

    The azimuth sweep is measured in the world frame around the current pelvis,
    so a camera following a walking subject at a fixed offset has zero sweep.
    """
    _check_frames(camera, motion)
    t = camera.translations
    disp = float(np.linalg.norm(t - t[0], axis=1).max())
    rot = float(np.max(geodesic_angle(camera.rotations[0], camera.rotations)))
    rel = t - motion.pelvis
    az = np.unwrap(np.arctan2(rel[:, 0], rel[:, 2]))
    dist = np.linalg.norm(rel, axis=1)
    return MovementFeatures(
        max_displacement=disp,
        max_rotation=rot,
        azimuth_sweep=float(az.max() - az.min()),
        distance_variation=float((dist.max() - dist.min()) / dist.mean()),
        distance_ratio=float(dist[0] / dist[-1]),
        vertical_range=float(t[:, 1].max() - t[:, 1].min()),
        path_length=float(np.linalg.norm(np.diff(t, axis=0), axis=1).sum()),
    )


def movement_class(feat: MovementFeatures) -> str:
    if feat.max_displacement < STATIC_MAX_DISPLACEMENT and feat.max_rotation < STATIC_MAX_ROTATION:
        return "static"
    if feat.azimuth_sweep > ORBIT_MIN_SWEEP and feat.distance_variation < ORBIT_MAX_DISTANCE_VARIATION:
        return "orbit"
    if feat.distance_ratio > PUSH_IN_MIN_RATIO:
        return "push-in"
    if feat.distance_ratio < PULL_OUT_MAX_RATIO:
        return "pull-out"
    if feat.path_length > 1e-9 and feat.vertical_range > CRANE_MIN_VERTICAL_SHARE * feat.path_length:
        return "crane"
    if feat.max_rotation > ROTATION_MIN_SWEEP and feat.max_displacement < ROTATION_MAX_DISPLACEMENT:
        return "rotation"
    return "tracking"


def classify_shot(camera: CameraTrajectory, motion: MotionSequence) -> dict:
    """``{"viewpoint", "distance", "movement"}`` labels from camera geometry."""
    dist, az = subject_relative(camera, motion)
    height = float(np.mean(camera.translations[:, 1] - motion.pelvis[:, 1]))
    viewpoint = f"{direction_class(circular_mean(az))}+{elevation_class(height)}"
    return {
        "viewpoint": viewpoint,
        "distance": distance_class(float(dist.mean())),
        "movement": movement_class(movement_features(camera, motion)),
    }


# ---------------------------------------------------------------------------
# diversity over a result set
# ---------------------------------------------------------------------------


def normalized_entropy(values, n_categories: int) -> float:
    _, counts = np.unique(np.asarray(values, dtype=object).astype(str), return_counts=True)
    p = counts / counts.sum()
    h = float(-(p * np.log(p)).sum())
    return h / math.log(n_categories)


def csd_entropy(labels) -> float:
    """Mean normalized entropy of viewpoint, distance and movement labels."""
    labels = list(labels)
    if not labels:
        raise ValueError("csd_entropy needs at least one labeled sample")
    return float(
        np.mean([normalized_entropy([lab[k] for lab in labels], n) for k, n in CATEGORY_COUNTS.items()])
    )


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ("HMR", "Jerk_t", "Jerk_r", "Dist_t", "Dist_r", "MSE", "IoU")


@dataclass
class EvalReport:
    hmr: float
    jerk_t: float
    jerk_r: float
    dist_t: float
    dist_r: float
    reproj_mse: float
    reproj_iou: float
    csd: float
    labels: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))

    def row(self) -> tuple[float, ...]:
        return (self.hmr, self.jerk_t, self.jerk_r, self.dist_t, self.dist_r, self.reproj_mse, self.reproj_iou)


def evaluate(camera: CameraTrajectory, motion: MotionSequence, truth: CameraTrajectory | None = None,
             K: Intrinsics = DEFAULT_INTRINSICS) -> EvalReport:
    """All per-trajectory metrics; reprojection terms need a reference trajectory."""
    jt, jr = jerk(camera)
    dt, dr = shot_diversity(camera, motion)
    mse, iou = reproject_acc(camera, truth, motion, K) if truth is not None else (float("nan"), float("nan"))
    labels = classify_shot(camera, motion)
    return EvalReport(hmr(camera, motion, K), jt, jr, dt, dr, mse, iou, csd_entropy([labels]), labels)


def format_table(names, reports) -> str:
    """Fixed-column text table, one row per report plus a mean row."""
    head = f"{'sample':>8}" + "".join(f"{c:>10}" for c in REPORT_COLUMNS)
    lines = [head]
    rows = [r.row() for r in reports]
    for name, row in zip(names, rows):
        lines.append(f"{str(name):>8}" + "".join(f"{v:>10.4f}" for v in row))
    if rows:
        mean = np.nanmean(np.array(rows, dtype=np.float64), axis=0)
        lines.append(f"{'mean':>8}" + "".join(f"{v:>10.4f}" for v in mean))
        csd = csd_entropy([r.labels for r in reports])
        lines.append(f"{'CSD':>8}{csd:>10.4f}")
    return "\n".join(lines)
