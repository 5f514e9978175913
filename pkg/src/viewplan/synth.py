"""Procedural motion + camera samples covering the shot taxonomy.

Every sample pairs a canonical skeletal motion with a camera trajectory that
realizes a :class:`ShotSpec`, plus the 2D joint observations that trajectory
produces under the default intrinsics. The 2D joints stand in for video.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .geom import (
    DEFAULT_INTRINSICS,
    CameraTrajectory,
    Intrinsics,
    look_at,
    project_trajectory,
    rotation_y,
)
from .motion import (
    JOINT_NAMES,
    PARENTS,
    PELVIS,
    CanonicalMotion,
    MotionSequence,
    canonicalize,
    from_json_array,
    round_sig,
    yaw_of,
)

MOVEMENTS = ("push-in", "pull-out", "orbit", "static", "rotation", "tracking", "crane")
DIRECTIONS = ("front", "side", "back")
ELEVATIONS = ("eye-level", "high-angle", "low-angle")
DISTANCES = ("close-up", "medium", "long")
VIEWPOINTS = tuple(f"{d}+{e}" for d in DIRECTIONS for e in ELEVATIONS)
MOTION_KINDS = ("idle", "walk", "turn")

# motion kinds each camera movement is generated with; the fixed-position
# movements need a subject that stays put to keep it framed
KINDS_FOR_MOVEMENT = {
    "push-in": ("idle", "walk", "turn"),
    "pull-out": ("idle", "walk", "turn"),
    "orbit": ("idle", "walk", "turn"),
    "static": ("idle", "turn"),
    "rotation": ("idle", "turn"),
    "tracking": ("walk",),
    "crane": ("idle", "turn"),
}

# generation ranges, kept inside the classifier bins with margin
_MEAN_DISTANCE = {"close-up": (1.25, 1.85), "medium": (2.4, 3.6), "long": (4.6, 6.5)}
_HEIGHT = {"eye-level": (-0.15, 0.3), "high-angle": (1.2, 1.6), "low-angle": (-0.65, -0.45)}
_AZIMUTH_DEG = {"front": (-20.0, 20.0), "side": (70.0, 110.0), "back": (160.0, 200.0)}
_STEEPNESS = 1.1  # 3D distance must exceed |height offset| by this factor

_KIND_TEXT = {"idle": "stands idle", "walk": "walks forward", "turn": "turns in place"}
_MOVE_TEXT = {
    "push-in": "pushes in",
    "pull-out": "pulls out",
    "orbit": "orbits the subject",
    "static": "holds still",
    "rotation": "pans in place",
    "tracking": "tracks alongside",
    "crane": "cranes vertically",
}
_DIST_TEXT = {"close-up": "close-up", "medium": "medium shot", "long": "long shot"}
PROMPT_TEMPLATE = "A person {kind}; the camera {movement} from a {viewpoint} {distance_class}."

DATASET_VERSION = 1


class InfeasibleSpec(ValueError):
    pass


class MalformedRecord(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


@dataclass(frozen=True)
class ShotSpec:
    movement: str
    direction: str = "front"
    elevation: str = "eye-level"
    distance: str = "medium"
    f: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.movement not in MOVEMENTS:
            raise ValueError(f"unknown movement {self.movement!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.elevation not in ELEVATIONS:
            raise ValueError(f"unknown elevation {self.elevation!r}")
        if self.distance not in DISTANCES:
            raise ValueError(f"unknown distance class {self.distance!r}")
        if self.f < 8:
            raise ValueError("shots need f >= 8")

    @property
    def viewpoint(self) -> str:
        return f"{self.direction}+{self.elevation}"

    @property
    def labels(self) -> dict:
        return {"viewpoint": self.viewpoint, "distance": self.distance, "movement": self.movement}


@dataclass
class SceneSample:
    motion: CanonicalMotion
    camera: CameraTrajectory
    obs2d: np.ndarray
    vis: np.ndarray
    spec: ShotSpec
    kind: str
    prompt: str

    @property
    def labels(self) -> dict:
        return self.spec.labels

    def __len__(self) -> int:
        return len(self.motion)


# ---------------------------------------------------------------------------
# motion
# ---------------------------------------------------------------------------

# rest pose: facing +z, y up, left side at -x (consistent with forward_direction)
_REST = np.array(
    [
        [0.0, 0.93, 0.0],
        [-0.09, 0.84, 0.0],
        [0.09, 0.84, 0.0],
        [0.0, 1.04, -0.01],
        [-0.10, 0.46, 0.01],
        [0.10, 0.46, 0.01],
        [0.0, 1.17, 0.0],
        [-0.10, 0.07, -0.03],
        [0.10, 0.07, -0.03],
        [0.0, 1.23, 0.01],
        [-0.11, 0.02, 0.10],
        [0.11, 0.02, 0.10],
        [0.0, 1.45, -0.01],
        [-0.07, 1.37, 0.0],
        [0.07, 1.37, 0.0],
        [0.0, 1.60, 0.03],
        [-0.18, 1.40, -0.01],
        [0.18, 1.40, -0.01],
        [-0.20, 1.12, -0.02],
        [0.20, 1.12, -0.02],
        [-0.21, 0.87, 0.01],
        [0.21, 0.87, 0.01],
    ]
)
_OFFSETS = np.array([_REST[j] - (_REST[p] if p >= 0 else 0.0) for j, p in enumerate(PARENTS)])


def _rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _forward_kinematics(root: np.ndarray, heading: float, local: dict[int, np.ndarray]) -> np.ndarray:
    glob = [None] * len(PARENTS)
    pos = np.zeros((len(PARENTS), 3))
    for j, p in enumerate(PARENTS):
        L = local.get(j, np.eye(3))
        if p < 0:
            glob[j] = rotation_y(heading) @ L
            pos[j] = root
        else:
            glob[j] = glob[p] @ L
            pos[j] = pos[p] + glob[p] @ _OFFSETS[j]
    return pos


def gen_motion(kind: str, f: int = 16, fps: float = 8.0, seed: int = 0) -> CanonicalMotion:
    """Procedural skeleton animation (``idle``, ``walk`` or ``turn``).

    Joints come from forward kinematics over fixed bone offsets, so bone
    lengths are constant. The result is canonicalized.
    """
    if kind not in MOTION_KINDS:
        raise ValueError(f"unknown motion kind {kind!r}")
    if f < 8:
        raise ValueError("gen_motion needs f >= 8")
    rng = np.random.default_rng(seed)
    time = np.arange(f) / fps
    cadence = rng.uniform(0.8, 1.0)  # strides per second
    phase0 = rng.uniform(0, 2 * math.pi)
    frames = []
    if kind == "walk":
        speed = rng.uniform(0.6, 1.4)
        swing = rng.uniform(0.35, 0.5)
    elif kind == "turn":
        speed = 0.0
        swing = rng.uniform(0.08, 0.15)
        turn = math.radians(rng.uniform(30.0, 50.0)) * rng.choice([-1.0, 1.0])
    else:
        speed = 0.0
        swing = 0.0
        sway = rng.uniform(0.005, 0.015)
    for ti in time:
        ph = 2 * math.pi * cadence * ti + phase0
        s = math.sin(ph)
        local = {}
        if kind == "idle":
            root = np.array([sway * math.sin(0.5 * ph), 0.93 + 0.004 * math.sin(2 * ph), 0.0])
            heading = 0.0
            arm = 0.05 * math.sin(0.5 * ph)
            local[16] = _rot_z(-0.05 + arm)
            local[17] = _rot_z(0.05 - arm)
            local[3] = _rot_x(0.02 * math.sin(ph))
        else:
            if kind == "walk":
                root = np.array([0.02 * s, 0.93 + 0.02 * math.cos(2 * ph), speed * ti])
                heading = math.radians(3.0) * s
            else:
                u = ti / time[-1]
                heading = turn * (3 * u**2 - 2 * u**3)
                root = np.array([0.01 * s, 0.93 + 0.01 * math.cos(2 * ph), 0.0])
            local[1] = _rot_x(-swing * s)
            local[2] = _rot_x(swing * s)
            local[4] = _rot_x(1.2 * swing * max(0.0, math.sin(ph + 1.2)))
            local[5] = _rot_x(1.2 * swing * max(0.0, -math.sin(ph + 1.2)))
            local[16] = _rot_x(0.6 * swing * s)
            local[17] = _rot_x(-0.6 * swing * s)
            local[18] = _rot_x(-0.3 * swing * (1 + s))
            local[19] = _rot_x(-0.3 * swing * (1 - s))
            local[9] = rotation_y(-0.5 * math.radians(3.0) * s)
        frames.append(_forward_kinematics(root, heading, local))
    canon, _ = canonicalize(MotionSequence(np.stack(frames), fps))
    return canon


def bone_lengths(joints) -> np.ndarray:
    """``(f, 21)`` bone lengths for a ``(f, 22, 3)`` motion."""
    joints = np.asarray(joints)
    return np.stack(
        [np.linalg.norm(joints[:, c] - joints[:, p], axis=-1) for c, p in enumerate(PARENTS) if p >= 0],
        axis=1,
    )


# ---------------------------------------------------------------------------
# cameras
# ---------------------------------------------------------------------------


def _circular_mean(angles) -> float:
    return math.atan2(float(np.mean(np.sin(angles))), float(np.mean(np.cos(angles))))


def _offset(azimuth: float, horizontal: float, height: float) -> np.ndarray:
    return np.array([horizontal * math.sin(azimuth), height, horizontal * math.cos(azimuth)])


def _sample_geometry(spec: ShotSpec, rng: np.random.Generator) -> dict:
    """Draw mean 3D distance, height offset and movement extents for ``spec``."""
    lo, hi = _MEAN_DISTANCE[spec.distance]
    hlo, hhi = _HEIGHT[spec.elevation]
    for _ in range(1000):
        g = {
            "m": rng.uniform(lo, hi),
            "h": rng.uniform(hlo, hhi),
            "ratio": rng.uniform(0.55, 0.65),
            "span": rng.uniform(0.5, 0.8) * rng.choice([-1.0, 1.0]),
        }
        m, h = g["m"], g["h"]
        if spec.movement in ("push-in", "pull-out"):
            near = 2 * m * g["ratio"] / (1 + g["ratio"])
            if near >= _STEEPNESS * abs(h):
                return g
        elif spec.movement == "crane":
            heights = h + g["span"] * np.array([-0.5, 0.5])
            horiz2 = m * m - (h * h + g["span"] ** 2 / 12.0)
            if horiz2 < (_STEEPNESS - 1.0) * m * m:
                continue
            d_end = np.sqrt(horiz2 + heights**2)
            if 0.8 < d_end[0] / d_end[1] < 1.25:
                g["horizontal"] = math.sqrt(horiz2)
                return g
        elif m >= _STEEPNESS * abs(h):
            return g
    raise InfeasibleSpec(f"no camera geometry satisfies {spec}")


def gen_camera(spec: ShotSpec, motion: MotionSequence, intrinsics: Intrinsics = DEFAULT_INTRINSICS) -> CameraTrajectory:
    """Camera trajectory realizing ``spec`` around ``motion``.

    Raises :class:`InfeasibleSpec` when the constraints cannot be met, e.g. a
    fixed-position shot of a subject that leaves the frame.
    """
    f = len(motion)
    if f != spec.f:
        raise InfeasibleSpec(f"spec asks for {spec.f} frames, motion has {f}")
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0xCA3]))
    pelvis = motion.pelvis
    ref_yaw = _circular_mean([yaw_of(d) for d in motion.facing()])
    az_lo, az_hi = _AZIMUTH_DEG[spec.direction]
    rel = math.radians(rng.uniform(az_lo, az_hi))
    if spec.direction == "side" and rng.random() < 0.5:
        rel = -rel
    azimuth = ref_yaw + rel
    geo = _sample_geometry(spec, rng)
    m, h, ratio = geo["m"], geo["h"], geo["ratio"]
    u = np.linspace(0.0, 1.0, f)
    anchor = pelvis.mean(axis=0)
    mv = spec.movement

    if mv in ("static", "rotation", "crane"):
        horizontal = math.sqrt(m * m - h * h)
        if mv == "crane":
            heights = h + geo["span"] * (u - 0.5)
            horizontal = geo["horizontal"]
        else:
            heights = np.full(f, h)
        pos = np.stack([anchor + _offset(azimuth, horizontal, hh) for hh in heights])
        rots = np.stack([look_at(p, anchor) for p in pos])
        if mv == "rotation":
            pan = math.radians(rng.uniform(22.0, 28.0)) * rng.choice([-1.0, 1.0])
            rots = np.stack([rotation_y(pan * (ui - 0.5)) @ R for ui, R in zip(u, rots)])
    else:
        if mv == "push-in":
            far = 2 * m / (1 + ratio)
            dist = far + (far * ratio - far) * u
        elif mv == "pull-out":
            near = 2 * m * ratio / (1 + ratio)
            dist = near + (near / ratio - near) * u
        else:
            dist = np.full(f, m)
        azs = np.full(f, azimuth)
        if mv == "orbit":
            sweep = math.radians(rng.uniform(70.0, 110.0)) * rng.choice([-1.0, 1.0])
            azs = azimuth + sweep * (u - 0.5)
        base_y = float(pelvis[:, 1].mean())
        pos = np.empty((f, 3))
        for i in range(f):
            horizontal = math.sqrt(dist[i] ** 2 - h * h)
            pos[i] = pelvis[i] + _offset(azs[i], horizontal, h)
            pos[i, 1] = base_y + h
        rots = np.stack([look_at(p, q) for p, q in zip(pos, pelvis)])

    traj = CameraTrajectory(pos, rots, motion.fps)
    _check_framing(traj, motion, intrinsics)
    return traj


def _check_framing(traj: CameraTrajectory, motion: MotionSequence, K: Intrinsics) -> None:
    uv, vis = project_trajectory(motion.pelvis[:, None, :], traj, K)
    uv = uv[:, 0]
    inside = (
        vis[:, 0]
        & (np.abs(uv[:, 0] - K.cx) < K.width_px / 6.0)
        & (np.abs(uv[:, 1] - K.cy) < K.height_px / 6.0)
    )
    if not np.all(inside):
        raise InfeasibleSpec("subject leaves the central third of the frame")


# ---------------------------------------------------------------------------
# samples and datasets
# ---------------------------------------------------------------------------


def render_prompt(spec: ShotSpec, kind: str) -> str:
    return PROMPT_TEMPLATE.format(
        kind=_KIND_TEXT[kind],
        movement=_MOVE_TEXT[spec.movement],
        viewpoint=spec.viewpoint.replace("+", " "),
        distance_class=_DIST_TEXT[spec.distance],
    )


def make_sample(spec: ShotSpec, seed: int | None = None, fps: float = 8.0,
                intrinsics: Intrinsics = DEFAULT_INTRINSICS) -> SceneSample:
    seed = spec.seed if seed is None else seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A]))
    kinds = KINDS_FOR_MOVEMENT[spec.movement]
    kind = kinds[int(rng.integers(len(kinds)))]
    motion = gen_motion(kind, spec.f, fps, int(rng.integers(2**63)))
    camera = gen_camera(spec, motion, intrinsics)
    obs2d, vis = project_trajectory(motion.joints, camera, intrinsics)
    return SceneSample(motion, camera, obs2d, vis, spec, kind, render_prompt(spec, kind))


def sample_seed(global_seed: int, index: int) -> int:
    """Per-sample seed, independent of generation order."""
    return int(np.random.SeedSequence([global_seed, index]).generate_state(1, np.uint64)[0])


def random_spec(index: int, seed: int, f: int = 16) -> ShotSpec:
    """Spec for dataset slot ``index``: movements cycle, the rest is drawn."""
    rng = np.random.default_rng(seed)
    return ShotSpec(
        movement=MOVEMENTS[index % len(MOVEMENTS)],
        direction=DIRECTIONS[int(rng.integers(3))],
        elevation=ELEVATIONS[int(rng.integers(3))],
        distance=DISTANCES[int(rng.integers(3))],
        f=f,
        seed=seed,
    )


def generate_dataset(count: int, seed: int = 0, f: int = 16, fps: float = 8.0,
                     intrinsics: Intrinsics = DEFAULT_INTRINSICS) -> list[SceneSample]:
    out = []
    for i in range(count):
        s = sample_seed(seed, i)
        out.append(make_sample(random_spec(i, s, f), s, fps, intrinsics))
    return out


def sample_to_record(s: SceneSample) -> dict:
    return {
        "version": DATASET_VERSION,
        "fps": s.motion.fps,
        "joint_names": list(JOINT_NAMES),
        "joints": round_sig(s.motion.joints),
        "camera": round_sig(s.camera.to_9d()),
        "obs2d": round_sig(s.obs2d),
        "vis": s.vis.astype(bool).tolist(),
        "labels": s.labels,
        "kind": s.kind,
        "seed": s.spec.seed,
        "prompt": s.prompt,
    }


def sample_from_record(rec: dict) -> SceneSample:
    if rec.get("version") != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {rec.get('version')!r}")
    fps = float(rec["fps"])
    motion = CanonicalMotion(from_json_array(rec["joints"]), fps)
    camera = CameraTrajectory.from_9d(from_json_array(rec["camera"]), fps)
    labels = rec["labels"]
    direction, elevation = labels["viewpoint"].split("+")
    spec = ShotSpec(labels["movement"], direction, elevation, labels["distance"], len(motion), int(rec["seed"]))
    obs2d = from_json_array(rec["obs2d"])
    vis = np.array(rec["vis"], dtype=bool)
    if obs2d.shape != (len(motion), len(JOINT_NAMES), 2) or vis.shape != obs2d.shape[:2]:
        raise ValueError("observation shapes do not match the motion")
    if len(camera) != len(motion):
        raise ValueError("camera and motion frame counts differ")
    return SceneSample(motion, camera, obs2d, vis, spec, rec["kind"], rec["prompt"])


def dataset_header(seed: int | None) -> dict:
    from . import __version__

    return {"format": "viewplan-dataset", "version": DATASET_VERSION, "package": __version__, "seed": seed}


def write_dataset(samples, path, seed: int | None = None) -> None:
    """One JSON record per line, preceded by a provenance header line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(dataset_header(seed)) + "\n")
        for s in samples:
            fh.write(json.dumps(sample_to_record(s)) + "\n")


def read_dataset(path) -> list[SceneSample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if "format" in rec:
                    continue
                samples.append(sample_from_record(rec))
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedRecord(lineno, str(exc)) from None
    return samples

