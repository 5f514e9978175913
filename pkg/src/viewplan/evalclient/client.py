"""Evaluator client: prompt construction, response parsing, HTTP transport.

Wire format (chat-completions style)::

    POST {EVAL_BASE_URL}/chat/completions
    Authorization: Bearer {EVAL_API_KEY}
    {"model": EVAL_MODEL, "temperature": 0,
     "messages": [{"role": "system", "content": <template>},
                  {"role": "user", "content": <serialized trajectory + prompt>}]}

    200 -> {"choices": [{"message": {"content": <reply text>}}]}
"""
from __future__ import annotations

import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import httpx
import numpy as np

from ..geom import CameraTrajectory
from ..metrics import classify_shot
from ..motion import MotionSequence
from ..synth import DISTANCES, MOVEMENTS, VIEWPOINTS
from .templates import TEMPLATES

MAX_POINTS = 64
RETRY_DELAYS = (1.0, 4.0)
MAX_IN_FLIGHT = 4
_VIEWS = (("top", 2, 0), ("front", 0, 1), ("side", 2, 1))


class EvalError(RuntimeError):
    pass


class Transport(EvalError):
    pass


class AuthFailed(EvalError):
    pass


class MissingConfig(EvalError):
    pass


class MalformedResponse(EvalError):
    def __init__(self, reason: str, raw: str):
        super().__init__(f"{reason}: {raw!r}")
        self.raw = raw


@dataclass(frozen=True)
class EvalPrompt:
    kind: str
    system: str
    user: str

    def messages(self) -> list[dict]:
        return [{"role": "system", "content": self.system}, {"role": "user", "content": self.user}]


@dataclass(frozen=True)
class TccResult:
    score: int
    reason: str


@dataclass(frozen=True)
class StyleResult:
    viewpoint: str
    distance: str
    movement: str

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# prompts
# ---------------------------------------------------------------------------


def decimate(n: int, max_points: int = MAX_POINTS) -> np.ndarray:
    """Evenly spaced frame indices including both ends, at most ``max_points``."""
    if n <= max_points:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, max_points)).astype(int))


def _pairs(pts) -> str:
    return " ".join(f"({x:.3f},{y:.3f})" for x, y in pts)


def serialize_triview(camera: CameraTrajectory, motion: MotionSequence, max_points: int = MAX_POINTS) -> str:
    idx = decimate(len(camera), max_points)
    cam = camera.translations[idx]
    subj = motion.pelvis[idx]
    look = camera.rotations[:, :, 2]
    face = motion.facing()
    lines = []
    for name, h, v in _VIEWS:
        a = "XYZ"
        lines.append(f"[{name} view ({a[h]}-{a[v]})]")
        lines.append("camera: " + _pairs(cam[:, [h, v]]))
        lines.append("subject: " + _pairs(subj[:, [h, v]]))
        for label, vec in (("camera_start", look[0]), ("camera_end", look[-1]),
                           ("subject_start", face[0]), ("subject_end", face[-1])):
            lines.append(f"{label}: " + _pairs([vec[[h, v]]]))
    return "\n".join(lines)


def build_prompt(kind: str, camera: CameraTrajectory, motion: MotionSequence, text_prompt: str = "") -> EvalPrompt:
    if kind not in TEMPLATES:
        raise ValueError(f"unknown template {kind!r}; expected one of {sorted(TEMPLATES)}")
    body = serialize_triview(camera, motion)
    user = f"Trajectory:\n{body}"
    if kind == "tcc":
        user += f"\n\nText prompt:\n{text_prompt}"
    return EvalPrompt(kind, TEMPLATES[kind], user)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_DISTANCE_ALIASES = {"close-up": "close-up", "closeup": "close-up", "close-up shot": "close-up",
                     "medium": "medium", "medium shot": "medium", "long": "long", "long shot": "long"}


def parse_tcc(text: str) -> TccResult:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if len(lines) < 2 or not re.fullmatch(r"[012]", lines[0]):
        raise MalformedResponse("expected a score line 0/1/2 followed by a reason", text)
    return TccResult(int(lines[0]), " ".join(lines[1:]))


def parse_style(text: str) -> StyleResult:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    prefixes = ("Viewpoint:", "Distance:", "Movement type:")
    if len(lines) != 3 or not all(ln.startswith(p) for ln, p in zip(lines, prefixes)):
        raise MalformedResponse("expected Viewpoint/Distance/Movement type lines", text)
    vp, dist, mv = (ln[len(p):].strip().lower() for ln, p in zip(lines, prefixes))
    vp = vp.replace(" ", "")
    dist = _DISTANCE_ALIASES.get(dist, dist)
    if vp not in VIEWPOINTS or dist not in DISTANCES or mv not in MOVEMENTS:
        raise MalformedResponse("label outside the vocabulary", text)
    return StyleResult(vp, dist, mv)


def parse_response(kind: str, text: str):
    return parse_tcc(text) if kind == "tcc" else parse_style(text)


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    api_key: str
    model: str
    timeout: float = 60.0

    @classmethod
    def from_env(cls, env=None) -> "EndpointConfig":
        env = os.environ if env is None else env
        missing = [k for k in ("EVAL_BASE_URL", "EVAL_API_KEY", "EVAL_MODEL") if not env.get(k)]
        if missing:
            raise MissingConfig(f"set {', '.join(missing)} to use the remote evaluator")
        return cls(env["EVAL_BASE_URL"].rstrip("/"), env["EVAL_API_KEY"], env["EVAL_MODEL"])


def request_body(prompt: EvalPrompt, cfg: EndpointConfig) -> dict:
    return {"model": cfg.model, "temperature": 0, "messages": prompt.messages()}


def _reply_text(resp: httpx.Response) -> str:
    raw = resp.text
    try:
        content = json.loads(raw)["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError):
        raise MalformedResponse("response is not a chat completion", raw) from None
    if not isinstance(content, str):
        raise MalformedResponse("message content is not text", raw)
    return content


def evaluate_remote(prompt: EvalPrompt, cfg: EndpointConfig | None = None, client: httpx.Client | None = None,
                    sleep=time.sleep):
    """Send one prompt and parse the reply into a :class:`TccResult` or :class:`StyleResult`.

    Connection errors, 429 and 5xx responses are retried twice (after 1 s and
    4 s); 401/403 raise :class:`AuthFailed` immediately.
    """
    cfg = EndpointConfig.from_env() if cfg is None else cfg
    own = client is None
    client = httpx.Client(timeout=cfg.timeout) if own else client
    url = f"{cfg.base_url}/chat/completions"
    headers = {"Authorization": f"Bearer {cfg.api_key}", "Content-Type": "application/json"}
    body = request_body(prompt, cfg)
    try:
        last = None
        for attempt in range(len(RETRY_DELAYS) + 1):
            if attempt:
                sleep(RETRY_DELAYS[attempt - 1])
            try:
                resp = client.post(url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last = Transport(f"request to {url} failed: {exc}")
                continue
            if resp.status_code in (401, 403):
                raise AuthFailed(f"evaluator rejected the credentials ({resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last = Transport(f"evaluator returned {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise Transport(f"evaluator returned {resp.status_code}: {resp.text[:200]}")
            return parse_response(prompt.kind, _reply_text(resp))
        raise last
    finally:
        if own:
            client.close()


def evaluate_many(prompts, cfg: EndpointConfig | None = None, max_in_flight: int = MAX_IN_FLIGHT,
                  client: httpx.Client | None = None, sleep=time.sleep) -> list:
    """Evaluate prompts concurrently (bounded); results keep the input order."""
    cfg = EndpointConfig.from_env() if cfg is None else cfg
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = [pool.submit(evaluate_remote, p, cfg, client, sleep) for p in prompts]
        return [f.result() for f in futures]


def evaluate_offline(camera: CameraTrajectory, motion: MotionSequence) -> StyleResult:
    """Rule-based style labels; no network access."""
    return StyleResult(**classify_shot(camera, motion))
