import json
import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx
import numpy as np
import pytest

from viewplan.evalclient import (
    STYLE_TEMPLATE,
    TCC_TEMPLATE,
    AuthFailed,
    EndpointConfig,
    MalformedResponse,
    MissingConfig,
    StyleResult,
    TccResult,
    Transport,
    build_prompt,
    decimate,
    evaluate_many,
    evaluate_offline,
    evaluate_remote,
    parse_style,
    parse_tcc,
)
from viewplan.metrics import classify_shot
from viewplan.synth import ShotSpec, make_sample


def _completion(text):
    return 200, json.dumps({"choices": [{"message": {"role": "assistant", "content": text}}]})


class MockEvaluator:
    """Chat-completions endpoint replaying scripted (status, body) replies."""

    def __init__(self):
        self.script = []
        self.requests = []
        self.default = _completion("2\nMatches.")
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = self.rfile.read(int(self.headers["Content-Length"]))
                outer.requests.append({"path": self.path, "headers": dict(self.headers), "body": json.loads(body)})
                status, text = outer.script.pop(0) if outer.script else outer.default
                raw = text.encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, kwargs={"poll_interval": 0.02}, daemon=True)
        self.thread.start()
        self.cfg = EndpointConfig(f"http://127.0.0.1:{self.server.server_address[1]}/v1", "sekret", "judge-1",
                                  timeout=5.0)

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def mock():
    m = MockEvaluator()
    yield m
    m.close()


@pytest.fixture
def no_sleep():
    calls = []
    return calls, calls.append


@pytest.fixture
def prompt(orbit_sample):
    return build_prompt("tcc", orbit_sample.camera, orbit_sample.motion, "The camera orbits the dancer.")


class TestPrompts:
    def test_deterministic(self, orbit_sample):
        a = build_prompt("style", orbit_sample.camera, orbit_sample.motion)
        b = build_prompt("style", orbit_sample.camera, orbit_sample.motion)
        assert a == b and a.user.encode() == b.user.encode()

    def test_tcc_has_rubric(self, prompt):
        assert prompt.system == TCC_TEMPLATE
        for line in ("0 = ", "1 = ", "2 = "):
            assert line in prompt.system
        assert prompt.user.endswith("Text prompt:\nThe camera orbits the dancer.")

    def test_style_has_format_block(self, orbit_sample):
        p = build_prompt("style", orbit_sample.camera, orbit_sample.motion)
        assert p.system == STYLE_TEMPLATE
        assert "Viewpoint:[viewpoint classification]\nDistance:[distance classification]\n" \
               "Movement type:[movement type classification]" in p.system

    def test_serialization_views(self, prompt):
        for header in ("[top view (Z-X)]", "[front view (X-Y)]", "[side view (Z-Y)]"):
            assert header in prompt.user

    def test_decimation(self):
        assert decimate(10).tolist() == list(range(10))
        idx = decimate(500)
        assert len(idx) <= 64 and idx[0] == 0 and idx[-1] == 499

    def test_long_trajectory_capped(self):
        s = make_sample(ShotSpec("orbit", "front", "eye-level", "medium", f=200, seed=1))
        p = build_prompt("style", s.camera, s.motion)
        cam_lines = [ln for ln in p.user.splitlines() if ln.startswith("camera: ")]
        assert len(cam_lines) == 3 and all(ln.count("(") <= 64 for ln in cam_lines)

    def test_unknown_kind(self, orbit_sample):
        with pytest.raises(ValueError):
            build_prompt("fcd", orbit_sample.camera, orbit_sample.motion)


class TestParsing:
    def test_tcc(self):
        assert parse_tcc("1\nThe camera orbits the subject as instructed.") == \
            TccResult(1, "The camera orbits the subject as instructed.")

    def test_style_example(self):
        r = parse_style("Viewpoint:Front+High-angle\nDistance:Close-up\nMovement type:Pull-out")
        assert r == StyleResult("front+high-angle", "close-up", "pull-out")

    def test_style_aliases(self):
        r = parse_style("Viewpoint: Back + Eye-level\nDistance: Long shot\nMovement type: Orbit\n")
        assert r == StyleResult("back+eye-level", "long", "orbit")

    @pytest.mark.parametrize("text", ["maybe 3", "3\nToo high.", "2", "", "two\nGood."])
    def test_tcc_rejects(self, text):
        with pytest.raises(MalformedResponse) as exc:
            parse_tcc(text)
        assert exc.value.raw == text

    @pytest.mark.parametrize("text", [
        "Viewpoint:Front+High-angle\nDistance:Close-up",
        "Viewpoint:Front+High-angle\nDistance:Close-up\nMovement type:Pull-out\nExtra: yes",
        "Distance:Close-up\nViewpoint:Front+High-angle\nMovement type:Pull-out",
        "Viewpoint:Above\nDistance:Close-up\nMovement type:Pull-out",
        "Viewpoint:Front+High-angle\nDistance:Extreme\nMovement type:Pull-out",
        "Viewpoint:Front+High-angle\nDistance:Close-up\nMovement type:Dolly zoom",
    ])
    def test_style_rejects(self, text):
        with pytest.raises(MalformedResponse) as exc:
            parse_style(text)
        assert exc.value.raw == text


class TestRemote:
    def test_wire_format(self, mock, prompt):
        mock.script.append(_completion("1\nThe camera orbits the subject as instructed."))
        assert evaluate_remote(prompt, mock.cfg) == TccResult(1, "The camera orbits the subject as instructed.")
        (req,) = mock.requests
        assert req["path"] == "/v1/chat/completions"
        assert req["headers"]["Authorization"] == "Bearer sekret"
        assert req["body"] == {"model": "judge-1", "temperature": 0, "messages": [
            {"role": "system", "content": TCC_TEMPLATE}, {"role": "user", "content": prompt.user}]}

    def test_style(self, mock, orbit_sample):
        mock.script.append(_completion("Viewpoint:Front+High-angle\nDistance:Close-up\nMovement type:Pull-out"))
        p = build_prompt("style", orbit_sample.camera, orbit_sample.motion)
        assert evaluate_remote(p, mock.cfg) == StyleResult("front+high-angle", "close-up", "pull-out")

    def test_malformed_keeps_raw(self, mock, prompt):
        mock.script.append(_completion("maybe 3"))
        with pytest.raises(MalformedResponse) as exc:
            evaluate_remote(prompt, mock.cfg)
        assert exc.value.raw == "maybe 3"

    def test_not_a_completion(self, mock, prompt):
        mock.script.append((200, '{"result": "ok"}'))
        with pytest.raises(MalformedResponse) as exc:
            evaluate_remote(prompt, mock.cfg)
        assert exc.value.raw == '{"result": "ok"}'

    def test_retries_then_succeeds(self, mock, prompt, no_sleep):
        calls, sleep = no_sleep
        mock.script += [(503, "busy"), (429, "slow down"), _completion("2\nFine.")]
        assert evaluate_remote(prompt, mock.cfg, sleep=sleep) == TccResult(2, "Fine.")
        assert calls == [1.0, 4.0] and len(mock.requests) == 3

    def test_gives_up_after_two_retries(self, mock, prompt, no_sleep):
        calls, sleep = no_sleep
        mock.script += [(500, "x")] * 4
        with pytest.raises(Transport):
            evaluate_remote(prompt, mock.cfg, sleep=sleep)
        assert calls == [1.0, 4.0] and len(mock.requests) == 3

    @pytest.mark.parametrize("status", [401, 403])
    def test_auth(self, mock, prompt, no_sleep, status):
        calls, sleep = no_sleep
        mock.script.append((status, "no"))
        with pytest.raises(AuthFailed):
            evaluate_remote(prompt, mock.cfg, sleep=sleep)
        assert calls == [] and len(mock.requests) == 1

    def test_client_error_not_retried(self, mock, prompt, no_sleep):
        calls, sleep = no_sleep
        mock.script.append((400, "bad request"))
        with pytest.raises(Transport):
            evaluate_remote(prompt, mock.cfg, sleep=sleep)
        assert calls == []

    def test_connection_refused(self, prompt, no_sleep):
        calls, sleep = no_sleep
        with socket.socket() as s:
            s.bind(("127.0.0.1", 0))
            port = s.getsockname()[1]
        cfg = EndpointConfig(f"http://127.0.0.1:{port}", "k", "m", timeout=2.0)
        with pytest.raises(Transport):
            evaluate_remote(prompt, cfg, sleep=sleep)
        assert calls == [1.0, 4.0]

    def test_many_keeps_order(self, mock, orbit_sample):
        prompts = [build_prompt("tcc", orbit_sample.camera, orbit_sample.motion, f"prompt {i}") for i in range(6)]
        mock.default = _completion("1\nPartly.")
        out = evaluate_many(prompts, mock.cfg)
        assert out == [TccResult(1, "Partly.")] * 6
        seen = sorted(r["body"]["messages"][1]["content"][-8:] for r in mock.requests)
        assert seen == sorted(p.user[-8:] for p in prompts)

    def test_config_from_env(self):
        cfg = EndpointConfig.from_env({"EVAL_BASE_URL": "http://x/v1/", "EVAL_API_KEY": "k", "EVAL_MODEL": "m"})
        assert cfg.base_url == "http://x/v1"
        with pytest.raises(MissingConfig):
            EndpointConfig.from_env({"EVAL_BASE_URL": "http://x"})


class TestOffline:
    def test_equals_classifier(self, small_dataset):
        for s in small_dataset:
            assert evaluate_offline(s.camera, s.motion).as_dict() == classify_shot(s.camera, s.motion)

    def test_orbit(self):
        s = make_sample(ShotSpec("orbit", "side", "eye-level", "medium", seed=3))
        assert evaluate_offline(s.camera, s.motion).movement == "orbit"

    def test_no_network(self, small_dataset, monkeypatch):
        def refuse(*args, **kwargs):
            raise AssertionError("network access attempted")

        monkeypatch.setattr(socket.socket, "connect", refuse)
        monkeypatch.setattr(socket, "create_connection", refuse)
        monkeypatch.setattr(httpx.Client, "send", refuse)
        first = [evaluate_offline(s.camera, s.motion) for s in small_dataset]
        again = [evaluate_offline(s.camera, s.motion) for s in small_dataset]
        assert first == again
        assert all(isinstance(r, StyleResult) for r in first)
        assert np.all([r.movement for r in first])
