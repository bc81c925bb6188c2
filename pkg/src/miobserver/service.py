"""Live-session HTTP service over trained models.

Stdlib-only (ThreadingHTTPServer). One process holds up to four models,
keyed "task:role", and a store of in-progress sessions. Endpoints:

    GET  /healthz                       capability probe
    POST /sessions                      create (optional {"session_id": ...})
    GET  /sessions/{id}                 transcript with assigned codes
    POST /sessions/{id}/clone           what-if branch of a session
    POST /sessions/{id}/utterances      append + categorize {"speaker","text"}
    GET  /sessions/{id}/forecast?speaker=C&k=3

Status codes: 404 unknown route or session, 422 malformed input,
409 session id already taken. Responses are JSON with sorted keys and
probabilities rounded to six significant digits; the rounding helper is
shared with the command line predictor so the two surfaces agree
byte-for-byte on the same windows. A session whose speaker role has no
categorize model loaded still accepts utterances; code and distribution
come back null. Forecast warns when Min lands in the top k.

All mutation happens under a per-session lock, so concurrent appends to
one session serialize; an optional replay log records every successful
state change and answer as one JSON line each.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .data import Utterance, Window, role_of_speaker, window_from_history
from .embed import SPEAKERS
from .errors import ContractError
from .metrics import sig6, top_k_indices
from .model import Model

WARN_CODE = "Min"


def predict_payload(model: Model, window: Window) -> dict:
    """Categorize one window; the shared shape for service and CLI."""
    label, probs = model.predict(window)
    dist = {lab: sig6(float(p)) for lab, p in zip(model.labels, probs)}
    return {"code": label, "distribution": dist}


def forecast_payload(model: Model, window: Window, k: int) -> dict:
    probs = model.forward(window).data
    idx = top_k_indices(probs, k)
    top = [{"code": model.labels[i], "p": sig6(float(probs[i]))} for i in idx]
    warning = any(model.labels[i] == WARN_CODE for i in idx)
    return {"top": top, "warning": warning}


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


class Observer:
    """Session store plus model dispatch; the service minus the HTTP."""

    def __init__(self, models: dict[str, Model], replay_path: str | None = None):
        for key, m in models.items():
            task, _, role = key.partition(":")
            if (task, role) != (m.config.task, m.config.role):
                raise ContractError(f"model key {key!r} does not match its config")
        self.models = models
        self._sessions: dict[str, list[Utterance]] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._store_lock = threading.Lock()
        self._counter = 0
        self._replay_path = replay_path
        self._replay_lock = threading.Lock()

    # -------------------------------------------------------------- sessions

    def _log(self, event: dict) -> None:
        if self._replay_path is None:
            return
        line = json.dumps(event, sort_keys=True)
        with self._replay_lock:
            with open(self._replay_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def create_session(self, session_id: str | None = None) -> str:
        with self._store_lock:
            if session_id is None:
                self._counter += 1
                session_id = f"s-{self._counter:04d}"
                while session_id in self._sessions:
                    self._counter += 1
                    session_id = f"s-{self._counter:04d}"
            elif session_id in self._sessions:
                raise ApiError(409, f"session {session_id!r} already exists")
            self._sessions[session_id] = []
            self._locks[session_id] = threading.Lock()
        self._log({"type": "session", "session": session_id})
        return session_id

    def _lock_of(self, session_id: str) -> threading.Lock:
        with self._store_lock:
            if session_id not in self._sessions:
                raise ApiError(404, f"no session {session_id!r}")
            return self._locks[session_id]

    def transcript(self, session_id: str) -> dict:
        with self._lock_of(session_id):
            utts = list(self._sessions[session_id])
        return {
            "session_id": session_id,
            "utterances": [
                {"speaker": u.speaker, "text": u.text, "code": u.label}
                for u in utts
            ],
        }

    def clone_session(self, session_id: str) -> str:
        with self._lock_of(session_id):
            utts = list(self._sessions[session_id])
        with self._store_lock:
            self._counter += 1
            new_id = f"s-{self._counter:04d}"
            while new_id in self._sessions:
                self._counter += 1
                new_id = f"s-{self._counter:04d}"
            self._sessions[new_id] = utts
            self._locks[new_id] = threading.Lock()
        self._log({"type": "clone", "from": session_id, "session": new_id})
        return new_id

    # --------------------------------------------------------------- models

    def add_utterance(self, session_id: str, speaker: str, text: str) -> dict:
        if speaker not in SPEAKERS:
            raise ApiError(422, f"speaker must be one of {list(SPEAKERS)}")
        if not isinstance(text, str):
            raise ApiError(422, "text must be a string")
        role = role_of_speaker(speaker)
        model = self.models.get(f"categorize:{role}")
        with self._lock_of(session_id):
            history = self._sessions[session_id] + [Utterance(speaker, text)]
            if model is None:
                payload: dict = {"code": None, "distribution": None}
            else:
                window = window_from_history(
                    history, model.config.window, "categorize", role
                )
                payload = predict_payload(model, window)
            self._sessions[session_id].append(
                Utterance(speaker, text, label=payload["code"])
            )
            n = len(self._sessions[session_id])
        payload = dict(payload, session_id=session_id, index=n - 1)
        self._log(
            {"type": "utterance", "session": session_id, "speaker": speaker,
             "text": text, "code": payload["code"],
             "distribution": payload["distribution"]}
        )
        return payload

    def forecast(self, session_id: str, speaker: str, k: int) -> dict:
        if speaker not in SPEAKERS:
            raise ApiError(422, f"speaker must be one of {list(SPEAKERS)}")
        role = role_of_speaker(speaker)
        model = self.models.get(f"forecast:{role}")
        if model is None:
            raise ApiError(409, f"no forecast model loaded for {role}")
        if not 1 <= k <= len(model.labels):
            raise ApiError(422, f"k must be in 1..{len(model.labels)}")
        with self._lock_of(session_id):
            history = list(self._sessions[session_id])
        if not history:
            raise ApiError(422, "cannot forecast an empty session")
        window = window_from_history(
            history, model.config.window, "forecast", role, target_speaker=speaker
        )
        payload = forecast_payload(model, window, k)
        payload = dict(payload, session_id=session_id, speaker=speaker, k=k)
        self._log(
            {"type": "forecast", "session": session_id, "speaker": speaker,
             "k": k, "top": payload["top"], "warning": payload["warning"]}
        )
        return payload

    def capabilities(self) -> dict:
        return {
            "status": "ok",
            "models": {
                key: {
                    "window": m.config.window,
                    "labels": list(m.labels),
                }
                for key, m in sorted(self.models.items())
            },
        }


_SESSION = re.compile(r"^/sessions/([A-Za-z0-9._-]+)$")
_UTTER = re.compile(r"^/sessions/([A-Za-z0-9._-]+)/utterances$")
_FORECAST = re.compile(r"^/sessions/([A-Za-z0-9._-]+)/forecast$")
_CLONE = re.compile(r"^/sessions/([A-Za-z0-9._-]+)/clone$")


class _Handler(BaseHTTPRequestHandler):
    observer: Observer  # set by make_server
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):           # quiet by default
        pass

    def _reply(self, status: int, obj) -> None:
        body = json.dumps(obj, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()
        self.wfile.write(body)

    def _drain(self) -> bytes:
        # The body must be consumed even by routes that ignore it: with
        # keep-alive, unread bytes would be parsed as the start of the next
        # request on the connection.
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _body(self) -> dict:
        raw = self._raw_body
        if not raw:
            return {}
        try:
            obj = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ApiError(422, "request body is not valid JSON")
        if not isinstance(obj, dict):
            raise ApiError(422, "request body must be a JSON object")
        return obj

    def _dispatch(self, method: str) -> None:
        self._raw_body = self._drain()
        obs = self.observer
        path, _, query = self.path.partition("?")
        params: dict[str, str] = {}
        for piece in query.split("&"):
            if "=" in piece:
                k, _, v = piece.partition("=")
                params[k] = v
        try:
            if method == "GET" and path == "/healthz":
                self._reply(200, obs.capabilities())
            elif method == "POST" and path == "/sessions":
                body = self._body()
                sid = body.get("session_id")
                if sid is not None and (not isinstance(sid, str) or not sid):
                    raise ApiError(422, "session_id must be a non-empty string")
                if sid is not None and not re.fullmatch(r"[A-Za-z0-9._-]+", sid):
                    raise ApiError(422, "session_id has unsupported characters")
                self._reply(201, {"session_id": obs.create_session(sid)})
            elif method == "GET" and (m := _SESSION.match(path)):
                self._reply(200, obs.transcript(m.group(1)))
            elif method == "POST" and (m := _CLONE.match(path)):
                self._reply(201, {"session_id": obs.clone_session(m.group(1))})
            elif method == "POST" and (m := _UTTER.match(path)):
                body = self._body()
                if "speaker" not in body or "text" not in body:
                    raise ApiError(422, "body needs speaker and text")
                self._reply(
                    200, obs.add_utterance(m.group(1), body["speaker"], body["text"])
                )
            elif method == "GET" and (m := _FORECAST.match(path)):
                speaker = params.get("speaker", "")
                k_raw = params.get("k", "3")
                try:
                    k = int(k_raw)
                except ValueError:
                    raise ApiError(422, f"k must be an integer, got {k_raw!r}")
                self._reply(200, obs.forecast(m.group(1), speaker, k))
            else:
                raise ApiError(404, f"no route {method} {path}")
        except ApiError as e:
            self._reply(e.status, {"error": str(e)})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_OPTIONS(self):
        self._drain()
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()


def make_server(
    host: str,
    port: int,
    models: dict[str, Model],
    replay_path: str | None = None,
) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server; port 0 picks a free port."""
    observer = Observer(models, replay_path=replay_path)
    handler = type("BoundHandler", (_Handler,), {"observer": observer})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server
