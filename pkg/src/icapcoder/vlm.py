"""Chat-completion client for vision-language models, reply parsing, and a scripted mock.

The wire format is the OpenAI-compatible ``/chat/completions`` schema; any
provider exposing it (hosted or self-served) works through configuration.
"""
from __future__ import annotations

import ast
import base64
import io
import json
import logging
import math
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import httpx
import numpy as np
from PIL import Image

from .core import Action, LabelRecord, Scene, action_from_name, scene_from_name, ACTIONS, SCENES

log = logging.getLogger(__name__)

DEFAULT_CONFIDENCE = 0.5


# --- requests and responses -------------------------------------------------

@dataclass(frozen=True)
class Message:
    """One chat message; ``content`` items are text (str) or PNG images (bytes)."""

    role: str
    content: tuple[str | bytes, ...]

    def __post_init__(self):
        if isinstance(self.content, (str, bytes)):
            object.__setattr__(self, "content", (self.content,))
        else:
            object.__setattr__(self, "content", tuple(self.content))

    @property
    def text(self) -> str:
        return "\n".join(p for p in self.content if isinstance(p, str))

    @property
    def n_images(self) -> int:
        return sum(isinstance(p, bytes) for p in self.content)


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        for m in self.messages:
            if m.n_images and m.role != "user":
                raise ValueError(f"images are only allowed in user messages, not {m.role!r}")

    @property
    def text(self) -> str:
        return "\n".join(m.text for m in self.messages)

    @property
    def n_images(self) -> int:
        return sum(m.n_images for m in self.messages)

    def with_message(self, message: Message) -> ChatRequest:
        return ChatRequest(self.model_id, (*self.messages, message), self.temperature, self.max_tokens)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: tuple[int, int] = (0, 0)
    latency_ms: int = 0


class ChatClient(Protocol):
    def complete(self, req: ChatRequest) -> ChatResponse: ...


class VLMError(RuntimeError):
    """Base class for provider failures."""


class ProviderUnavailable(VLMError):
    """Retryable HTTP status persisted after all retries."""


class ProviderHTTPError(VLMError):
    """Non-retryable HTTP status from the provider."""


class VLMNetworkError(VLMError):
    """Connection or timeout failure persisted after all retries."""


class MalformedResponse(VLMError):
    """The provider answered 2xx with a payload we cannot read."""


def encode_png(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), "RGB").save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def _wire_message(m: Message) -> dict:
    if not m.n_images:
        return {"role": m.role, "content": m.text}
    parts = []
    for p in m.content:
        if isinstance(p, bytes):
            url = "data:image/png;base64," + base64.b64encode(p).decode("ascii")
            parts.append({"type": "image_url", "image_url": {"url": url}})
        else:
            parts.append({"type": "text", "text": p})
    return {"role": m.role, "content": parts}


def request_body(req: ChatRequest) -> dict:
    return {
        "model": req.model_id,
        "messages": [_wire_message(m) for m in req.messages],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }


def _response_text(payload) -> tuple[str, tuple[int, int]]:
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise MalformedResponse(f"no choices[0].message.content in provider payload: {str(payload)[:200]}") from None
    if isinstance(content, list):
        content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
    if not isinstance(content, str):
        raise MalformedResponse(f"message content is {type(content).__name__}, expected text")
    usage = payload.get("usage") or {}
    try:
        tokens = (int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
    except (TypeError, ValueError):
        tokens = (0, 0)
    return content, tokens


class RateLimiter:
    """Token bucket shared across threads; ``requests_per_minute=None`` disables it."""

    def __init__(self, requests_per_minute: float | None, burst: int = 1,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self.rate = None if not requests_per_minute else requests_per_minute / 60.0
        self.capacity = max(1, burst)
        self.tokens = float(self.capacity)
        self.clock, self.sleep = clock, sleep
        self.updated = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate is None:
            return
        while True:
            with self._lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self.sleep(wait)


RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})


class HttpVLMClient:
    """Blocking client for an OpenAI-compatible ``/chat/completions`` endpoint.

    Timeouts, 429 and 5xx responses are retried with exponential backoff;
    ``backoff_s`` lists the pause before each retry, so at most
    ``1 + len(backoff_s)`` requests are sent per call.
    """

    def __init__(self, endpoint: str, api_key: str | None = None, *, timeout_s: float = 120.0,
                 backoff_s: Sequence[float] = (1.0, 2.0, 4.0), rate_limiter: RateLimiter | None = None,
                 sleep: Callable[[float], None] = time.sleep, transport: httpx.BaseTransport | None = None):
        self.url = endpoint.rstrip("/") + "/chat/completions"
        self.backoff_s = tuple(backoff_s)
        self.rate_limiter = rate_limiter or RateLimiter(None)
        self.sleep = sleep
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._http = httpx.Client(timeout=timeout_s, headers=headers, transport=transport)

    def close(self) -> None:
        self._http.close()

    def complete(self, req: ChatRequest) -> ChatResponse:
        body = request_body(req)
        last_error: Exception | None = None
        for attempt in range(len(self.backoff_s) + 1):
            if attempt:
                self.sleep(self.backoff_s[attempt - 1])
            self.rate_limiter.acquire()
            started = time.monotonic()
            try:
                resp = self._http.post(self.url, json=body)
            except (httpx.TimeoutException, httpx.NetworkError, httpx.RemoteProtocolError) as exc:
                log.warning("VLM request attempt %d failed: %s", attempt + 1, exc)
                last_error = exc
                continue
            latency = int(round((time.monotonic() - started) * 1000))
            if resp.status_code in RETRY_STATUSES:
                log.warning("VLM request attempt %d got HTTP %d", attempt + 1, resp.status_code)
                last_error = ProviderUnavailable(f"HTTP {resp.status_code}")
                continue
            if not 200 <= resp.status_code < 300:
                raise ProviderHTTPError(f"provider returned HTTP {resp.status_code}: {resp.text[:300]}")
            try:
                payload = resp.json()
            except ValueError:
                raise MalformedResponse(f"provider returned non-JSON body: {resp.text[:200]}") from None
            text, usage = _response_text(payload)
            return ChatResponse(text, usage, latency)
        if isinstance(last_error, ProviderUnavailable):
            raise ProviderUnavailable(f"provider unavailable after {len(self.backoff_s) + 1} attempts ({last_error})")
        raise VLMNetworkError(f"network failure after {len(self.backoff_s) + 1} attempts: {last_error}")


def complete(req: ChatRequest, endpoint: str, credentials: str | None, **kwargs) -> ChatResponse:
    """One-shot convenience wrapper around :class:`HttpVLMClient`."""
    client = HttpVLMClient(endpoint, credentials, **kwargs)
    try:
        return client.complete(req)
    finally:
        client.close()


# --- reply parsing ------------------------------------------------------------

@dataclass(frozen=True)
class StructuredLabel:
    scenes: frozenset[Scene] = frozenset()
    actions: frozenset[Action] = frozenset()
    confidences: Mapping[Action, float] = field(default_factory=dict)
    evidence: Mapping[Action, str] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def to_record(self, unit_id: str, flagged: bool = False) -> LabelRecord:
        return LabelRecord(unit_id, self.scenes, self.actions,
                           {a: c for a, c in self.confidences.items() if a in self.actions},
                           {a: e for a, e in self.evidence.items() if a in self.actions}, flagged)

    def to_dict(self) -> dict:
        return {
            "scenes": [s.value for s in SCENES if s in self.scenes],
            "actions": [a.value for a in ACTIONS if a in self.actions],
            "confidences": {a.value: self.confidences[a] for a in ACTIONS if a in self.confidences},
            "evidence": {a.value: self.evidence[a] for a in ACTIONS if a in self.evidence},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class ParseFailure:
    raw: str
    reason: str


_FENCE = re.compile(r"```[a-zA-Z0-9_-]*")


def _balanced_objects(text: str):
    """Yield every top-level ``{...}`` span, respecting double-quoted strings."""
    depth, start, in_str, escape = 0, -1, False, False
    for i, ch in enumerate(text):
        if in_str:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"' and depth > 0:
            in_str = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                yield text[start:i + 1]


def _loads_lenient(chunk: str):
    try:
        return json.loads(chunk)
    except ValueError:
        pass
    no_trailing = re.sub(r",\s*([}\]])", r"\1", chunk)
    try:
        return json.loads(no_trailing)
    except ValueError:
        pass
    pythonish = re.sub(r"\btrue\b", "True", re.sub(r"\bfalse\b", "False", re.sub(r"\bnull\b", "None", no_trailing)))
    try:
        return ast.literal_eval(pythonish)
    except Exception:  # literal_eval raises a zoo of types on hostile input
        return None


def extract_json_object(text: str) -> dict | None:
    """First top-level object literal in ``text`` that decodes to a dict, else None."""
    if not isinstance(text, str):
        return None
    cleaned = _FENCE.sub("", text)
    for chunk in _balanced_objects(cleaned):
        obj = _loads_lenient(chunk)
        if isinstance(obj, dict):
            return obj
    return None


def _as_list(value) -> list:
    if value is None:
        return []
    if isinstance(value, (list, tuple, set)):
        return list(value)
    return [value]


def _confidence(value, warnings: list, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        warnings.append(f"non-numeric confidence for {name}")
        return DEFAULT_CONFIDENCE
    try:
        c = float(value)
    except ValueError:
        warnings.append(f"non-numeric confidence for {name}")
        return DEFAULT_CONFIDENCE
    if math.isnan(c):
        warnings.append(f"non-numeric confidence for {name}")
        return DEFAULT_CONFIDENCE
    return min(1.0, max(0.0, c))


def label_from_object(obj: Mapping) -> StructuredLabel | ParseFailure:
    keys = {str(k).lower(): v for k, v in obj.items()}
    if not any(k in keys for k in ("scenes", "scene", "actions", "action")):
        return ParseFailure(json.dumps(obj, default=str)[:2000], "object has no scenes/actions fields")
    warnings: list[str] = []
    scenes = set()
    for name in _as_list(keys.get("scenes", keys.get("scene"))):
        s = scene_from_name(name) if isinstance(name, str) else None
        if s is None:
            warnings.append(f"unknown scene {name}")
        else:
            scenes.add(s)
    actions: set[Action] = set()
    conf: dict[Action, float] = {}
    evidence: dict[Action, str] = {}
    for item in _as_list(keys.get("actions", keys.get("action"))):
        if isinstance(item, Mapping):
            inner = {str(k).lower(): v for k, v in item.items()}
            name = inner.get("action", inner.get("name", inner.get("label")))
            a = action_from_name(name) if isinstance(name, str) else None
            if a is None:
                warnings.append(f"unknown action {name}")
                continue
            actions.add(a)
            if "confidence" in inner:
                conf[a] = _confidence(inner["confidence"], warnings, a.value)
            if inner.get("evidence"):
                evidence[a] = str(inner["evidence"])
            continue
        a = action_from_name(item) if isinstance(item, str) else None
        if a is None:
            warnings.append(f"unknown action {item}")
        else:
            actions.add(a)
    raw_conf = keys.get("confidences", keys.get("confidence"))
    if isinstance(raw_conf, Mapping):
        for name, value in raw_conf.items():
            a = action_from_name(str(name))
            if a in actions:
                conf[a] = _confidence(value, warnings, a.value)
    raw_ev = keys.get("evidence")
    if isinstance(raw_ev, Mapping):
        for name, value in raw_ev.items():
            a = action_from_name(str(name))
            if a in actions and value is not None:
                evidence[a] = str(value)
    for a in actions:
        conf.setdefault(a, DEFAULT_CONFIDENCE)
    return StructuredLabel(frozenset(scenes), frozenset(actions), conf, evidence, tuple(warnings))


def parse_structured_label(text: str) -> StructuredLabel | ParseFailure:
    """Parse a model reply into a label; never raises.

    Code fences are stripped and the first top-level object literal is read.
    Unknown scene or action names are dropped with a warning and missing
    confidences default to 0.5.
    """
    try:
        obj = extract_json_object(text)
        if obj is None:
            return ParseFailure(str(text), "no JSON object found")
        label = label_from_object(obj)
        if isinstance(label, ParseFailure):
            return ParseFailure(str(text), label.reason)
        for w in label.warnings:
            log.warning("label parse: %s", w)
        return label
    except RecursionError:
        return ParseFailure(str(text), "object nested too deeply")


# --- fixture tags and the scripted mock ------------------------------------------

def fixture_tag(key: str) -> str:
    return f"[FIXTURE:{key}]"


DEFAULT_RULE = "*"


@dataclass
class MockScript:
    """``(tag, response)`` rules plus a default response.

    Files are tab-separated ``tag<TAB>response`` lines; a response starting
    with a double quote is a JSON string literal (so it may hold tabs and
    newlines). The tag ``*`` sets the default. A response beginning with
    ``!error`` makes the mock raise a provider error instead of answering.
    """

    rules: list[tuple[str, str]] = field(default_factory=list)
    default: str = "{}"

    def resolve(self, text: str) -> str:
        """Response of the rule whose tag occurs last in ``text``.

        Later tags win so a follow-up turn (for example a re-prompt) is
        answered by its own rule; equal positions go to the earlier rule.
        """
        best, best_pos = self.default, -1
        for tag, response in self.rules:
            pos = text.rfind(tag)
            if pos > best_pos:
                best, best_pos = response, pos
        return best

    @classmethod
    def load(cls, path: str | Path) -> MockScript:
        path = Path(path)
        try:
            raw = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ValueError(f"cannot read mock script {path}: {exc}") from None
        if path.suffix == ".json":
            data = json.loads(raw)
            return cls([(r["tag"], r["response"]) for r in data.get("rules", [])], data.get("default", "{}"))
        script = cls()
        for n, line in enumerate(raw.splitlines(), start=1):
            if not line.strip() or line.startswith("#") or line == "tag\tresponse":
                continue
            tag, sep, response = line.partition("\t")
            if not sep:
                raise ValueError(f"{path}:{n}: expected tag<TAB>response")
            if response.startswith('"'):
                try:
                    response = json.loads(response)
                except ValueError:
                    raise ValueError(f"{path}:{n}: bad JSON string response") from None
            if tag == DEFAULT_RULE:
                script.default = response
            else:
                script.rules.append((tag, response))
        return script

    def dumps(self) -> str:
        lines = ["tag\tresponse"]
        lines += [f"{tag}\t{json.dumps(resp, ensure_ascii=False)}" for tag, resp in self.rules]
        lines.append(f"{DEFAULT_RULE}\t{json.dumps(self.default, ensure_ascii=False)}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def mock_resolve(req: ChatRequest, script: MockScript) -> ChatResponse:
    text = script.resolve(req.text)
    if text.startswith("!error"):
        raise ProviderUnavailable(text[len("!error"):].strip() or "scripted provider error")
    return ChatResponse(text, (len(req.text.split()), len(text.split())), 0)


class MockVLM:
    """Deterministic offline client answering from a :class:`MockScript`."""

    def __init__(self, script: MockScript):
        self.script = script
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls += 1
        return mock_resolve(req, self.script)


# --- structured request with one re-prompt ---------------------------------------

RETRY_NOTE = ("Your previous reply could not be read as a JSON object. Reply again with only the "
              "JSON object in the requested format.")


@dataclass
class LabelAttempt:
    label: StructuredLabel | None
    replies: list[str]
    failure: str | None = None


def request_label(client: ChatClient, req: ChatRequest, tag_key: str | None = None,
                  parser: Callable[[str], StructuredLabel | ParseFailure] = parse_structured_label) -> LabelAttempt:
    """Ask for a label, re-prompting once if the reply cannot be parsed.

    Provider errors propagate to the caller.
    """
    replies = []
    reply = client.complete(req).text
    replies.append(reply)
    parsed = parser(reply)
    if not isinstance(parsed, ParseFailure):
        return LabelAttempt(parsed, replies)
    note = RETRY_NOTE + (f" {fixture_tag(tag_key + '/retry')}" if tag_key else "")
    retry = req.with_message(Message("assistant", (reply,))).with_message(Message("user", (note,)))
    reply = client.complete(retry).text
    replies.append(reply)
    parsed = parser(reply)
    if isinstance(parsed, ParseFailure):
        return LabelAttempt(None, replies, parsed.reason)
    return LabelAttempt(parsed, replies)
