"""Model backends: HTTP chat endpoint, scripted mock, and prompt-echo.

The wire protocol is the de-facto chat-completions shape: a JSON body
{model, messages, temperature, max_tokens} where user content is a list of
text and base64-PNG image parts, answered by {choices: [{message: {content}}]}.
Endpoint, key, and model name come from MODEL_ENDPOINT / MODEL_API_KEY /
MODEL_ID unless given explicitly.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .errors import ProtocolError, TransportError, UsageError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    png_bytes: bytes


@dataclass(frozen=True)
class ModelRequest:
    """One chat turn: a system prompt plus ordered text/image user parts."""

    system_prompt: str
    user_parts: tuple[TextPart | ImagePart, ...]
    temperature: float = 0.0
    max_output_tokens: int = 512
    request_tag: str = ""
    model_id: str = ""

    def __post_init__(self):
        if not self.user_parts:
            raise UsageError("a model request needs at least one user part")
        if not 0.0 <= self.temperature <= 2.0:
            raise UsageError(f"temperature out of [0, 2]: {self.temperature}")

    def full_text(self) -> str:
        return "\n".join(
            p.text for p in self.user_parts if isinstance(p, TextPart)
        )

    def n_image_parts(self) -> int:
        return sum(1 for p in self.user_parts if isinstance(p, ImagePart))

    def wire_body(self, default_model_id: str = "") -> bytes:
        content = []
        for part in self.user_parts:
            if isinstance(part, TextPart):
                content.append({"type": "text", "text": part.text})
            else:
                encoded = base64.b64encode(part.png_bytes).decode("ascii")
                content.append(
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:image/png;base64,{encoded}"},
                    }
                )
        body = {
            "model": self.model_id or default_model_id,
            "messages": [
                {"role": "system", "content": self.system_prompt},
                {"role": "user", "content": content},
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
        }
        return json.dumps(body, ensure_ascii=True, separators=(",", ":")).encode("ascii")


@dataclass(frozen=True)
class ModelResponse:
    raw_text: str
    latency_ms: int = 0
    token_usage: dict | None = None
    backend_id: str = ""


class ModelBackend:
    backend_id = "model"
    model_id = ""

    def complete(self, request: ModelRequest) -> ModelResponse:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"backend_id": self.backend_id, "model_id": self.model_id}


def complete(request: ModelRequest, backend: ModelBackend) -> ModelResponse:
    """Run one request against a backend; all failures are our error types."""
    try:
        return backend.complete(request)
    except (TransportError, ProtocolError):
        raise
    except Exception as exc:
        raise ProtocolError(f"[{backend.backend_id}] {exc}")


@dataclass(frozen=True)
class MockCall:
    request_tag: str
    n_image_parts: int
    text: str
    body_sha256: str


class MockModelBackend(ModelBackend):
    """Scripted replies: first entry whose match equals the request tag or
    appears as a substring of the prompt text wins."""

    backend_id = "mock"
    model_id = "mock"

    def __init__(self, entries: Sequence[dict]):
        for i, entry in enumerate(entries):
            if "match" not in entry or "reply" not in entry:
                raise ValidationError(f"mock script entry {i} needs match and reply")
        self.entries = list(entries)
        self.call_log: list[MockCall] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "MockModelBackend":
        path = Path(path)
        try:
            entries = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot load mock script {path}: {exc}")
        if not isinstance(entries, list):
            raise ValidationError(f"mock script {path} must be a JSON list")
        return cls(entries)

    def complete(self, request: ModelRequest) -> ModelResponse:
        text = request.full_text()
        body_hash = hashlib.sha256(request.wire_body(self.model_id)).hexdigest()
        with self._lock:
            self.call_log.append(
                MockCall(request.request_tag, request.n_image_parts(), text, body_hash)
            )
        for entry in self.entries:
            match = str(entry["match"])
            if match == request.request_tag or match in text:
                return ModelResponse(
                    raw_text=str(entry["reply"]), latency_ms=0, backend_id=self.backend_id
                )
        raise ProtocolError(
            f"mock backend has no scripted reply for tag {request.request_tag!r}"
        )


_KEY_QUESTION = re.compile(r"What is the content in the (.+?) field\?", re.IGNORECASE)
_PAIR_LINE = re.compile(r"^B(\d+) \[(\d+),(\d+),(\d+),(\d+)\]: (.*)$")


class EchoKvBackend(ModelBackend):
    """Deterministic stand-in model that answers from the prompt itself.

    It parses the OCR pair lines, fuzzy-matches the field key asked for in the
    question against lines ending in a colon, and echoes the remaining text of
    that line. Because it consumes the recognized text verbatim, recognition
    noise flows straight through to its answers, which is exactly what the
    error-propagation experiments need.
    """

    backend_id = "echo-kv"
    model_id = "echo-kv"

    def __init__(self, min_key_similarity: float = 0.5):
        self.min_key_similarity = min_key_similarity

    def complete(self, request: ModelRequest) -> ModelResponse:
        from .metrics import normalized_similarity

        text = request.full_text()
        question = _KEY_QUESTION.search(text)
        pairs = []
        for line in text.splitlines():
            m = _PAIR_LINE.match(line)
            if m:
                rid = int(m.group(1))
                box = tuple(int(m.group(i)) for i in range(2, 6))
                pairs.append((rid, box, m.group(6)))
        if question is None or not pairs:
            return ModelResponse('{"answer": "not found"}', backend_id=self.backend_id)

        key = question.group(1).strip().upper()
        best, best_sim = None, 0.0
        for rid, box, line_text in pairs:
            candidate = line_text.strip()
            if not candidate.endswith(":"):
                continue
            sim = normalized_similarity(candidate.rstrip(":").upper(), key)
            if sim > best_sim:
                best, best_sim = (rid, box), sim
        if best is None or best_sim < self.min_key_similarity:
            return ModelResponse('{"answer": "not found"}', backend_id=self.backend_id)

        key_id, key_box = best
        key_mid = (key_box[1] + key_box[3]) / 2
        value = [
            (rid, box, t)
            for rid, box, t in pairs
            if rid != key_id
            and box[1] < key_mid < box[3]  # same text line
            and box[0] >= key_box[2]  # to the right of the key
        ]
        value.sort(key=lambda item: item[1][0])
        if not value:
            return ModelResponse('{"answer": "not found"}', backend_id=self.backend_id)
        reply = {
            "answer": " ".join(t for _, _, t in value),
            "region_ids": [rid for rid, _, _ in value],
        }
        return ModelResponse(json.dumps(reply), backend_id=self.backend_id)


class HttpModelBackend(ModelBackend):
    """Chat-completions client with bounded concurrency and retry.

    Retries transport errors, 429, and 5xx with exponential backoff and full
    jitter (base 1 s, factor 2, at most 5 attempts). A semaphore caps in-flight
    requests; an optional requests-per-minute budget paces call starts.
    """

    backend_id = "http"

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        model_id: str | None = None,
        timeout: float = 120.0,
        max_attempts: int = 5,
        backoff_base: float = 1.0,
        backoff_factor: float = 2.0,
        max_in_flight: int = 4,
        requests_per_minute: int | None = None,
        transport: httpx.BaseTransport | None = None,
        sleeper: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
        jitter_rng: random.Random | None = None,
    ):
        self.endpoint = endpoint or os.environ.get("MODEL_ENDPOINT", "")
        self.api_key = api_key if api_key is not None else os.environ.get("MODEL_API_KEY", "")
        self.model_id = model_id or os.environ.get("MODEL_ID", "")
        if not self.endpoint:
            raise UsageError("no model endpoint configured (flag or MODEL_ENDPOINT)")
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_factor = backoff_factor
        self._sleep = sleeper
        self._clock = clock
        self._rng = jitter_rng or random.Random()
        self._semaphore = threading.BoundedSemaphore(max_in_flight)
        self._rpm = requests_per_minute
        self._recent_starts: list[float] = []
        self._rpm_lock = threading.Lock()
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _pace(self) -> None:
        if self._rpm is None:
            return
        while True:
            with self._rpm_lock:
                now = self._clock()
                self._recent_starts = [t for t in self._recent_starts if now - t < 60.0]
                if len(self._recent_starts) < self._rpm:
                    self._recent_starts.append(now)
                    return
                wait = 60.0 - (now - self._recent_starts[0])
            self._sleep(max(0.01, wait))

    def complete(self, request: ModelRequest) -> ModelResponse:
        body = request.wire_body(self.model_id)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error = "no attempts made"
        for attempt in range(self.max_attempts):
            if attempt:
                delay = self._rng.uniform(
                    0, self.backoff_base * self.backoff_factor ** (attempt - 1)
                )
                self._sleep(delay)
            self._pace()
            started = time.monotonic()
            try:
                with self._semaphore:
                    response = self._client.post(self.endpoint, content=body, headers=headers)
            except httpx.HTTPError as exc:
                last_error = f"transport failure: {exc}"
                logger.warning(
                    "attempt %d/%d failed: %s", attempt + 1, self.max_attempts, exc
                )
                continue
            latency = int((time.monotonic() - started) * 1000)
            if response.status_code == 429 or response.status_code >= 500:
                last_error = f"HTTP {response.status_code}"
                logger.warning(
                    "attempt %d/%d got %s", attempt + 1, self.max_attempts, last_error
                )
                continue
            if response.status_code != 200:
                raise ProtocolError(
                    f"HTTP {response.status_code}: {response.text[:200]}"
                )
            return self._parse(response, latency)
        raise TransportError(
            f"gave up on {self.endpoint} after {self.max_attempts} attempts ({last_error})"
        )

    def _parse(self, response: httpx.Response, latency: int) -> ModelResponse:
        try:
            payload = response.json()
            choice = payload["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError):
            raise ProtocolError(
                f"response body is not chat-completion shaped: {response.text[:200]}"
            )
        if isinstance(choice, list):  # content may come back as parts
            choice = "".join(
                p.get("text", "") for p in choice if isinstance(p, dict)
            )
        usage = payload.get("usage") if isinstance(payload.get("usage"), dict) else None
        return ModelResponse(
            raw_text=str(choice),
            latency_ms=latency,
            token_usage=usage,
            backend_id=self.backend_id,
        )

    def describe(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "endpoint": self.endpoint,
            "model_id": self.model_id,
        }


class CachingModelBackend(ModelBackend):
    """Content-addressed response cache keyed by backend, model, and body.

    Entries are written temp-then-rename so concurrent writers are safe, and a
    hit returns exactly the bytes the backend produced for that body.
    """

    def __init__(self, inner: ModelBackend, cache_dir: str | Path, namespace: str = ""):
        self.inner = inner
        self.cache_dir = Path(cache_dir)
        self.namespace = namespace
        self.hits = 0
        self._lock = threading.Lock()

    @property
    def backend_id(self) -> str:  # type: ignore[override]
        return self.inner.backend_id

    @property
    def model_id(self) -> str:  # type: ignore[override]
        return self.inner.model_id

    def _key(self, request: ModelRequest) -> str:
        body = request.wire_body(self.inner.model_id)
        scope = f"{self.inner.backend_id}|{self.inner.model_id}|{self.namespace}|"
        return hashlib.sha256(scope.encode("utf-8") + body).hexdigest()

    def complete(self, request: ModelRequest) -> ModelResponse:
        key = self._key(request)
        path = self.cache_dir / key[:2] / f"{key}.json"
        if path.is_file():
            stored = json.loads(path.read_text(encoding="utf-8"))
            with self._lock:
                self.hits += 1
            return ModelResponse(
                raw_text=stored["raw_text"],
                latency_ms=stored["latency_ms"],
                token_usage=stored.get("token_usage"),
                backend_id=stored.get("backend_id", self.inner.backend_id),
            )
        response = self.inner.complete(request)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".tmp-{threading.get_ident()}")
        tmp.write_text(
            json.dumps(
                {
                    "raw_text": response.raw_text,
                    "latency_ms": response.latency_ms,
                    "token_usage": response.token_usage,
                    "backend_id": response.backend_id,
                }
            ),
            encoding="utf-8",
        )
        tmp.replace(path)
        return response

    def describe(self) -> dict:
        return self.inner.describe()


class CountingModelBackend(ModelBackend):
    """Counts how often the wrapped backend is actually invoked."""

    def __init__(self, inner: ModelBackend):
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()

    @property
    def backend_id(self) -> str:  # type: ignore[override]
        return self.inner.backend_id

    @property
    def model_id(self) -> str:  # type: ignore[override]
        return self.inner.model_id

    def complete(self, request: ModelRequest) -> ModelResponse:
        with self._lock:
            self.calls += 1
        return self.inner.complete(request)

    def describe(self) -> dict:
        return self.inner.describe()
