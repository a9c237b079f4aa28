"""Pluggable chat-completion backends: a deterministic scripted mock and a
streaming HTTP client for any chat-completion-compatible endpoint.

Both speak the same interface: ``complete_stream(request)`` yields ChatChunk
values in order, the concatenated deltas reproduce the full response text,
and exactly one chunk (the last) carries ``finished=True``. The wire protocol
of the live client is documented in docs/protocol.md.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Protocol

import httpx

from .domain import ToolCall
from .exceptions import BackendMalformed, BackendTimeout, ProtocolError, TransportError
from .streaming import ParseError, StreamParser, TextDelta, ToolCallComplete

ENV_BASE_URL = "QUERYLENS_LLM_BASE_URL"
ENV_API_KEY = "QUERYLENS_LLM_API_KEY"
ENV_MODEL = "QUERYLENS_LLM_MODEL"

DEFAULT_TIMEOUT_MS = 600


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user"):
            raise ValueError(f"role must be system or user, got {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion request with an explicit time budget."""

    messages: tuple[ChatMessage, ...]
    model: str = ""
    stream: bool = True
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("request needs at least one user message")
        if self.timeout_ms < 1:
            raise ValueError("timeout_ms must be >= 1")

    def last_user_content(self) -> str:
        return next(m.content for m in reversed(self.messages) if m.role == "user")

    def system_content(self) -> str:
        return "\n".join(m.content for m in self.messages if m.role == "system")


@dataclass(frozen=True)
class ChatChunk:
    delta: str
    finished: bool = False
    finish_reason: str | None = None


class LlmBackend(Protocol):
    def complete_stream(self, request: ChatRequest) -> Iterator[ChatChunk]: ...


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class MonotonicClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class ManualClock:
    """Test clock: sleep() advances now() instantly and deterministically."""

    def __init__(self, start: float = 0.0):
        self._now = start

    def now(self) -> float:
        return self._now

    def sleep(self, seconds: float) -> None:
        self._now += seconds


@dataclass(frozen=True)
class MockRule:
    """One scripted response.

    The matcher runs against the last user message, which by prompt-template
    convention carries the raw query text. ``when_system_contains`` narrows a
    rule to requests whose system prompt contains a marker, which is how
    two-call mode scripts distinct planning and tagging responses for the
    same query.
    """

    response: str
    exact: str | None = None
    pattern: str | None = None
    catch_all: bool = False
    splits: tuple[int, ...] = ()
    delay_ms: float = 0.0
    when_system_contains: str | None = None

    def __post_init__(self):
        selectors = sum(1 for s in (self.exact, self.pattern) if s is not None)
        if self.catch_all:
            if selectors:
                raise ValueError("catch-all rule must not carry a matcher")
        elif selectors != 1:
            raise ValueError("rule needs exactly one of exact/pattern, or catch_all")
        offsets = tuple(self.splits)
        if offsets and (
            any(o <= 0 or o >= len(self.response) for o in offsets)
            or list(offsets) != sorted(set(offsets))
        ):
            raise ValueError("splits must be strictly increasing offsets inside the response")
        object.__setattr__(self, "splits", offsets)
        if self.delay_ms < 0:
            raise ValueError("delay_ms must be >= 0")

    def matches(self, user_text: str, system_text: str) -> bool:
        if self.when_system_contains is not None and self.when_system_contains not in system_text:
            return False
        if self.catch_all:
            return True
        if self.exact is not None:
            return user_text == self.exact
        return re.search(self.pattern, user_text) is not None

    def chunks(self) -> list[str]:
        bounds = [0, *self.splits, len(self.response)]
        return [self.response[a:b] for a, b in zip(bounds, bounds[1:])]


@dataclass(frozen=True)
class MockScript:
    """Ordered response rules; first match wins, catch-all required last."""

    rules: tuple[MockRule, ...]

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if not self.rules or not self.rules[-1].catch_all:
            raise ValueError("a mock script must end with a catch-all rule")

    def find(self, user_text: str, system_text: str = "") -> MockRule:
        for rule in self.rules:
            if rule.matches(user_text, system_text):
                return rule
        raise AssertionError("unreachable: catch-all rule always matches")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MockScript":
        rules = []
        for raw in data.get("rules", ()):
            match = raw.get("match", "any")
            kwargs: dict[str, Any] = {
                "response": raw["response"],
                "splits": tuple(raw.get("splits", ())),
                "delay_ms": raw.get("delay_ms", 0.0),
                "when_system_contains": raw.get("when_system_contains"),
            }
            if match == "any":
                kwargs["catch_all"] = True
            elif "exact" in match:
                kwargs["exact"] = match["exact"]
            elif "pattern" in match:
                kwargs["pattern"] = match["pattern"]
            else:
                raise ValueError(f"rule matcher must be 'any' or carry exact/pattern: {match!r}")
            rules.append(MockRule(**kwargs))
        return cls(rules=tuple(rules))

    @classmethod
    def load(cls, path: str | Path) -> "MockScript":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def default_mock_script() -> MockScript:
    """The sample script shipped with the package (covers the demo queries)."""
    from importlib import resources

    raw = resources.files("querylens.data").joinpath("mock_script.default.json").read_text("utf-8")
    return MockScript.from_dict(json.loads(raw))


class MockBackend:
    """Deterministic scripted backend for tests and offline runs.

    Timing honors the injected clock, so scripted delays are instant and
    reproducible under ManualClock. A chunk whose delay would push total
    elapsed time past the request budget is never delivered; BackendTimeout
    is raised at that boundary instead.
    """

    def __init__(self, script: MockScript, clock: Clock | None = None):
        self.script = script
        self.clock = clock or MonotonicClock()

    def complete_stream(self, request: ChatRequest) -> Iterator[ChatChunk]:
        rule = self.script.find(request.last_user_content(), request.system_content())
        return self._stream(rule, request.timeout_ms)

    def _stream(self, rule: MockRule, timeout_ms: int) -> Iterator[ChatChunk]:
        start = self.clock.now()
        delay_s = rule.delay_ms / 1000.0
        for piece in rule.chunks():
            elapsed_after = (self.clock.now() - start + delay_s) * 1000.0
            if elapsed_after > timeout_ms:
                raise BackendTimeout(
                    f"mock backend exceeded {timeout_ms}ms budget at {elapsed_after:.0f}ms"
                )
            self.clock.sleep(delay_s)
            yield ChatChunk(delta=piece)
        yield ChatChunk(delta="", finished=True, finish_reason="stop")


def iter_sse_data(lines: Iterable[str]) -> Iterator[str]:
    """Yield the data payloads of a server-sent-event line stream."""
    for line in lines:
        line = line.strip("\r\n")
        if not line or line.startswith(":"):
            continue
        if not line.startswith("data:"):
            raise ProtocolError(f"unexpected SSE line: {line[:80]!r}")
        yield line[5:].lstrip()


def parse_stream_payload(payload: str) -> ChatChunk:
    """Decode one streaming delta event into a ChatChunk."""
    try:
        body = json.loads(payload)
        choice = body["choices"][0]
        delta = choice.get("delta", {}).get("content") or ""
        finish_reason = choice.get("finish_reason")
    except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"malformed stream chunk: {payload[:120]!r}") from exc
    return ChatChunk(delta=delta, finished=finish_reason is not None, finish_reason=finish_reason)


class LiveBackend:
    """Streaming client for a chat-completion-compatible HTTP endpoint.

    No automatic retries: the request budget leaves no room, and degradation
    policy belongs to the caller.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        model: str = "",
        transport: httpx.BaseTransport | None = None,
        clock: Clock | None = None,
        max_connections: int = 16,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.clock = clock or MonotonicClock()
        # One shared client: streams run concurrently, bounded by the pool.
        self._client = httpx.Client(
            transport=transport,
            limits=httpx.Limits(max_connections=max_connections),
        )

    def close(self) -> None:
        self._client.close()

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None) -> "LiveBackend":
        env = env if env is not None else os.environ
        base_url = env.get(ENV_BASE_URL)
        if not base_url:
            raise TransportError(f"{ENV_BASE_URL} is not set; cannot reach a live backend")
        return cls(base_url=base_url, api_key=env.get(ENV_API_KEY), model=env.get(ENV_MODEL, ""))

    def complete_stream(self, request: ChatRequest) -> Iterator[ChatChunk]:
        payload = {
            "model": request.model or self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "stream": True,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        budget_s = request.timeout_ms / 1000.0
        start = self.clock.now()
        try:
            with self._client.stream(
                "POST",
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=budget_s,
            ) as response:
                if response.status_code != 200:
                    raise ProtocolError(f"backend returned HTTP {response.status_code}")
                finished = False
                for data in iter_sse_data(response.iter_lines()):
                    if self.clock.now() - start > budget_s:
                        raise BackendTimeout(
                            f"live backend exceeded {request.timeout_ms}ms budget"
                        )
                    if data == "[DONE]":
                        if not finished:
                            yield ChatChunk(delta="", finished=True, finish_reason="stop")
                            finished = True
                        break
                    chunk = parse_stream_payload(data)
                    if chunk.finished:
                        finished = True
                    yield chunk
                if not finished:
                    raise ProtocolError("stream ended without a finish marker")
        except httpx.TimeoutException as exc:
            raise BackendTimeout(f"live backend exceeded {request.timeout_ms}ms budget") from exc
        except httpx.TransportError as exc:
            raise TransportError(f"backend connection failed: {exc}") from exc


def collect_text(chunks: Iterable[ChatChunk]) -> str:
    return "".join(c.delta for c in chunks)


@dataclass(frozen=True)
class ParsedResponse:
    """A fully streamed and parsed backend response."""

    calls: tuple[ToolCall, ...]
    text: str
    raw: str


def run_and_parse(backend: LlmBackend, request: ChatRequest) -> ParsedResponse:
    """Stream one request to completion and parse the tool calls out of it.

    Raises BackendMalformed if the response fails tool-call parsing; timeout
    and transport failures propagate from the backend untouched.
    """
    parser = StreamParser()
    calls: list[ToolCall] = []
    prose: list[str] = []
    raw: list[str] = []
    events = []
    for chunk in backend.complete_stream(request):
        raw.append(chunk.delta)
        events = parser.feed(chunk.delta.encode("utf-8"))
        _collect(events, calls, prose)
    events = parser.finish()
    _collect(events, calls, prose)
    return ParsedResponse(calls=tuple(calls), text="".join(prose), raw="".join(raw))


def _collect(events, calls: list[ToolCall], prose: list[str]) -> None:
    for event in events:
        if isinstance(event, ToolCallComplete):
            calls.append(event.call)
        elif isinstance(event, TextDelta):
            prose.append(event.text)
        elif isinstance(event, ParseError):
            raise BackendMalformed(
                f"backend output failed parsing at byte {event.position}: {event.description}"
            )
