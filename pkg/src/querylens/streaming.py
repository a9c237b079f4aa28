"""Incremental parsing of streamed model output into tool-call events.

The model's response interleaves free text with tool-call objects of the
fixed wire shape ``{"tool": NAME, "arguments": {...}}``. The parser consumes
raw byte chunks (chunks may split multi-byte characters, string literals, or
structural tokens anywhere) and emits each completed tool call in the feed()
call that receives its closing byte, so execution can start before the model
finishes generating.

Event semantics:

* ``ToolCallComplete`` events are identical under any chunking of the same
  input, and carry call_index 0, 1, 2, ... in emission order.
* ``TextDelta`` boundaries depend on chunking; only the concatenated text is
  chunking-invariant. ``normalize_events`` merges adjacent deltas so two
  event sequences can be compared.
* A ``ParseError`` poisons the parser: every later feed() or finish()
  returns only that error. Positions are byte offsets into the concatenation
  of all chunks fed so far, hence chunking-invariant as well.

Strictness is deliberate: an object with keys other than exactly "tool" and
"arguments" is an error, not something to skip, because small models
hallucinate structure and silent drops would hide that from evaluation.
A consequence of the wire shape is that free text must not contain ``{``;
every ``{`` begins a tool-call object.
"""

from __future__ import annotations

import codecs
import json
from dataclasses import dataclass
from typing import Any, Iterable, Union

from .domain import ToolCall

TOOL_CALL_KEYS = frozenset({"tool", "arguments"})


@dataclass(frozen=True)
class TextDelta:
    """Free text outside any tool-call object."""

    text: str


@dataclass(frozen=True)
class ToolCallComplete:
    """A tool call whose closing byte has arrived."""

    call: ToolCall


@dataclass(frozen=True)
class ParseError:
    """Malformed structure at a byte offset of the total input fed so far."""

    position: int
    description: str


ParserEvent = Union[TextDelta, ToolCallComplete, ParseError]

_TEXT = 0
_OBJECT = 1


class StreamParser:
    """Push parser for one response stream.

    Not safe for concurrent use; create one parser per stream. Independent
    parsers run concurrently without coordination.
    """

    def __init__(self):
        self._decoder = codecs.getincrementaldecoder("utf-8")()
        self._byte_pos = 0  # bytes decoded and consumed so far
        self._total_bytes = 0  # bytes fed so far, including undecoded tail
        self._mode = _TEXT
        self._text_buf: list[str] = []
        self._obj_buf: list[str] = []
        self._obj_start = 0
        self._depth = 0
        self._in_string = False
        self._escape = False
        self._calls_emitted = 0
        self._error: ParseError | None = None
        self._finished = False

    @property
    def calls_emitted(self) -> int:
        return self._calls_emitted

    def feed(self, chunk: bytes) -> list[ParserEvent]:
        """Consume one chunk of raw response bytes.

        Returns the events completed by this chunk: tool calls whose closing
        byte arrived, plus one TextDelta for any free text decoded here.
        Bytes that end mid-character are buffered, never emitted partially.
        """
        if self._error is not None:
            return [self._error]
        if self._finished:
            raise RuntimeError("feed() after finish()")

        try:
            text = self._decoder.decode(chunk)
        except UnicodeDecodeError as exc:
            return [self._poison(self._byte_pos + exc.start, f"invalid UTF-8: {exc.reason}")]
        self._total_bytes += len(chunk)

        events: list[ParserEvent] = []
        for ch in text:
            event = self._consume(ch, events)
            if event is not None:
                events.append(event)
                return events  # poisoned; drop the rest of the chunk
        self._flush_text(events)
        return events

    def finish(self) -> list[ParserEvent]:
        """Signal end of input, flushing trailing text or raising buffered errors."""
        if self._error is not None:
            return [self._error]
        if self._finished:
            return []
        self._finished = True

        try:
            self._decoder.decode(b"", True)
        except UnicodeDecodeError:
            return [self._poison(self._byte_pos, "input truncated inside a multi-byte character")]
        if self._mode == _OBJECT:
            return [self._poison(self._total_bytes, "input ended inside an unterminated tool call object")]
        events: list[ParserEvent] = []
        self._flush_text(events)
        return events

    def _consume(self, ch: str, events: list[ParserEvent]) -> ParseError | None:
        start = self._byte_pos
        self._byte_pos += len(ch.encode("utf-8"))

        if self._mode == _TEXT:
            if ch == "{":
                self._flush_text(events)
                self._mode = _OBJECT
                self._obj_buf = [ch]
                self._obj_start = start
                self._depth = 1
                self._in_string = False
                self._escape = False
            else:
                self._text_buf.append(ch)
            return None

        self._obj_buf.append(ch)
        if self._in_string:
            if self._escape:
                self._escape = False
            elif ch == "\\":
                self._escape = True
            elif ch == '"':
                self._in_string = False
            return None
        if ch == '"':
            self._in_string = True
        elif ch in "{[":
            self._depth += 1
        elif ch in "}]":
            self._depth -= 1
            if self._depth == 0:
                return self._complete_object(events)
        return None

    def _complete_object(self, events: list[ParserEvent]) -> ParseError | None:
        raw = "".join(self._obj_buf)
        self._mode = _TEXT
        self._obj_buf = []
        call, problem = _interpret_tool_object(raw, self._calls_emitted)
        if problem is not None:
            return self._poison(self._obj_start, problem)
        self._calls_emitted += 1
        events.append(ToolCallComplete(call))
        return None

    def _flush_text(self, events: list[ParserEvent]) -> None:
        if self._text_buf:
            events.append(TextDelta("".join(self._text_buf)))
            self._text_buf = []

    def _poison(self, position: int, description: str) -> ParseError:
        self._error = ParseError(position=position, description=description)
        return self._error


def _interpret_tool_object(raw: str, call_index: int) -> tuple[ToolCall | None, str | None]:
    """Validate a delimiter-balanced object as a tool call. Returns (call, problem)."""
    try:
        value = json.loads(raw)
    except json.JSONDecodeError as exc:
        return None, f"malformed tool call object: {exc.msg}"
    if not isinstance(value, dict):
        return None, "tool call must be a JSON object"
    keys = set(value.keys())
    if keys != TOOL_CALL_KEYS:
        unknown = sorted(keys - TOOL_CALL_KEYS)
        missing = sorted(TOOL_CALL_KEYS - keys)
        parts = []
        if unknown:
            parts.append(f"unknown keys {unknown}")
        if missing:
            parts.append(f"missing keys {missing}")
        return None, f"tool call object with {' and '.join(parts)}"
    tool = value["tool"]
    arguments = value["arguments"]
    if not isinstance(tool, str) or not tool:
        return None, "tool name must be a non-empty string"
    if not isinstance(arguments, dict):
        return None, "tool call arguments must be a JSON object"
    return ToolCall(tool_name=tool, arguments=arguments, call_index=call_index), None


class StreamParseError(Exception):
    """Raised by parse_complete on input the streaming path would reject."""

    def __init__(self, position: int, description: str):
        super().__init__(f"byte {position}: {description}")
        self.position = position
        self.description = description

    def as_event(self) -> ParseError:
        return ParseError(position=self.position, description=self.description)


def parse_complete(text: str) -> list[ToolCall]:
    """Parse a fully available response into its tool calls.

    Implemented on the stdlib JSON decoder rather than the incremental state
    machine, so it doubles as the batch oracle for the streaming path: its
    result always equals the ToolCallComplete projection of feeding the whole
    text through feed() + finish().
    """
    decoder = json.JSONDecoder()
    calls: list[ToolCall] = []
    byte_pos = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch != "{":
            byte_pos += len(ch.encode("utf-8"))
            i += 1
            continue
        end = _balanced_end(text, i)
        if end is None:
            raise StreamParseError(
                len(text.encode("utf-8")), "input ended inside an unterminated tool call object"
            )
        try:
            _, consumed = decoder.raw_decode(text, i)
        except json.JSONDecodeError as exc:
            raise StreamParseError(byte_pos, f"malformed tool call object: {exc.msg}") from exc
        # The balance scan and raw_decode agree on well-formed objects; use
        # the balanced span so both routes report identical error anchors.
        raw = text[i:end]
        call, problem = _interpret_tool_object(raw, len(calls))
        if problem is not None:
            raise StreamParseError(byte_pos, problem)
        calls.append(call)
        byte_pos += len(raw.encode("utf-8"))
        i = end
    return calls


def _balanced_end(text: str, start: int) -> int | None:
    """Index one past the close of the object opening at start, or None."""
    depth = 0
    in_string = False
    escape = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch in "{[":
            depth += 1
        elif ch in "}]":
            depth -= 1
            if depth == 0:
                return i + 1
    return None


def normalize_events(events: Iterable[ParserEvent]) -> list[ParserEvent]:
    """Merge adjacent TextDelta events and drop empty ones.

    Two event sequences from different chunkings of the same input are
    equivalent iff their normalized forms are equal.
    """
    out: list[ParserEvent] = []
    for event in events:
        if isinstance(event, TextDelta):
            if not event.text:
                continue
            if out and isinstance(out[-1], TextDelta):
                out[-1] = TextDelta(out[-1].text + event.text)
                continue
        out.append(event)
    return out


def event_to_dict(event: ParserEvent) -> dict[str, Any]:
    """Line-record form used by the parse-stream CLI."""
    if isinstance(event, TextDelta):
        return {"type": "text_delta", "text": event.text}
    if isinstance(event, ToolCallComplete):
        return {
            "type": "tool_call",
            "tool_name": event.call.tool_name,
            "arguments": dict(event.call.arguments),
            "call_index": event.call.call_index,
        }
    return {"type": "parse_error", "position": event.position, "description": event.description}
