import json
import random
import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from querylens.streaming import (
    ParseError,
    StreamParseError,
    StreamParser,
    TextDelta,
    ToolCallComplete,
    normalize_events,
    parse_complete,
)

THREE_CALL_RESPONSE = (
    'Checking the query now.\n'
    '{"tool": "location_tool", "arguments": {"place": "Naples"}}\n'
    '{"tool": "easy_apply_tool", "arguments": {"enabled": true}}\n'
    'Almost done.\n'
    '{"tool": "num_applicants_tool", "arguments": {"max_applicants": 10}}\n'
    'Done.'
)


def feed_whole(text: str) -> list:
    parser = StreamParser()
    events = parser.feed(text.encode("utf-8"))
    events += parser.finish()
    return events


def feed_chunked(data: bytes, cut_points: list[int]) -> list:
    parser = StreamParser()
    events = []
    bounds = [0, *cut_points, len(data)]
    for a, b in zip(bounds, bounds[1:]):
        events += parser.feed(data[a:b])
    events += parser.finish()
    return events


def calls_of(events) -> list:
    return [e.call for e in events if isinstance(e, ToolCallComplete)]


class TestParseComplete:
    def test_two_tool_response_indexes_zero_one(self):
        text = (
            '{"tool": "a", "arguments": {"x": 1}}'
            '{"tool": "b", "arguments": {"y": "z"}}'
        )
        calls = parse_complete(text)
        assert [(c.tool_name, c.call_index) for c in calls] == [("a", 0), ("b", 1)]
        assert calls[0].arguments == {"x": 1}
        assert calls[1].arguments == {"y": "z"}

    def test_prose_only_yields_no_calls(self):
        assert parse_complete("hello world") == []

    def test_nested_argument_values_preserved_exactly(self):
        nested = {"place": {"city": "Naples", "alt": [1, 2, {"deep": True}]}, "n": None}
        text = json.dumps({"tool": "location_tool", "arguments": nested})
        calls = parse_complete(text)
        assert calls[0].arguments == nested

    def test_unknown_keys_are_an_error(self):
        with pytest.raises(StreamParseError) as exc_info:
            parse_complete('{"tool": "a", "arguments": {}, "reason": "because"}')
        assert "unknown keys" in exc_info.value.description

    def test_unterminated_object_is_an_error(self):
        with pytest.raises(StreamParseError) as exc_info:
            parse_complete('{"tool": "x"')
        assert exc_info.value.position == len('{"tool": "x"')

    def test_non_string_tool_name_is_an_error(self):
        with pytest.raises(StreamParseError):
            parse_complete('{"tool": 3, "arguments": {}}')

    def test_non_object_arguments_is_an_error(self):
        with pytest.raises(StreamParseError):
            parse_complete('{"tool": "a", "arguments": [1]}')


class TestFeed:
    def test_tool_call_split_across_two_chunks_emits_on_second(self):
        # Expected value checked against the parse_complete oracle below.
        chunks = ['{"tool":"location_to', 'ol","arguments":{"place":"Naples"}}']
        parser = StreamParser()
        first = parser.feed(chunks[0].encode())
        assert first == []
        second = parser.feed(chunks[1].encode())
        calls = calls_of(second)
        assert len(calls) == 1
        assert calls[0].tool_name == "location_tool"
        assert calls[0].arguments == {"place": "Naples"}
        assert parser.finish() == []

        oracle = parse_complete("".join(chunks))
        assert calls == oracle

    def test_empty_chunk_then_finish_is_empty(self):
        parser = StreamParser()
        assert parser.feed(b"") == []
        assert parser.finish() == []

    def test_fixed_response_many_random_chunkings_match_single_chunk(self):
        data = THREE_CALL_RESPONSE.encode("utf-8")
        oracle_events = normalize_events(feed_whole(THREE_CALL_RESPONSE))
        assert calls_of(oracle_events) == parse_complete(THREE_CALL_RESPONSE)

        rng = random.Random(20240817)
        for _ in range(1000):
            count = rng.randint(0, 12)
            cuts = sorted(rng.sample(range(1, len(data)), count))
            events = normalize_events(feed_chunked(data, cuts))
            assert events == oracle_events

    def test_multibyte_character_split_is_buffered_not_emitted_partially(self):
        text = "naïve café {\"tool\": \"a\", \"arguments\": {}} ✓"
        data = text.encode("utf-8")
        # Cut inside the two-byte 'ï' (bytes 3..5) and inside '✓'.
        cut = 4
        parser = StreamParser()
        first = parser.feed(data[:cut])
        for event in first:
            assert isinstance(event, TextDelta)
            event.text.encode("utf-8")  # must be valid text, no partial chars
        rest = parser.feed(data[cut:-2]) + parser.feed(data[-2:]) + parser.finish()
        merged = normalize_events(first + rest)
        assert merged == normalize_events(feed_whole(text))

    def test_text_before_and_after_call_keeps_order(self):
        text = 'before {"tool": "a", "arguments": {}} after'
        events = normalize_events(feed_whole(text))
        assert [type(e) for e in events] == [TextDelta, ToolCallComplete, TextDelta]
        assert events[0].text == "before "
        assert events[2].text == " after"


class TestFinish:
    def test_after_complete_response_no_additional_events(self):
        parser = StreamParser()
        parser.feed(b'{"tool": "x", "arguments": {}}')
        assert parser.finish() == []

    def test_unterminated_object_reports_end_of_input(self):
        parser = StreamParser()
        parser.feed(b'{"tool":"x"')
        events = parser.finish()
        assert len(events) == 1
        assert isinstance(events[0], ParseError)
        assert events[0].position == len(b'{"tool":"x"')

    def test_trailing_prose_flushed_once(self):
        # Oracle: single-chunk feed of the same prose.
        parser = StreamParser()
        first = parser.feed(b"plain prose only")
        trailing = parser.finish()
        assert normalize_events(first + trailing) == normalize_events(
            feed_whole("plain prose only")
        )
        assert trailing == []  # feed already flushed the text

    def test_prose_buffered_by_incomplete_char_flushes_at_finish(self):
        data = "abcé".encode("utf-8")
        parser = StreamParser()
        events = parser.feed(data[:-1])  # é split in half
        assert events == [TextDelta("abc")]
        events = parser.feed(data[-1:])
        assert events == [TextDelta("é")]
        assert parser.finish() == []


class TestErrors:
    def test_poisoned_after_error_returns_only_that_error(self):
        parser = StreamParser()
        events = parser.feed(b'{"tool": "a", "oops": 1, "arguments": {}}')
        errors = [e for e in events if isinstance(e, ParseError)]
        assert len(errors) == 1
        error = errors[0]
        assert parser.feed(b'{"tool": "b", "arguments": {}}') == [error]
        assert parser.feed(b"more text") == [error]
        assert parser.finish() == [error]

    def test_error_position_is_object_start_byte(self):
        prefix = "padding "
        parser = StreamParser()
        events = parser.feed((prefix + '{"tool": 1, "arguments": {}}').encode())
        error = next(e for e in events if isinstance(e, ParseError))
        assert error.position == len(prefix.encode("utf-8"))

    def test_malformed_json_inside_object(self):
        events = feed_whole('{"tool": "a", "arguments": {,}}')
        assert any(isinstance(e, ParseError) for e in events)

    def test_invalid_utf8_mid_stream(self):
        parser = StreamParser()
        events = parser.feed(b"ok \xff nope")
        assert len(events) == 1
        assert isinstance(events[0], ParseError)
        assert events[0].position == 3

    def test_truncated_multibyte_at_finish(self):
        parser = StreamParser()
        parser.feed("é".encode("utf-8")[:1])
        events = parser.finish()
        assert isinstance(events[0], ParseError)

    def test_mismatched_delimiters_rejected(self):
        events = feed_whole('{"tool": "a", "arguments": {]}')
        assert any(isinstance(e, ParseError) for e in events)

    def test_streaming_and_batch_agree_on_errors(self):
        bad_inputs = [
            '{"tool": "a", "arguments": {}, "extra": 1}',
            '{"tool": "a"}',
            '{"tool": "", "arguments": {}}',
            '{"tool": "a", "arguments": 5}',
            '{"tool": "a", "arguments": {',
            "text then {invalid",
        ]
        for text in bad_inputs:
            stream_error = next(
                e for e in feed_whole(text) if isinstance(e, ParseError)
            )
            with pytest.raises(StreamParseError) as exc_info:
                parse_complete(text)
            assert exc_info.value.as_event() == stream_error


class TestInvariants:
    def test_monotone_call_index_without_gaps(self):
        events = feed_whole(THREE_CALL_RESPONSE)
        indexes = [c.call_index for c in calls_of(events)]
        assert indexes == list(range(len(indexes)))

    def test_earliest_emission_fires_in_closing_byte_chunk(self):
        data = THREE_CALL_RESPONSE.encode("utf-8")
        closing_offsets = [
            i for i, byte in enumerate(data) if byte == ord("}")
        ]
        # Outermost closers: every second '}' here since arguments adds one level.
        outer_closers = closing_offsets[1::2]
        assert len(outer_closers) == 3

        rng = random.Random(7)
        for _ in range(50):
            cuts = sorted(rng.sample(range(1, len(data)), rng.randint(1, 10)))
            bounds = [0, *cuts, len(data)]
            parser = StreamParser()
            seen: dict[int, int] = {}  # call_index -> chunk index that emitted it
            for chunk_index, (a, b) in enumerate(zip(bounds, bounds[1:])):
                for event in parser.feed(data[a:b]):
                    if isinstance(event, ToolCallComplete):
                        seen[event.call.call_index] = chunk_index
            parser.finish()
            for call_index, closer in enumerate(outer_closers):
                expected_chunk = next(
                    i for i, (a, b) in enumerate(zip(bounds, bounds[1:])) if a <= closer < b
                )
                assert seen[call_index] == expected_chunk

    @settings(max_examples=300, deadline=None)
    @given(data=st.data())
    def test_chunking_invariance_property(self, data):
        response = data.draw(tool_call_responses())
        raw = response.encode("utf-8")
        n_cuts = data.draw(st.integers(min_value=0, max_value=min(10, max(len(raw) - 1, 0))))
        cuts = sorted(
            data.draw(
                st.lists(
                    st.integers(min_value=1, max_value=max(len(raw) - 1, 1)),
                    min_size=n_cuts,
                    max_size=n_cuts,
                    unique=True,
                )
            )
        ) if len(raw) > 1 else []
        assert normalize_events(feed_chunked(raw, cuts)) == normalize_events(
            feed_whole(response)
        )


@st.composite
def tool_call_responses(draw):
    """Random responses from the tool-call grammar: prose and calls interleaved."""
    # No "{" in prose (it always opens a tool call); "}" and "]" are fine.
    prose_alphabet = string.ascii_letters + string.digits + " .,;:!?'\"-()}]\nàéü✓"
    parts = []
    for _ in range(draw(st.integers(min_value=1, max_value=5))):
        if draw(st.booleans()):
            parts.append(draw(st.text(alphabet=prose_alphabet, min_size=1, max_size=30)))
        else:
            arguments = draw(
                st.dictionaries(
                    st.text(alphabet=string.ascii_lowercase, min_size=1, max_size=8),
                    st.recursive(
                        st.one_of(
                            st.integers(min_value=-1000, max_value=1000),
                            st.booleans(),
                            st.none(),
                            st.text(alphabet=prose_alphabet + "{}[]\\/", max_size=12),
                        ),
                        lambda children: st.lists(children, max_size=3)
                        | st.dictionaries(
                            st.text(alphabet=string.ascii_lowercase, min_size=1, max_size=5),
                            children,
                            max_size=3,
                        ),
                        max_leaves=6,
                    ),
                    max_size=4,
                )
            )
            name = draw(st.text(alphabet=string.ascii_lowercase + "_", min_size=1, max_size=12))
            parts.append(json.dumps({"tool": name, "arguments": arguments}))
    return "".join(parts)


class TestNormalizeEvents:
    def test_merges_adjacent_text_and_drops_empty(self):
        events = [TextDelta("a"), TextDelta(""), TextDelta("b")]
        assert normalize_events(events) == [TextDelta("ab")]

    def test_keeps_non_text_boundaries(self):
        call_events = feed_whole('{"tool": "a", "arguments": {}}')
        merged = normalize_events([TextDelta("x")] + call_events + [TextDelta("y")])
        assert [type(e) for e in merged] == [TextDelta, ToolCallComplete, TextDelta]
