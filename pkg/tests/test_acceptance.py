"""Acceptance suite: one test per release criterion, one PASS line each.

Run with: pytest tests/test_acceptance.py -v -s
"""

import itertools
import json
import random
import string
import time
from collections import Counter
from itertools import chain, combinations

import pytest
from fastapi.testclient import TestClient

from querylens.domain import (
    POLICY_DENIAL_MESSAGE,
    Facet,
    IntentRoute,
    Query,
    ToolCall,
)
from querylens.evaluation import (
    LabeledExample,
    compare,
    evaluate,
    match_key,
    report_from_counts,
)
from querylens.gateway import MockBackend, MockRule, MockScript, default_mock_script
from querylens.metrics import nearest_rank
from querylens.pipeline import Pipeline
from querylens.planner import ROUTE_PRECEDENCE, resolve_route
from querylens.scheduling import (
    HETEROGENEOUS,
    HOMOGENEOUS,
    SftExample,
    TaskDataset,
    corpus_sft_loss,
    schedule,
    sft_loss,
    upsample,
)
from querylens.service import create_app
from querylens.streaming import (
    StreamParser,
    ToolCallComplete,
    normalize_events,
    parse_complete,
)
from querylens.taxonomy import default_taxonomy
from querylens.tools import RejectedOutcome, ToolResult, execute_all

PASS = "ACCEPTANCE {num:>2} {name}: PASS"


def ok(num: int, name: str) -> None:
    print(PASS.format(num=num, name=name))


# -- 1. streaming-parser equivalence -----------------------------------------


def generate_response(rng: random.Random) -> str:
    prose_chars = string.ascii_letters + string.digits + " .,:;!?'\"-()}]\nàéü✓"
    tools = ["location_tool", "company_tool", "easy_apply_tool", "date_posted_tool"]
    parts = []
    for _ in range(rng.randint(1, 6)):
        if rng.random() < 0.45:
            parts.append("".join(rng.choice(prose_chars) for _ in range(rng.randint(1, 40))))
        else:
            arguments = {
                "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(1, 6))): (
                    rng.choice(
                        [
                            rng.randint(-100, 100),
                            True,
                            False,
                            None,
                            "".join(rng.choice(prose_chars + "{}[]\\/") for _ in range(8)),
                            {"nested": [1, {"deep": "x"}]},
                        ]
                    )
                )
                for _ in range(rng.randint(0, 3))
            }
            parts.append(json.dumps({"tool": rng.choice(tools), "arguments": arguments}))
    return "".join(parts)


def test_acceptance_01_streaming_parser_equivalence():
    rng = random.Random(0xC0FFEE)
    started = time.perf_counter()
    total_chunkings = 0
    divergences = 0
    responses = [generate_response(rng) for _ in range(60)]
    assert len(responses) >= 50
    for response in responses:
        data = response.encode("utf-8")
        single_parser = StreamParser()
        oracle = normalize_events(single_parser.feed(data) + single_parser.finish())
        oracle_calls = [e.call for e in oracle if isinstance(e, ToolCallComplete)]
        assert oracle_calls == parse_complete(response)  # batch oracle agrees

        for _ in range(20):
            cuts = sorted(
                rng.sample(range(1, len(data)), rng.randint(0, min(12, len(data) - 1)))
            )
            parser = StreamParser()
            events = []
            bounds = [0, *cuts, len(data)]
            for a, b in zip(bounds, bounds[1:]):
                events += parser.feed(data[a:b])
            events += parser.finish()
            total_chunkings += 1
            if normalize_events(events) != oracle:
                divergences += 1
    elapsed = time.perf_counter() - started
    assert total_chunkings >= 1000
    assert divergences == 0
    assert elapsed < 30.0
    ok(1, f"streaming equivalence ({total_chunkings} chunkings, {elapsed:.1f}s)")


# -- 2. earliest emission ------------------------------------------------------


def test_acceptance_02_earliest_emission():
    response = (
        '{"tool": "location_tool", "arguments": {"place": "berlin"}}'
        '{"tool": "easy_apply_tool", "arguments": {"enabled": true}}'
        '{"tool": "title_tool", "arguments": {"title": "engineer"}}'
    )
    data = response.encode("utf-8")
    closers = [i for i, b in enumerate(data) if b == ord("}")][1::2]
    assert len(closers) == 3

    rng = random.Random(42)
    for _ in range(100):
        cuts = sorted(rng.sample(range(1, len(data)), rng.randint(1, 10)))
        bounds = [0, *cuts, len(data)]
        parser = StreamParser()
        emitted_in: dict[int, int] = {}
        for chunk_index, (a, b) in enumerate(zip(bounds, bounds[1:])):
            for event in parser.feed(data[a:b]):
                if isinstance(event, ToolCallComplete):
                    emitted_in[event.call.call_index] = chunk_index
        parser.finish()
        for call_index, closer_offset in enumerate(closers):
            receiving_chunk = next(
                i for i, (a, b) in enumerate(zip(bounds, bounds[1:])) if a <= closer_offset < b
            )
            assert emitted_in[call_index] == receiving_chunk
    ok(2, "earliest emission (closing-byte chunk, 100 chunkings)")


# -- 3. planner precedence and trust short-circuit ----------------------------


def test_acceptance_03_planner_precedence_and_short_circuit(taxonomy):
    combos = list(
        chain.from_iterable(combinations(list(IntentRoute), k) for k in range(1, 5))
    )
    assert len(combos) == 15
    for subset in combos:
        expected = next(r for r in ROUTE_PRECEDENCE if r in subset)
        assert resolve_route(subset) is expected

    class CountingBackend:
        def __init__(self, inner):
            self.inner = inner
            self.calls = 0

        def complete_stream(self, request):
            self.calls += 1
            return self.inner.complete_stream(request)

    response = "\n".join(
        [
            '{"tool": "route_query", "arguments": {"category": "trust_violation", "subcategory": "offensive"}}',
            '{"tool": "title_tool", "arguments": {"title": "x"}}',
        ]
    )
    script = MockScript(
        rules=(
            MockRule(response=response, exact="bad"),
            MockRule(
                response='{"tool": "route_query", "arguments": {"category": "criteria"}}',
                catch_all=True,
            ),
        )
    )
    backend = CountingBackend(MockBackend(script))
    executions = []

    def counting_run(call: ToolCall) -> ToolResult:
        executions.append(call)
        return ToolResult(call.call_index, RejectedOutcome("instrumented"), 0.0)

    pipeline = Pipeline(backend=backend, taxonomy=taxonomy, run_tool=counting_run)
    result = pipeline.understand(Query(text="bad"))
    pipeline.close()
    assert result.route is IntentRoute.TRUST_VIOLATION
    assert backend.calls == 1
    assert executions == []
    ok(3, "planner precedence (15 combos) and trust short-circuit")


# -- 4. end-to-end fixtures ------------------------------------------------------


def test_acceptance_04_end_to_end_fixtures(taxonomy, bay_area_profile):
    pipeline = Pipeline(backend=MockBackend(default_mock_script()), taxonomy=taxonomy)

    naples = pipeline.understand(Query(text="find me a job in Naples"), bay_area_profile)
    assert naples.route is IntentRoute.CRITERIA_SEARCH
    geo = [t for t in naples.tags if t.facet is Facet.GEO_LOCATION]
    assert len(geo) == 1 and geo[0].value.place_id == "geo:naples-fl"

    profile_match = pipeline.understand(
        Query(text="jobs that match my profile"), bay_area_profile
    )
    assert profile_match.route is IntentRoute.SELF_REFERENCE_SEARCH
    assert "Bay Area" in profile_match.rewritten_query
    assert any(t.facet is Facet.TITLE for t in profile_match.tags)

    mermaid = pipeline.understand(Query(text="I want to be a mermaid"))
    assert mermaid.route is IntentRoute.NON_JOB_RELATED
    assert mermaid.denial is None

    denial = pipeline.understand(Query(text="jobs where I can hurt people"))
    assert denial.route is IntentRoute.TRUST_VIOLATION
    assert denial.denial.message == POLICY_DENIAL_MESSAGE
    assert denial.tags == () and denial.facet_suggestions == ()

    pipeline.close()
    ok(4, "end-to-end fixture queries")


# -- 5. concurrent tool execution ---------------------------------------------


def test_acceptance_05_concurrent_tool_execution():
    def slow_run(call: ToolCall) -> ToolResult:
        time.sleep(0.05)
        return ToolResult(call.call_index, RejectedOutcome("instrumented"), 50.0)

    calls = [
        ToolCall(tool_name="title_tool", arguments={"title": "x"}, call_index=i)
        for i in range(3)
    ]
    walls = []
    for _ in range(20):
        started = time.perf_counter()
        results = execute_all(calls, run_one=slow_run)
        walls.append((time.perf_counter() - started) * 1000.0)
        assert len(results) == 3
    assert all(w < 120.0 for w in walls), f"wall times {walls}"
    ok(5, f"concurrent execution 20/20 < 120ms (max {max(walls):.0f}ms)")


# -- 6. scheduler ----------------------------------------------------------------


def test_acceptance_06_scheduler():
    def dataset(task_id, size):
        return TaskDataset(
            task_id=task_id,
            examples=tuple(SftExample(prompt=f"{task_id}{i}", target="t") for i in range(size)),
        )

    datasets = [dataset("a", 4), dataset("b", 4)]
    manifest = schedule(datasets, HOMOGENEOUS, batch_size=2, seed=17)
    assert len(manifest.batches) == 4
    assert all(len({t for t, _ in batch}) == 1 for batch in manifest.batches)
    per_task = Counter({t for t, _ in batch}.pop() for batch in manifest.batches)
    assert per_task == {"a": 2, "b": 2}
    emitted = sorted(e for batch in manifest.batches for e in batch)
    expected = sorted((d.task_id, i) for d in datasets for i in range(4))
    assert emitted == expected

    mixed = any(
        any(len({t for t, _ in batch}) > 1 for batch in
            schedule(datasets, HETEROGENEOUS, batch_size=2, seed=seed).batches)
        for seed in range(100)
    )
    assert mixed

    first = schedule(datasets, HOMOGENEOUS, batch_size=2, seed=99).to_json().encode()
    second = schedule(datasets, HOMOGENEOUS, batch_size=2, seed=99).to_json().encode()
    assert first == second
    ok(6, "scheduler coverage, homogeneity, mixing, determinism")


# -- 7. reference loss -------------------------------------------------------------


def test_acceptance_07_reference_loss():
    example = SftExample(prompt="p", target="t", token_logprobs=(-0.1, -0.2, -0.3))
    assert abs(sft_loss(example) - 0.6) < 1e-9

    a = SftExample(prompt="p", target="t", token_logprobs=(-0.6,))
    b = SftExample(prompt="p", target="t", token_logprobs=(-1.4,))
    assert corpus_sft_loss([a, b]) == sft_loss(a) + sft_loss(b)

    with pytest.raises(ValueError):
        sft_loss(SftExample(prompt="p", target="t", token_logprobs=(0.5,)))
    ok(7, "reference loss arithmetic and rejection")


# -- 8. eval-harness oracle ----------------------------------------------------------


def brute_force_counts(predicted, expected):
    small, large = (
        (predicted, expected) if len(predicted) <= len(expected) else (expected, predicted)
    )
    best = 0
    for assignment in itertools.permutations(range(len(large)), len(small)):
        matched = sum(
            1 for i, j in enumerate(assignment) if match_key(small[i]) == match_key(large[j])
        )
        best = max(best, matched)
    return best, len(predicted) - best, len(expected) - best


def counts_for(precision, recall):
    from fractions import Fraction
    from math import lcm

    p = Fraction(precision).limit_denominator(1000)
    r = Fraction(recall).limit_denominator(1000)
    tp = lcm(p.numerator, r.numerator)
    return tp, tp * p.denominator // p.numerator - tp, tp * r.denominator // r.numerator - tp


def test_acceptance_08_eval_oracle_and_comparison():
    from querylens.domain import FacetTag, UnderstandingResult

    class Scripted:
        def __init__(self, results):
            self.results = results

        def understand(self, query, profile=None):
            return self.results[query.text]

    rng = random.Random(2718)
    values = ["alpha", "beta", "gamma"]
    datasets_checked = 0
    for trial in range(12):
        n_examples = rng.randint(1, 20)
        dataset, results = [], {}
        oracle_totals = Counter()
        for i in range(n_examples):
            expected = [
                FacetTag(facet=Facet.TITLE, value=rng.choice(values))
                for _ in range(rng.randint(0, 3))
            ]
            predicted = [
                FacetTag(facet=Facet.TITLE, value=rng.choice(values))
                for _ in range(rng.randint(0, 3))
            ]
            text = f"q{trial}-{i}"
            dataset.append(
                LabeledExample(
                    query=Query(text=text),
                    profile=None,
                    expected_route=IntentRoute.CRITERIA_SEARCH,
                    expected_tags=tuple(expected),
                )
            )
            results[text] = UnderstandingResult(
                route=IntentRoute.CRITERIA_SEARCH, tags=tuple(predicted)
            )
            tp, fp, fn = brute_force_counts(predicted, expected)
            oracle_totals.update(tp=tp, fp=fp, fn=fn)
        assert len(dataset) <= 20
        report = evaluate(dataset, Scripted(results))
        row = report.row("title_tool")
        got = (row.tp, row.fp, row.fn) if row else (0, 0, 0)
        assert got == (oracle_totals["tp"], oracle_totals["fp"], oracle_totals["fn"])
        datasets_checked += 1

    legacy = report_from_counts({"location_tool": counts_for(0.934, 0.894)})
    current = report_from_counts({"location_tool": counts_for(0.954, 0.981)})
    delta = compare(legacy, current).delta("location_tool")
    assert abs(delta.precision_delta - 0.020) < 1e-9
    assert abs(delta.recall_delta - 0.087) < 1e-9
    ok(8, f"eval counts match brute-force oracle ({datasets_checked} datasets) and deltas")


# -- 9. upsample rule ---------------------------------------------------------------


def test_acceptance_09_upsample_rule():
    def dataset(task_id, size):
        return TaskDataset(
            task_id=task_id,
            examples=tuple(SftExample(prompt=f"{task_id}{i}", target="t") for i in range(size)),
        )

    result = upsample([dataset("a", 3), dataset("b", 6)], seed=1)
    assert [len(d.examples) for d in result] == [6, 6]

    equal = [dataset("a", 4), dataset("b", 4)]
    recopied = upsample(equal, seed=1)
    assert recopied == equal
    assert json.dumps([d.task_id for d in recopied]) == json.dumps([d.task_id for d in equal])
    ok(9, "upsample to max count, all-equal untouched")


# -- 10. service floor ----------------------------------------------------------------


def test_acceptance_10_service_floor():
    pipeline = Pipeline(
        backend=MockBackend(default_mock_script()), taxonomy=default_taxonomy()
    )
    payload = {
        "query": "find me a job in Naples",
        "profile": {"location": {"city": "Oakland", "region": "CA", "country": "US"}},
    }
    duration_s = 10.0
    with TestClient(create_app(pipeline)) as client:
        for _ in range(50):  # warmup
            client.post("/v1/query/understand", json=payload)
        count = 0
        errors = 0
        started = time.perf_counter()
        while time.perf_counter() - started < duration_s:
            response = client.post("/v1/query/understand", json=payload)
            if response.status_code != 200:
                errors += 1
            count += 1
        elapsed = time.perf_counter() - started
        rate = count / elapsed

        metrics = client.get("/v1/metrics").json()["stages"]
        for stage, stats in metrics.items():
            samples = pipeline.recorder.samples(stage)
            assert stats["p95_ms"] == nearest_rank(samples, 0.95)
            assert stats["p50_ms"] == nearest_rank(samples, 0.50)
            assert stats["p99_ms"] == nearest_rank(samples, 0.99)
    pipeline.close()
    assert errors == 0
    assert rate >= 200.0, f"sustained only {rate:.0f} req/s"
    ok(10, f"service floor {rate:.0f} req/s over {elapsed:.0f}s, 0 errors, P95 exact")
