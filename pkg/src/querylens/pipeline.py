"""End-to-end query understanding: plan, rewrite, tag, suggest.

The default topology is one combined backend call per request: the response
carries the route decision, rewrite slots, and facet tool calls together,
and facet tools start executing while the model is still streaming. A
two-call topology (separate planning and tagging calls, tagging the
rewritten text) is available for ablation.

Backend failures degrade rather than error: malformed output and transport
problems always fall back to a flagged CriteriaSearch pass-through, and
timeouts do too unless degrade_on_timeout is disabled, in which case they
surface as BudgetExhausted for the service to map to a 504.
"""

from __future__ import annotations

import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass

from . import prompts
from .domain import (
    DenialCategory,
    DenialNotice,
    IntentRoute,
    MemberProfile,
    Query,
    ToolCall,
    UnderstandingResult,
    validate_result,
)
from .exceptions import (
    BackendMalformed,
    BackendTimeout,
    BudgetExhausted,
    ProtocolError,
    TransportError,
)
from .gateway import LlmBackend, run_and_parse
from .metrics import LatencyRecorder
from .planner import Action, PlanDecision, decide, resolve_route, route_of
from .rewriter import rewrite, slots_from_arguments
from .streaming import ParseError, StreamParser, TextDelta, ToolCallComplete
from .suggester import suggest
from .taxonomy import TaxonomyConfig, validate_profile
from .tools import (
    RunOne,
    ToolRegistry,
    ToolResult,
    default_registry,
    execute,
    execute_all,
    run_guarded,
)

COMBINED = "combined"
TWO_CALL = "two_call"

_DEGRADE_REASONS = {
    BackendTimeout: "backend_timeout",
    BackendMalformed: "backend_malformed",
    TransportError: "transport_error",
    ProtocolError: "protocol_error",
}


@dataclass(frozen=True)
class PipelineConfig:
    timeout_ms: int = 600
    model: str = ""
    call_topology: str = COMBINED
    degrade_on_timeout: bool = True
    suggestion_top_k: int = 5
    max_in_flight: int = 8

    def __post_init__(self):
        if self.call_topology not in (COMBINED, TWO_CALL):
            raise ValueError(f"call_topology must be {COMBINED} or {TWO_CALL}")


class Pipeline:
    """Shared, thread-safe orchestrator: one instance serves many requests."""

    def __init__(
        self,
        backend: LlmBackend,
        taxonomy: TaxonomyConfig,
        registry: ToolRegistry | None = None,
        config: PipelineConfig | None = None,
        recorder: LatencyRecorder | None = None,
        run_tool: RunOne | None = None,
    ):
        self.backend = backend
        self.taxonomy = taxonomy
        self.registry = registry or default_registry()
        self.config = config or PipelineConfig()
        self.recorder = recorder or LatencyRecorder()
        self._run_tool = run_tool
        self._pool = ThreadPoolExecutor(max_workers=self.config.max_in_flight)

    def close(self) -> None:
        self._pool.shutdown(wait=False)

    def understand(
        self, query: Query | str, profile: MemberProfile | None = None, locale: str | None = None
    ) -> UnderstandingResult:
        """Interpret one query into a validated UnderstandingResult.

        Raises ValueError on invalid input (the service boundary's 400) and
        BudgetExhausted when a timeout cannot degrade (its 504). Backend
        misbehavior otherwise degrades into a flagged pass-through result.
        """
        if isinstance(query, str):
            query = Query(text=query, locale=locale)
        if profile is not None:
            missing = validate_profile(profile, self.taxonomy)
            if missing:
                raise ValueError(f"profile industries not in taxonomy: {missing}")

        started = time.perf_counter()
        try:
            if self.config.call_topology == COMBINED:
                result = self._run_combined(query, profile, started)
            else:
                result = self._run_two_call(query, profile, started)
        except tuple(_DEGRADE_REASONS) as exc:
            if isinstance(exc, BackendTimeout) and not self.config.degrade_on_timeout:
                raise BudgetExhausted(str(exc)) from exc
            result = self._degraded(exc, started)

        violations = validate_result(result)
        if violations:  # assembly bug, not input error
            raise AssertionError(f"assembled result violates invariants: {violations}")
        for stage, duration in result.timings.items():
            self.recorder.record(stage, duration)
        return result

    # -- combined topology --------------------------------------------------

    def _run_combined(
        self, query: Query, profile: MemberProfile | None, started: float
    ) -> UnderstandingResult:
        request = prompts.combined_request(
            query, profile, model=self.config.model, timeout_ms=self.config.timeout_ms
        )
        parser = StreamParser()
        route_signals: list[IntentRoute] = []
        denial_category: DenialCategory | None = None
        rewrite_args: dict | None = None
        pending: list[ToolCall] = []
        futures: list[Future] = []
        prose: list[str] = []
        run_tool = self._tool_runner(query, profile)

        def on_event(event) -> None:
            nonlocal rewrite_args, denial_category
            if isinstance(event, ParseError):
                raise BackendMalformed(
                    f"backend output failed parsing at byte {event.position}: {event.description}"
                )
            if isinstance(event, TextDelta):
                prose.append(event.text)
                return
            assert isinstance(event, ToolCallComplete)
            call = event.call
            if call.tool_name == prompts.ROUTE_TOOL:
                route_signals.append(route_of(call))
                if route_signals[-1] is IntentRoute.TRUST_VIOLATION:
                    denial_category = _denial_category(call)
            elif call.tool_name == prompts.REWRITE_TOOL:
                rewrite_args = dict(call.arguments)
            else:
                pending.append(call)
            # Facet calls wait for the route: a trust signal must reach us
            # before any tool starts, so denial means zero executions.
            if route_signals and IntentRoute.TRUST_VIOLATION not in route_signals:
                while pending:
                    futures.append(self._pool.submit(run_guarded, run_tool, pending.pop(0)))

        for chunk in self.backend.complete_stream(request):
            for event in parser.feed(chunk.delta.encode("utf-8")):
                on_event(event)
        for event in parser.finish():
            on_event(event)

        if not route_signals:
            raise BackendMalformed("backend response contains no route_query call")
        route = resolve_route(route_signals)
        plan_ms = _elapsed_ms(started)

        if route is IntentRoute.TRUST_VIOLATION:
            return UnderstandingResult(
                route=IntentRoute.TRUST_VIOLATION,
                denial=DenialNotice(category=denial_category or DenialCategory.OTHER_HARMFUL),
                timings={"plan_ms": plan_ms, "total_ms": _elapsed_ms(started)},
            )

        rewritten_query = None
        metadata: dict[str, str] = {}
        rewrite_ms = 0.0
        if route is IntentRoute.SELF_REFERENCE_SEARCH:
            rewrite_started = time.perf_counter()
            slots = slots_from_arguments(rewrite_args) if rewrite_args else []
            route, rewritten_query, metadata = self._apply_rewrite(query, slots, profile)
            rewrite_ms = _elapsed_ms(rewrite_started)

        tag_started = time.perf_counter()
        results = sorted((f.result() for f in futures), key=lambda r: r.call_index)
        tags = tuple(r.tag for r in results if r.tag is not None)
        tag_ms = _elapsed_ms(tag_started)

        suggest_started = time.perf_counter()
        suggestions = suggest(
            query, tags, profile, self.taxonomy, top_k=self.config.suggestion_top_k
        )
        suggest_ms = _elapsed_ms(suggest_started)

        return UnderstandingResult(
            route=route,
            tags=tags,
            rewritten_query=rewritten_query,
            facet_suggestions=tuple(suggestions),
            timings={
                "plan_ms": plan_ms,
                "rewrite_ms": rewrite_ms,
                "tag_ms": tag_ms,
                "suggest_ms": suggest_ms,
                "total_ms": _elapsed_ms(started),
            },
            metadata=metadata,
        )

    # -- two-call topology ----------------------------------------------------

    def _run_two_call(
        self, query: Query, profile: MemberProfile | None, started: float
    ) -> UnderstandingResult:
        plan_request = prompts.plan_request(
            query, profile, model=self.config.model, timeout_ms=self.config.timeout_ms
        )
        parsed = run_and_parse(self.backend, plan_request)
        decision: PlanDecision = decide(parsed.calls, parsed.text)
        plan_ms = _elapsed_ms(started)

        if decision.route is IntentRoute.TRUST_VIOLATION:
            route_call = next(c for c in parsed.calls if c.tool_name == prompts.ROUTE_TOOL)
            return UnderstandingResult(
                route=IntentRoute.TRUST_VIOLATION,
                denial=DenialNotice(category=_denial_category(route_call)),
                timings={"plan_ms": plan_ms, "total_ms": _elapsed_ms(started)},
            )

        route = decision.route
        rewritten_query = None
        metadata: dict[str, str] = {}
        rewrite_ms = 0.0
        if Action.REWRITE in decision.actions:
            rewrite_started = time.perf_counter()
            rewrite_calls = [c for c in parsed.calls if c.tool_name == prompts.REWRITE_TOOL]
            slots = slots_from_arguments(rewrite_calls[0].arguments) if rewrite_calls else []
            route, rewritten_query, metadata = self._apply_rewrite(query, slots, profile)
            rewrite_ms = _elapsed_ms(rewrite_started)

        tag_started = time.perf_counter()
        tag_text = rewritten_query or query.text
        tag_request = prompts.tag_request(
            tag_text, profile, model=self.config.model, timeout_ms=self.config.timeout_ms
        )
        tagged = run_and_parse(self.backend, tag_request)
        facet_calls = [
            c
            for c in tagged.calls
            if c.tool_name not in (prompts.ROUTE_TOOL, prompts.REWRITE_TOOL)
        ]
        results = execute_all(
            facet_calls,
            profile=profile,
            taxonomy=self.taxonomy,
            registry=self.registry,
            query_text=tag_text,
            run_one=self._run_tool,
            executor=self._pool,
        )
        tags = tuple(r.tag for r in results if r.tag is not None)
        tag_ms = _elapsed_ms(tag_started)

        suggest_started = time.perf_counter()
        suggestions = suggest(
            query, tags, profile, self.taxonomy, top_k=self.config.suggestion_top_k
        )
        suggest_ms = _elapsed_ms(suggest_started)

        return UnderstandingResult(
            route=route,
            tags=tags,
            rewritten_query=rewritten_query,
            facet_suggestions=tuple(suggestions),
            timings={
                "plan_ms": plan_ms,
                "rewrite_ms": rewrite_ms,
                "tag_ms": tag_ms,
                "suggest_ms": suggest_ms,
                "total_ms": _elapsed_ms(started),
            },
            metadata=metadata,
        )

    # -- shared pieces ----------------------------------------------------------

    def _tool_runner(self, query: Query, profile: MemberProfile | None) -> RunOne:
        if self._run_tool is not None:
            return self._run_tool

        def run(call: ToolCall) -> ToolResult:
            return execute(
                call,
                profile=profile,
                taxonomy=self.taxonomy,
                registry=self.registry,
                query_text=query.text,
            )

        return run

    def _apply_rewrite(
        self, query: Query, slots: list[str], profile: MemberProfile | None
    ) -> tuple[IntentRoute, str | None, dict[str, str]]:
        """Run the rewrite, downgrading to CriteriaSearch when nothing fills."""
        if not slots:
            return IntentRoute.CRITERIA_SEARCH, None, {"downgraded": "no_self_reference_slots"}
        if profile is None:
            return IntentRoute.CRITERIA_SEARCH, None, {"downgraded": "no_profile"}
        outcome = rewrite(query, slots, profile, self.taxonomy)
        if not outcome.slots_filled:
            return IntentRoute.CRITERIA_SEARCH, None, {"downgraded": "no_profile_data_for_slots"}
        return IntentRoute.SELF_REFERENCE_SEARCH, outcome.rewritten, {}

    def _degraded(self, exc: Exception, started: float) -> UnderstandingResult:
        reason = _DEGRADE_REASONS.get(type(exc), "backend_failure")
        return UnderstandingResult(
            route=IntentRoute.CRITERIA_SEARCH,
            timings={"plan_ms": _elapsed_ms(started), "total_ms": _elapsed_ms(started)},
            metadata={"degraded": reason, "degraded_detail": str(exc)},
        )


def _denial_category(route_call: ToolCall) -> DenialCategory:
    raw = route_call.arguments.get("subcategory")
    try:
        return DenialCategory(raw)
    except ValueError:
        return DenialCategory.OTHER_HARMFUL


def _elapsed_ms(since: float) -> float:
    return (time.perf_counter() - since) * 1000.0
