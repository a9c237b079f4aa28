"""Facet-extraction tools: registry, argument validation, normalization.

Executors are pure given (call, profile, taxonomy) and never fabricate a
tag: anything that fails validation or normalization becomes a Rejected
result with a reason. Rejections are recorded, not retried, so evaluation
observes raw tool behavior.
"""

from __future__ import annotations

import time
from concurrent.futures import Executor, Future, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, Union

from .domain import Facet, FacetTag, GeoValue, MemberProfile, ToolCall
from .exceptions import UnknownToolError
from .taxonomy import PlaceEntry, TaxonomyConfig

#: Optional arguments accepted by every tool alongside its declared schema.
RESERVED_ARGS = frozenset({"span", "confidence"})

DATE_POSTED_ALIASES: Mapping[str, int] = {
    "past 24 hours": 1,
    "past week": 7,
    "past month": 30,
}


@dataclass(frozen=True)
class ArgSpec:
    name: str
    kind: str  # "string" | "integer" | "boolean" | "string_or_integer"
    required: bool = True

    def accepts(self, value: Any) -> bool:
        if self.kind == "string":
            return isinstance(value, str)
        if self.kind == "integer":
            return isinstance(value, int) and not isinstance(value, bool)
        if self.kind == "boolean":
            return isinstance(value, bool)
        if self.kind == "string_or_integer":
            return isinstance(value, str) or (
                isinstance(value, int) and not isinstance(value, bool)
            )
        raise ValueError(f"unknown argument kind {self.kind!r}")


@dataclass(frozen=True)
class ToolSpec:
    name: str
    args: tuple[ArgSpec, ...]
    produces: Facet


@dataclass(frozen=True)
class TagOutcome:
    tag: FacetTag


@dataclass(frozen=True)
class RejectedOutcome:
    reason: str


@dataclass(frozen=True)
class UnknownToolOutcome:
    tool_name: str


Outcome = Union[TagOutcome, RejectedOutcome, UnknownToolOutcome]


@dataclass(frozen=True)
class ToolResult:
    call_index: int
    outcome: Outcome
    duration_ms: float

    @property
    def tag(self) -> FacetTag | None:
        return self.outcome.tag if isinstance(self.outcome, TagOutcome) else None


class ToolRegistry:
    """Name -> ToolSpec mapping, read-only after startup."""

    def __init__(self, specs: Iterable[ToolSpec] = ()):
        self._specs: dict[str, ToolSpec] = {}
        for spec in specs:
            self.register(spec)

    def register(self, spec: ToolSpec) -> None:
        if spec.name in self._specs:
            raise ValueError(f"tool {spec.name!r} already registered")
        self._specs[spec.name] = spec

    def get(self, name: str) -> ToolSpec | None:
        return self._specs.get(name)

    def specs(self) -> list[ToolSpec]:
        return list(self._specs.values())

    def names(self) -> list[str]:
        return list(self._specs)

    def tool_for_facet(self, facet: Facet) -> str:
        return next(s.name for s in self._specs.values() if s.produces is facet)


def default_registry() -> ToolRegistry:
    return ToolRegistry(
        [
            ToolSpec("location_tool", (ArgSpec("place", "string"),), Facet.GEO_LOCATION),
            ToolSpec("company_tool", (ArgSpec("company", "string"),), Facet.COMPANY),
            ToolSpec("title_tool", (ArgSpec("title", "string"),), Facet.TITLE),
            ToolSpec("seniority_tool", (ArgSpec("level", "string"),), Facet.SENIORITY),
            ToolSpec("industry_tool", (ArgSpec("industry", "string"),), Facet.INDUSTRY),
            ToolSpec("easy_apply_tool", (ArgSpec("enabled", "boolean"),), Facet.EASY_APPLY),
            ToolSpec(
                "date_posted_tool",
                (ArgSpec("window", "string_or_integer"),),
                Facet.DATE_POSTED_WINDOW,
            ),
            ToolSpec(
                "num_applicants_tool", (ArgSpec("max_applicants", "integer"),), Facet.MAX_APPLICANTS
            ),
            ToolSpec(
                "job_in_network_tool", (ArgSpec("enabled", "boolean"),), Facet.JOB_IN_NETWORK
            ),
        ]
    )


@dataclass(frozen=True)
class Resolved:
    place: PlaceEntry


@dataclass(frozen=True)
class Ambiguous:
    candidates: tuple[PlaceEntry, ...]


@dataclass(frozen=True)
class NotFound:
    raw: str


LocationResolution = Union[Resolved, Ambiguous, NotFound]


def resolve_location(
    raw: str, profile: MemberProfile | None, taxonomy: TaxonomyConfig
) -> LocationResolution:
    """Resolve free-text location against the place taxonomy.

    A single alias may legitimately name several places ("Naples"). The only
    tie-breaker is the member's profile country: a sole candidate in that
    country wins. Otherwise all candidates come back in taxonomy order.
    """
    matches = taxonomy.find_places(raw)
    if not matches:
        return NotFound(raw=raw)
    if len(matches) == 1:
        return Resolved(place=matches[0])
    country = profile.location.country if profile and profile.location else None
    if country:
        local = [p for p in matches if p.country.casefold() == country.casefold()]
        if len(local) == 1:
            return Resolved(place=local[0])
    return Ambiguous(candidates=tuple(matches))


def normalize_date_posted(arg: str | int) -> int:
    """Map a recency phrase or day count to a whole-day window.

    The phrase set is closed ("past 24 hours", "past week", "past month");
    integers >= 1 pass through, making normalization idempotent.
    """
    if isinstance(arg, bool):
        raise ValueError("date window must be a phrase or a day count")
    if isinstance(arg, int):
        if arg < 1:
            raise ValueError(f"date window must be >= 1 day, got {arg}")
        return arg
    days = DATE_POSTED_ALIASES.get(arg.strip().casefold())
    if days is None:
        raise ValueError(f"unknown date window phrase {arg!r}")
    return days


def normalize_num_applicants(arg: int) -> int:
    """An upper bound on applicant count: "at most N applicants"."""
    if isinstance(arg, bool) or not isinstance(arg, int):
        raise ValueError("applicant threshold must be an integer")
    if arg < 1:
        raise ValueError(f"applicant threshold must be >= 1, got {arg}")
    return arg


def _normalize_string(raw: str) -> str:
    # Trim only; case-folding is applied at comparison time (see evaluation).
    return raw.strip()


def _payload(
    spec: ToolSpec,
    arguments: Mapping[str, Any],
    profile: MemberProfile | None,
    taxonomy: TaxonomyConfig,
) -> Any:
    """Compute the facet payload, raising ValueError on rejection."""
    if spec.produces is Facet.GEO_LOCATION:
        resolution = resolve_location(arguments["place"], profile, taxonomy)
        if isinstance(resolution, NotFound):
            raise ValueError(f"no place matches {resolution.raw!r}")
        if isinstance(resolution, Ambiguous):
            ids = ", ".join(p.place_id for p in resolution.candidates)
            raise ValueError(f"ambiguous place {arguments['place']!r}: candidates {ids}")
        return GeoValue(
            place_id=resolution.place.place_id, display=resolution.place.display_name()
        )
    if spec.produces is Facet.COMPANY:
        return _require_nonempty(_normalize_string(arguments["company"]), "company")
    if spec.produces is Facet.TITLE:
        return _require_nonempty(_normalize_string(arguments["title"]), "title")
    if spec.produces is Facet.SENIORITY:
        entry = taxonomy.find_seniority(arguments["level"])
        if entry is None:
            raise ValueError(f"unknown seniority {arguments['level']!r}")
        return entry.seniority_id
    if spec.produces is Facet.INDUSTRY:
        entry = taxonomy.find_industry(arguments["industry"])
        if entry is None:
            raise ValueError(f"unknown industry {arguments['industry']!r}")
        return entry.industry_id
    if spec.produces is Facet.EASY_APPLY:
        return arguments["enabled"]
    if spec.produces is Facet.DATE_POSTED_WINDOW:
        return normalize_date_posted(arguments["window"])
    if spec.produces is Facet.MAX_APPLICANTS:
        return normalize_num_applicants(arguments["max_applicants"])
    if spec.produces is Facet.JOB_IN_NETWORK:
        # The boolean restriction itself; membership filtering against
        # profile.network_company_ids happens downstream of tagging.
        return arguments["enabled"]
    raise AssertionError(f"unhandled facet {spec.produces}")


def _require_nonempty(value: str, what: str) -> str:
    if not value:
        raise ValueError(f"{what} must be non-empty")
    return value


def _validate_arguments(spec: ToolSpec, arguments: Mapping[str, Any]) -> str | None:
    declared = {a.name for a in spec.args}
    for arg in spec.args:
        if arg.name not in arguments:
            if arg.required:
                return f"missing required argument {arg.name!r}"
            continue
        if not arg.accepts(arguments[arg.name]):
            return f"argument {arg.name!r} must be of type {arg.kind}"
    extras = set(arguments) - declared - RESERVED_ARGS
    if extras:
        return f"unexpected arguments {sorted(extras)}"
    return None


def _extract_span(
    arguments: Mapping[str, Any], query_text: str | None
) -> tuple[tuple[int, int] | None, str | None]:
    raw = arguments.get("span")
    if raw is None or query_text is None:
        return None, None
    if (
        not isinstance(raw, (list, tuple))
        or len(raw) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in raw)
    ):
        return None, "span must be a [start, end] pair of integers"
    start, end = raw
    if not (0 <= start < end <= len(query_text)):
        return None, f"span [{start}, {end}] outside query bounds"
    return (start, end), None


def execute(
    call: ToolCall,
    profile: MemberProfile | None,
    taxonomy: TaxonomyConfig,
    registry: ToolRegistry | None = None,
    query_text: str | None = None,
) -> ToolResult:
    """Run one tool call: validate arguments, normalize, emit a FacetTag.

    Raises UnknownToolError for unregistered names; every other failure is
    a Rejected outcome. Spans are validated only when the query text is
    supplied, and dropped otherwise.

    """
    registry = registry or _DEFAULT_REGISTRY
    spec = registry.get(call.tool_name)
    if spec is None:
        raise UnknownToolError(call.tool_name)
    started = time.perf_counter()

    def done(outcome: Outcome) -> ToolResult:
        return ToolResult(
            call_index=call.call_index,
            outcome=outcome,
            duration_ms=(time.perf_counter() - started) * 1000.0,
        )

    problem = _validate_arguments(spec, call.arguments)
    if problem:
        return done(RejectedOutcome(reason=problem))
    span, span_problem = _extract_span(call.arguments, query_text)
    if span_problem:
        return done(RejectedOutcome(reason=span_problem))
    confidence = call.arguments.get("confidence", 1.0)
    if not isinstance(confidence, (int, float)) or not 0.0 <= float(confidence) <= 1.0:
        return done(RejectedOutcome(reason="confidence must lie in [0, 1]"))
    try:
        value = _payload(spec, call.arguments, profile, taxonomy)
        tag = FacetTag(facet=spec.produces, value=value, span=span, confidence=float(confidence))
    except ValueError as exc:
        return done(RejectedOutcome(reason=str(exc)))
    return done(TagOutcome(tag=tag))


_DEFAULT_REGISTRY = default_registry()

RunOne = Callable[[ToolCall], ToolResult]


def run_guarded(run_one: RunOne, call: ToolCall) -> ToolResult:
    """Run one call, converting failures into recorded outcomes."""
    started = time.perf_counter()
    try:
        return run_one(call)
    except UnknownToolError:
        return ToolResult(
            call_index=call.call_index,
            outcome=UnknownToolOutcome(tool_name=call.tool_name),
            duration_ms=(time.perf_counter() - started) * 1000.0,
        )
    except Exception as exc:  # isolate sibling failures
        return ToolResult(
            call_index=call.call_index,
            outcome=RejectedOutcome(reason=f"tool execution failed: {exc}"),
            duration_ms=(time.perf_counter() - started) * 1000.0,
        )


def execute_all(
    calls: Iterable[ToolCall],
    profile: MemberProfile | None = None,
    taxonomy: TaxonomyConfig | None = None,
    registry: ToolRegistry | None = None,
    query_text: str | None = None,
    max_in_flight: int = 8,
    run_one: RunOne | None = None,
    executor: Executor | None = None,
) -> list[ToolResult]:
    """Execute a stream of tool calls concurrently, results in call order.

    Each call is submitted the moment the input iterable yields it, so when
    calls arrive from the streaming parser the first tools run while the
    model is still generating; total wall time tracks the slowest single
    tool, not the sum. Failures isolate: a rejection or unknown tool never
    aborts its siblings.

    run_one overrides the executor function (used by instrumented tests);
    executor supplies a shared thread pool, otherwise an ephemeral pool with
    max_in_flight workers is used.
    """
    if run_one is None:
        if taxonomy is None:
            raise ValueError("execute_all needs a taxonomy unless run_one is supplied")
        run_one = lambda call: execute(  # noqa: E731
            call, profile=profile, taxonomy=taxonomy, registry=registry, query_text=query_text
        )

    def guarded(call: ToolCall) -> ToolResult:
        return run_guarded(run_one, call)

    futures: list[Future] = []
    if executor is not None:
        for call in calls:
            futures.append(executor.submit(guarded, call))
        results = [f.result() for f in futures]
    else:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            for call in calls:
                futures.append(pool.submit(guarded, call))
            results = [f.result() for f in futures]
    return sorted(results, key=lambda r: r.call_index)
