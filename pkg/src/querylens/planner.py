"""Four-way intent routing and the action plan each route implies.

Routing semantics live here; classification fidelity lives in the backend.
When a response signals several categories at once, precedence is
TrustViolation > SelfReferenceSearch > CriteriaSearch > NonJobRelated:
a query that is both self-referential and trust-violating must be denied.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .domain import IntentRoute, MemberProfile, Query, ToolCall
from .exceptions import BackendMalformed
from .gateway import LlmBackend, run_and_parse
from .prompts import ROUTE_TOOL, combined_request, plan_request


class Action(Enum):
    DENY = "deny"
    REWRITE = "rewrite"
    TAG = "tag"
    SUGGEST_FACETS = "suggest_facets"
    FORWARD_FLAGGED = "forward_flagged"


@dataclass(frozen=True)
class PlanDecision:
    route: IntentRoute
    actions: tuple[Action, ...]
    rationale: str = ""

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))


CATEGORY_ROUTES = {
    "criteria": IntentRoute.CRITERIA_SEARCH,
    "self_reference": IntentRoute.SELF_REFERENCE_SEARCH,
    "non_job": IntentRoute.NON_JOB_RELATED,
    "trust_violation": IntentRoute.TRUST_VIOLATION,
}

#: Highest precedence first.
ROUTE_PRECEDENCE = (
    IntentRoute.TRUST_VIOLATION,
    IntentRoute.SELF_REFERENCE_SEARCH,
    IntentRoute.CRITERIA_SEARCH,
    IntentRoute.NON_JOB_RELATED,
)


def route_of(call: ToolCall) -> IntentRoute:
    """Map a route_query tool call onto its IntentRoute."""
    if call.tool_name != ROUTE_TOOL:
        raise BackendMalformed(f"expected a {ROUTE_TOOL} call, got {call.tool_name!r}")
    category = call.arguments.get("category")
    route = CATEGORY_ROUTES.get(category) if isinstance(category, str) else None
    if route is None:
        raise BackendMalformed(f"unknown route category {category!r}")
    return route


def resolve_route(signals: Iterable[IntentRoute]) -> IntentRoute:
    """Pick the highest-precedence route among the signaled categories."""
    seen = set(signals)
    if not seen:
        raise BackendMalformed("backend signaled no route category")
    return next(r for r in ROUTE_PRECEDENCE if r in seen)


def actions_for(route: IntentRoute, industry_signaled: bool = False) -> tuple[Action, ...]:
    if route is IntentRoute.TRUST_VIOLATION:
        return (Action.DENY,)
    if route is IntentRoute.SELF_REFERENCE_SEARCH:
        actions = [Action.REWRITE, Action.TAG]
    elif route is IntentRoute.NON_JOB_RELATED:
        actions = [Action.FORWARD_FLAGGED, Action.TAG]
    else:
        actions = [Action.TAG]
    if industry_signaled:
        actions.append(Action.SUGGEST_FACETS)
    return tuple(actions)


def decide(calls: Sequence[ToolCall], prose: str = "") -> PlanDecision:
    """Derive the plan from an already-parsed backend response."""
    route_calls = [c for c in calls if c.tool_name == ROUTE_TOOL]
    if not route_calls:
        raise BackendMalformed("backend response contains no route_query call")
    route = resolve_route(route_of(c) for c in route_calls)
    industry_signaled = route is not IntentRoute.TRUST_VIOLATION and any(
        c.tool_name == "industry_tool" for c in calls
    )
    rationale = ""
    for call in route_calls:
        value = call.arguments.get("rationale")
        if isinstance(value, str) and value:
            rationale = value
            break
    if not rationale:
        rationale = prose.strip()
    return PlanDecision(
        route=route, actions=actions_for(route, industry_signaled), rationale=rationale
    )


def plan(
    query: Query,
    profile: MemberProfile | None,
    backend: LlmBackend,
    model: str = "",
    timeout_ms: int = 600,
    combined: bool = True,
) -> PlanDecision:
    """Issue one planning call and derive the PlanDecision.

    Timeouts and malformed output raise their typed failures; degrading to a
    CriteriaSearch pass-through is the service layer's decision, not ours.
    """
    build = combined_request if combined else plan_request
    parsed = run_and_parse(backend, build(query, profile, model=model, timeout_ms=timeout_ms))
    return decide(parsed.calls, parsed.text)
