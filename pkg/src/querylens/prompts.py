"""Prompt construction for each backend call.

Templates ship as versioned text files under templates/. They are
illustrative defaults; production deployments tune their own. The one hard
convention other code relies on: the user message carries the raw query text
and nothing else, so scripted mocks can match on it exactly.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from .domain import MemberProfile, Query
from .gateway import ChatMessage, ChatRequest

ROUTE_TOOL = "route_query"
REWRITE_TOOL = "rewrite_query"


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return resources.files("querylens.templates").joinpath(f"{name}.txt").read_text("utf-8")


def _system(name: str, profile: MemberProfile | None) -> str:
    profile_json = json.dumps(profile.to_dict(), ensure_ascii=False) if profile else "{}"
    return _template(name).format(profile_json=profile_json)


def build_request(
    template: str,
    query: Query | str,
    profile: MemberProfile | None,
    model: str = "",
    timeout_ms: int = 600,
) -> ChatRequest:
    text = query.text if isinstance(query, Query) else query
    return ChatRequest(
        messages=(
            ChatMessage(role="system", content=_system(template, profile)),
            ChatMessage(role="user", content=text),
        ),
        model=model,
        stream=True,
        timeout_ms=timeout_ms,
    )


def combined_request(query, profile=None, model="", timeout_ms=600) -> ChatRequest:
    """Single-call mode: route, rewrite slots, and facet tags in one response."""
    return build_request("combined", query, profile, model, timeout_ms)


def plan_request(query, profile=None, model="", timeout_ms=600) -> ChatRequest:
    return build_request("plan", query, profile, model, timeout_ms)


def tag_request(query, profile=None, model="", timeout_ms=600) -> ChatRequest:
    return build_request("tag", query, profile, model, timeout_ms)


def rewrite_request(query, profile=None, model="", timeout_ms=600) -> ChatRequest:
    return build_request("rewrite", query, profile, model, timeout_ms)
