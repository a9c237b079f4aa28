"""Shared domain types, their validation, and canonical JSON forms.

Every type here is an immutable value: instances are safe to share across
concurrent request handlers. Canonical serialization is plain JSON with the
stable field names documented in docs/schema.md (schema version 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

SCHEMA_VERSION = 1

#: Fixed user-facing message attached to every trust-violation denial.
POLICY_DENIAL_MESSAGE = (
    "This search query may violate our Professional Community Policies."
    " Edit your search to try again"
)

#: Hard cap on query length, enforced at the service boundary.
MAX_QUERY_LENGTH = 512


class IntentRoute(Enum):
    """The four-way classification every query resolves to."""

    CRITERIA_SEARCH = "criteria_search"
    SELF_REFERENCE_SEARCH = "self_reference_search"
    NON_JOB_RELATED = "non_job_related"
    TRUST_VIOLATION = "trust_violation"


class Facet(Enum):
    """Structured attribute kinds extractable from a query."""

    TITLE = "title"
    COMPANY = "company"
    GEO_LOCATION = "geo_location"
    SENIORITY = "seniority"
    INDUSTRY = "industry"
    EASY_APPLY = "easy_apply"
    DATE_POSTED_WINDOW = "date_posted_window"
    MAX_APPLICANTS = "max_applicants"
    JOB_IN_NETWORK = "job_in_network"


class DenialCategory(Enum):
    """Trust-violation subtypes."""

    OFFENSIVE = "offensive"
    VIOLENT = "violent"
    DISCRIMINATORY = "discriminatory"
    SELF_HARM = "self_harm"
    OTHER_HARMFUL = "other_harmful"


def _dedupe(items) -> tuple:
    """Order-preserving dedupe."""
    seen = set()
    out = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return tuple(out)


@dataclass(frozen=True)
class Query:
    """A raw user search query.

    The text must be non-empty after whitespace trimming and at most
    MAX_QUERY_LENGTH characters; both are rejected at construction so the
    service boundary turns them into 400-class errors.
    """

    text: str
    locale: str | None = None
    request_id: str = ""

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("query text must be non-empty after trimming")
        if len(self.text) > MAX_QUERY_LENGTH:
            raise ValueError(
                f"query text exceeds {MAX_QUERY_LENGTH} characters ({len(self.text)})"
            )

    def to_dict(self) -> dict[str, Any]:
        return {"text": self.text, "locale": self.locale, "request_id": self.request_id}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Query":
        return cls(
            text=data["text"],
            locale=data.get("locale"),
            request_id=data.get("request_id", ""),
        )


@dataclass(frozen=True)
class ProfileLocation:
    """Structured home location of a member."""

    city: str
    region: str | None = None
    country: str | None = None

    def render(self) -> str:
        """Human-readable form, e.g. "Bay Area, CA"."""
        second = self.region or self.country
        return f"{self.city}, {second}" if second else self.city

    def to_dict(self) -> dict[str, Any]:
        return {"city": self.city, "region": self.region, "country": self.country}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ProfileLocation":
        return cls(
            city=data["city"],
            region=data.get("region"),
            country=data.get("country"),
        )


@dataclass(frozen=True)
class MemberProfile:
    """Per-request contextual signals about the searcher.

    List fields are deduplicated order-preserving at construction. Titles,
    education, and industries are ordered most-recent-first by convention.
    Industry ids are validated against the loaded taxonomy at the service
    boundary (see taxonomy.validate_profile), not here.
    """

    location: ProfileLocation | None = None
    titles: tuple[str, ...] = ()
    skills: tuple[str, ...] = ()
    industries: tuple[str, ...] = ()
    education: tuple[str, ...] = ()
    years_experience: int | None = None
    network_company_ids: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("titles", "skills", "industries", "education", "network_company_ids"):
            object.__setattr__(self, name, _dedupe(getattr(self, name)))
        if self.years_experience is not None and self.years_experience < 0:
            raise ValueError("years_experience must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "location": self.location.to_dict() if self.location else None,
            "titles": list(self.titles),
            "skills": list(self.skills),
            "industries": list(self.industries),
            "education": list(self.education),
            "years_experience": self.years_experience,
            "network_company_ids": list(self.network_company_ids),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MemberProfile":
        loc = data.get("location")
        return cls(
            location=ProfileLocation.from_dict(loc) if loc else None,
            titles=tuple(data.get("titles", ())),
            skills=tuple(data.get("skills", ())),
            industries=tuple(data.get("industries", ())),
            education=tuple(data.get("education", ())),
            years_experience=data.get("years_experience"),
            network_company_ids=tuple(data.get("network_company_ids", ())),
        )


@dataclass(frozen=True)
class GeoValue:
    """Resolved place payload: a taxonomy place id plus its display string.

    Raw location text never reaches downstream filters; only resolved ids do.
    """

    place_id: str
    display: str

    def to_dict(self) -> dict[str, Any]:
        return {"place_id": self.place_id, "display": self.display}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GeoValue":
        return cls(place_id=data["place_id"], display=data["display"])


#: Expected payload type per facet. bool is checked before int because bool
#: is an int subclass.
_PAYLOAD_KINDS: dict[Facet, type] = {
    Facet.TITLE: str,
    Facet.COMPANY: str,
    Facet.GEO_LOCATION: GeoValue,
    Facet.SENIORITY: str,
    Facet.INDUSTRY: str,
    Facet.EASY_APPLY: bool,
    Facet.DATE_POSTED_WINDOW: int,
    Facet.MAX_APPLICANTS: int,
    Facet.JOB_IN_NETWORK: bool,
}


@dataclass(frozen=True)
class FacetTag:
    """One extracted facet with its typed payload.

    span, when present, is a (start, end) character range into the source
    query; bounds against the actual query text are checked by the executor
    that knows the text.
    """

    facet: Facet
    value: str | bool | int | GeoValue
    span: tuple[int, int] | None = None
    confidence: float = 1.0

    def __post_init__(self):
        kind = _PAYLOAD_KINDS[self.facet]
        if kind is int:
            if isinstance(self.value, bool) or not isinstance(self.value, int):
                raise ValueError(f"{self.facet.value} payload must be an integer")
        elif kind is bool:
            if not isinstance(self.value, bool):
                raise ValueError(f"{self.facet.value} payload must be a boolean")
        elif not isinstance(self.value, kind):
            raise ValueError(
                f"{self.facet.value} payload must be {kind.__name__}, got {type(self.value).__name__}"
            )
        if self.facet in (Facet.DATE_POSTED_WINDOW, Facet.MAX_APPLICANTS) and self.value < 1:
            raise ValueError(f"{self.facet.value} payload must be >= 1")
        if self.span is not None:
            start, end = self.span
            if start < 0 or end <= start:
                raise ValueError("span must satisfy 0 <= start < end")
            object.__setattr__(self, "span", (int(start), int(end)))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        value = self.value.to_dict() if isinstance(self.value, GeoValue) else self.value
        return {
            "facet": self.facet.value,
            "value": value,
            "span": list(self.span) if self.span else None,
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FacetTag":
        facet = Facet(data["facet"])
        raw = data["value"]
        value = GeoValue.from_dict(raw) if facet is Facet.GEO_LOCATION else raw
        span = data.get("span")
        return cls(
            facet=facet,
            value=value,
            span=tuple(span) if span else None,
            confidence=data.get("confidence", 1.0),
        )


@dataclass(frozen=True)
class ToolCall:
    """A structured invocation the model emitted.

    arguments maps argument names to JSON values; nested structure is
    preserved exactly as emitted. Treat the mapping as read-only.
    """

    tool_name: str
    arguments: Mapping[str, Any]
    call_index: int

    def __post_init__(self):
        if not self.tool_name:
            raise ValueError("tool_name must be non-empty")
        if self.call_index < 0:
            raise ValueError("call_index must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "tool_name": self.tool_name,
            "arguments": dict(self.arguments),
            "call_index": self.call_index,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ToolCall":
        return cls(
            tool_name=data["tool_name"],
            arguments=dict(data["arguments"]),
            call_index=data["call_index"],
        )


@dataclass(frozen=True)
class FacetSuggestion:
    """A taxonomy-constrained refinement offer for one facet."""

    facet: Facet
    suggested_values: tuple[str, ...]
    trigger: str

    def __post_init__(self):
        if not self.suggested_values:
            raise ValueError("suggested_values must be non-empty")
        object.__setattr__(self, "suggested_values", tuple(self.suggested_values))

    def to_dict(self) -> dict[str, Any]:
        return {
            "facet": self.facet.value,
            "suggested_values": list(self.suggested_values),
            "trigger": self.trigger,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FacetSuggestion":
        return cls(
            facet=Facet(data["facet"]),
            suggested_values=tuple(data["suggested_values"]),
            trigger=data["trigger"],
        )


@dataclass(frozen=True)
class DenialNotice:
    """The fixed policy message shown for a trust-violating query."""

    category: DenialCategory
    message: str = POLICY_DENIAL_MESSAGE

    def __post_init__(self):
        if self.message != POLICY_DENIAL_MESSAGE:
            raise ValueError("denial message must be the fixed policy string")

    def to_dict(self) -> dict[str, Any]:
        return {"category": self.category.value, "message": self.message}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DenialNotice":
        return cls(category=DenialCategory(data["category"]), message=data["message"])


@dataclass(frozen=True)
class UnderstandingResult:
    """The structured interpretation of one query, the system's primary output.

    timings holds per-stage durations in milliseconds; metadata carries
    operational flags such as degradation reasons. Neither participates in
    the cross-field invariants checked by validate_result.
    """

    route: IntentRoute
    tags: tuple[FacetTag, ...] = ()
    rewritten_query: str | None = None
    facet_suggestions: tuple[FacetSuggestion, ...] = ()
    denial: DenialNotice | None = None
    timings: Mapping[str, float] = field(default_factory=dict)
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tags", tuple(self.tags))
        object.__setattr__(self, "facet_suggestions", tuple(self.facet_suggestions))
        object.__setattr__(self, "timings", dict(self.timings))
        object.__setattr__(self, "metadata", dict(self.metadata))

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "route": self.route.value,
            "tags": [t.to_dict() for t in self.tags],
            "rewritten_query": self.rewritten_query,
            "facet_suggestions": [s.to_dict() for s in self.facet_suggestions],
            "denial": self.denial.to_dict() if self.denial else None,
            "timings": dict(self.timings),
            "metadata": dict(self.metadata),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "UnderstandingResult":
        denial = data.get("denial")
        return cls(
            route=IntentRoute(data["route"]),
            tags=tuple(FacetTag.from_dict(t) for t in data.get("tags", ())),
            rewritten_query=data.get("rewritten_query"),
            facet_suggestions=tuple(
                FacetSuggestion.from_dict(s) for s in data.get("facet_suggestions", ())
            ),
            denial=DenialNotice.from_dict(denial) if denial else None,
            timings=dict(data.get("timings", {})),
            metadata=dict(data.get("metadata", {})),
        )

    @classmethod
    def from_json(cls, raw: str) -> "UnderstandingResult":
        return cls.from_dict(json.loads(raw))


def validate_result(result: UnderstandingResult) -> list[str]:
    """Check the cross-field invariants of an UnderstandingResult.

    Returns the names of every violated invariant; an empty list means the
    result is valid. Violations are data, not faults: nothing raises.
    """
    violations = []
    is_trust = result.route is IntentRoute.TRUST_VIOLATION
    if is_trust != (result.denial is not None):
        violations.append("denial-iff-trust")
    if is_trust and (result.tags or result.rewritten_query or result.facet_suggestions):
        violations.append("trust-violation-empty-output")
    if result.rewritten_query is not None and result.route is not IntentRoute.SELF_REFERENCE_SEARCH:
        violations.append("rewrite-only-self-reference")
    return violations
