"""Self-reference rewriting: substitute profile data into the query text.

A self-referential query ("jobs near my location") cannot be matched without
the searcher's own data. The backend names which profile slots the query
refers to; the rewriter anchors each slot to the phrase that refers to it
and splices in a rendered profile value. Substitution never touches text
outside the anchored spans, so a query with no fillable slots comes back
byte-for-byte unchanged.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .domain import MemberProfile, Query
from .exceptions import BackendMalformed
from .gateway import LlmBackend, run_and_parse
from .prompts import REWRITE_TOOL, rewrite_request
from .taxonomy import TaxonomyConfig

SLOT_NAMES = ("location", "title", "skills", "industry", "education", "experience")

#: Anchor phrases in match priority order: multi-slot and longer phrases
#: first so "my experience level" wins over "my experience".
ANCHOR_PHRASES: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("my qualifications", ("title", "skills", "experience")),
    ("my background", ("title", "skills", "education")),
    ("my profile", ("title", "skills", "location")),
    ("my experience level", ("experience",)),
    ("my experience", ("experience",)),
    ("my current role", ("title",)),
    ("my current title", ("title",)),
    ("my role", ("title",)),
    ("my title", ("title",)),
    ("my profession", ("title",)),
    ("my skills", ("skills",)),
    ("my industry", ("industry",)),
    ("my field", ("industry",)),
    ("my education", ("education",)),
    ("my degree", ("education",)),
    ("my location", ("location",)),
    ("my area", ("location",)),
    ("my city", ("location",)),
    ("near me", ("location",)),
)


@dataclass(frozen=True)
class SlotFill:
    slot: str
    profile_field: str
    substituted: str


@dataclass(frozen=True)
class RewriteOutcome:
    """Result of one rewrite: every detected slot lands in exactly one of
    slots_filled or unfilled."""

    rewritten: str
    slots_filled: tuple[SlotFill, ...] = ()
    unfilled: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "slots_filled", tuple(self.slots_filled))
        object.__setattr__(self, "unfilled", tuple(self.unfilled))


def detect_slots(
    query: Query,
    backend: LlmBackend,
    profile: MemberProfile | None = None,
    model: str = "",
    timeout_ms: int = 600,
) -> list[str]:
    """Ask the backend which profile slots the query implicitly references.

    An empty list is legal: the self-reference route was a false positive
    and the caller downgrades to a plain criteria search. A response without
    any rewrite call counts as empty too.
    """
    parsed = run_and_parse(
        backend, rewrite_request(query, profile, model=model, timeout_ms=timeout_ms)
    )
    calls = [c for c in parsed.calls if c.tool_name == REWRITE_TOOL]
    if not calls:
        return []
    return slots_from_arguments(calls[0].arguments)


def slots_from_arguments(arguments) -> list[str]:
    """Validate the slots argument of a rewrite call."""
    slots = arguments.get("slots")
    if not isinstance(slots, list) or not all(isinstance(s, str) for s in slots):
        raise BackendMalformed(f"rewrite slots must be a list of names, got {slots!r}")
    unknown = [s for s in slots if s not in SLOT_NAMES]
    if unknown:
        raise BackendMalformed(f"unknown rewrite slots {unknown}")
    out: list[str] = []
    for slot in slots:
        if slot not in out:
            out.append(slot)
    return out


def _has_data(slot: str, profile: MemberProfile) -> bool:
    if slot == "location":
        return profile.location is not None
    if slot == "title":
        return bool(profile.titles)
    if slot == "skills":
        return bool(profile.skills)
    if slot == "industry":
        return bool(profile.industries)
    if slot == "education":
        return bool(profile.education)
    return profile.years_experience is not None


def _render(slot: str, profile: MemberProfile, taxonomy: TaxonomyConfig | None) -> tuple[str, str]:
    """Rendered substitution text plus the profile field it came from."""
    if slot == "location":
        return profile.location.render(), "location"
    if slot == "title":
        return profile.titles[0], "titles"
    if slot == "skills":
        return ", ".join(profile.skills[:3]), "skills"
    if slot == "industry":
        iid = profile.industries[0]
        entry = taxonomy.industries.get(iid) if taxonomy else None
        return (entry.display if entry else iid), "industries"
    if slot == "education":
        return profile.education[0], "education"
    return f"{profile.years_experience}+ years experience", "years_experience"


def rewrite(
    query: Query,
    slots: list[str],
    profile: MemberProfile,
    taxonomy: TaxonomyConfig | None = None,
) -> RewriteOutcome:
    """Substitute detected slots with rendered profile values.

    Anchors claim disjoint spans in first-match order; a phrase like "my
    qualifications" fills several slots jointly, rendered comma-joined in
    slot order. Slots without profile data, and slots whose phrase does not
    occur in the text, stay unfilled with their text verbatim.
    """
    unknown = [s for s in slots if s not in SLOT_NAMES]
    if unknown:
        raise ValueError(f"unknown slots {unknown}")
    detected: list[str] = []
    for slot in slots:
        if slot not in detected:
            detected.append(slot)

    text = query.text
    taken: list[tuple[int, int]] = []
    claimed: set[str] = set()
    replacements: list[tuple[int, int, str]] = []
    filled: list[SlotFill] = []
    unfilled: list[str] = []

    for phrase, anchor_slots in ANCHOR_PHRASES:
        wanted = [s for s in detected if s in anchor_slots and s not in claimed]
        if not wanted:
            continue
        span = _find_anchor(text, phrase, taken)
        if span is None:
            continue
        claimed.update(wanted)
        parts: list[SlotFill] = []
        for slot in wanted:
            if _has_data(slot, profile):
                rendered, field = _render(slot, profile, taxonomy)
                parts.append(SlotFill(slot=slot, profile_field=field, substituted=rendered))
            else:
                unfilled.append(slot)
        if parts:
            taken.append(span)
            replacements.append((span[0], span[1], ", ".join(p.substituted for p in parts)))
            filled.extend(parts)
        # No data for any slot of this anchor: leave the phrase verbatim.

    unfilled.extend(s for s in detected if s not in claimed)

    rewritten = text
    for start, end, replacement in sorted(replacements, reverse=True):
        rewritten = rewritten[:start] + replacement + rewritten[end:]
    return RewriteOutcome(
        rewritten=rewritten, slots_filled=tuple(filled), unfilled=tuple(unfilled)
    )


def _find_anchor(text: str, phrase: str, taken: list[tuple[int, int]]) -> tuple[int, int] | None:
    """First occurrence of phrase not overlapping an already-claimed span."""
    pattern = re.compile(rf"\b{re.escape(phrase)}\b", re.IGNORECASE)
    for match in pattern.finditer(text):
        span = match.span()
        if all(span[1] <= s or span[0] >= e for s, e in taken):
            return span
    return None
