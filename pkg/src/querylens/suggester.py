"""Taxonomy-constrained facet suggestions, triggered by tagged industries.

Relatedness comes from the taxonomy's explicit related-ids table, never from
free generation, so every suggested value is provably in-vocabulary. The
suggester activates only when the query itself carried an industry.
"""

from __future__ import annotations

from .domain import Facet, FacetSuggestion, FacetTag, MemberProfile, Query
from .taxonomy import TaxonomyConfig

DEFAULT_TOP_K = 5


def suggest(
    query: Query,
    tags: list[FacetTag] | tuple[FacetTag, ...],
    profile: MemberProfile | None,
    taxonomy: TaxonomyConfig,
    top_k: int = DEFAULT_TOP_K,
) -> list[FacetSuggestion]:
    """One suggestion per tagged industry, listing its related industries.

    Already-tagged industries never suggest themselves or each other;
    industries in the member's profile rank first, then relation-table
    order. The list is capped at top_k.
    """
    tagged: list[str] = []
    for tag in tags:
        if tag.facet is Facet.INDUSTRY and tag.value not in tagged:
            tagged.append(tag.value)
    if not tagged:
        return []

    tagged_set = set(tagged)
    profile_industries = set(profile.industries) if profile else set()
    suggestions: list[FacetSuggestion] = []
    for industry_id in tagged:
        entry = taxonomy.industries.get(industry_id)
        if entry is None:
            continue  # tags are taxonomy-closed upstream; stay safe anyway
        related = [r for r in entry.related if r not in tagged_set]
        aligned = [r for r in related if r in profile_industries]
        rest = [r for r in related if r not in profile_industries]
        values = (aligned + rest)[:top_k]
        if not values:
            continue
        suggestions.append(
            FacetSuggestion(
                facet=Facet.INDUSTRY,
                suggested_values=tuple(values),
                trigger=f"industry '{entry.display}' mentioned in query",
            )
        )
    return suggestions
