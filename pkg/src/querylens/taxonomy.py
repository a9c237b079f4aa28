"""Closed, versioned vocabularies for facet values, loaded from config.

The taxonomy is externalized because facet vocabularies evolve faster than
code. It is loaded once at startup, validated, and shared read-only across
request handlers. File format is documented in docs/schema.md.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .domain import MemberProfile
from .exceptions import TaxonomyError


@dataclass(frozen=True)
class IndustryEntry:
    industry_id: str
    display: str
    related: tuple[str, ...] = ()
    aliases: tuple[str, ...] = ()


@dataclass(frozen=True)
class SeniorityEntry:
    seniority_id: str
    display: str
    aliases: tuple[str, ...] = ()


@dataclass(frozen=True)
class PlaceEntry:
    place_id: str
    city: str
    country: str
    region: str | None = None
    aliases: tuple[str, ...] = ()
    display: str | None = None

    def display_name(self) -> str:
        if self.display:
            return self.display
        second = self.region or self.country
        return f"{self.city}, {second}" if second else self.city


class TaxonomyConfig:
    """In-memory taxonomy with alias indexes.

    Iteration order of industries and places follows the config file, and
    "taxonomy order" throughout the package means exactly that order.
    Instances are read-only after construction.
    """

    def __init__(
        self,
        industries: list[IndustryEntry],
        seniorities: list[SeniorityEntry],
        places: list[PlaceEntry],
    ):
        self._industries: dict[str, IndustryEntry] = {}
        for entry in industries:
            if entry.industry_id in self._industries:
                raise TaxonomyError(f"duplicate industry id {entry.industry_id!r}")
            self._industries[entry.industry_id] = entry
        for entry in industries:
            for rel in entry.related:
                if rel not in self._industries:
                    raise TaxonomyError(
                        f"industry {entry.industry_id!r} relates to unknown id {rel!r}"
                    )

        self._seniorities: list[SeniorityEntry] = list(seniorities)
        seen = set()
        for entry in self._seniorities:
            if entry.seniority_id in seen:
                raise TaxonomyError(f"duplicate seniority id {entry.seniority_id!r}")
            seen.add(entry.seniority_id)

        self._places: dict[str, PlaceEntry] = {}
        self._place_aliases: dict[str, list[str]] = {}
        for entry in places:
            if entry.place_id in self._places:
                raise TaxonomyError(f"duplicate place id {entry.place_id!r}")
            if not entry.aliases:
                raise TaxonomyError(f"place {entry.place_id!r} has no aliases")
            self._places[entry.place_id] = entry
            for alias in entry.aliases:
                self._place_aliases.setdefault(alias.casefold(), []).append(entry.place_id)

        self._industry_lookup: dict[str, str] = {}
        for entry in self._industries.values():
            keys = (entry.industry_id, entry.display, *entry.aliases)
            for key in keys:
                self._industry_lookup.setdefault(key.casefold(), entry.industry_id)

        self._seniority_lookup: dict[str, str] = {}
        for entry in self._seniorities:
            keys = (entry.seniority_id, entry.display, *entry.aliases)
            for key in keys:
                self._seniority_lookup.setdefault(key.casefold(), entry.seniority_id)

    @property
    def industries(self) -> Mapping[str, IndustryEntry]:
        return self._industries

    @property
    def seniorities(self) -> list[SeniorityEntry]:
        return list(self._seniorities)

    @property
    def places(self) -> Mapping[str, PlaceEntry]:
        return self._places

    def find_places(self, alias: str) -> list[PlaceEntry]:
        """All places matching an alias, in taxonomy order. Ambiguity is legal."""
        ids = self._place_aliases.get(alias.strip().casefold(), [])
        order = {pid: i for i, pid in enumerate(self._places)}
        return [self._places[pid] for pid in sorted(ids, key=order.__getitem__)]

    def find_industry(self, text: str) -> IndustryEntry | None:
        iid = self._industry_lookup.get(text.strip().casefold())
        return self._industries[iid] if iid else None

    def find_seniority(self, text: str) -> SeniorityEntry | None:
        sid = self._seniority_lookup.get(text.strip().casefold())
        if sid is None:
            return None
        return next(e for e in self._seniorities if e.seniority_id == sid)

    def related_industries(self, industry_id: str) -> tuple[str, ...]:
        entry = self._industries.get(industry_id)
        return entry.related if entry else ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "industries": {
                e.industry_id: {
                    "display": e.display,
                    "related": list(e.related),
                    "aliases": list(e.aliases),
                }
                for e in self._industries.values()
            },
            "seniorities": [
                {"id": e.seniority_id, "display": e.display, "aliases": list(e.aliases)}
                for e in self._seniorities
            ],
            "places": {
                e.place_id: {
                    "city": e.city,
                    "region": e.region,
                    "country": e.country,
                    "display": e.display,
                    "aliases": list(e.aliases),
                }
                for e in self._places.values()
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TaxonomyConfig":
        try:
            industries = [
                IndustryEntry(
                    industry_id=iid,
                    display=entry["display"],
                    related=tuple(entry.get("related", ())),
                    aliases=tuple(entry.get("aliases", ())),
                )
                for iid, entry in data.get("industries", {}).items()
            ]
            seniorities = [
                SeniorityEntry(
                    seniority_id=entry["id"],
                    display=entry["display"],
                    aliases=tuple(entry.get("aliases", ())),
                )
                for entry in data.get("seniorities", ())
            ]
            places = [
                PlaceEntry(
                    place_id=pid,
                    city=entry["city"],
                    region=entry.get("region"),
                    country=entry["country"],
                    aliases=tuple(entry.get("aliases", ())),
                    display=entry.get("display"),
                )
                for pid, entry in data.get("places", {}).items()
            ]
        except (KeyError, TypeError, AttributeError) as exc:
            raise TaxonomyError(f"malformed taxonomy config: {exc}") from exc
        return cls(industries=industries, seniorities=seniorities, places=places)

    @classmethod
    def load(cls, path: str | Path) -> "TaxonomyConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise TaxonomyError(f"taxonomy file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def default_taxonomy() -> TaxonomyConfig:
    """The sample taxonomy shipped with the package."""
    from importlib import resources

    raw = resources.files("querylens.data").joinpath("taxonomy.default.json").read_text("utf-8")
    return TaxonomyConfig.from_dict(json.loads(raw))


def validate_profile(profile: MemberProfile, taxonomy: TaxonomyConfig) -> list[str]:
    """Boundary check: every profile industry id must exist in the taxonomy."""
    return [iid for iid in profile.industries if iid not in taxonomy.industries]
