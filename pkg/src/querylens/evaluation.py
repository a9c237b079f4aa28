"""Per-tool precision/recall over labeled datasets, plus report comparison.

Matching rule (stated in every report header): a predicted tag is a true
positive iff its facet and normalized payload both equal an expected tag's
within the same example. No partial credit. Undefined metrics (zero
denominator) render as n/a, never 0 or 1, so comparisons are not silently
distorted.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol, Sequence

from .domain import Facet, FacetTag, GeoValue, IntentRoute, MemberProfile, Query, UnderstandingResult
from .exceptions import DatasetFormatError
from .tools import ToolRegistry, default_registry

MATCHING_RULE = "exact: facet and normalized payload equal within the same example"

PLANNER_ROW = "query_planner"


@dataclass(frozen=True)
class LabeledExample:
    query: Query
    profile: MemberProfile | None
    expected_route: IntentRoute
    expected_tags: tuple[FacetTag, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "expected_tags", tuple(self.expected_tags))


def normalized_payload(tag: FacetTag) -> Any:
    """Payload form used for equality: ids for resolved facets, casefolded
    text for free-text facets, raw values otherwise."""
    if isinstance(tag.value, GeoValue):
        return tag.value.place_id
    if tag.facet in (Facet.TITLE, Facet.COMPANY):
        return tag.value.strip().casefold()
    return tag.value


def match_key(tag: FacetTag) -> tuple[str, Any]:
    return (tag.facet.value, normalized_payload(tag))


@dataclass(frozen=True)
class ToolRow:
    tool: str
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float | None:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp > 0 else None

    @property
    def recall(self) -> float | None:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn > 0 else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "tool": self.tool,
            "true_positives": self.tp,
            "false_positives": self.fp,
            "false_negatives": self.fn,
            "precision": self.precision,
            "recall": self.recall,
        }


@dataclass(frozen=True)
class RouteRow:
    route: str
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"route": self.route, "tp": self.tp, "fp": self.fp, "fn": self.fn}


@dataclass(frozen=True)
class MetricReport:
    tool_rows: tuple[ToolRow, ...]
    route_rows: tuple[RouteRow, ...] = ()
    examples: int = 0
    matching: str = MATCHING_RULE

    def __post_init__(self):
        object.__setattr__(self, "tool_rows", tuple(sorted(self.tool_rows, key=lambda r: r.tool)))
        object.__setattr__(self, "route_rows", tuple(self.route_rows))

    def row(self, tool: str) -> ToolRow | None:
        return next((r for r in self.tool_rows if r.tool == tool), None)

    @property
    def route_micro_accuracy(self) -> float | None:
        # Single-label routing: micro precision == micro recall == accuracy.
        tp = sum(r.tp for r in self.route_rows)
        total = tp + sum(r.fn for r in self.route_rows)
        return tp / total if total else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "matching": self.matching,
            "examples": self.examples,
            "tools": [r.to_dict() for r in self.tool_rows],
            "planner": {
                "routes": [r.to_dict() for r in self.route_rows],
                "micro_accuracy": self.route_micro_accuracy,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MetricReport":
        return cls(
            tool_rows=tuple(
                ToolRow(
                    tool=r["tool"],
                    tp=r["true_positives"],
                    fp=r["false_positives"],
                    fn=r["false_negatives"],
                )
                for r in data.get("tools", ())
            ),
            route_rows=tuple(
                RouteRow(route=r["route"], tp=r["tp"], fp=r["fp"], fn=r["fn"])
                for r in data.get("planner", {}).get("routes", ())
            ),
            examples=data.get("examples", 0),
            matching=data.get("matching", MATCHING_RULE),
        )

    def render_table(self) -> str:
        """Aligned text table, one row per tool plus the planner."""
        lines = [f"matching rule: {self.matching}", ""]
        header = f"{'tool':<22} {'TP':>5} {'FP':>5} {'FN':>5} {'precision':>10} {'recall':>10}"
        lines.append(header)
        lines.append("-" * len(header))
        for row in self.tool_rows:
            lines.append(
                f"{row.tool:<22} {row.tp:>5} {row.fp:>5} {row.fn:>5} "
                f"{_fmt(row.precision):>10} {_fmt(row.recall):>10}"
            )
        if self.route_rows:
            acc = _fmt(self.route_micro_accuracy)
            lines.append(f"{PLANNER_ROW:<22} micro accuracy over routes: {acc}")
            for row in self.route_rows:
                lines.append(f"  route {row.route:<22} TP={row.tp} FP={row.fp} FN={row.fn}")
        return "\n".join(lines)


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.3f}"


class UnderstandingPipeline(Protocol):
    def understand(
        self, query: Query, profile: MemberProfile | None = None
    ) -> UnderstandingResult: ...


def evaluate(
    dataset: Sequence[LabeledExample],
    pipeline: UnderstandingPipeline,
    registry: ToolRegistry | None = None,
) -> MetricReport:
    """Run the pipeline over the dataset and aggregate per-tool counts.

    Aggregation is a commutative sum of per-example counts, so dataset order
    never changes the report and examples may be evaluated concurrently.
    """
    registry = registry or default_registry()
    tool_counts: dict[str, Counter] = {}
    route_counts: dict[str, Counter] = {}

    for example in dataset:
        result = pipeline.understand(example.query, example.profile)
        _merge_example(
            tool_counts,
            predicted=result.tags,
            expected=example.expected_tags,
            registry=registry,
        )
        counts = route_counts.setdefault(example.expected_route.value, Counter())
        predicted_route = result.route.value
        if predicted_route == example.expected_route.value:
            counts["tp"] += 1
        else:
            counts["fn"] += 1
            route_counts.setdefault(predicted_route, Counter())["fp"] += 1

    tool_rows = tuple(
        ToolRow(tool=tool, tp=c["tp"], fp=c["fp"], fn=c["fn"]) for tool, c in tool_counts.items()
    )
    route_rows = tuple(
        RouteRow(route=route, tp=c["tp"], fp=c["fp"], fn=c["fn"])
        for route, c in sorted(route_counts.items())
    )
    return MetricReport(tool_rows=tool_rows, route_rows=route_rows, examples=len(dataset))


def _merge_example(
    tool_counts: dict[str, Counter],
    predicted: Iterable[FacetTag],
    expected: Iterable[FacetTag],
    registry: ToolRegistry,
) -> None:
    """Exact matching degenerates to multiset intersection per tool."""
    predicted_keys = Counter(match_key(t) for t in predicted)
    expected_keys = Counter(match_key(t) for t in expected)
    facets = {facet for facet, _ in predicted_keys} | {facet for facet, _ in expected_keys}
    for facet in facets:
        tool = registry.tool_for_facet(Facet(facet))
        pred = Counter({k: v for k, v in predicted_keys.items() if k[0] == facet})
        exp = Counter({k: v for k, v in expected_keys.items() if k[0] == facet})
        tp = sum((pred & exp).values())
        counts = tool_counts.setdefault(tool, Counter())
        counts["tp"] += tp
        counts["fp"] += sum(pred.values()) - tp
        counts["fn"] += sum(exp.values()) - tp


@dataclass(frozen=True)
class ToolDelta:
    tool: str
    precision_delta: float | None
    recall_delta: float | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "tool": self.tool,
            "precision_delta": self.precision_delta,
            "recall_delta": self.recall_delta,
        }


@dataclass(frozen=True)
class ComparisonReport:
    """Signed per-tool metric deltas, report B minus report A."""

    deltas: tuple[ToolDelta, ...]
    only_in_a: tuple[str, ...] = ()
    only_in_b: tuple[str, ...] = ()

    def delta(self, tool: str) -> ToolDelta | None:
        return next((d for d in self.deltas if d.tool == tool), None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "deltas": [d.to_dict() for d in self.deltas],
            "only_in_a": list(self.only_in_a),
            "only_in_b": list(self.only_in_b),
        }


def compare(report_a: MetricReport, report_b: MetricReport) -> ComparisonReport:
    """Per-tool (B - A) deltas over the shared tool set; the rest is flagged."""
    tools_a = {r.tool for r in report_a.tool_rows}
    tools_b = {r.tool for r in report_b.tool_rows}
    deltas = []
    for tool in sorted(tools_a & tools_b):
        a = report_a.row(tool)
        b = report_b.row(tool)
        deltas.append(
            ToolDelta(
                tool=tool,
                precision_delta=_delta(a.precision, b.precision),
                recall_delta=_delta(a.recall, b.recall),
            )
        )
    return ComparisonReport(
        deltas=tuple(deltas),
        only_in_a=tuple(sorted(tools_a - tools_b)),
        only_in_b=tuple(sorted(tools_b - tools_a)),
    )


def _delta(a: float | None, b: float | None) -> float | None:
    return b - a if a is not None and b is not None else None


def report_from_counts(rows: Mapping[str, tuple[int, int, int]]) -> MetricReport:
    """Build a report straight from (tp, fp, fn) counts per tool."""
    return MetricReport(
        tool_rows=tuple(ToolRow(tool=t, tp=tp, fp=fp, fn=fn) for t, (tp, fp, fn) in rows.items())
    )


def load_labeled_examples(path: str | Path) -> list[LabeledExample]:
    """Read line-delimited labeled records; malformed lines report their number."""
    examples: list[LabeledExample] = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                expected = record["expected"]
                profile = record.get("profile")
                examples.append(
                    LabeledExample(
                        query=Query.from_dict(record["query"]),
                        profile=MemberProfile.from_dict(profile) if profile else None,
                        expected_route=IntentRoute(expected["route"]),
                        expected_tags=tuple(
                            FacetTag.from_dict(t) for t in expected.get("tags", ())
                        ),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(line_number, str(exc)) from exc
    return examples
