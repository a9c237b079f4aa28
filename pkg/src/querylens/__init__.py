"""querylens: query understanding for job-search-style relevance systems."""

from .domain import (
    POLICY_DENIAL_MESSAGE,
    DenialCategory,
    DenialNotice,
    Facet,
    FacetSuggestion,
    FacetTag,
    GeoValue,
    IntentRoute,
    MemberProfile,
    ProfileLocation,
    Query,
    ToolCall,
    UnderstandingResult,
    validate_result,
)
from .gateway import (
    ChatChunk,
    ChatMessage,
    ChatRequest,
    LiveBackend,
    MockBackend,
    MockRule,
    MockScript,
)
from .pipeline import Pipeline, PipelineConfig
from .planner import Action, PlanDecision, plan
from .rewriter import RewriteOutcome, detect_slots, rewrite
from .streaming import (
    ParseError,
    StreamParser,
    TextDelta,
    ToolCallComplete,
    normalize_events,
    parse_complete,
)
from .suggester import suggest
from .taxonomy import TaxonomyConfig, default_taxonomy
from .tools import ToolRegistry, default_registry, execute, execute_all, resolve_location

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ChatChunk",
    "ChatMessage",
    "ChatRequest",
    "DenialCategory",
    "DenialNotice",
    "Facet",
    "FacetSuggestion",
    "FacetTag",
    "GeoValue",
    "IntentRoute",
    "LiveBackend",
    "MemberProfile",
    "MockBackend",
    "MockRule",
    "MockScript",
    "ParseError",
    "Pipeline",
    "PipelineConfig",
    "PlanDecision",
    "POLICY_DENIAL_MESSAGE",
    "ProfileLocation",
    "Query",
    "RewriteOutcome",
    "StreamParser",
    "TaxonomyConfig",
    "TextDelta",
    "ToolCall",
    "ToolCallComplete",
    "ToolRegistry",
    "UnderstandingResult",
    "default_registry",
    "default_taxonomy",
    "detect_slots",
    "execute",
    "execute_all",
    "normalize_events",
    "parse_complete",
    "plan",
    "resolve_location",
    "rewrite",
    "suggest",
    "validate_result",
]
