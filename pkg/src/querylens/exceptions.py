"""Exception hierarchy shared across the package."""

from __future__ import annotations


class QueryLensError(Exception):
    """Base class for all package-specific errors."""


class BackendTimeout(QueryLensError):
    """The backend did not finish within the request's time budget."""


class BackendMalformed(QueryLensError):
    """The backend produced output the caller could not interpret."""


class TransportError(QueryLensError):
    """The backend connection failed at the transport level."""


class ProtocolError(QueryLensError):
    """The backend sent a wire chunk that violates the streaming protocol."""


class UnknownToolError(QueryLensError):
    """A tool call named a tool absent from the registry."""

    def __init__(self, tool_name: str):
        super().__init__(f"unknown tool: {tool_name!r}")
        self.tool_name = tool_name


class TaxonomyError(QueryLensError):
    """The taxonomy config violates its structural invariants."""


class DatasetFormatError(QueryLensError):
    """A dataset file contains a malformed record."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class NoSamplesError(QueryLensError):
    """A percentile was requested from an empty recorder."""


class BudgetExhausted(QueryLensError):
    """The request budget ran out with no degradable partial result."""
