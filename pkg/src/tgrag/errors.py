"""Exception hierarchy shared across the engine.

Each class carries an ``exit_code`` so the CLI can map failures onto its
documented status codes without inspecting messages.
"""

from __future__ import annotations


class TGRAGError(Exception):
    """Base class for all engine errors."""

    exit_code = 1


class ConfigError(TGRAGError, ValueError):
    """Invalid configuration or command-line input."""

    exit_code = 2


class CorpusError(TGRAGError):
    """The corpus directory violates the layout convention."""

    exit_code = 2


class StateError(TGRAGError):
    """The working directory is missing a build artifact."""

    exit_code = 3


class DataError(TGRAGError):
    """A data file (dataset, graph, index) is malformed."""

    exit_code = 4


class GraphLoadError(DataError):
    """A persisted graph is corrupt or has an unsupported schema version."""


class IndexLoadError(DataError):
    """A persisted vector index is corrupt."""


class ProviderError(TGRAGError):
    """A model service failed. ``request_id`` identifies the failing call."""

    exit_code = 5

    def __init__(self, message: str, request_id: str | None = None):
        super().__init__(message)
        self.request_id = request_id


class TransportError(ProviderError):
    """Transport failure that persisted after all retries."""


class EmptyResponseError(ProviderError):
    """The model returned an empty completion."""


class ProtocolError(ProviderError):
    """The remote service answered with an unexpected payload."""


class UnscriptedPromptError(ProviderError):
    """A strict mock provider received a prompt no pattern matches."""


class StageError(TGRAGError):
    """Wraps a failure with the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: BaseException, context: str | None = None):
        where = f"{stage}" + (f" [{context}]" if context else "")
        super().__init__(f"{where}: {cause}")
        self.stage = stage
        self.cause = cause
        self.context = context
        self.exit_code = getattr(cause, "exit_code", 1)


class DecompositionError(TGRAGError):
    """Query decomposition produced no usable sub-queries."""

    exit_code = 5

    def __init__(self, message: str, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output


class TimeResolutionError(TGRAGError, ValueError):
    """A time string could not be interpreted."""

    def __init__(self, time_string: str):
        super().__init__(f"cannot resolve time string {time_string!r}")
        self.time_string = time_string


class ExtractionError(TGRAGError):
    """An LLM response could not be parsed into the requested structure."""

    exit_code = 5

    def __init__(self, message: str, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output


class JudgeError(TGRAGError):
    """The judge model's output carried no parseable score."""

    exit_code = 5

    def __init__(self, message: str, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output
