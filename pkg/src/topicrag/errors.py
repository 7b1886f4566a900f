"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class TransportError(EngineError):
    """Network failure that persisted after all retries."""


class ProtocolError(EngineError):
    """Endpoint response did not match the expected wire format."""


class AuthError(EngineError):
    """Endpoint rejected the credentials (HTTP 401/403). Never retried."""


class DimensionMismatch(EngineError):
    """A vector's dimension disagrees with the configured dimension."""


class InsufficientData(EngineError):
    """Fewer documents than requested clusters."""


class UnknownTopic(EngineError):
    """Topic id outside the fitted model's range."""


class EmptyInput(EngineError):
    """An operation that needs at least one element got none."""


class FormatVersionMismatch(EngineError):
    """Persisted artifact has an unsupported version or corrupt layout."""


class ManifestMismatch(EngineError):
    """Store manifest conflicts with the supplied configuration."""


class CorpusFormatError(EngineError):
    """A corpus or dataset file does not parse as expected."""


class UnknownFormat(EngineError):
    """Dataset format name not recognized."""


class TemplateError(EngineError):
    """Prompt template is missing a required placeholder."""


class GraderParseError(EngineError):
    """Grader response stayed unparseable after all re-asks."""


class EmptyRewrite(EngineError):
    """Query rewriter returned blank output after a retry."""


class JudgeParseError(EngineError):
    """Judge response stayed unparseable after a retry."""


class ScoreOutOfRange(EngineError):
    """Judge returned a score outside the 0-10 scale."""


class DegenerateInput(EngineError):
    """Statistic undefined for this input (e.g. zero within-group variance)."""


class PipelineError(EngineError):
    """Failure inside a pipeline run; carries the partial trace."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state
