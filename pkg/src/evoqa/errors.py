"""Exception hierarchy for the pipeline.

Callers that need to map failures onto process exit codes treat
:class:`ConfigError` and :class:`CorpusError` as input-validation failures
and everything else as runtime failures.
"""


class EvoqaError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EvoqaError):
    """Invalid configuration, template, or CLI input."""


class CorpusError(EvoqaError):
    """Malformed or inconsistent corpus / eval-set file."""


class BackendError(EvoqaError):
    """Base class for LLM backend failures."""


class TransportError(BackendError):
    """Request could not be completed after all retry attempts."""

    def __init__(self, message: str, *, attempts: int, last_status: int | None = None):
        super().__init__(message)
        self.attempts = attempts
        self.last_status = last_status


class RequestRejectedError(BackendError):
    """Backend answered with a non-retryable HTTP 4xx status."""

    def __init__(self, message: str, *, status: int, body: str = ""):
        super().__init__(message)
        self.status = status
        self.body = body


class EmptyCompletionError(BackendError):
    """Backend returned an empty completion; callers may regenerate."""


class CapabilityError(BackendError):
    """Backend does not support a required feature (e.g. echoed logprobs)."""


class TokenAlignmentError(BackendError):
    """Continuation boundary could not be located in the echoed tokens."""


class GenerationError(EvoqaError):
    """Instruction-data generation failed beyond the allowed fraction."""


class ScoringError(EvoqaError):
    """Difficulty scoring failed for a sample or a dataset."""


class DegenerateScoreError(ScoringError):
    """Direct answer score is (numerically) zero; the ratio is undefined."""


class SelectionError(EvoqaError):
    """History retrieval could not be performed."""


class TrainerError(EvoqaError):
    """Trainer adapter process failed or broke its contract."""


class ManifestError(EvoqaError):
    """Run manifest is missing, inconsistent, or tampered with."""


class DigestMismatchError(ManifestError):
    """A recorded artifact digest no longer matches the file on disk."""


class LockError(ManifestError):
    """Another process holds the run-directory lock."""
