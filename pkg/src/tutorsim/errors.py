"""Exception hierarchy shared across the pipeline."""


class TutorsimError(Exception):
    """Base class for every error raised by this package."""


# prompts
class EmptyTask(TutorsimError, ValueError):
    pass


class EmptyPayload(TutorsimError, ValueError):
    pass


class WrongPayloadShape(TutorsimError, ValueError):
    pass


class UnboundPlaceholder(TutorsimError, KeyError):
    pass


# llm gateway
class BackendError(TutorsimError):
    pass


class BackendExhausted(BackendError):
    pass


class TransportError(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


# dialogue engine
class EmptyImageDescription(TutorsimError, ValueError):
    pass


# validators
class JudgeParseFailure(TutorsimError):
    """Judge output could not be turned into a typed label.

    ``span`` holds the piece of judge text that caused the failure.
    """

    def __init__(self, message: str, span: str = ""):
        super().__init__(f"{message}: {span!r}" if span else message)
        self.reason = message
        self.span = span


class NotTeacherUtterance(TutorsimError, ValueError):
    pass


# psychometrics
class PsychometricsError(TutorsimError, ValueError):
    pass


class OutOfRange(PsychometricsError):
    pass


class WrongLength(PsychometricsError):
    pass


class DegenerateVariance(PsychometricsError):
    pass


class LengthMismatch(PsychometricsError):
    pass


class ZeroVariance(PsychometricsError):
    pass


class TooFewPoints(PsychometricsError):
    pass


class EmptyInput(PsychometricsError):
    pass


class InsufficientStratum(PsychometricsError):
    pass


class CoverageMismatch(PsychometricsError):
    pass


# corpus store
class CorpusError(TutorsimError):
    pass


class SchemaMismatch(CorpusError):
    pass


class MalformedLine(CorpusError):
    def __init__(self, line_number: int, detail: str = ""):
        super().__init__(f"malformed record on line {line_number}" + (f": {detail}" if detail else ""))
        self.line_number = line_number


class EmptySeedFile(CorpusError):
    pass


# orchestration
class ConfigError(TutorsimError):
    pass
