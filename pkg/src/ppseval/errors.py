"""Exception hierarchy shared across the harness."""


class HarnessError(Exception):
    """Base class for every error raised by this package."""


class DatasetError(HarnessError):
    """Invalid dataset file, record, or split request."""


class ConfigError(HarnessError):
    """Run configuration is missing, malformed, or inconsistent."""


class GatewayError(HarnessError):
    """Base class for chat-completion client failures."""


class TransportError(GatewayError):
    """Transient failure (network, 429, 5xx). Retryable."""


class AuthenticationError(GatewayError):
    """Credentials rejected or missing. Not retryable."""


class UnscriptedCallError(GatewayError):
    """The mock backend received a call no registered script matches."""


class OutputParseError(HarnessError):
    """A model reply could not be parsed into the expected structure."""

    def __init__(self, message: str, raw_reply: str = ""):
        super().__init__(message)
        self.raw_reply = raw_reply


class ReviewError(HarnessError):
    """Verifier or meta-verifier stage failed beyond recovery."""

    def __init__(self, message: str, reports=None, raw_reply: str = ""):
        super().__init__(message)
        self.reports = reports
        self.raw_reply = raw_reply


class JudgeError(HarnessError):
    """Judging stage failed beyond recovery."""

    def __init__(self, message: str, raw_reply: str = ""):
        super().__init__(message)
        self.raw_reply = raw_reply


class AnalysisError(HarnessError):
    """Invalid input to a statistics routine."""


class DegenerateSampleError(AnalysisError):
    """Paired differences have zero variance; the t statistic is undefined."""


class AlignmentError(AnalysisError):
    """Paired sample sides differ in length or share too few problem ids."""


class StrategyError(HarnessError):
    """A strategy run failed for one problem."""

    def __init__(self, message: str, problem_id: str = ""):
        super().__init__(message)
        self.problem_id = problem_id


class SchemaVersionError(HarnessError):
    """An input file declares an unsupported schema version."""
