"""Exception types shared across the toolkit."""


class PocmillError(Exception):
    """Base class for every error raised by this package."""


class CorpusError(PocmillError):
    """Corpus storage problem: bad layout, broken index, or invalid record."""


class UnknownAdapter(CorpusError):
    """No source adapter is registered under the requested id."""


class MalformedPayload(CorpusError):
    """A source payload could not be parsed into a bug report.

    The corpus keeps the offending payload in its quarantine area so the
    collection run can be audited later.
    """


class StageTransitionError(CorpusError):
    """A record update tried to move the pipeline stage backwards."""


class CorpusLockTimeout(CorpusError):
    """Another writer holds the corpus lock."""


class ClientFailure(PocmillError):
    """The text-generation client failed or returned nothing usable."""


class TokenBudgetExceeded(PocmillError):
    """A prompt cannot be made to fit the configured token budget."""


class UnparseableRepair(ClientFailure):
    """A repair response did not follow the tagged envelope after a retry."""


class HarnessError(PocmillError):
    """Base class for execution harness failures."""


class ProvisioningFailure(HarnessError):
    """A backend could not be provisioned."""


class HealthCheckFailed(HarnessError):
    """A backend failed its health probe."""


class BackendUnhealthy(HarnessError):
    """An operation was attempted on a backend that is not healthy."""


class LifecycleViolation(HarnessError):
    """A lifecycle action was applied in a state that does not allow it."""


class ExecutorUnavailable(PocmillError):
    """No healthy executor could be leased for an adaptation run."""


class EmptySelection(PocmillError):
    """A campaign filter matched no corpus records."""


class ConfigError(PocmillError):
    """The pipeline configuration is missing, malformed, or inconsistent."""


class StageFailure(PocmillError):
    """A pipeline stage failed outright."""
