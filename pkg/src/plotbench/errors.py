"""Exception taxonomy shared across the package."""


class RejectedInputError(ValueError):
    """An argument is outside the operation's admissible set."""


class DegenerateInputError(ValueError):
    """Input is admissible but the operation is undefined on it (e.g. constant vectors)."""


class GenerationFailureError(RuntimeError):
    """A randomized generation procedure exhausted its attempt budget."""


class ConfigurationError(ValueError):
    """A config file, pricing table, or pool is missing or inconsistent."""


class BackendError(RuntimeError):
    """A model backend failed permanently for this request."""


class TransientBackendError(BackendError):
    """A model backend failed in a retryable way (transport errors, 5xx, throttling)."""


class ContextLengthExceededError(BackendError):
    """The prompt does not fit the backend's context window."""
