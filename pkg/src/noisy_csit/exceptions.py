class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DeepFadeError(DomainError):
    """All channel eigenvalues are zero, so no finite power supports the rate."""


class ClosedFormUnavailable(DomainError):
    """The channel has min(t, r) > 1; use the Monte Carlo backend instead."""


class ConfigError(ValueError):
    """Malformed experiment configuration.

    ``field`` names the offending key as a dotted path.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
