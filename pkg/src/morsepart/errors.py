"""Exception types shared across the package."""


class MorseError(Exception):
    """Base class for package errors."""


class DomainError(MorseError, ValueError):
    """Function evaluated outside its domain (e.g. a kernel derivative at 0)."""


class PreconditionError(MorseError, ValueError):
    """An input violates a documented precondition (ordering, ties, mass...)."""


class IntegrationError(MorseError, RuntimeError):
    """The time integrator could not make progress.

    ``state`` holds the last accepted :class:`~morsepart.dynamics.ParticleState`.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ConfigError(MorseError, ValueError):
    """Invalid run configuration."""
