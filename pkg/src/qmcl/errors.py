"""Exception hierarchy. Every error raised on purpose by the package derives
from :class:`QMCLError` so the CLI can report it on a single line."""


class QMCLError(Exception):
    """Base class for all package errors."""


class IntegrationError(QMCLError):
    """A trajectory left the finite reals."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class BandwidthTuningError(QMCLError):
    pass


class EigensolverError(QMCLError):
    pass


class StateError(QMCLError):
    """A quantum state violates its invariants."""


class TransferAnnihilationError(StateError):
    pass


class EffectAnnihilationError(StateError):
    """Conditioning produced a zero state, typically because the resolved
    variables left the support of the training data."""


class ContainerError(QMCLError):
    pass


class ConfigError(QMCLError):
    pass
