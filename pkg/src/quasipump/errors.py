"""Exception types used across the toolkit."""


class QuasipumpError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(QuasipumpError, ValueError):
    """Invalid parameters or malformed input data."""


class EigensolverError(QuasipumpError, RuntimeError):
    """Dense eigensolver failed to converge."""


class ClusterStructureError(QuasipumpError, RuntimeError):
    """Spectrum has no clear three-cluster structure."""


class ProtocolError(QuasipumpError, RuntimeError):
    """A pumping protocol precondition failed (e.g. missing edge mode)."""


class IntegrationError(QuasipumpError, RuntimeError):
    """Time integration violated its norm tolerance or failed to converge."""


class TransitionNotFoundError(QuasipumpError, RuntimeError):
    """No localization transition inside the bracketing interval."""


class CheckpointError(QuasipumpError, RuntimeError):
    """Corrupt or inconsistent sweep checkpoint file."""
