"""Exceptions raised by rrrflow"""


class RRRFlowError(Exception):
    """Base class of the package errors"""


class DimensionError(RRRFlowError, ValueError):
    """Operands of incompatible dimension"""


class EmptySetError(RRRFlowError, ValueError):
    """A finite set without points"""


class BracketError(RRRFlowError):
    """A scalar root could not be bracketed"""


class InfeasibleProjectionError(RRRFlowError, ValueError):
    """Projection onto an empty constraint set"""


class UnsupportedSetError(RRRFlowError, TypeError):
    """The operation is not defined for the kind of set"""


class NonSmoothError(RRRFlowError):
    """The field is not differentiable at the requested point"""


class NotTransversalError(RRRFlowError):
    """The sets meet tangentially"""


class NonConvergentInterfaceError(RRRFlowError, ValueError):
    """An interface whose velocities do not point toward it from both sides"""


class DistinctnessError(RRRFlowError, ValueError):
    """Pair distances are not pairwise distinct"""


class EventBudgetExceeded(RRRFlowError):
    """Event-driven integration needed more events than allowed.

    The partial trajectory up to the failure is kept in the ``trajectory`` attribute.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ConfigError(RRRFlowError, ValueError):
    """Invalid run configuration. ``diagnostics`` holds (field, message) pairs"""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])

    def __str__(self):
        if not self.diagnostics:
            return super().__str__()
        return "%s\n%s" % (super().__str__(), "\n".join("  %s: %s" % d for d in self.diagnostics))


class VerificationError(RRRFlowError):
    """A self-check failed"""
