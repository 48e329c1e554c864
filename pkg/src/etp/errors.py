"""Exception types raised by the solver stack."""


class EtpError(Exception):
    """Base class for all package errors."""


class ProfileError(EtpError, ValueError):
    """Invalid profile configuration. ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class QuadratureFailure(EtpError):
    pass


class OutOfRange(EtpError, ValueError):
    pass


class StiffnessFailure(EtpError):
    """Step size underflow or step budget exhausted in the ODE integrator."""


class NearPole(EtpError):
    pass


class BoundaryZero(EtpError):
    """A zero sits on (or numerically at) a contour edge."""


class NoConvergence(EtpError):
    pass
