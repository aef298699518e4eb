"""Exception types shared across the package."""


class MatleafError(Exception):
    pass


class DomainError(MatleafError, ValueError):
    """A point lies outside the body."""


class NotComposableError(MatleafError, ValueError):
    pass


class SingularJetError(MatleafError, ValueError):
    pass


class NonFiniteDerivative(MatleafError, ArithmeticError):
    pass


class RankUnstable(MatleafError):
    """Kernel dimension changed when the deformation sample was doubled."""

    def __init__(self, point, dims):
        self.point = point
        self.dims = dims
        super().__init__(f"kernel dimension unstable at {point}: {dims}")


class AnsatzTooSmall(UserWarning):
    pass


class StepOutsideBody(MatleafError):
    """Too many consecutive rejected flow steps."""


class AssignmentConflict(UserWarning):
    pass


class ConfigError(MatleafError, ValueError):
    pass


class FiberCollapse(UserWarning):
    """Base fibre is zero at the seed; the leaf is a single point."""
