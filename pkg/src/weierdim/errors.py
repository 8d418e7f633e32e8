"""Exception types shared across the package."""


class WeierdimError(Exception):
    """Base class for all package errors."""


class InvalidLatticeError(WeierdimError, ValueError):
    pass


class InvalidArgumentError(WeierdimError, ValueError):
    pass


class NearPoleError(WeierdimError, ArithmeticError):
    """Raised when a point is too close to a lattice point for direct evaluation."""

    def __init__(self, z, pole, distance):
        self.z = z
        self.pole = pole
        self.distance = distance
        super().__init__(f"point {z} lies within {float(distance):.3g} of the pole {pole}")


class WrongRegimeError(WeierdimError, ValueError):
    """Laurent factors requested outside every pole neighbourhood."""


class ConstantsNotFoundError(WeierdimError):
    pass


class IllConditionedError(WeierdimError, ArithmeticError):
    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class ConstructionInfeasibleError(WeierdimError):
    pass


class RootNotFoundError(WeierdimError):
    pass


class InvalidSpecError(WeierdimError, ValueError):
    pass


class InvalidConstantsError(WeierdimError, ValueError):
    pass
