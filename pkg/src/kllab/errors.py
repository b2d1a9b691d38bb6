"""Exception hierarchy. Every error carries the name of the module that raised it."""


class KLError(Exception):
    """Base class; ``module`` tags the subsystem for CLI reporting."""

    module = "kllab"


# geometry
class InvalidSlits(KLError, ValueError):
    module = "slit_geometry"


class NonpositiveHeight(InvalidSlits):
    def __init__(self, j):
        self.j = j
        super().__init__(f"NonpositiveHeight({j}): slit {j} has height <= 0")


class EmptySlit(InvalidSlits):
    def __init__(self, j):
        self.j = j
        super().__init__(f"EmptySlit({j}): slit {j} has x >= xr")


class OverlapAtEqualHeight(InvalidSlits):
    def __init__(self, j, k):
        self.j, self.k = j, k
        super().__init__(f"OverlapAtEqualHeight({j},{k}): slits {j} and {k} overlap at equal height")


# kernel
class KernelError(KLError):
    module = "bmd_kernel"


class IllConditioned(KernelError):
    pass


class PointTooClose(KernelError):
    pass


class EvalOnSingularity(KernelError):
    pass


class LatticeTooCoarse(KernelError):
    pass


# ODE
class StepUnderflow(KLError):
    module = "slit_ode"


class NotExploded(KLError):
    module = "slit_ode"


# chain
class BackwardBlowup(KLError):
    module = "kl_chain"


class ProbeTooClose(KLError):
    module = "kl_chain"


# transform
class CircleCollision(KLError):
    module = "transform"


class IncrementMismatch(KLError):
    module = "transform"


# harness
class ConfigInvalid(KLError, ValueError):
    module = "cli_harness"


class UnknownSuite(KLError, KeyError):
    module = "cli_harness"

    def __str__(self):
        return Exception.__str__(self)
