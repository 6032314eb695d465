"""Exception hierarchy shared by all deconopt modules."""


class DeconoptError(Exception):
    """Base class for all package-specific errors."""


# -- graph construction -------------------------------------------------------

class EmptyGraph(DeconoptError):
    pass


class SelfLoop(DeconoptError):
    pass


class DuplicateEdge(DeconoptError):
    pass


class Disconnected(DeconoptError):
    pass


class DimensionMismatch(DeconoptError):
    pass


# -- dense linear algebra ------------------------------------------------------

class NonFinite(DeconoptError):
    pass


class AllZero(DeconoptError):
    pass


class IndefiniteInput(DeconoptError):
    pass


class NotPositiveDefinite(DeconoptError):
    pass


class Inconsistent(DeconoptError):
    pass


# -- objectives and subproblems ------------------------------------------------

class NoUniqueMinimizer(DeconoptError):
    pass


class NewtonStall(DeconoptError):
    pass


class NotStronglyConvex(DeconoptError):
    pass


# -- solvers ---------------------------------------------------------------------

class GammaTooSmall(DeconoptError):
    """Majorization matrix fails to dominate the incidence Gram matrix."""


class OmegaOutOfRange(DeconoptError):
    pass


class ConditionViolation(DeconoptError):
    """A mixing-matrix condition required by the general iterates fails."""


# -- analysis ----------------------------------------------------------------------

class GammaOutOfRange(DeconoptError):
    pass


class EtaOutOfRange(DeconoptError):
    pass


class CertificateUnavailable(DeconoptError):
    pass


class ContractionViolated(DeconoptError):
    def __init__(self, k, ratio, bound):
        super().__init__(
            f"contraction violated at round {k}: ratio {ratio:.6e} exceeds bound {bound:.6e}"
        )
        self.k = k
        self.ratio = ratio
        self.bound = bound


# -- cli -----------------------------------------------------------------------------

class ConfigError(DeconoptError):
    pass
