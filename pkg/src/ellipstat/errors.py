"""Exception and warning types shared across the package."""


class EllipstatError(Exception):
    """Base class for statistical and numerical failures."""

    code = "error"


class InvalidInput(EllipstatError, ValueError):
    code = "invalid_input"


class DegenerateObservation(EllipstatError):
    code = "degenerate_observation"


class DegenerateScale(EllipstatError):
    code = "degenerate_scale"


class DegenerateConfiguration(EllipstatError):
    code = "degenerate_configuration"


class DegenerateWeights(EllipstatError):
    code = "degenerate_weights"


class InsufficientSamples(EllipstatError):
    code = "insufficient_samples"


class SampleTooLarge(EllipstatError):
    code = "sample_too_large"


class SingularBlock(EllipstatError):
    code = "singular_block"


class SingularShape(EllipstatError):
    code = "singular_shape"


class SingularBand(EllipstatError):
    code = "singular_band"


class Infeasible(EllipstatError):
    code = "infeasible"


class NonConvergence(RuntimeWarning):
    """Iteration budget exhausted; the best iterate is returned with a flag."""


class DegenerateGap(RuntimeWarning):
    pass


class DegenerateDirection(RuntimeWarning):
    pass


class IllConditionedBlocks(RuntimeWarning):
    pass


class EigenFloorActive(RuntimeWarning):
    pass
