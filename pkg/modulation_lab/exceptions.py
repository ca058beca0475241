class ModulationLabError(Exception):
    """Base exception class for modulation lab errors."""

    pass


class InvalidInputError(ModulationLabError):
    """Raised when invalid input is provided."""

    pass


class ConfigurationError(ModulationLabError):
    """Raised when there's a configuration problem."""

    pass


class ParameterCountMismatchError(ConfigurationError):
    """Raised when two architectures compared at a fixed budget differ in size."""

    def __init__(self, modulation_params: int, plain_params: int):
        self.modulation_params = modulation_params
        self.plain_params = plain_params
        super().__init__(
            f"Parameter counts differ: modulation={modulation_params}, "
            f"plain={plain_params}"
        )


class FileOperationError(ModulationLabError):
    """Raised when a file operation fails."""

    pass


class TailTruncationError(InvalidInputError):
    """Raised when a sampled field is not negligible on the grid boundary."""

    def __init__(self, boundary_magnitude: float, threshold: float):
        self.boundary_magnitude = boundary_magnitude
        self.threshold = threshold
        super().__init__(
            f"Boundary magnitude {boundary_magnitude:.3e} exceeds tail threshold "
            f"{threshold:.1e}"
        )


class GridTooLargeError(InvalidInputError):
    """Raised when an STFT grid would hold more values than the memory budget."""

    def __init__(self, entries: int, limit: int):
        self.entries = entries
        self.limit = limit
        super().__init__(
            f"STFT grid holds {entries:,} values, above the limit of {limit:,}; "
            "use a coarser grid_spacing"
        )


class IllConditionedInversionError(ModulationLabError):
    """Raised when the analysis/synthesis window pairing is too small to invert."""

    pass


class DomainError(ModulationLabError):
    """Raised when a special function is evaluated outside its supported range."""

    pass


class DivergentMarginalError(InvalidInputError):
    """Raised when a dictionary weight has a non-integrable marginal."""

    pass


class OutOfSupportError(ModulationLabError):
    """Raised when a point lies outside a sampled grid."""

    pass


class DegenerateSamplerError(ModulationLabError):
    """Raised when a sampler has zero total mass."""

    pass


class ArityError(InvalidInputError):
    """Raised when a derivative channel required by a norm is missing."""

    pass


class NonFiniteLossError(ModulationLabError):
    """Raised when training produces a NaN or infinite loss."""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"Non-finite loss {loss} at epoch {epoch}")


class CheckFailure(ModulationLabError):
    """Raised when a verification suite finds a defect."""

    pass
