"""Exception types shared across the package."""


class ArtcombError(Exception):
    """Base class for all package errors."""


class UnknownDrug(ArtcombError):
    def __init__(self, code: str):
        self.code = code
        super().__init__(f"unknown drug code: {code!r}")


class DuplicateDrug(ArtcombError):
    def __init__(self, code: str):
        self.code = code
        super().__init__(f"duplicate drug code: {code!r}")


class EmptyRegimen(ArtcombError):
    pass


class EmptyHistory(ArtcombError):
    pass


class NoRepresentatives(ArtcombError):
    """Nothing passed the visit-count threshold; lower it and retry."""


class DimensionMismatch(ArtcombError):
    pass


class DegenerateMatrix(ArtcombError):
    pass


class NonFiniteLikelihood(ArtcombError):
    pass


class SingularPrecision(ArtcombError):
    pass


class NonPDScale(ArtcombError):
    pass


class EmptyChain(ArtcombError):
    pass


class LabelMatchFailure(ArtcombError):
    pass


class UnknownIndividual(ArtcombError):
    def __init__(self, individual_id: str):
        self.individual_id = individual_id
        super().__init__(f"individual {individual_id!r} not in the training set and no history supplied")


class PoolTooSmall(ArtcombError):
    pass
