"""Exception hierarchy for panel fixed-effect estimation."""


class PanelFEError(Exception):
    """Base class for all estimation errors raised by this package."""


class DataError(PanelFEError):
    """Input data cannot be turned into a valid panel."""


class MissingColumn(DataError):
    pass


class NonBinaryOutcome(DataError):
    pass


class DuplicateIndex(DataError):
    pass


class EmptyPanel(DataError):
    pass


class ConstantCovariate(DataError):
    pass


class EmptyAfterDrop(PanelFEError):
    pass


class NotConverged(PanelFEError):
    pass


class CollinearCovariates(PanelFEError):
    pass


class SingularW(CollinearCovariates):
    pass


class LTooLarge(PanelFEError):
    pass


class VariantInputMissing(PanelFEError):
    pass


class DoubleRequiresSquarePanel(PanelFEError):
    pass


class InvalidSpec(PanelFEError):
    """Option combination that the estimator refuses (e.g. no effects at all)."""
