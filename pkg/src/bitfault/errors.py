"""Exception types shared across the workbench."""


class WorkbenchError(Exception):
    """Base class for all bitfault errors."""


class ZeroOperand(WorkbenchError):
    """Leading-one detection requested for a zero operand."""


class ExhaustiveTooLarge(WorkbenchError):
    """Exhaustive operand sweep requested for a width where it is infeasible."""


class IndexOutOfRange(WorkbenchError):
    """A fault site addresses an element or bit outside its target word."""


class InvalidFaultSite(WorkbenchError):
    """A fault site is structurally valid but cannot apply to this target."""


class EmptyTensor(WorkbenchError):
    """Quantization of an empty weight tensor."""


class NonFiniteWeight(WorkbenchError):
    """Weight tensor contains NaN or infinity."""


class CodeOutOfRange(WorkbenchError):
    """Quantized code outside [0, 2^bits - 1]."""


class EmptyDataset(WorkbenchError):
    """An operation that needs data received an empty batch."""


class ShapeMismatch(WorkbenchError):
    """Tensor shapes are incompatible with the declared layer dimensions."""


class ModelLoadFailure(WorkbenchError):
    """A model manifest or weight file could not be loaded."""


class ConfigError(WorkbenchError):
    """A CLI experiment config is missing, malformed, or has bad keys."""


class DataError(WorkbenchError):
    """An input data file is missing or corrupt."""
