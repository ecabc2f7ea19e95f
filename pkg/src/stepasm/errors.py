"""Exception and warning types shared across the package."""


class StepasmError(Exception):
    """Base class for all package errors."""


class LengthMismatchError(StepasmError):
    """Two coordinate sets (or value lists) that must agree in length do not."""


class DegenerateGeometryError(StepasmError):
    """Point set too degenerate to define a rigid superposition (e.g. collinear)."""


class ShapeMismatchError(StepasmError):
    """Array shapes incompatible with the requested operation."""


class MissingDimerError(StepasmError):
    """Assembly graph references a chain pair absent from the dimer library."""


class DisconnectedTraversalError(StepasmError):
    """Internal guard: edge traversal failed to reach every node of the graph."""


class TreeTooLargeError(StepasmError):
    """Exhaustive tree enumeration requested beyond the combinatorial guard."""


class EmptySequenceError(StepasmError):
    """A chain with zero residues cannot be embedded."""


class EmptyDatasetError(StepasmError):
    """Training or evaluation invoked on an empty dataset."""


class InsufficientDataError(StepasmError):
    """Not enough instances to fill the requested support/query split."""


class NodeCollisionError(StepasmError):
    """The supposedly-undocked node already belongs to the condition graph."""


class DisconnectedLossError(StepasmError):
    """backward() called on a value with no trainable parameters upstream."""


class UntrainedPipelineError(StepasmError):
    """Inference requested before all pipeline components were provided."""


class ZeroVarianceError(StepasmError):
    """Representation matrix has no variance; similarity is undefined."""


class MalformedRecordError(StepasmError):
    """A structured input file contains an unparseable record."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyFileError(StepasmError):
    """Input file contains no usable records."""


class ConfigError(StepasmError):
    """Run configuration failed schema validation."""


class UnknownResidueWarning(UserWarning):
    """A residue code outside the 20-letter alphabet was embedded as 'unknown'."""


class ShortChainWarning(UserWarning):
    """A chain below the minimum residue count was dropped at ingest."""


class NoValidGrowthWarning(UserWarning):
    """No extension passed the retention threshold; best-scoring one kept instead."""
