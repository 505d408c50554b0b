"""Exception types shared across the package."""


class CoarseflowError(Exception):
    """Base class for all package errors."""


# --- molecular graph / SMILES ---

class UnsupportedToken(CoarseflowError):
    """SMILES token outside the kekulized subset grammar."""


class UnmatchedRingClosure(CoarseflowError):
    pass


class UnmatchedParenthesis(CoarseflowError):
    pass


class UnknownElement(CoarseflowError):
    pass


class DisconnectedGraph(CoarseflowError):
    pass


class TooManyAtoms(CoarseflowError):
    pass


class EmptyGraph(CoarseflowError):
    pass


class EmptyBatch(CoarseflowError):
    pass


class InvalidMolecule(CoarseflowError):
    pass


# --- numerics ---

class ShapeMismatch(CoarseflowError):
    pass


class NonScalarOutput(CoarseflowError):
    pass


class SingularJacobian(CoarseflowError):
    pass


class NonFinite(CoarseflowError):
    """A layer produced NaN/Inf values."""


# --- flow layers ---

class ZeroScale(CoarseflowError):
    pass


class ZeroStd(CoarseflowError):
    pass


class OddSpatialDim(CoarseflowError):
    pass


class OddSplitAxis(CoarseflowError):
    pass


class IndivisibleN(CoarseflowError):
    pass


# --- training / persistence ---

class BadNoiseScale(CoarseflowError):
    pass


class VersionMismatch(CoarseflowError):
    pass


class CorruptBlob(CoarseflowError):
    pass


# --- fingerprints ---

class WidthMismatch(CoarseflowError):
    pass
