"""Exception and warning types shared across the package."""


class NearPiSingularity(ValueError):
    """Log map requested for a rotation angle too close to pi."""

    def __init__(self, angle: float):
        super().__init__(f"rotation angle {float(angle)!r} rad is within 1e-6 of pi; re-anchor the pose")
        self.angle = angle


class RankDeficientWarning(UserWarning):
    """A raw 9D rotation output had a (near) zero singular value."""


class ZeroMatrix(ValueError):
    """Pseudoinverse initialisation was given an all-zero matrix."""


class Diverged(ArithmeticError):
    """The hyperpower iteration failed to converge (singular or ill-conditioned input)."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


class NonFiniteLoss(FloatingPointError):
    def __init__(self, batch_index: int, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch_index}")
        self.batch_index = batch_index
        self.epoch = epoch


class DatasetFormatError(ValueError):
    """Base class for binary dataset decoding errors; ``offset`` is a byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class BadMagic(DatasetFormatError):
    pass


class VersionMismatch(DatasetFormatError):
    pass


class TruncatedFile(DatasetFormatError):
    def __init__(self, message: str, offset: int, record_index: int | None = None):
        super().__init__(message, offset)
        self.record_index = record_index


class CheckpointError(ValueError):
    """Checkpoint file is malformed or does not match the expected shapes."""


class EmptySet(ValueError):
    """A metric was asked to average over zero samples."""
