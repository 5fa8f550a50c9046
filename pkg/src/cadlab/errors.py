"""Exception hierarchy shared by all cadlab modules."""


class CadlabError(Exception):
    """Base class for all cadlab errors."""


class ShapeError(CadlabError, ValueError):
    """Image dimensions or channel counts do not match what an operation needs."""


class ChannelError(ShapeError):
    """Wrong number of channels (e.g. grayscale passed to a color transform)."""


class SizeError(ShapeError):
    """Image or signal too small for the requested operation."""


class ParameterError(CadlabError, ValueError):
    """Invalid parameter value (non-positive multiplier, label out of range, ...)."""


class FormatError(CadlabError, ValueError):
    """Malformed container header (bad magic, truncated header, ...)."""


class DecodeError(CadlabError, ValueError):
    """Corrupt or truncated entropy-coded payload."""

    def __init__(self, message, byte_offset=None):
        if byte_offset is not None:
            message = f"{message} (at payload byte {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class InfeasibleTargetError(ParameterError):
    """A PSNR target outside the range the codec can reach on this image.

    Carries the feasible PSNR interval [low_db, high_db].
    """

    def __init__(self, target_db, low_db, high_db):
        super().__init__(
            f"target {target_db:.4f} dB outside feasible range "
            f"[{low_db:.4f}, {high_db:.4f}] dB"
        )
        self.target_db = target_db
        self.low_db = low_db
        self.high_db = high_db
