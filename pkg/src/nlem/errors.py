class UsageError(ValueError):
    """Invalid arguments: bad dimensions, out-of-range parameters."""


class NumericalError(ArithmeticError):
    """A solver produced a non-finite value.

    ``iteration`` is 1-based; ``pixel`` is ``(row, col)`` when the failure
    happened inside an image-wide denoising run.
    """

    def __init__(self, message, iteration=None, pixel=None):
        self.iteration = iteration
        self.pixel = pixel
        parts = [message]
        if iteration is not None:
            parts.append(f"at iteration {iteration}")
        if pixel is not None:
            parts.append(f"at pixel (row={pixel[0]}, col={pixel[1]})")
        super().__init__(" ".join(parts))


class PgmError(ValueError):
    """Malformed PGM data; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")
