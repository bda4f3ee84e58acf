"""Exception types shared across warpco."""


class WarpcoError(Exception):
    """Base class for all warpco errors."""


class ConfigurationError(WarpcoError, ValueError):
    pass


class ShapeError(WarpcoError, ValueError):
    pass


class InputError(WarpcoError, ValueError):
    pass


class FormatError(WarpcoError):
    """Malformed parameter, feature or map file."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class BitstreamError(WarpcoError):
    """Truncated or invalid codec bitstream."""

    def __init__(self, message: str, bit_offset: int | None = None, frame: int | None = None):
        self.bit_offset = bit_offset
        self.frame = frame
        where = []
        if frame is not None:
            where.append(f"frame {frame}")
        if bit_offset is not None:
            where.append(f"bit offset {bit_offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class TrainingError(WarpcoError):
    def __init__(self, message: str, iteration: int):
        self.iteration = iteration
        super().__init__(f"{message} at iteration {iteration}")


class ResourceError(WarpcoError):
    pass


class StateError(WarpcoError):
    pass
