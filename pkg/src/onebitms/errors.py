"""Exception and warning types shared across the package."""


class DimensionError(ValueError):
    """Operands have incompatible shapes or dimensions."""


class DegenerateInputError(ValueError):
    """An input is degenerate for the requested operation (e.g. a zero vector)."""


class EmptyInputError(ValueError):
    """A nonempty collection was required."""


class DomainError(ValueError):
    """A scalar parameter lies outside its admissible domain."""


class FormatError(ValueError):
    """A binary file does not conform to its declared format.

    Carries the byte offset at which parsing failed.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(ValueError):
    """An experiment configuration is invalid.

    Carries the list of offending field names.
    """

    def __init__(self, message, fields=()):
        fields = list(fields)
        if fields:
            message = f"{message}: {', '.join(fields)}"
        super().__init__(message)
        self.fields = fields


class InfeasibleCellError(ValueError):
    """The clipped affine piece of a cell does not meet the radius-2 ball.

    Carries the distance from the origin to the affine piece.
    """

    def __init__(self, foot_norm):
        super().__init__(
            f"affine piece at distance {foot_norm:.6g} from the origin exceeds "
            "the radius-2 ball; the feasible set is empty"
        )
        self.foot_norm = foot_norm


class InfeasibleError(ValueError):
    """The radius-R disk constraint excludes the whole affine piece.

    Carries the distance from the origin to the affine piece.
    """

    def __init__(self, foot_norm, radius):
        super().__init__(
            f"no point of the affine piece lies within radius {radius:.6g} "
            f"(origin distance {foot_norm:.6g})"
        )
        self.foot_norm = foot_norm
        self.radius = radius


class ScaleTruncatedWarning(UserWarning):
    """The requested finest scale exceeded what the sample supports."""


class DegenerateCellWarning(UserWarning):
    """A cell had too few points for a full-rank local fit; basis was padded."""
