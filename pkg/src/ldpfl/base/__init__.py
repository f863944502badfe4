from ldpfl.base.errors import (
    ConfigurationError,
    DivergenceError,
    FormatError,
    InvalidInputError,
    InvalidMechanismError,
    LDPFLError,
    ParseError,
    PartitionError,
    PreconditionError,
    RoundError,
    ShapeError,
    StageError,
)

__all__ = [
    "ConfigurationError",
    "DivergenceError",
    "FormatError",
    "InvalidInputError",
    "InvalidMechanismError",
    "LDPFLError",
    "ParseError",
    "PartitionError",
    "PreconditionError",
    "RoundError",
    "ShapeError",
    "StageError",
]
