class LDPFLError(Exception):
    pass


class InvalidInputError(LDPFLError, ValueError):
    pass


class PreconditionError(InvalidInputError):
    pass


class InvalidMechanismError(InvalidInputError):
    pass


class ConfigurationError(LDPFLError, ValueError):
    pass


class ShapeError(LDPFLError, ValueError):
    pass


class PartitionError(LDPFLError):
    pass


class FormatError(LDPFLError):
    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ParseError(LDPFLError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        location = ":".join(str(part) for part in (path, line) if part is not None)
        super().__init__(f"{location}: {message}" if location else message)
        self.path = path
        self.line = line


class DivergenceError(LDPFLError, ArithmeticError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"loss diverged to {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class RoundError(LDPFLError):
    def __init__(self, client_id: int, round_index: int, cause: Exception):
        super().__init__(f"client {client_id} failed in round {round_index}: {cause}")
        self.client_id = client_id
        self.round_index = round_index
        self.cause = cause
        # filled in by run_simulation so callers keep the rounds that completed
        self.history: list = []


class StageError(LDPFLError):
    def __init__(self, client_id: int, stage: str, cause: Exception):
        super().__init__(f"client {client_id} failed at stage '{stage}': {cause}")
        self.client_id = client_id
        self.stage = stage
        self.cause = cause
