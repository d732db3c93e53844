"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures to the
documented process exit status without a lookup table.
"""


class BenchError(Exception):
    exit_code = 4


class UsageError(BenchError):
    exit_code = 2


class ConfigError(UsageError):
    pass


class DataError(BenchError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, row, col=None, detail=""):
        self.row = row
        self.col = col
        where = f"row {row}" if col is None else f"row {row}, column {col}"
        super().__init__(f"{where}: {detail}" if detail else where)


class EmptyDataset(DataError):
    pass


class SplitError(DataError):
    pass


class WindowError(DataError):
    pass


class InsufficientData(DataError):
    pass


class ShapeError(DataError):
    pass


class EmptyMask(BenchError):
    pass


class DegenerateScale(BenchError):
    pass


class InsufficientInsample(BenchError):
    pass


class SpecError(UsageError):
    pass


class SingularSystem(BenchError):
    pass


class DivergenceError(BenchError):
    def __init__(self, epoch, batch, loss):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch}, batch {batch} (loss={loss!r})")


class ReportError(BenchError):
    pass
