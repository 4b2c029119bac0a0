"""Exception hierarchy shared across the package."""


class LedgerLearnError(Exception):
    """Base class for every domain error raised by ledgerlearn."""


# ledger
class EmptyEntries(LedgerLearnError, ValueError):
    pass


class NonceExhausted(LedgerLearnError):
    pass


class InvalidBlock(LedgerLearnError):
    pass


# metrics
class LengthMismatch(LedgerLearnError, ValueError):
    pass


class EmptyInput(LedgerLearnError, ValueError):
    pass


class UndefinedMetric(LedgerLearnError, ArithmeticError):
    def __init__(self, name):
        super().__init__(f"metric {name!r} is undefined (zero denominator)")
        self.name = name


# sampling
class SingleClass(LedgerLearnError, ValueError):
    pass


class TooFewMinority(LedgerLearnError, ValueError):
    pass


class InvalidFraction(LedgerLearnError, ValueError):
    pass


# learner
class ArityMismatch(LedgerLearnError, ValueError):
    pass


class EmptyBatch(LedgerLearnError, ValueError):
    pass


class IncompleteMetrics(LedgerLearnError, ValueError):
    pass


class CorruptModelFile(LedgerLearnError):
    pass


class SchemaMismatch(LedgerLearnError):
    pass


# contracts
class NotAuthorized(LedgerLearnError, PermissionError):
    pass


class DuplicateName(LedgerLearnError, ValueError):
    pass


class ZeroImprovement(LedgerLearnError, ArithmeticError):
    pass


class GateNotPassed(LedgerLearnError):
    pass


# ingest
class MissingColumn(LedgerLearnError, ValueError):
    def __init__(self, name):
        super().__init__(f"missing column {name!r}")
        self.name = name


class MalformedRow(LedgerLearnError, ValueError):
    def __init__(self, line_no, detail=""):
        super().__init__(f"malformed row at line {line_no}" + (f": {detail}" if detail else ""))
        self.line_no = line_no


class AllRowsRejected(LedgerLearnError, ValueError):
    pass


class NoEligibleRows(LedgerLearnError, ValueError):
    pass


class InvalidParams(LedgerLearnError, ValueError):
    pass


# simnet
class ModelRegistryMiss(LedgerLearnError, LookupError):
    pass
