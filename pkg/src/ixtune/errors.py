"""Exception types shared across the package.

Every error carries the name of the subsystem that raised it so that front
ends (CLI, HTTP service) can report the origin of a failure.
"""


class AdvisorError(Exception):
    """Base class for all errors raised by this package."""

    module = "ixtune"

    def __init__(self, message: str, *, module: str | None = None):
        super().__init__(message)
        if module is not None:
            self.module = module


# --- catalog ---

class CatalogError(AdvisorError):
    module = "catalog"


class DuplicateTable(CatalogError):
    pass


class UnknownTable(CatalogError):
    pass


class UnknownColumn(CatalogError):
    pass


class UnknownColumnInJoinSelectivity(CatalogError):
    pass


class NonPositiveWidth(CatalogError):
    pass


class InvalidStatistics(CatalogError):
    pass


# --- queryparse ---

class WorkloadError(AdvisorError):
    module = "queryparse"


class WorkloadSyntaxError(WorkloadError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MultipleTableReference(WorkloadError):
    def __init__(self, table: str, statement: str):
        super().__init__(f"table {table!r} referenced more than once in statement {statement!r}")
        self.table = table
        self.statement = statement


class UnsupportedFeature(WorkloadError):
    pass


# --- whatif ---

class WhatIfError(AdvisorError):
    module = "whatif"


class CandidateTableMismatch(WhatIfError):
    pass


class TableMismatch(WhatIfError):
    pass


# --- inum ---

class InumError(AdvisorError):
    module = "inum"


class UnknownTemplate(InumError):
    pass


class ForeignCandidate(InumError):
    pass


# --- candgen ---

class CandidateError(AdvisorError):
    module = "candgen"


class InvalidDbaCandidate(CandidateError):
    pass


# --- bipmodel ---

class BipError(AdvisorError):
    module = "bipmodel"


class MissingTemplateCache(BipError):
    pass


class MissingUpdateCost(BipError):
    pass


class DslSyntaxError(BipError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownAttribute(BipError):
    pass


class NonLinearConstruct(BipError):
    pass


class WeightOutOfRange(BipError):
    pass


class EmptyScopeWarning(UserWarning):
    """A constraint compiled against an empty candidate scope."""


# --- solver ---

class SolverError(AdvisorError):
    module = "solver"


class InfeasibleProblem(SolverError):
    """The hard constraints admit no index configuration.

    ``report`` lists the origin tags of a greedily-minimal subset of
    user constraints whose removal restores feasibility.
    """

    def __init__(self, message: str, report: list[str] | None = None):
        super().__init__(message)
        self.report = list(report or [])


class StaleState(SolverError):
    pass


# --- bruteforce ---

class OracleError(AdvisorError):
    module = "bruteforce"


class TooManyCandidates(OracleError):
    pass


# --- pareto ---

class NoSoftConstraints(AdvisorError):
    module = "pareto"


# --- advisor sessions ---

class SessionError(AdvisorError):
    module = "advisor"


class SessionBusy(SessionError):
    pass


class UnknownCandidate(SessionError):
    pass
