"""Exception hierarchy shared by every pipeline stage."""


class LotmatchError(Exception):
    """Base class for all errors raised by lotmatch."""


# ingest
class MissingColumn(LotmatchError):
    pass


class MalformedRow(LotmatchError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvariantViolation(LotmatchError):
    def __init__(self, row_id: str, message: str):
        super().__init__(f"{row_id}: {message}")
        self.row_id = row_id


# geometry
class LatOutOfRange(LotmatchError):
    pass


class DuplicatePoint(LotmatchError):
    pass


# features
class NoBlockGroups(LotmatchError):
    pass


# propensity
class SingleClass(LotmatchError):
    pass


class DegenerateDesign(LotmatchError):
    pass


class AllColumnsDegenerate(DegenerateDesign):
    pass


class MissingCovariate(LotmatchError):
    pass


# matching
class NoControls(LotmatchError):
    pass


class EmptyGroup(LotmatchError):
    pass


# estimation
class AnchorMismatch(LotmatchError):
    pass


class TooFewPairs(LotmatchError):
    pass


class TooFewLots(LotmatchError):
    pass


class EmptySubset(LotmatchError):
    pass


class MissingCovariates(LotmatchError):
    pass


# synthetic data
class InvalidConfig(LotmatchError):
    pass


class Separation(LotmatchError):
    pass


# command line
class ConfigError(LotmatchError):
    pass


class MissingInput(LotmatchError):
    def __init__(self, stage: str, path=None):
        msg = f"missing input from stage '{stage}'"
        if path is not None:
            msg += f": {path}"
        super().__init__(msg)
        self.stage = stage
        self.path = path


class EmptyReport(LotmatchError):
    pass
