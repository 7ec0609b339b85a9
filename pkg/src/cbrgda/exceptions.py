"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to.
"""


class CBRError(Exception):
    exit_code = 1


class ConfigError(CBRError):
    exit_code = 2


# -- parsing / ingestion (exit 3) --------------------------------------------

class ParseError(CBRError):
    exit_code = 3


class MalformedRecord(ParseError):
    pass


class DuplicateFeature(ParseError):
    pass


class EmptySolution(ParseError):
    pass


class EmptyProblem(ParseError):
    pass


class OutOfRange(ParseError):
    pass


class DuplicateId(CBRError):
    exit_code = 3


class DigestMismatch(CBRError):
    exit_code = 3


class EmptyInput(CBRError):
    exit_code = 3


class TooFewPoints(CBRError):
    exit_code = 3


# -- retrieval / adaptation ---------------------------------------------------

class DimMismatch(CBRError):
    pass


class NoWeightedFeatures(CBRError):
    pass


class NothingRetrieved(CBRError):
    exit_code = 4


class EmptyAfterTransform(CBRError):
    pass


class ArityMismatch(CBRError):
    pass


class NoApplicableTemplate(CBRError):
    pass


# -- goal reasoning / environment ---------------------------------------------

class EmptyCaseBase(CBRError):
    pass


class StackOverflow(CBRError):
    pass


class PreconditionViolated(CBRError):
    pass


class EnvironmentHalted(CBRError):
    exit_code = 5
