"""Exception hierarchy.

Each top-level family maps to one CLI exit code (see ``prenv.cli``).
"""

from __future__ import annotations


class PreError(Exception):
    """Base class for every error raised by the engine."""


# -- input / parse ---------------------------------------------------------


class InputError(PreError):
    """Malformed or inconsistent input documents."""


class ParseError(InputError):
    def __init__(self, message: str, line: int, column: int = 1):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class KBValidationError(InputError):
    pass


class DanglingReferenceError(KBValidationError):
    pass


class StrengthRangeError(KBValidationError):
    pass


class TierViolationError(KBValidationError):
    def __init__(self, message: str, link=None):
        self.link = link
        super().__init__(message)


class UnknownPropositionError(InputError):
    def __init__(self, prop_id: str):
        self.prop_id = prop_id
        super().__init__(f"unknown proposition {prop_id!r}")


class NoBackingError(InputError):
    pass


# -- argument construction -------------------------------------------------


class ArgumentError(PreError):
    pass


class InfeasibleRatioError(ArgumentError):
    def __init__(self, lr: float, baseline: float):
        self.lr = lr
        self.baseline = baseline
        super().__init__(
            f"likelihood ratio {lr!r} with baseline {baseline!r} gives "
            f"P(effect|cause) = {lr * baseline!r} > 1"
        )


# -- network compilation ---------------------------------------------------


class CompileError(PreError):
    pass


class CycleError(CompileError):
    def __init__(self, cycle: list[str]):
        self.cycle = list(cycle)
        super().__init__("directed cycle: " + " -> ".join(self.cycle))


class MissingPriorError(CompileError):
    def __init__(self, node: str):
        self.node = node
        super().__init__(f"root node {node!r} has no parents and no prior")


class ConflictingArgumentsError(CompileError):
    def __init__(self, claim: str, first: str, second: str, detail: str = ""):
        self.claim = claim
        self.arguments = (first, second)
        msg = f"arguments {first!r} and {second!r} disagree on {claim!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NotMergeableError(CompileError):
    pass


class ArcError(CompileError):
    pass


# -- inference -------------------------------------------------------------


class InferenceError(PreError):
    pass


class UnknownNodeError(InferenceError):
    def __init__(self, node: str):
        self.node = node
        super().__init__(f"unknown node {node!r}")


class ImpossibleEvidenceError(InferenceError):
    pass


class NetTooLargeError(InferenceError):
    pass


class DegenerateModelError(InferenceError):
    pass


# -- revision --------------------------------------------------------------


class RevisionError(PreError):
    pass


class IncomparableModelsError(RevisionError):
    pass
