"""Exception types shared across the toolkit."""


class BehavmockError(Exception):
    """Base class for all toolkit errors."""


# grammar

class GrammarError(BehavmockError):
    pass


class UndefinedNonTerminal(GrammarError):
    def __init__(self, name):
        super().__init__(f"undefined non-terminal {name}")
        self.name = name


class ProbabilityOverflow(GrammarError):
    def __init__(self, rule, total):
        super().__init__(f"explicit probabilities of {rule} sum to {total:.6g} > 1")
        self.rule = rule
        self.total = total


class DanglingPlaceholder(GrammarError):
    def __init__(self, name):
        super().__init__(f"placeholder {name} is never used in any alternative")
        self.name = name


class GrammarSyntaxError(GrammarError):
    def __init__(self, message, line=None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(message + where)
        self.line = line


class BudgetInfeasible(GrammarError):
    pass


class IncompleteTree(GrammarError):
    pass


class ParseFailure(GrammarError):
    def __init__(self, position):
        super().__init__(f"input not in language; furthest position reached: {position}")
        self.position = position


# generation

class GenerationError(BehavmockError):
    pass


class GrammarExhausted(GenerationError):
    pass


class RefinerUnknown(GenerationError):
    def __init__(self, name):
        super().__init__(f"unknown refiner {name!r}")
        self.name = name


class PutFailure(BehavmockError):
    def __init__(self, exit_code, stderr=""):
        super().__init__(f"program under test exited with {exit_code}: {stderr.strip()[:500]}")
        self.exit_code = exit_code
        self.stderr = stderr


class PutTimeout(BehavmockError):
    def __init__(self, timeout):
        super().__init__(f"program under test timed out after {timeout}s")
        self.timeout = timeout


# tokenization

class TokenizeFailure(BehavmockError):
    def __init__(self, position, reason=""):
        msg = f"cannot tokenize at position {position}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.position = position
        self.reason = reason


class UnboundPlaceholder(BehavmockError):
    def __init__(self, token):
        super().__init__(f"placeholder {token} has no bound content")
        self.token = token


class CorpusTooSmall(BehavmockError):
    pass


# model

class ConfigInvalid(BehavmockError):
    pass


class SequenceTooLong(BehavmockError):
    def __init__(self, index, length, limit):
        super().__init__(f"sequence {index} has {length} tokens, context window is {limit}")
        self.index = index


class NonFiniteLoss(BehavmockError):
    pass


class ChecksumMismatch(BehavmockError):
    pass


class VersionMismatch(BehavmockError):
    pass


class EmptySpace(BehavmockError):
    pass


# metrics

class EmptyCorpus(BehavmockError):
    pass


class EmptyReference(BehavmockError):
    pass


class TooFewSamples(BehavmockError):
    pass
