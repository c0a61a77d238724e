"""Exception hierarchy. ``exit_code`` is what the CLI returns for each class."""
from collections import Counter


class SNASError(Exception):
    exit_code = 1


class ConfigurationError(SNASError, ValueError):
    exit_code = 2


class ParseError(ConfigurationError):
    pass


class InfeasibleError(SNASError):
    exit_code = 3

    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint

    @classmethod
    def from_counts(cls, misses: Counter, attempts: int) -> "InfeasibleError":
        # tightest = violated in the most draws; ties by name for determinism
        name = min(misses, key=lambda k: (-misses[k], k)) if misses else None
        return cls(f"no feasible architecture after {attempts} attempts; "
                   f"tightest violated constraint: {name}", constraint=name)


class TrainingError(SNASError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, config_string=None):
        super().__init__(message)
        self.config_string = config_string


class EvaluationError(SNASError):
    exit_code = 4

    def __init__(self, message, config_string=None):
        super().__init__(message)
        self.config_string = config_string
