"""Exception hierarchy. Each class carries the CLI exit code for its stage."""


class BayesMIAError(Exception):
    exit_code = 1


class ConfigError(BayesMIAError, ValueError):
    exit_code = 2


class DataError(BayesMIAError, ValueError):
    exit_code = 3


class ModelError(BayesMIAError, ValueError):
    exit_code = 4


class TrainingError(BayesMIAError, RuntimeError):
    exit_code = 4

    def __init__(self, message, grad_norm=None):
        super().__init__(message)
        self.grad_norm = grad_norm


class UnsupportedError(ModelError):
    pass


class NumericalError(BayesMIAError, ArithmeticError):
    exit_code = 4


class CalibrationError(BayesMIAError, ValueError):
    exit_code = 5

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = [int(i) for i in indices]


class EvaluationError(BayesMIAError, ValueError):
    exit_code = 6
