class VlcaError(Exception):
    """Base class for every toolkit failure."""


class PoleOnAxis(VlcaError):
    pass


class NoCrossover(VlcaError):
    pass


class DelayNotClosed(VlcaError):
    pass


class FitDiverged(VlcaError):
    pass


class MissingFilterCutoff(VlcaError):
    pass


class NonFiniteState(VlcaError):
    pass


class InsufficientExcitation(VlcaError):
    pass


class DegenerateData(VlcaError):
    pass


class AllExcluded(VlcaError):
    pass


class CalibrationInfeasible(VlcaError):
    def __init__(self, message: str, residuals: dict[str, float]):
        super().__init__(message)
        self.residuals = residuals


class WorkspaceViolation(VlcaError):
    pass


class OutOfRange(VlcaError):
    pass


class NoPositivePowerInterval(VlcaError):
    pass


class ConfigInvalid(VlcaError, ValueError):
    def __init__(self, message: str, key_path: str = ''):
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.key_path = key_path


class ScenarioFailed(VlcaError):
    pass
