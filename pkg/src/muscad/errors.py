class MuscadError(Exception):
    pass


class ConfigError(MuscadError, ValueError):
    pass


class EmptyCorpusError(MuscadError, ValueError):
    pass


class TrainingError(MuscadError, RuntimeError):
    """Raised when a loss or gradient becomes non-finite."""
