__all__ = [
    'TriggerXAIError',
    'InputError',
    'WeightFileError',
    'RowError',
    'ConfigError',
    'InvariantError',
    'UnsupportedMethodError',
    'EmptySaliencyWarning',
    'ClampWarning',
    'DegenerateFitWarning',
]


class TriggerXAIError(Exception):
    pass


class InputError(TriggerXAIError, ValueError):
    pass


class WeightFileError(InputError):
    def __init__(self, message: str, offset: int):
        super().__init__(f'{message} (at byte {offset})')
        self.offset = offset


class RowError(InputError):
    def __init__(self, message: str, row: int):
        super().__init__(f'row {row}: {message}')
        self.row = row


class ConfigError(TriggerXAIError, ValueError):
    pass


class InvariantError(TriggerXAIError, AssertionError):
    pass


class UnsupportedMethodError(TriggerXAIError, ValueError):
    pass


class EmptySaliencyWarning(UserWarning):
    pass


class ClampWarning(UserWarning):
    pass


class DegenerateFitWarning(UserWarning):
    pass
