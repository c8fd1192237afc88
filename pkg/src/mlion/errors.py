"""Exception types shared across the engine."""


class MlionError(Exception):
    """Base class for all engine errors."""


class MalformedRow(MlionError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        super().__init__(f"malformed row at line {line_no}: {detail}")


class OHLCInvariantViolated(MlionError):
    def __init__(self, t: int, detail: str = ""):
        self.t = t
        super().__init__(f"OHLC invariant violated at t={t}: {detail}")


class NonMonotonicTimestamps(MlionError):
    pass


class InsufficientHistory(MlionError):
    def __init__(self, needed: int, available: int):
        self.needed = needed
        self.available = available
        super().__init__(f"need {needed} candles, have {available}")


class StorageUnavailable(MlionError):
    pass


class EmptyDataset(MlionError):
    pass


class SingularSystem(MlionError):
    pass


class UnfittedModel(MlionError):
    pass


class TooFewSamples(MlionError):
    pass


class LengthMismatch(MlionError):
    pass


class HorizonMismatch(MlionError):
    pass


class AlphaOutOfRange(MlionError):
    pass


class NonPositiveActual(MlionError):
    pass


class MissingTemplate(MlionError):
    pass


class ProviderUnavailable(MlionError):
    def __init__(self, track: str, detail: str = ""):
        self.track = track
        super().__init__(f"provider unavailable for {track}: {detail}")


class ComponentOutOfRange(MlionError):
    pass


class MissingPartial(MlionError):
    def __init__(self, agent: str):
        self.agent = agent
        super().__init__(f"missing partial report from {agent}")


class MissingInput(MlionError):
    pass


class MissingField(MlionError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing field: {name}")


class UnannotatedItem(MlionError):
    pass


class UnknownSeed(MlionError):
    pass


class UnknownCategory(MlionError):
    pass


class DimensionMismatch(MlionError):
    pass


class EmptyCandidateSet(MlionError):
    pass


class ConfigInvalid(MlionError):
    pass
