"""Exception hierarchy for the markov_qlearn package."""


class MarkovQLearnError(Exception):
    """Base class for every error raised by this package."""


class GameValidationError(MarkovQLearnError):
    """A game document is malformed or violates the game invariants."""


class ScheduleError(MarkovQLearnError):
    """A schedule was queried outside its domain or misconfigured."""


class OracleError(MarkovQLearnError):
    """An exact solver received unusable input or failed to converge."""


class ConfigError(MarkovQLearnError):
    """An experiment configuration was rejected."""


class GenerationError(MarkovQLearnError):
    """Random game generation could not satisfy its structural target."""


class UsageError(MarkovQLearnError):
    """An operation was called with arguments outside its contract."""
