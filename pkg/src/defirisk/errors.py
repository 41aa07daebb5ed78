"""Exception hierarchy shared across the engine.

Every error carries a ``code`` used as the CLI exit status: 2 for
configuration/schema problems, 3 for numerical or statistical failures.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine failures."""

    code = 3


class SchemaError(EngineError):
    """Malformed input file: bad header, unparseable row, wrong shape."""

    code = 2


class ConfigError(EngineError):
    """Invalid run configuration: missing paths, bad flag values."""

    code = 2


class DataError(EngineError):
    """Input data violates a precondition (gaps, duplicates, empty sets)."""

    code = 2


class TvlGapError(DataError):
    """A month inside the panel window has no TVL observation."""

    def __init__(self, protocol_id: str, month: str):
        super().__init__(f"protocol {protocol_id!r}: no TVL observation for {month}")
        self.protocol_id = protocol_id
        self.month = month


class DomainError(EngineError):
    """Argument outside the mathematical domain of an operation."""


class FactorizationError(EngineError):
    """Cholesky factorization hit a nonpositive pivot."""

    def __init__(self, pivot: int, value: float):
        super().__init__(f"matrix is not positive definite: pivot {pivot} = {value:.6g}")
        self.pivot = pivot
        self.value = value


class DegenerateResponseError(EngineError):
    """Binary response is constant; a logistic model cannot be fit."""


class NoEventError(EngineError):
    """No event months observed; use the peer-interval path instead."""


class InsufficientDataError(EngineError):
    """Too few observations to fit the requested model."""


class RankError(EngineError):
    """Design matrix is rank deficient where a full-rank fit is required."""


class NotApplicableError(EngineError):
    """A diagnostic test cannot be computed on this fit (e.g. too few groups)."""
