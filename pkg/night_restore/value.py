"""Core validation abstractions.

Every numeric knob in the pipeline (exposure targets, extinction coefficients,
window sizes, seeds) passes through the same small machinery before it is used:

- ``ValidationStrategy``: A pluggable check that returns a ``StatusResponse``
  without changing the value.
- ``TransformationStrategy``: A pluggable step that converts the value (for
  example ``int`` to ``float``) and returns a ``Response``.
- ``ConstrainedValue[T]``: Runs a raw input through its strategies and keeps the
  canonical value together with status and details.

Typical flow
------------
1) Start from a raw input (a CLI string already parsed to a number, a record
   read back from a manifest, ...).
2) Thread it through :func:`run_pipeline`: transformations may change the
   value, validations only inspect it.
3) On the first ``Status.EXCEPTION`` the pipeline short-circuits; otherwise the
   final value is accepted as canonical.
"""
from __future__ import annotations
from abc import ABC, abstractmethod
from typing import Generic, List, Optional, TypeVar, Any, Iterable
from .constants import DEFAULT_SUCCESS_MESSAGE
from .response import Response, StatusResponse
from .status import Status

T = TypeVar("T")
InT = TypeVar("InT")
MidT = TypeVar("MidT")
OutT = TypeVar("OutT")


class PipeLineStrategy(ABC):
    """Marker base for steps in a validation pipeline."""
    pass


class ValidationStrategy(Generic[MidT], PipeLineStrategy):
    """Inspects a value and reports whether it satisfies one constraint."""

    @abstractmethod
    def validate(self, value: MidT) -> StatusResponse:  # pragma: no cover
        """Validate ``value`` and return a StatusResponse."""
        pass


class TransformationStrategy(Generic[InT, OutT], PipeLineStrategy):
    """Converts a value from ``InT`` to ``OutT``."""

    @abstractmethod
    def transform(self, value: InT) -> Response[OutT]:  # pragma: no cover
        """Transform ``value`` and return a Response."""
        pass


def apply_strategy(strategy: PipeLineStrategy, current_value: Any) -> Response[Any]:
    """Run a single pipeline strategy and normalize the result to a Response.

    Validations are wrapped so the current value is carried forward unchanged.
    """
    if isinstance(strategy, TransformationStrategy):
        return strategy.transform(current_value)
    elif isinstance(strategy, ValidationStrategy):
        sr = strategy.validate(current_value)
        return Response(status=sr.status, details=sr.details, value=current_value)
    return Response(status=Status.EXCEPTION, details="Missing strategy handler", value=None)


def run_pipeline(strategies: Iterable[PipeLineStrategy], value_in: Any,
                 success_details: str = DEFAULT_SUCCESS_MESSAGE) -> Response[Any]:
    """Thread ``value_in`` through ``strategies``, stopping at the first failure.

    Args:
        strategies: Transformation and validation steps in application order.
        value_in: The raw input.
        success_details: Details reported when every step passes.

    Returns:
        Response[Any]: The failing step's response (value ``None``) or OK with the
        canonical value.
    """
    current_value = value_in
    for strategy in strategies:
        resp = apply_strategy(strategy, current_value)
        if resp.status == Status.EXCEPTION:
            return Response(status=Status.EXCEPTION, details=resp.details, value=None)
        current_value = resp.value
    return Response(status=Status.OK, details=success_details, value=current_value)


class ConstrainedValue(ABC, Generic[T]):
    """A value that is validated/transformed by a processing pipeline.

    Construction never raises; inspect ``ok``/``details`` or call ``unwrap()``.
    Instances are read-only once built.
    See :class:`night_restore.params.StrictValue` for the raising flavour.

    Example:
        >>> from night_restore.strategies import RangeValidationStrategy
        >>> class Exposure(ConstrainedValue[float]):
        ...     def get_strategies(self): return [RangeValidationStrategy(0.05, 0.3)]
        >>> Exposure(0.2).ok, Exposure(0.7).details
        (True, 'Value must be less than or equal to 0.3, got 0.7')
    """
    __slots__ = ("_value", "_status", "_details")

    def __init__(self, value_in: Any, success_details: str = DEFAULT_SUCCESS_MESSAGE):
        result = run_pipeline(self.get_strategies(), value_in, success_details)
        object.__setattr__(self, "_value", result.value)
        object.__setattr__(self, "_status", result.status)
        object.__setattr__(self, "_details", result.details)

    def __setattr__(self, name: str, value: Any) -> None:
        raise AttributeError(f"{self.__class__.__name__} is read-only")

    def __repr__(self):
        return f"{self.__class__.__name__}(_value={self._value!r}, status={self.status.name})"

    @abstractmethod
    def get_strategies(self) -> List[PipeLineStrategy]:
        """Return the ordered list of strategies for this pipeline."""
        ...

    @property
    def status(self) -> Status:
        return self._status

    @property
    def details(self) -> str:
        return self._details

    @property
    def value(self) -> Optional[T]:
        """Canonical value if valid; otherwise ``None``."""
        if self._status == Status.EXCEPTION:
            return None
        return self._value

    @property
    def ok(self) -> bool:
        return self.status == Status.OK

    def unwrap(self) -> T:
        """Return the validated value or raise ``ValueError`` if invalid."""
        if not self.ok:
            raise ValueError(f"{self.__class__.__name__} invalid: {self.details}")
        return self._value
