"""Constrained parameter types.

Each pipeline knob is a small value class whose pipeline coerces the raw input
and checks its bounds. ``Parameter`` subclasses are strict: construction raises
:class:`~night_restore.errors.ParameterError` naming the knob, so a config
dataclass can never hold an out-of-range value.

    >>> ExposureTarget(0.2).value
    0.2
    >>> ExposureTarget(0.7)
    Traceback (most recent call last):
    ...
    night_restore.errors.ParameterError: exposure target e: Value must be less than or equal to 0.5, got 0.7
"""
from abc import ABC
from enum import Enum
from typing import Any, ClassVar, List, Sequence, Type, TypeVar

from .constants import DEFAULT_SUCCESS_MESSAGE
from .errors import ParameterError
from .status import Status
from .value import ConstrainedValue, PipeLineStrategy
from .strategies import (
    CoerceToFloat,
    CoerceToInt,
    EnumValidationStrategy,
    FailValidationStrategy,
    FiniteValidationStrategy,
    GreaterThanValidationStrategy,
    IntegerValidationStrategy,
    OddValidationStrategy,
    RangeValidationStrategy,
    RealNumberValidationStrategy,
)

T = TypeVar("T")


class StrictValue(ConstrainedValue[T], ABC):
    """ConstrainedValue that raises immediately when its pipeline fails.

    Raises:
        ParameterError: If validation fails; the message starts with ``label``.
    """
    label: ClassVar[str] = "value"

    def __init__(self, value: Any = None, success_details: str = DEFAULT_SUCCESS_MESSAGE):
        super().__init__(value, success_details)
        if self.status == Status.EXCEPTION:
            raise ParameterError(f"{self.label}: {self.details}")

    @classmethod
    def check(cls, value: Any) -> T:
        """Validate ``value`` and return the canonical form."""
        return cls(value).value


class Parameter(StrictValue[T]):
    """Strict scalar bounded by class-level limits.

    Pipeline:
        1. Type: a real (or, when ``integral``, an integer); bool is rejected.
        2. Coercion to builtin ``float`` / ``int``; floats must be finite.
        3. ``get_custom_strategies()`` hook for subclasses (e.g. oddness).
        4. Bounds: ``low <= value <= high``, or ``value > low`` when ``exclusive_low``.
    """
    __slots__ = ()
    low: ClassVar[Any] = float("-inf")
    high: ClassVar[Any] = float("inf")
    exclusive_low: ClassVar[bool] = False
    integral: ClassVar[bool] = False

    def get_custom_strategies(self) -> List[PipeLineStrategy]:
        return []

    def get_strategies(self) -> List[PipeLineStrategy]:
        if self.integral:
            strategies: List[PipeLineStrategy] = [IntegerValidationStrategy(), CoerceToInt()]
        else:
            strategies = [RealNumberValidationStrategy(), CoerceToFloat(), FiniteValidationStrategy()]
        strategies += self.get_custom_strategies()
        if self.exclusive_low:
            strategies += [GreaterThanValidationStrategy(self.low),
                           RangeValidationStrategy(float("-inf"), self.high)]
        else:
            strategies.append(RangeValidationStrategy(self.low, self.high))
        return strategies


class UnitInterval(Parameter[float]):
    label = "unit-interval value"
    low, high = 0.0, 1.0


class PositiveReal(Parameter[float]):
    label = "positive real"
    low, exclusive_low = 0.0, True


class NonNegativeReal(Parameter[float]):
    label = "non-negative real"
    low = 0.0


class FiniteReal(Parameter[float]):
    label = "real"


class ExposureTarget(Parameter[float]):
    """Target mean of a darkened mid-gray image; solvable range is (0, 0.5]."""
    label = "exposure target e"
    low, high, exclusive_low = 0.0, 0.5, True


class AlphaValue(Parameter[float]):
    """Curve adjustment parameter, darkening direction only."""
    label = "curve parameter alpha"
    low, high = -1.0, 0.0


class VariationAmplitude(Parameter[float]):
    label = "variation amplitude"
    low, high = 0.0, 0.2


class ParticleDensity(Parameter[float]):
    """Expected covered fraction of a particle mask."""
    label = "particle density"
    low, high, exclusive_low = 0.0, 1.0, True


class RefineRate(Parameter[float]):
    label = "refinement rate kappa"
    low, high, exclusive_low = 0.0, 1.0, True


class PositiveInt(Parameter[int]):
    label = "positive integer"
    integral = True
    low = 1


class Seed(Parameter[int]):
    label = "seed"
    integral = True
    low, high = 0, 2 ** 64 - 1


class OddWindow(Parameter[int]):
    label = "blur window"
    integral = True
    low = 1

    def get_custom_strategies(self) -> List[PipeLineStrategy]:
        return [OddValidationStrategy()]


class EnumValue(ConstrainedValue[T]):
    """Validates a value against an Enum's member values or a plain sequence.

    Enum members are accepted as themselves and compared by ``.value``; an empty
    enum or sequence surfaces as an EXCEPTION through the pipeline, never a throw.

    Example:
        >>> EnumValue("fog", ["fog", "haze"]).ok
        True
    """
    __slots__ = ("_strategies",)

    def get_strategies(self) -> List[PipeLineStrategy]:
        return self._strategies

    def __init__(self, value: object, valid_values: Sequence[T] | Type[Enum],
                 success_details: str = DEFAULT_SUCCESS_MESSAGE):
        allowed = [m.value if isinstance(m, Enum) else m for m in valid_values]
        if isinstance(value, Enum):
            value = value.value
        if allowed:
            strategies: List[PipeLineStrategy] = [EnumValidationStrategy(allowed)]
        else:
            strategies = [FailValidationStrategy("Must be a non-empty collection of values.")]
        object.__setattr__(self, "_strategies", strategies)
        super().__init__(value, success_details)
