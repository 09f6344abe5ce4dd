from dataclasses import dataclass
from typing import TypeVar, Generic, Optional

from .status import Status

T = TypeVar('T')


@dataclass(frozen=True)
class StatusResponse(Generic[T]):
    """Result of a validation step on a parameter or raster.

    Attributes:
        status: OK when the checked value satisfies the constraint, EXCEPTION otherwise.
        details: Why the check failed, phrased for the person who supplied the value
            (for example ``"Value must be less than or equal to 0.5, got 0.7"``).
    """
    status: Status
    details: str

    @property
    def ok(self) -> bool:
        return self.status == Status.OK


@dataclass(frozen=True)
class Response(StatusResponse[T]):
    """Result of a transformation step.

    Attributes:
       value: The (possibly coerced) value handed to the next step, ``None`` on failure.
    """

    value: Optional[T]
