from enum import Enum


class Status(Enum):
    """Outcome of a single validation or transformation step.

    ``OK`` lets a value continue down a parameter pipeline; ``EXCEPTION`` stops it
    and carries a human-readable reason in the accompanying response.
    """
    OK = 0
    EXCEPTION = 1
