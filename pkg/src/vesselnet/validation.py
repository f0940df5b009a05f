"""Input checks shared by the estimators and the simulator."""
from __future__ import annotations

import math

from .contacts import ContactEvent
from .errors import DataError, ParameterError
from .geo import Fleet
from .social import FamiliarityGraph


def check_fleet(X, require_vessels=False) -> Fleet:
    if not isinstance(X, Fleet):
        raise TypeError(f"expected a Fleet, got {type(X).__name__}")
    if require_vessels and not X.vessels:
        raise DataError("fleet has no vessels")
    return X


def check_events(X) -> list[ContactEvent]:
    events = [ContactEvent(*e) for e in X]
    for e in events:
        if not e.a < e.b:
            raise DataError(f"contact {e} is not canonical (a < b)")
        if e.start > e.end:
            raise DataError(f"contact {e} ends before it starts")
    return events


def check_graph(X) -> FamiliarityGraph:
    if not isinstance(X, FamiliarityGraph):
        raise TypeError(f"expected a FamiliarityGraph, got {type(X).__name__}")
    return X


def check_window(window, name="window") -> tuple[int, int]:
    try:
        t0, t1 = (int(w) for w in window)
    except (TypeError, ValueError):
        raise ParameterError(f"{name} must be a pair of integers") from None
    if not t0 < t1:
        raise ParameterError(f"{name} must satisfy start < end")
    return t0, t1


def check_probability(p, name="probability") -> float:
    p = float(p)
    if not (math.isfinite(p) and 0.0 <= p <= 1.0):
        raise ParameterError(f"{name} must lie in [0, 1]")
    return p


def check_positive(x, name) -> float:
    if not (isinstance(x, (int, float)) and math.isfinite(x) and x > 0):
        raise ParameterError(f"{name} must be positive")
    return x
