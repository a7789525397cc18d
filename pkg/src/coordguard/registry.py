"""Name-based registries for utility functions and risk indicators.

Config files refer to code by name; scenarios register their functions at
import time::

    @utility("table")
    def table_utility(state, action, params): ...

Utility signature: ``fn(state, action, params) -> float`` (>= 0).
Indicator signature: ``fn(action, state, params) -> float`` in ``[0, r_max]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping

UtilityFn = Callable[[Any, Any, Mapping[str, Any]], float]
IndicatorFn = Callable[[Any, Any, Mapping[str, Any]], float]


@dataclass(frozen=True)
class Registered:
    fn: Callable
    requires: tuple[str, ...] = ()


_UTILITIES: dict[str, Registered] = {}
_INDICATORS: dict[str, Registered] = {}


def utility(name: str, requires: tuple[str, ...] = ()):
    """Register a utility function; ``requires`` lists state variables it reads."""

    def deco(fn):
        _UTILITIES[name] = Registered(fn, tuple(requires))
        return fn

    return deco


def indicator(name: str, requires: tuple[str, ...] = ()):
    def deco(fn):
        _INDICATORS[name] = Registered(fn, tuple(requires))
        return fn

    return deco


def get_utility(name: str) -> Registered:
    _ensure_builtins()
    try:
        return _UTILITIES[name]
    except KeyError:
        raise KeyError(f"unknown utility function {name!r}") from None


def get_indicator(name: str) -> Registered:
    _ensure_builtins()
    try:
        return _INDICATORS[name]
    except KeyError:
        raise KeyError(f"unknown risk indicator {name!r}") from None


def has_utility(name: str) -> bool:
    _ensure_builtins()
    return name in _UTILITIES


def has_indicator(name: str) -> bool:
    _ensure_builtins()
    return name in _INDICATORS


_loaded = False


def _ensure_builtins() -> None:
    global _loaded
    if not _loaded:
        _loaded = True
        from . import builtins as _  # noqa: F401
        from .scenarios import functions as _f  # noqa: F401
