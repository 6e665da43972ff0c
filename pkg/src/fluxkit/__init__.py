"""Reasoning kernel for agents with incomplete state knowledge."""

from .errors import Inconsistent, ScriptError
from .knowledge import knows, knows_not, knows_val
from .store import Engine, StateSpec
from .terms import Fluent, Int, Sym, Var
from .update import cancel_fluent, holds_assert, holds_split, minus, plus, update

__all__ = [
    "Engine",
    "Fluent",
    "Inconsistent",
    "Int",
    "ScriptError",
    "StateSpec",
    "Sym",
    "Var",
    "cancel_fluent",
    "holds_assert",
    "holds_split",
    "knows",
    "knows_not",
    "knows_val",
    "minus",
    "plus",
    "update",
]
