"""Progression: removing and adding effect fluents on incomplete states.

Removal and addition branch on what the state entails about each effect
fluent.  When its status is unknown, all partial knowledge about it is
cancelled first, which keeps the resulting specification sound at the
cost of completeness.
"""

from __future__ import annotations

from typing import Iterable, Optional

from .errors import Inconsistent
from .store import (
    CancelC,
    CancelledC,
    CANCEL_KEY,
    Cons,
    StateSpec,
    TailVar,
    _rebuild,
    deref_node,
)
from .terms import Fluent


def holds_assert(f: Fluent, z: StateSpec) -> bool:
    """Commit the first alternative under which f consistently holds in z.

    Alternatives are tried left to right over the listed fluents (an
    identical listing succeeds outright), then by extending an open tail.
    Failure leaves the state untouched.
    """
    eng = z.engine
    return eng._run(lambda: eng._holds_assert(f, z.root))


def holds_split(f: Fluent, z: StateSpec) -> Optional[StateSpec]:
    """Remove one occurrence of f from z, returning the remainder.

    The remainder shares the tail (and therefore all attached constraints)
    with z.  Returns None when no alternative is consistent.
    """
    eng = z.engine
    node = eng._run(lambda: eng._holds_split(f, z.root))
    if node is None:
        return None
    return StateSpec(eng, node)


def entails_holds(f: Fluent, z: StateSpec) -> bool:
    """True iff asserting that f does not hold is unsatisfiable."""
    eng = z.engine
    mark = eng.snapshot()
    try:
        eng.assert_not_holds(f, z.root)
    except Inconsistent:
        return True
    finally:
        eng.rollback(mark)
    return False


def entails_not_holds(f: Fluent, z: StateSpec) -> bool:
    """True iff f cannot consistently hold in z."""
    eng = z.engine
    mark = eng.snapshot()
    try:
        ok = eng._run(lambda: eng._holds_assert(f, z.root))
    finally:
        eng.rollback(mark)
    return not ok


def cancel_fluent(f: Fluent, z: StateSpec) -> StateSpec:
    """Erase all partial knowledge about fluents unifiable with f.

    Listed fluents that unify with f are dropped; at an open tail the
    affected negative and disjunctive constraints are purged via a pair of
    transient marker constraints, which never survive propagation.
    """
    eng = z.engine

    def body():
        node = deref_node(z.root)
        prefix = []
        while isinstance(node, Cons):
            if not eng.unifiable(f, node.head):
                prefix.append(node.head)
            node = deref_node(node.tail)
        if isinstance(node, TailVar):
            eng._push(CancelC(f, node), node)
            eng._push(CancelledC(f, node), node)
            eng._drain()
            bucket = node.parked.get(CANCEL_KEY)
            if bucket is not None and any(r.alive for r in bucket.recs):
                raise AssertionError("cancellation markers survived propagation")
        return _rebuild(prefix, node)

    return StateSpec(eng, eng._run(body))


def minus(z: StateSpec, fs: Iterable[Fluent]) -> StateSpec:
    """State z minus the given fluents, in order."""
    for f in fs:
        if entails_holds(f, z):
            nxt = holds_split(f, z)
            if nxt is None:
                raise Inconsistent("fluent entailed but not removable")
            z = nxt
        elif entails_not_holds(f, z):
            pass
        else:
            z = cancel_fluent(f, z)
            z.engine.assert_not_holds(f, z.root)
    return z


def plus(z: StateSpec, fs: Iterable[Fluent]) -> StateSpec:
    """State z plus the given fluents, in order."""
    for f in fs:
        if entails_not_holds(f, z):
            z = z.prepend(f)
        elif entails_holds(f, z):
            pass
        else:
            z = cancel_fluent(f, z)
            z.engine.assert_not_holds(f, z.root)
            z = z.prepend(f)
    return z


def update(z: StateSpec, theta_plus: Iterable[Fluent], theta_minus: Iterable[Fluent]) -> StateSpec:
    """Remove theta_minus, then add theta_plus."""
    return plus(minus(z, theta_minus), theta_plus)
