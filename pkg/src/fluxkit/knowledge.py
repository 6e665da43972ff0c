"""Knowledge queries by speculative assertion and rollback.

A ground fluent is known to hold iff asserting its negation makes the
store unsatisfiable, and known not to hold iff it cannot consistently be
added.  Both checks are one-sided: the incomplete solver may fail to
recognize an entailed fluent, but it never reports knowledge that does
not follow.  Queries leave the state untouched.
"""

from __future__ import annotations

from typing import Sequence

from . import update as _update
from .errors import Inconsistent
from .store import Cons, StateSpec, deref_node
from .terms import ArgTerm, Fluent, Var, is_instance


def _require_ground(eng, f: Fluent, op: str) -> None:
    if not eng.is_ground(f):
        raise ValueError(f"{op} requires a ground fluent, got {f!r}")


def knows(f: Fluent, z: StateSpec) -> bool:
    """True iff f holds in every completion of z."""
    _require_ground(z.engine, f, "knows")
    return _update.entails_holds(f, z)


def knows_not(f: Fluent, z: StateSpec) -> bool:
    """True iff f holds in no completion of z."""
    _require_ground(z.engine, f, "knows_not")
    return _update.entails_not_holds(f, z)


def knows_val(
    query_vars: Sequence[Var], pattern: Fluent, z: StateSpec
) -> list[dict[Var, ArgTerm]]:
    """Bindings of the query variables for which the pattern is known.

    Scans the listed fluents left to right, matching the pattern against
    each one; a match contributes a binding when it grounds every query
    variable.  Only the list is inspected, so values decided purely by
    domain constraints on unlisted fluents are not derived.
    """
    for v in query_vars:
        if not any(v == a for a in pattern.args):
            raise ValueError(f"query variable {v!r} does not occur in the pattern")
    eng = z.engine
    out: list[dict[Var, ArgTerm]] = []
    seen: set[tuple] = set()
    node = deref_node(z.root)
    while isinstance(node, Cons):
        listed = node.head
        if is_instance(eng.canon(listed), eng.canon(pattern)):
            mark = eng.snapshot()
            try:
                eng._run(lambda: eng.unify_commit(pattern, listed))
                binding = {v: eng.resolve(v) for v in query_vars}
                if all(not isinstance(t, Var) for t in binding.values()):
                    key = tuple(binding[v] for v in query_vars)
                    if key not in seen:
                        seen.add(key)
                        out.append(binding)
            except Inconsistent:
                pass
            finally:
                eng.rollback(mark)
        node = deref_node(node.tail)
    return out
