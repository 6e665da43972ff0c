"""Constraint store over open fluent lists.

A state is an open-ended list of positive fluents plus constraints that
express negative and disjunctive knowledge about the unlisted remainder.
Constraints attached to a list are rewritten to fixpoint by a hard-wired
rule set: they decompose along the list cells, reduce to finite-domain
formulas over argument variables, and park at the open tail, where they
are indexed by functor so that extending the tail only touches the
constraints that can interact with the new fluent.

Every mutation is trailed, so speculative assertions (the basis of the
knowledge queries) can be rolled back exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterable, Optional, Union

from . import fd as _fd
from . import terms as _t
from .errors import Inconsistent
from .fd import (
    And,
    Atom,
    FALSE_F,
    FdSolver,
    Or,
    TRUE_F,
    lin_const,
    lin_var,
)
from .terms import Fluent, FluentParser, Int, Interner, Sym, Var

EXISTS = "exists"
FORALL = "forall"

# Parked-constraint bucket keys besides functor codes.
OR_KEY = "*or*"
DF_KEY = "*df*"
CANCEL_KEY = "*cancel*"

_SYM_BASE = -1_000_001  # symbol codes below any plausible integer argument


# ---------------------------------------------------------------------------
# State list nodes


class Cons:
    __slots__ = ("head", "tail")

    def __init__(self, head: Fluent, tail):
        self.head = head
        self.tail = tail


class TailVar:
    """The open end of a state list; constraints park here in buckets."""

    __slots__ = ("id", "binding", "parked")

    def __init__(self, id: int):
        self.id = id
        self.binding = None
        self.parked: dict = {}


class _Nil:
    __slots__ = ()

    def __repr__(self):
        return "NIL"


NIL = _Nil()


def deref_node(node):
    while isinstance(node, TailVar) and node.binding is not None:
        node = node.binding
    return node


class Bucket:
    __slots__ = ("owner", "recs")

    def __init__(self, owner: TailVar):
        self.owner = owner
        self.recs: list = []


# ---------------------------------------------------------------------------
# Constraint records


class _Rec:
    __slots__ = ("target", "alive", "parked_bucket")

    def __init__(self, target):
        self.target = target
        self.alive = True
        self.parked_bucket: Optional[Bucket] = None


class NotHoldsC(_Rec):
    __slots__ = ("fluent",)

    def __init__(self, fluent: Fluent, target):
        super().__init__(target)
        self.fluent = fluent


class NotHoldsAllC(_Rec):
    __slots__ = ("fluent",)

    def __init__(self, fluent: Fluent, target):
        super().__init__(target)
        self.fluent = fluent


@dataclass(frozen=True)
class FluentD:
    fluent: Fluent


@dataclass(frozen=True)
class EqD:
    xs: tuple
    ys: tuple


Disjunct = Union[FluentD, EqD]


class OrHoldsC(_Rec):
    __slots__ = ("disjuncts",)

    def __init__(self, disjuncts: tuple, target):
        super().__init__(target)
        self.disjuncts = disjuncts

    def fd_wake(self, solver):
        """Re-examine suspended equality disjuncts when their variables move."""
        eng = solver.host
        if self.alive and self.parked_bucket is not None:
            owner = self.parked_bucket.owner
            eng._unpark(self)
            eng._push(self, owner)


class DupFreeC(_Rec):
    __slots__ = ()


class CancelC(_Rec):
    __slots__ = ("fluent",)

    def __init__(self, fluent: Fluent, target):
        super().__init__(target)
        self.fluent = fluent


class CancelledC(_Rec):
    __slots__ = ("fluent",)

    def __init__(self, fluent: Fluent, target):
        super().__init__(target)
        self.fluent = fluent


# ---------------------------------------------------------------------------
# Trail undo helpers


def _undo_field(obj, name, old):
    setattr(obj, name, old)


def _undo_bind(tv):
    tv.binding = None


def _undo_park(bucket, created, parked, key):
    bucket.recs.pop()
    if created:
        del parked[key]


def _undo_unpark(bucket, idx, rec):
    bucket.recs.insert(idx, rec)


def _undo_move(bucket, src, dst, key):
    del dst.parked[key]
    src.parked[key] = bucket
    bucket.owner = src


def _undo_apush(eng):
    eng.agenda.pop()


def _undo_apop(eng):
    eng.apos -= 1


# ---------------------------------------------------------------------------
# Formula builders


def lin_of_term(t) -> _fd.LinExpr:
    if isinstance(t, Int):
        return lin_const(t.value)
    if isinstance(t, Sym):
        return lin_const(t.code)
    return lin_var(t.id)


def _ne_atom(x, y) -> Atom:
    return Atom(_fd.FdAtom(lin_of_term(x), _fd.NE, lin_of_term(y)))


def _eq_atom(x, y) -> Atom:
    return Atom(_fd.FdAtom(lin_of_term(x), _fd.EQ, lin_of_term(y)))


def build_and_eq(xs, ys) -> _fd.FdFormula:
    """Conjunction of pairwise argument equalities; empty vectors are true."""
    if len(xs) != len(ys):
        raise ValueError("argument vectors differ in length")
    if not xs:
        return TRUE_F
    return And(tuple(_eq_atom(x, y) for x, y in zip(xs, ys)))


def build_or_and_eq(eqs: Iterable[EqD]) -> _fd.FdFormula:
    """Disjunction of the equality conjunctions; empty disjunctions are false."""
    items = tuple(build_and_eq(e.xs, e.ys) for e in eqs)
    if not items:
        return FALSE_F
    return Or(items)


# ---------------------------------------------------------------------------
# Engine


class Engine:
    """One reasoning session: interner, variables, trail, fd solver, rules."""

    def __init__(self):
        self.interner = Interner()
        self._sym_by_code: dict[int, Sym] = {}
        self._next_var = 0
        self._next_tail = 0
        self.trail: list = []
        self.fd = FdSolver(self.trail)
        self.fd.host = self
        self.agenda: list = []
        self.apos = 0
        self._op_depth = 0
        self._snap_depth = 0
        self.metrics: Optional[dict] = None

    # -- construction helpers

    def symbol(self, text: str) -> Sym:
        sym = self.interner._by_text.get(text)
        if sym is None:
            sym = Sym(_SYM_BASE - len(self.interner._by_text), text)
            self.interner._by_text[text] = sym
            self._sym_by_code[sym.code] = sym
        return sym

    def new_var(self, name: Optional[str] = None) -> Var:
        self._next_var += 1
        return Var(self._next_var, name)

    def new_tail(self) -> TailVar:
        self._next_tail += 1
        return TailVar(self._next_tail)

    def fluent(self, functor: str, *args) -> Fluent:
        sym = self.symbol(functor)
        conv = []
        for a in args:
            if isinstance(a, int):
                conv.append(Int(a))
            elif isinstance(a, str):
                conv.append(self.symbol(a))
            else:
                conv.append(a)
        self.interner.check_arity(sym, len(conv))
        return Fluent(sym, tuple(conv))

    def check_arity(self, functor: Sym, arity: int) -> None:
        self.interner.check_arity(functor, arity)

    def parser(self, varenv: Optional[dict] = None) -> FluentParser:
        # the engine doubles as the interner so parsed symbols share its codes
        return FluentParser(self, self.new_var, varenv)

    def new_state(self, fluents: Iterable[Fluent] = (), closed: bool = False) -> "StateSpec":
        node = NIL if closed else self.new_tail()
        for f in reversed(list(fluents)):
            node = Cons(f, node)
        return StateSpec(self, node)

    # -- term views through the fd store

    def resolve(self, t):
        """Collapse a variable to its constant once its domain is a singleton."""
        if isinstance(t, Var):
            v = self.fd.value(t.id)
            if v is None:
                return t
            sym = self._sym_by_code.get(v)
            return sym if sym is not None else Int(v)
        return t

    def arg_key(self, t):
        t = self.resolve(t)
        if isinstance(t, Int):
            return ("i", t.value)
        if isinstance(t, Sym):
            return ("s", t.code)
        root, off = self.fd.find(t.id)
        return ("v", root, off)

    def canon(self, f: Fluent) -> Fluent:
        """Fluent with arguments normalized for the pure term relations."""
        args = []
        for a in f.args:
            r = self.resolve(a)
            if isinstance(r, Var):
                root, off = self.fd.find(r.id)
                r = Var(root) if off == 0 else r
            args.append(r)
        return Fluent(f.functor, tuple(args))

    def is_ground(self, f: Fluent) -> bool:
        return not any(isinstance(self.resolve(a), Var) for a in f.args)

    def identical(self, a: Fluent, b: Fluent) -> bool:
        if a.functor != b.functor or len(a.args) != len(b.args):
            return False
        return all(self.arg_key(x) == self.arg_key(y) for x, y in zip(a.args, b.args))

    def unifiable(self, a: Fluent, b: Fluent) -> bool:
        return _t.unify(self.canon(a), self.canon(b)) is not None

    def instance_of(self, g: Fluent, f: Fluent) -> bool:
        return _t.is_instance(self.canon(g), self.canon(f))

    def unify_commit(self, a: Fluent, b: Fluent) -> None:
        """Unify two fluents by posting argument equalities to the fd store."""
        if a.functor != b.functor or len(a.args) != len(b.args):
            raise Inconsistent("functor mismatch")
        for x, y in zip(a.args, b.args):
            kx, ky = self.arg_key(x), self.arg_key(y)
            if kx == ky:
                continue
            if kx[0] == "v":
                if ky[0] == "v":
                    self.fd.alias(x.id, y.id, 0)
                else:
                    self.fd.assign(x.id, ky[1], is_symbol=ky[0] == "s")
            elif ky[0] == "v":
                self.fd.assign(y.id, kx[1], is_symbol=kx[0] == "s")
            else:
                raise Inconsistent("distinct constants")

    def build_or_neq(self, quant: str, a: Fluent, b: Fluent) -> _fd.FdFormula:
        """Inequality of two fluents as a disjunction of argument disequalities.

        Distinct functors never denote the same fluent, so the result is
        simply true.  Under the universal reading the variable arguments of
        ``a`` are discarded, but a repeated variable induces the
        corresponding disequality between the arguments of ``b``.
        """
        if a.functor != b.functor:
            return TRUE_F
        if len(a.args) != len(b.args):
            raise ValueError("functor arity mismatch")
        aargs = [self.resolve(x) for x in a.args]
        bargs = [self.resolve(y) for y in b.args]
        akeys = [self.arg_key(x) for x in a.args]
        atoms = []
        for i, x in enumerate(aargs):
            if quant == FORALL and isinstance(x, Var):
                for j in range(i + 1, len(aargs)):
                    if akeys[j] == akeys[i]:
                        atoms.append(_ne_atom(bargs[i], bargs[j]))
                        break
            else:
                atoms.append(_ne_atom(x, bargs[i]))
        if not atoms:
            return FALSE_F
        return Or(tuple(atoms))

    # -- trail and snapshots

    def snapshot(self) -> int:
        self._snap_depth += 1
        return len(self.trail)

    def rollback(self, mark: int) -> None:
        if mark > len(self.trail) or self._snap_depth <= 0:
            raise ValueError("snapshots must be rolled back innermost-first")
        self._snap_depth -= 1
        self._undo_to(mark)

    def _undo_to(self, mark: int) -> None:
        trail = self.trail
        while len(trail) > mark:
            entry = trail.pop()
            entry[0](*entry[1:])

    def _begin(self) -> int:
        self._op_depth += 1
        return len(self.trail)

    def _finish(self, mark: int, failed: bool) -> None:
        self._op_depth -= 1
        if failed:
            self._undo_to(mark)
        elif self._op_depth == 0 and self._snap_depth == 0:
            # nothing can roll back past this point; drop the history
            self.trail.clear()
            self.agenda.clear()
            self.apos = 0

    def _run(self, body):
        """Run a mutating operation: propagate to fixpoint or roll back."""
        outermost = self._op_depth == 0
        mark = self._begin()
        t0 = time.perf_counter_ns() if self.metrics is not None and outermost else 0
        try:
            out = body()
            self._drain()
        except BaseException:
            self._finish(mark, failed=True)
            raise
        self._finish(mark, failed=False)
        if self.metrics is not None and outermost:
            self.metrics["asserts"] += 1
            self.metrics["assert_ns"] += time.perf_counter_ns() - t0
        return out

    # -- agenda

    def _push(self, rec: _Rec, target) -> None:
        if rec.target is not target:
            self.trail.append((_undo_field, rec, "target", rec.target))
            rec.target = target
        self.trail.append((_undo_apush, self))
        self.agenda.append(rec)

    def _drain(self) -> None:
        while True:
            if self.fd._queue:
                self.fd.pump()
                continue
            if self.apos < len(self.agenda):
                rec = self.agenda[self.apos]
                self.trail.append((_undo_apop, self))
                self.apos += 1
                if rec.alive:
                    self._step(rec)
                continue
            break

    # -- parking

    def _park(self, rec: _Rec, tv: TailVar, key) -> None:
        bucket = tv.parked.get(key)
        created = bucket is None
        if created:
            bucket = Bucket(tv)
            tv.parked[key] = bucket
        bucket.recs.append(rec)
        self.trail.append((_undo_park, bucket, created, tv.parked, key))
        self.trail.append((_undo_field, rec, "parked_bucket", rec.parked_bucket))
        rec.parked_bucket = bucket

    def _unpark(self, rec: _Rec) -> None:
        bucket = rec.parked_bucket
        idx = bucket.recs.index(rec)
        bucket.recs.pop(idx)
        self.trail.append((_undo_unpark, bucket, idx, rec))
        self.trail.append((_undo_field, rec, "parked_bucket", bucket))
        rec.parked_bucket = None

    def _discard(self, rec: _Rec) -> None:
        if rec.parked_bucket is not None:
            self._unpark(rec)
        self.trail.append((_undo_field, rec, "alive", True))
        rec.alive = False

    def _set_disjuncts(self, rec: OrHoldsC, items: tuple) -> None:
        self.trail.append((_undo_field, rec, "disjuncts", rec.disjuncts))
        rec.disjuncts = items

    # -- public assertion surface (each call propagates or rolls back)

    def assert_not_holds(self, fluent: Fluent, target) -> None:
        self._run(lambda: self._push(NotHoldsC(fluent, target), target))

    def assert_not_holds_all(self, fluent: Fluent, target) -> None:
        self._run(lambda: self._push(NotHoldsAllC(fluent, target), target))

    def assert_or_holds(self, disjuncts, target) -> None:
        items = tuple(
            d if isinstance(d, (FluentD, EqD)) else FluentD(d) for d in disjuncts
        )
        self._run(lambda: self._push(OrHoldsC(items, target), target))

    def assert_duplicate_free(self, target) -> None:
        self._run(lambda: self._push(DupFreeC(target), target))

    def post_formula(self, fml) -> None:
        self._run(lambda: self.fd.post_formula(fml))

    def post_range(self, variables, lo: int, hi: int) -> None:
        vids = [v.id for v in variables]
        self._run(lambda: self.fd.post_range(vids, lo, hi))

    def bind_tail(self, tv: TailVar, fluent: Fluent, new_tail) -> None:
        self._run(lambda: self._bind_tail(tv, fluent, new_tail))

    # -- raw internals

    def _bind_tail(self, tv: TailVar, fluent: Fluent, new_tail) -> None:
        if tv.binding is not None:
            raise ValueError("tail is already bound")
        grown = Cons(fluent, new_tail)
        self.trail.append((_undo_bind, tv))
        tv.binding = grown
        fcode = fluent.functor.code
        closing = not isinstance(new_tail, TailVar)
        for key in list(tv.parked.keys()):
            bucket = tv.parked[key]
            if key == fcode or key == DF_KEY or key == CANCEL_KEY or closing:
                for rec in list(bucket.recs):
                    self._unpark(rec)
                    self._push(rec, tv)
            elif key == OR_KEY:
                for rec in list(bucket.recs):
                    if any(
                        isinstance(d, FluentD) and d.fluent.functor.code == fcode
                        for d in rec.disjuncts
                    ):
                        self._unpark(rec)
                        self._push(rec, tv)
                if bucket.recs:
                    self._move_bucket(bucket, tv, new_tail, key)
            else:
                self._move_bucket(bucket, tv, new_tail, key)

    def _move_bucket(self, bucket: Bucket, src: TailVar, dst: TailVar, key) -> None:
        if not bucket.recs:
            return
        del src.parked[key]
        if key in dst.parked:
            dest = dst.parked[key]
            for rec in list(bucket.recs):
                # rare: the fresh tail already gained a bucket during this bind
                bucket.recs.remove(rec)
                self.trail.append((_undo_unpark, bucket, 0, rec))
                dest.recs.append(rec)
                self.trail.append((_undo_park, dest, False, dst.parked, key))
                self.trail.append((_undo_field, rec, "parked_bucket", bucket))
                rec.parked_bucket = dest
            src.parked[key] = bucket
            return
        dst.parked[key] = bucket
        self.trail.append((_undo_move, bucket, src, dst, key))
        bucket.owner = dst

    # -- the rule set

    def _step(self, rec: _Rec) -> None:
        if isinstance(rec, NotHoldsC):
            self._step_neg(rec, universal=False)
        elif isinstance(rec, NotHoldsAllC):
            self._step_neg(rec, universal=True)
        elif isinstance(rec, OrHoldsC):
            self._step_or(rec)
        elif isinstance(rec, DupFreeC):
            self._step_dup(rec)
        elif isinstance(rec, CancelC):
            self._step_cancel(rec)
        elif isinstance(rec, CancelledC):
            self._step_cancelled(rec)
        else:
            raise TypeError(f"unknown constraint record {rec!r}")

    def _step_neg(self, rec, universal: bool) -> None:
        f = rec.fluent
        node = deref_node(rec.target)
        quant = FORALL if universal else EXISTS
        while isinstance(node, Cons):
            self.fd.post_formula(self.build_or_neq(quant, f, node.head))
            node = deref_node(node.tail)
        if node is NIL:
            self._discard(rec)
            return
        bucket = node.parked.get(f.functor.code)
        recs = bucket.recs if bucket is not None else ()
        for other in recs:
            if isinstance(other, NotHoldsAllC) and self.instance_of(f, other.fluent):
                self._discard(rec)  # subsumed by a universal constraint
                return
            if (
                not universal
                and isinstance(other, NotHoldsC)
                and self.identical(f, other.fluent)
            ):
                self._discard(rec)  # exact duplicate
                return
        if universal:
            for other in list(recs):
                if isinstance(other, (NotHoldsC, NotHoldsAllC)) and self.instance_of(
                    other.fluent, f
                ):
                    self._discard(other)
        self._unit_resolve(node, f, universal)
        self._push_target(rec, node)
        self._park(rec, node, f.functor.code)

    def _push_target(self, rec, node) -> None:
        if rec.target is not node:
            self.trail.append((_undo_field, rec, "target", rec.target))
            rec.target = node

    def _unit_resolve(self, tv: TailVar, f: Fluent, universal: bool) -> None:
        bucket = tv.parked.get(OR_KEY)
        if bucket is None:
            return
        for oh in list(bucket.recs):
            kept = []
            for d in oh.disjuncts:
                if isinstance(d, FluentD) and (
                    self.instance_of(d.fluent, f)
                    if universal
                    else self.identical(d.fluent, f)
                ):
                    continue
                kept.append(d)
            if len(kept) != len(oh.disjuncts):
                self._unpark(oh)
                self._set_disjuncts(oh, tuple(kept))
                self._push(oh, tv)

    def _step_or(self, rec: OrHoldsC) -> None:
        while True:
            items = rec.disjuncts
            if not items:
                raise Inconsistent("empty disjunction")
            # single positive disjunct: it must hold
            if len(items) == 1 and isinstance(items[0], FluentD):
                target = rec.target
                self._discard(rec)
                if not self._holds_assert(items[0].fluent, target):
                    raise Inconsistent("unsatisfiable singleton disjunction")
                return
            if all(isinstance(d, EqD) for d in items):
                self._discard(rec)
                self.fd.post_formula(build_or_and_eq(items))
                return
            node = deref_node(rec.target)
            if node is NIL:
                idx = next(
                    i for i, d in enumerate(items) if isinstance(d, FluentD)
                )
                self._set_disjuncts(rec, items[:idx] + items[idx + 1 :])
                continue
            changed = False
            for i, d in enumerate(items):
                if not isinstance(d, EqD):
                    continue
                pairs = list(zip(d.xs, d.ys))
                decided = [
                    self.fd.decided_atom(_eq_atom(x, y).atom) for x, y in pairs
                ]
                if all(v is True for v in decided):
                    self._discard(rec)  # the equality is forced; disjunction holds
                    return
                drop = any(v is False for v in decided)
                if not drop and pairs:
                    mark = len(self.trail)
                    try:
                        for x, y in pairs:
                            self.fd.post_atom(_eq_atom(x, y).atom)
                    except Inconsistent:
                        drop = True
                    self._undo_to(mark)
                if drop:
                    self._set_disjuncts(rec, items[:i] + items[i + 1 :])
                    changed = True
                    break
            if changed:
                continue
            if isinstance(node, TailVar):
                changed = self._or_resolve_against_parked(rec, node)
                if changed:
                    continue
                self._push_target(rec, node)
                self._park_or(rec, node)
                return
            # propagate through one list cell
            head = node.head
            moved: list = []
            for i, d in enumerate(rec.disjuncts):
                if isinstance(d, EqD):
                    moved.insert(0, d)
                    continue
                f1 = d.fluent
                if self.identical(f1, head):
                    self._discard(rec)
                    return
                if self.unifiable(f1, head):
                    moved.insert(0, d)
                    moved.insert(0, EqD(f1.args, head.args))
                else:
                    moved.insert(0, d)
            self._set_disjuncts(rec, tuple(moved))
            self._push_target(rec, node.tail)

    def _or_resolve_against_parked(self, rec: OrHoldsC, tv: TailVar) -> bool:
        kept = []
        changed = False
        for d in rec.disjuncts:
            if isinstance(d, FluentD):
                bucket = tv.parked.get(d.fluent.functor.code)
                hit = False
                if bucket is not None:
                    for other in bucket.recs:
                        if isinstance(other, NotHoldsC) and self.identical(
                            other.fluent, d.fluent
                        ):
                            hit = True
                            break
                        if isinstance(other, NotHoldsAllC) and self.instance_of(
                            d.fluent, other.fluent
                        ):
                            hit = True
                            break
                if hit:
                    changed = True
                    continue
            kept.append(d)
        if changed:
            self._set_disjuncts(rec, tuple(kept))
        return changed

    def _park_or(self, rec: OrHoldsC, tv: TailVar) -> None:
        bucket = tv.parked.get(OR_KEY)
        if bucket is not None:
            for other in bucket.recs:
                if self._same_disjuncts(other.disjuncts, rec.disjuncts):
                    self._discard(rec)
                    return
        self._park(rec, tv, OR_KEY)
        for d in rec.disjuncts:
            if isinstance(d, EqD):
                for t in d.xs + d.ys:
                    if isinstance(self.resolve(t), Var):
                        self.fd.watch(t.id, rec)

    def _same_disjuncts(self, a: tuple, b: tuple) -> bool:
        if len(a) != len(b):
            return False
        for x, y in zip(a, b):
            if isinstance(x, FluentD) != isinstance(y, FluentD):
                return False
            if isinstance(x, FluentD):
                if not self.identical(x.fluent, y.fluent):
                    return False
            elif x != y:
                return False
        return True

    def _step_dup(self, rec: DupFreeC) -> None:
        node = deref_node(rec.target)
        while isinstance(node, Cons):
            self._push(NotHoldsC(node.head, node.tail), node.tail)
            node = deref_node(node.tail)
        if node is NIL:
            self._discard(rec)
            return
        bucket = node.parked.get(DF_KEY)
        if bucket is not None and bucket.recs:
            self._discard(rec)  # one per tail suffices
            return
        self._push_target(rec, node)
        self._park(rec, node, DF_KEY)

    def _step_cancel(self, rec: CancelC) -> None:
        node = deref_node(rec.target)
        if not isinstance(node, TailVar):
            self._discard(rec)
            return
        f = rec.fluent
        bucket = node.parked.get(f.functor.code)
        if bucket is not None:
            for other in list(bucket.recs):
                if isinstance(other, (NotHoldsC, NotHoldsAllC)) and self.unifiable(
                    f, other.fluent
                ):
                    self._discard(other)
        orb = node.parked.get(OR_KEY)
        if orb is not None:
            for other in list(orb.recs):
                if any(
                    isinstance(d, FluentD) and self.unifiable(f, d.fluent)
                    for d in other.disjuncts
                ):
                    self._discard(other)
        cb = node.parked.get(CANCEL_KEY)
        if cb is not None:
            for other in cb.recs:
                if isinstance(other, CancelledC) and self.identical(f, other.fluent):
                    self._discard(other)
                    self._discard(rec)
                    return
        self._push_target(rec, node)
        self._park(rec, node, CANCEL_KEY)

    def _step_cancelled(self, rec: CancelledC) -> None:
        node = deref_node(rec.target)
        if not isinstance(node, TailVar):
            self._discard(rec)
            return
        cb = node.parked.get(CANCEL_KEY)
        if cb is not None:
            for other in cb.recs:
                if isinstance(other, CancelC) and self.identical(rec.fluent, other.fluent):
                    self._discard(other)
                    self._discard(rec)
                    return
        self._push_target(rec, node)
        self._park(rec, node, CANCEL_KEY)

    # -- holds (assertion mode): used by the singleton-disjunction rule

    def _holds_assert(self, f: Fluent, start) -> bool:
        """Commit the first alternative under which f consistently holds."""
        node = deref_node(start)
        while isinstance(node, Cons):
            head = node.head
            if self.identical(f, head):
                return True
            if f.functor == head.functor and len(f.args) == len(head.args):
                mark = len(self.trail)
                try:
                    self.unify_commit(f, head)
                    self._drain()
                    return True
                except Inconsistent:
                    self._undo_to(mark)
            node = deref_node(node.tail)
        if isinstance(node, TailVar):
            mark = len(self.trail)
            try:
                self._bind_tail(node, f, self.new_tail())
                self._drain()
                return True
            except Inconsistent:
                self._undo_to(mark)
        return False

    def _holds_split(self, f: Fluent, start):
        """Like _holds_assert but returns the state minus the matched fluent."""
        node = deref_node(start)
        prefix: list[Fluent] = []
        while isinstance(node, Cons):
            head = node.head
            if self.identical(f, head):
                return _rebuild(prefix, node.tail)
            if f.functor == head.functor and len(f.args) == len(head.args):
                mark = len(self.trail)
                try:
                    self.unify_commit(f, head)
                    self._drain()
                    return _rebuild(prefix, node.tail)
                except Inconsistent:
                    self._undo_to(mark)
            prefix.append(head)
            node = deref_node(node.tail)
        if isinstance(node, TailVar):
            mark = len(self.trail)
            try:
                fresh = self.new_tail()
                self._bind_tail(node, f, fresh)
                self._drain()
                return _rebuild(prefix, fresh)
            except Inconsistent:
                self._undo_to(mark)
        return None

    # -- introspection

    def parked_at(self, tv: TailVar) -> list:
        out = []
        for key, bucket in tv.parked.items():
            for rec in bucket.recs:
                if rec.alive:
                    out.append(rec)
        return out


def _rebuild(prefix: list[Fluent], node):
    for head in reversed(prefix):
        node = Cons(head, node)
    return node


# ---------------------------------------------------------------------------
# State handle


class StateSpec:
    """A view of one open or closed state list inside an engine."""

    __slots__ = ("engine", "root")

    def __init__(self, engine: Engine, root):
        self.engine = engine
        self.root = root

    def known(self) -> list[Fluent]:
        out = []
        node = deref_node(self.root)
        while isinstance(node, Cons):
            out.append(self.engine.canon(node.head))
            node = deref_node(node.tail)
        return out

    def tail_node(self):
        node = deref_node(self.root)
        while isinstance(node, Cons):
            node = deref_node(node.tail)
        return node

    def is_closed(self) -> bool:
        return self.tail_node() is NIL

    def tail_view(self) -> "StateSpec":
        return StateSpec(self.engine, self.tail_node())

    def prepend(self, fluent: Fluent) -> "StateSpec":
        return StateSpec(self.engine, Cons(fluent, self.root))

    def constraints(self) -> list:
        node = self.tail_node()
        if isinstance(node, TailVar):
            return self.engine.parked_at(node)
        return []

    def dump(self) -> str:
        lines = [f"known: {self._known_text()}"]
        lines.extend(self.constraint_lines())
        return "\n".join(lines)

    def _known_text(self) -> str:
        shown = ",".join(_show_fluent(f) for f in self.known())
        if self.is_closed():
            return f"[{shown}]"
        return f"[{shown} | _]"

    def constraint_lines(self) -> list[str]:
        eng = self.engine
        ranked = []
        for rec in self.constraints():
            if isinstance(rec, DupFreeC):
                ranked.append((0, "duplicate_free(Z)"))
            elif isinstance(rec, NotHoldsC):
                ranked.append((1, f"not_holds({_show_fluent(eng.canon(rec.fluent))}, Z)"))
            elif isinstance(rec, NotHoldsAllC):
                ranked.append(
                    (2, f"not_holds_all({_show_fluent(eng.canon(rec.fluent))}, Z)")
                )
            elif isinstance(rec, OrHoldsC):
                shown = sorted(_show_disjunct(eng, d) for d in rec.disjuncts)
                ranked.append((3, f"or_holds([{','.join(shown)}], Z)"))
            else:
                ranked.append((4, f"cancel_marker({_show_fluent(eng.canon(rec.fluent))}, Z)"))
        return [line for _, line in sorted(ranked)]


def _show_fluent(f: Fluent) -> str:
    if not f.args:
        return f.functor.text
    return f"{f.functor.text}({','.join(_show_arg(a) for a in f.args)})"


def _show_arg(a) -> str:
    if isinstance(a, Int):
        return str(a.value)
    if isinstance(a, Sym):
        return a.text
    return a.name if a.name else "_"


def _show_disjunct(eng: Engine, d) -> str:
    if isinstance(d, FluentD):
        return _show_fluent(eng.canon(d.fluent))
    xs = ",".join(_show_arg(eng.resolve(t)) for t in d.xs)
    ys = ",".join(_show_arg(eng.resolve(t)) for t in d.ys)
    return f"eq([{xs}],[{ys}])"
