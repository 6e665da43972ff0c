"""Finite-domain arithmetic sub-solver for constraint variables.

Sound but deliberately incomplete: conjunctions are split and posted
eagerly, disjunctions suspend and are only simplified when one of their
literals becomes decided, and disequality prunes by value elimination
once one side is fixed.  Equalities of the form ``x = y + c`` are kept in
a union-find structure with integer offsets, which makes the pervasive
coordinate-offset constraints near constant time.

Symbolic constants are represented by reserved negative codes, disjoint
from the non-negative integers used in the target domains; they may only
take part in (dis)equalities, never in arithmetic or orderings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Union

from .errors import Inconsistent


# ---------------------------------------------------------------------------
# Domains


@dataclass(frozen=True)
class Domain:
    """An integer interval with excluded values; ``None`` bounds are infinite."""

    lo: Optional[int] = None
    hi: Optional[int] = None
    holes: frozenset[int] = frozenset()

    def contains(self, v: int) -> bool:
        if self.lo is not None and v < self.lo:
            return False
        if self.hi is not None and v > self.hi:
            return False
        return v not in self.holes

    def singleton(self) -> Optional[int]:
        if self.lo is not None and self.lo == self.hi:
            return self.lo
        return None

    def is_finite(self) -> bool:
        return self.lo is not None and self.hi is not None

    def values(self) -> Iterable[int]:
        if not self.is_finite():
            raise ValueError("cannot enumerate an unbounded domain")
        return (v for v in range(self.lo, self.hi + 1) if v not in self.holes)

    def shift(self, c: int) -> "Domain":
        if c == 0:
            return self
        return Domain(
            None if self.lo is None else self.lo + c,
            None if self.hi is None else self.hi + c,
            frozenset(h + c for h in self.holes),
        )


TOP = Domain()


def _norm(lo, hi, holes) -> Optional[Domain]:
    """Tighten bounds past holes; None means the domain is empty."""
    if lo is not None:
        while lo in holes:
            lo += 1
    if hi is not None:
        while hi in holes:
            hi -= 1
    if lo is not None and hi is not None and lo > hi:
        return None
    holes = frozenset(
        h
        for h in holes
        if (lo is None or h > lo) and (hi is None or h < hi)
    )
    return Domain(lo, hi, holes)


def _meet(a: Domain, b: Domain) -> Optional[Domain]:
    lo = a.lo if b.lo is None else (b.lo if a.lo is None else max(a.lo, b.lo))
    hi = a.hi if b.hi is None else (b.hi if a.hi is None else min(a.hi, b.hi))
    return _norm(lo, hi, a.holes | b.holes)


def _without(d: Domain, v: int) -> Optional[Domain]:
    if not d.contains(v):
        return d
    return _norm(d.lo, d.hi, d.holes | {v})


# ---------------------------------------------------------------------------
# Linear expressions, atoms, formulas


@dataclass(frozen=True)
class LinExpr:
    """``const + sum(coef * var)`` with one term per variable, no zeros."""

    const: int = 0
    terms: tuple[tuple[int, int], ...] = ()  # (coef, varid)


def lin_const(c: int) -> LinExpr:
    return LinExpr(c, ())


def lin_var(vid: int, coef: int = 1, const: int = 0) -> LinExpr:
    if coef == 0:
        return LinExpr(const, ())
    return LinExpr(const, ((coef, vid),))


def lin_add(a: LinExpr, b: LinExpr) -> LinExpr:
    coefs: dict[int, int] = {}
    for c, v in a.terms + b.terms:
        coefs[v] = coefs.get(v, 0) + c
    terms = tuple((c, v) for v, c in sorted(coefs.items()) if c != 0)
    return LinExpr(a.const + b.const, terms)


def lin_neg(a: LinExpr) -> LinExpr:
    return LinExpr(-a.const, tuple((-c, v) for c, v in a.terms))


def lin_sub(a: LinExpr, b: LinExpr) -> LinExpr:
    return lin_add(a, lin_neg(b))


EQ, NE, LT, LE, GT, GE = "=", "!=", "<", "<=", ">", ">="


@dataclass(frozen=True)
class FdAtom:
    lhs: LinExpr
    op: str
    rhs: LinExpr


class _TrueF:
    def __repr__(self):
        return "TrueF"


class _FalseF:
    def __repr__(self):
        return "FalseF"


TRUE_F = _TrueF()
FALSE_F = _FalseF()


@dataclass(frozen=True)
class Atom:
    atom: FdAtom


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


FdFormula = Union[_TrueF, _FalseF, Atom, And, Or]


def atom(lhs: LinExpr, op: str, rhs: LinExpr) -> Atom:
    return Atom(FdAtom(lhs, op, rhs))


# Each atom reduces to ``expr REL 0`` with REL one of =, !=, <=.
_CANON = {
    EQ: (EQ, 1, 0),
    NE: (NE, 1, 0),
    LE: (LE, 1, 0),
    LT: (LE, 1, -1),
    GE: (LE, -1, 0),
    GT: (LE, -1, -1),
}


def _canon(a: FdAtom) -> tuple[LinExpr, str]:
    rel, sign, shift = _CANON[a.op]
    diff = lin_sub(a.lhs, a.rhs)
    if sign < 0:
        diff = lin_neg(diff)
    if shift:
        diff = lin_add(diff, lin_const(-shift))
    return diff, rel


# ---------------------------------------------------------------------------
# Trail undo helpers (module-level functions keep the trail allocation-light)


def _undo_dom(rec, old):
    rec.dom = old


def _undo_parent(rec):
    rec.parent = None
    rec.poff = 0


def _undo_size(rec, old):
    rec.size = old


def _undo_watch(rec, n):
    del rec.watchers[n:]


def _undo_field(obj, name, old):
    setattr(obj, name, old)


class _VarRec:
    __slots__ = ("parent", "poff", "dom", "watchers", "size")

    def __init__(self):
        self.parent: Optional[int] = None
        self.poff = 0
        self.dom = TOP
        self.watchers: list = []
        self.size = 1


class _LinProp:
    """Suspended linear (in)equality; re-examined when a variable changes."""

    __slots__ = ("expr", "rel", "dead")

    def __init__(self, expr: LinExpr, rel: str):
        self.expr = expr
        self.rel = rel
        self.dead = False

    def fd_wake(self, fd: "FdSolver"):
        fd._run_linear(self)


class _OrProp:
    """Suspended disjunction, simplified only via decided disjuncts."""

    __slots__ = ("items", "dead")

    def __init__(self, items: tuple):
        self.items = items
        self.dead = False

    def fd_wake(self, fd: "FdSolver"):
        fd._run_or(self)


class FdSolver:
    """Domains, offset union-find, and suspended propagators over one trail."""

    def __init__(self, trail: Optional[list] = None):
        self.trail = trail if trail is not None else []
        self.vars: dict[int, _VarRec] = {}
        self._queue: list = []
        self._pumping = False

    # -- bookkeeping

    def _rec(self, vid: int) -> _VarRec:
        rec = self.vars.get(vid)
        if rec is None:
            rec = _VarRec()
            self.vars[vid] = rec
        return rec

    def find(self, vid: int) -> tuple[int, int]:
        """Representative root and offset: value(vid) = value(root) + offset."""
        off = 0
        rec = self._rec(vid)
        while rec.parent is not None:
            off += rec.poff
            vid = rec.parent
            rec = self.vars[vid]
        return vid, off

    def domain(self, vid: int) -> Domain:
        root, off = self.find(vid)
        return self.vars[root].dom.shift(off)

    def value(self, vid: int) -> Optional[int]:
        return self.domain(vid).singleton()

    def mark(self) -> int:
        return len(self.trail)

    def undo_to(self, n: int) -> None:
        trail = self.trail
        while len(trail) > n:
            entry = trail.pop()
            entry[0](*entry[1:])

    # -- mutation primitives

    def _set_root_dom(self, root: int, new: Optional[Domain]) -> None:
        if new is None:
            raise Inconsistent("empty domain")
        rec = self.vars[root]
        if new == rec.dom:
            return
        self.trail.append((_undo_dom, rec, rec.dom))
        rec.dom = new
        self._wake_all(rec)

    def _wake_all(self, rec: _VarRec) -> None:
        for w in rec.watchers:
            self._schedule(w)

    def _schedule(self, prop) -> None:
        if not getattr(prop, "dead", False):
            self._queue.append(prop)

    def watch(self, vid: int, prop) -> None:
        root, _ = self.find(vid)
        rec = self.vars[root]
        self.trail.append((_undo_watch, rec, len(rec.watchers)))
        rec.watchers.append(prop)

    def pump(self) -> None:
        """Run suspended propagators to fixpoint."""
        if self._pumping:
            return
        self._pumping = True
        try:
            while self._queue:
                prop = self._queue.pop(0)
                if not getattr(prop, "dead", False):
                    prop.fd_wake(self)
        except BaseException:
            self._queue.clear()
            raise
        finally:
            self._pumping = False

    def assign(self, vid: int, value: int, is_symbol: bool = False) -> None:
        root, off = self.find(vid)
        if is_symbol and off != 0:
            raise ValueError("arithmetic on a symbolic constant")
        self._set_root_dom(root, _meet(self.vars[root].dom, Domain(value - off, value - off)))
        self.pump()

    def alias(self, x: int, y: int, c: int = 0) -> None:
        """Record value(x) = value(y) + c."""
        rx, ox = self.find(x)
        ry, oy = self.find(y)
        delta = oy + c - ox  # value(rx) = value(ry) + delta
        if rx == ry:
            if delta != 0:
                raise Inconsistent("conflicting alias offsets")
            return
        keep, gone = (rx, ry) if self.vars[rx].size >= self.vars[ry].size else (ry, rx)
        krec, grec = self.vars[keep], self.vars[gone]
        # value(gone) = value(keep) + goff
        goff = -delta if keep == rx else delta
        self.trail.append((_undo_parent, grec))
        grec.parent, grec.poff = keep, goff
        self.trail.append((_undo_size, krec, krec.size))
        krec.size += grec.size
        self.trail.append((_undo_watch, krec, len(krec.watchers)))
        krec.watchers.extend(grec.watchers)
        merged = _meet(krec.dom, grec.dom.shift(-goff))
        self._set_root_dom(keep, merged)
        self._wake_all(krec)  # an alias alone can decide atoms
        self.pump()

    # -- normalization over representatives

    def _normalize(self, expr: LinExpr) -> tuple[int, dict[int, int]]:
        const = expr.const
        coefs: dict[int, int] = {}
        for c, v in expr.terms:
            root, off = self.find(v)
            const += c * off
            sv = self.vars[root].dom.singleton()
            if sv is not None:
                const += c * sv
            else:
                coefs[root] = coefs.get(root, 0) + c
        return const, {r: c for r, c in coefs.items() if c != 0}

    def _bounds(self, const: int, coefs: dict[int, int]):
        lo, hi = const, const
        for root, c in coefs.items():
            dom = self.vars[root].dom
            a, b = (dom.lo, dom.hi) if c > 0 else (dom.hi, dom.lo)
            lo = None if (lo is None or a is None) else lo + c * a
            hi = None if (hi is None or b is None) else hi + c * b
        return lo, hi

    # -- posting

    def post_range(self, vids: Iterable[int], lo: int, hi: int) -> None:
        if lo > hi:
            raise ValueError("empty range bounds")
        for vid in vids:
            root, off = self.find(vid)
            self._set_root_dom(
                root, _meet(self.vars[root].dom, Domain(lo - off, hi - off))
            )
        self.pump()

    def post_formula(self, fml: FdFormula) -> None:
        if fml is TRUE_F:
            return
        if fml is FALSE_F:
            raise Inconsistent("false formula")
        if isinstance(fml, Atom):
            self.post_atom(fml.atom)
            return
        if isinstance(fml, And):
            for item in fml.items:
                self.post_formula(item)
            return
        if isinstance(fml, Or):
            prop = _OrProp(tuple(fml.items))
            self._run_or(prop)
            if not prop.dead:
                for vid in _formula_vars(fml):
                    self.watch(vid, prop)
            self.pump()
            return
        raise TypeError(f"not a formula: {fml!r}")

    def post_atom(self, a: FdAtom) -> None:
        expr, rel = _canon(a)
        const, coefs = self._normalize(expr)
        if rel == EQ:
            self._post_eq(expr, const, coefs)
        elif rel == NE:
            self._post_ne(expr, const, coefs)
        else:
            self._post_le(expr, const, coefs)
        self.pump()

    def _post_eq(self, expr, const, coefs) -> None:
        if not coefs:
            if const != 0:
                raise Inconsistent("failed ground equality")
            return
        if len(coefs) == 1:
            (root, c), = coefs.items()
            if const % c != 0:
                raise Inconsistent("non-integral equality")
            self._set_root_dom(
                root, _meet(self.vars[root].dom, Domain(-const // c, -const // c))
            )
            return
        if len(coefs) == 2:
            (r1, c1), (r2, c2) = coefs.items()
            if c1 == -c2 and const % c1 == 0:
                # c1*r1 + c2*r2 + const = 0  =>  r1 = r2 - const/c1
                self.alias(r1, r2, -const // c1)
                return
        self._suspend(_LinProp(expr, EQ))

    def _post_ne(self, expr, const, coefs) -> None:
        if not coefs:
            if const == 0:
                raise Inconsistent("failed ground disequality")
            return
        if len(coefs) == 1:
            (root, c), = coefs.items()
            if const % c == 0:
                self._set_root_dom(root, _without(self.vars[root].dom, -const // c))
            return
        self._suspend(_LinProp(expr, NE))

    def _post_le(self, expr, const, coefs) -> None:
        if not coefs:
            if const > 0:
                raise Inconsistent("failed ground ordering")
            return
        self._suspend(_LinProp(expr, LE))

    def _suspend(self, prop: _LinProp) -> None:
        self._run_linear(prop)
        if not prop.dead:
            for _, vid in prop.expr.terms:
                self.watch(vid, prop)

    def _kill(self, prop) -> None:
        self.trail.append((_undo_field, prop, "dead", False))
        prop.dead = True

    # -- propagator bodies

    def _run_linear(self, prop: _LinProp) -> None:
        const, coefs = self._normalize(prop.expr)
        rel = prop.rel
        if not coefs:
            ok = (const == 0) if rel == EQ else (const != 0) if rel == NE else const <= 0
            if not ok:
                raise Inconsistent("failed linear constraint")
            self._kill(prop)
            return
        lo, hi = self._bounds(const, coefs)
        if rel == NE:
            if len(coefs) == 1:
                (root, c), = coefs.items()
                if const % c == 0:
                    self._set_root_dom(root, _without(self.vars[root].dom, -const // c))
                self._kill(prop)
                return
            if (lo is not None and lo > 0) or (hi is not None and hi < 0):
                self._kill(prop)  # entailed
            elif lo == hi == 0:
                raise Inconsistent("failed disequality")
            return
        if rel == EQ:
            if (lo is not None and lo > 0) or (hi is not None and hi < 0):
                raise Inconsistent("failed equality")
            if len(coefs) == 1:
                (root, c), = coefs.items()
                if const % c != 0:
                    raise Inconsistent("non-integral equality")
                self._set_root_dom(
                    root, _meet(self.vars[root].dom, Domain(-const // c, -const // c))
                )
                self._kill(prop)
                return
            if len(coefs) == 2:
                (r1, c1), (r2, c2) = coefs.items()
                if c1 == -c2 and const % c1 == 0:
                    self._kill(prop)
                    self.alias(r1, r2, -const // c1)
                    return
            self._prune(const, coefs, upper=True)
            self._prune(const, coefs, upper=False)
            if lo == hi == 0:
                self._kill(prop)
            return
        # rel == LE
        if hi is not None and hi <= 0:
            self._kill(prop)
            return
        if lo is not None and lo > 0:
            raise Inconsistent("failed ordering")
        self._prune(const, coefs, upper=True)

    def _prune(self, const: int, coefs: dict[int, int], upper: bool) -> None:
        """Bounds-prune each variable of ``sum <= 0`` (or ``>= 0`` if not upper)."""
        for root, c in coefs.items():
            rest = const
            bounded = True
            for other, oc in coefs.items():
                if other == root:
                    continue
                dom = self.vars[other].dom
                if upper:
                    b = dom.lo if oc > 0 else dom.hi
                else:
                    b = dom.hi if oc > 0 else dom.lo
                if b is None:
                    bounded = False
                    break
                rest += oc * b
            if not bounded:
                continue
            rhs = -rest  # upper: c*root <= rhs ; lower: c*root >= rhs
            dom = self.vars[root].dom
            shrink_hi = upper if c > 0 else not upper
            if shrink_hi:
                v = _floor_div(rhs, c)
                new = _norm(dom.lo, v if dom.hi is None else min(dom.hi, v), dom.holes)
            else:
                v = _ceil_div(rhs, c)
                new = _norm(v if dom.lo is None else max(dom.lo, v), dom.hi, dom.holes)
            self._set_root_dom(root, new)

    def _run_or(self, prop: _OrProp) -> None:
        live = []
        for item in prop.items:
            d = self.decided_formula(item)
            if d is True:
                self._kill(prop)
                return
            if d is None:
                live.append(item)
        if not live:
            raise Inconsistent("empty disjunction")
        if len(live) != len(prop.items):
            self.trail.append((_undo_field, prop, "items", prop.items))
            prop.items = tuple(live)
        if len(live) == 1:
            self._kill(prop)
            self.post_formula(live[0])

    # -- entailment checks (sound, incomplete)

    def decided_atom(self, a: FdAtom) -> Optional[bool]:
        expr, rel = _canon(a)
        const, coefs = self._normalize(expr)
        lo, hi = self._bounds(const, coefs)
        outside = (lo is not None and lo > 0) or (hi is not None and hi < 0)
        if rel == LE:
            if hi is not None and hi <= 0:
                return True
            if lo is not None and lo > 0:
                return False
            return None
        hits_hole = False
        if len(coefs) == 1:
            (root, c), = coefs.items()
            if const % c != 0:
                hits_hole = True  # equality can never hold
            elif not self.vars[root].dom.contains(-const // c):
                hits_hole = True
        if rel == EQ:
            if lo == hi == 0:
                return True
            if outside or hits_hole:
                return False
            return None
        # rel == NE
        if lo == hi == 0:
            return False
        if outside or hits_hole:
            return True
        return None

    def decided_formula(self, fml: FdFormula) -> Optional[bool]:
        if fml is TRUE_F:
            return True
        if fml is FALSE_F:
            return False
        if isinstance(fml, Atom):
            return self.decided_atom(fml.atom)
        if isinstance(fml, And):
            out = True
            for item in fml.items:
                d = self.decided_formula(item)
                if d is False:
                    return False
                if d is None:
                    out = None
            return out
        if isinstance(fml, Or):
            out = False
            for item in fml.items:
                d = self.decided_formula(item)
                if d is True:
                    return True
                if d is None:
                    out = None
            return out
        raise TypeError(f"not a formula: {fml!r}")

    def is_consistent(self) -> bool:
        """Failed operations raise and roll back, so a live store is consistent."""
        return True


def _floor_div(a: int, b: int) -> int:
    return a // b


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def _formula_vars(fml: FdFormula, acc: Optional[list] = None) -> list[int]:
    if acc is None:
        acc = []
    if isinstance(fml, Atom):
        for _, v in fml.atom.lhs.terms + fml.atom.rhs.terms:
            if v not in acc:
                acc.append(v)
    elif isinstance(fml, (And, Or)):
        for item in fml.items:
            _formula_vars(item, acc)
    return acc
