"""Fluent terms: interned symbols, flat argument terms, and term relations.

Fluents are a functor applied to a flat list of arguments (integers,
interned symbolic constants, or variables); arguments never nest, so
unification and matching are linear scans and no occurs-check is needed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union


@dataclass(frozen=True)
class Sym:
    """An interned symbolic constant or functor name.

    Codes are negative and unique per text, so symbol codes never collide
    with the non-negative integers used as fluent arguments, and equal text
    always means equal code (uniqueness of names).
    """

    code: int
    text: str = field(compare=False)

    def __repr__(self):
        return f"Sym({self.text})"


@dataclass(frozen=True)
class Var:
    """A variable argument, identified by a session-unique id."""

    id: int
    name: Optional[str] = field(default=None, compare=False)

    def __repr__(self):
        return f"Var({self.name or '_%d' % self.id})"


@dataclass(frozen=True)
class Int:
    """An integer argument."""

    value: int

    def __repr__(self):
        return f"Int({self.value})"


ArgTerm = Union[Var, Int, Sym]


@dataclass(frozen=True)
class Fluent:
    functor: Sym
    args: tuple[ArgTerm, ...] = ()

    def is_schematic(self) -> bool:
        return any(isinstance(a, Var) for a in self.args)

    def __repr__(self):
        return format_fluent(self)


class Interner:
    """Append-only text-to-code table shared by functors and constants."""

    def __init__(self):
        self._by_text: dict[str, Sym] = {}
        self._arity: dict[int, int] = {}

    def symbol(self, text: str) -> Sym:
        sym = self._by_text.get(text)
        if sym is None:
            sym = Sym(-(len(self._by_text) + 1), text)
            self._by_text[text] = sym
        return sym

    def check_arity(self, functor: Sym, arity: int) -> None:
        """Functor arity is fixed once seen; a mismatch is an authoring error."""
        known = self._arity.setdefault(functor.code, arity)
        if known != arity:
            raise ValueError(
                f"functor {functor.text}/{arity} conflicts with earlier use "
                f"{functor.text}/{known}"
            )


def unify(a: Fluent, b: Fluent) -> Optional[dict[Var, ArgTerm]]:
    """Most general unifier of two fluents, or None.

    Arguments are flat, so the result maps variables directly to argument
    terms and applying it to both sides yields identical fluents.
    """
    if a.functor != b.functor or len(a.args) != len(b.args):
        return None
    subst: dict[Var, ArgTerm] = {}

    def walk(t: ArgTerm) -> ArgTerm:
        while isinstance(t, Var) and t in subst:
            t = subst[t]
        return t

    for x, y in zip(a.args, b.args):
        x, y = walk(x), walk(y)
        if x == y:
            continue
        if isinstance(x, Var):
            subst[x] = y
        elif isinstance(y, Var):
            subst[y] = x
        else:
            return None
    return subst


def is_instance(g: Fluent, f: Fluent) -> bool:
    """True iff g results from f by substituting f's variables.

    Variables of g are treated as constants, so a ground pattern never
    generalizes and distinct variables of g stay distinct.
    """
    if g.functor != f.functor or len(g.args) != len(f.args):
        return False
    theta: dict[Var, ArgTerm] = {}
    for garg, farg in zip(g.args, f.args):
        if isinstance(farg, Var):
            bound = theta.setdefault(farg, garg)
            if bound != garg:
                return False
        elif farg != garg:
            return False
    return True


def identical(a: Fluent, b: Fluent) -> bool:
    """Same term, including variable identity."""
    return a == b


def not_unifiable(a: Fluent, b: Fluent) -> bool:
    return unify(a, b) is None


def apply_subst(f: Fluent, subst: dict[Var, ArgTerm]) -> Fluent:
    def walk(t: ArgTerm) -> ArgTerm:
        while isinstance(t, Var) and t in subst:
            t = subst[t]
        return t

    return Fluent(f.functor, tuple(walk(a) for a in f.args))


def format_arg(t: ArgTerm) -> str:
    if isinstance(t, Int):
        return str(t.value)
    if isinstance(t, Sym):
        return t.text
    return t.name or f"_{t.id}"


def format_fluent(f: Fluent) -> str:
    if not f.args:
        return f.functor.text
    return f"{f.functor.text}({','.join(format_arg(a) for a in f.args)})"


_TOKEN = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*|-?\d+|[(),])")


class FluentParser:
    """Parses the textual fluent syntax ``functor(arg,...)``.

    Integers are integer arguments, lowercase names are symbolic constants,
    and names starting with an uppercase letter or underscore are variables.
    A bare ``_`` is a fresh variable at each occurrence; named variables are
    shared through the supplied environment.
    """

    def __init__(self, interner: Interner, fresh_var, varenv: Optional[dict] = None):
        self.interner = interner
        self.fresh_var = fresh_var
        self.varenv = varenv if varenv is not None else {}

    def parse(self, text: str) -> Fluent:
        tokens = self._tokenize(text)
        fluent, pos = self._fluent(tokens, 0)
        if pos != len(tokens):
            raise ValueError(f"trailing input in fluent: {text!r}")
        return fluent

    def parse_arg(self, token: str) -> ArgTerm:
        if re.fullmatch(r"-?\d+", token):
            return Int(int(token))
        if token == "_":
            return self.fresh_var(None)
        if token[0] == "_" or token[0].isupper():
            var = self.varenv.get(token)
            if var is None:
                var = self.fresh_var(token)
                self.varenv[token] = var
            return var
        return self.interner.symbol(token)

    def _tokenize(self, text: str) -> list[str]:
        tokens, pos = [], 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m:
                if text[pos:].strip():
                    raise ValueError(f"bad fluent syntax: {text!r}")
                break
            tokens.append(m.group(1))
            pos = m.end()
        return tokens

    def _fluent(self, tokens: list[str], pos: int) -> tuple[Fluent, int]:
        if pos >= len(tokens) or not re.fullmatch(r"[a-z][A-Za-z0-9_]*", tokens[pos]):
            raise ValueError("expected functor name")
        functor = self.interner.symbol(tokens[pos])
        pos += 1
        args: list[ArgTerm] = []
        if pos < len(tokens) and tokens[pos] == "(":
            pos += 1
            while True:
                if pos >= len(tokens):
                    raise ValueError("unterminated argument list")
                args.append(self.parse_arg(tokens[pos]))
                pos += 1
                if pos < len(tokens) and tokens[pos] == ",":
                    pos += 1
                    continue
                if pos < len(tokens) and tokens[pos] == ")":
                    pos += 1
                    break
                raise ValueError("expected ',' or ')' in argument list")
        self.interner.check_arity(functor, len(args))
        return Fluent(functor, tuple(args)), pos
