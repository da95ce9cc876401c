"""A small ML with shared references and parallel evaluation.

Surface syntax, OCaml-flavoured:

    fun x -> e            abstraction        let x = e in e    binding
    e1 e2                 application        e1; e2            sequencing
    e1 || e2              parallel, result ()
    var e                 allocate a reference holding e
    !e                    read               e1 := e2          write
    e1 + e2               addition           e1 = e2           equality
    if e then e else e                       Y                 fixpoint
    0 1 2 ...  tt  ff  ()                    bot               divergence

Application evaluates both sides in parallel, so races between the
operands of `+`, `=` or `||` are real.  Sequencing only happens
between a function body and its argument.

References are the sole effect.  Pure reduction leaves them alone;
machines carry a store and a set of public locations, and reads and
writes on public locations become visible transition labels.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class MLTypeError(Exception):
    pass


# ----------------------------------------------------------------------
# types


@dataclass(frozen=True)
class MLType:
    pass


@dataclass(frozen=True)
class BaseT(MLType):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class ArrowT(MLType):
    arg: MLType
    res: MLType

    def __str__(self):
        a = str(self.arg)
        if isinstance(self.arg, ArrowT):
            a = f"({a})"
        return f"{a} -> {self.res}"


@dataclass(frozen=True)
class TVar(MLType):
    """Inference placeholder; never survives parse_and_type."""

    idx: int

    def __str__(self):
        return f"'t{self.idx}"


UNIT = BaseT("unit")
NAT = BaseT("nat")
BOOL = BaseT("bool")
REF = BaseT("ref")
BASE_TYPES = {"unit": UNIT, "nat": NAT, "bool": BOOL, "ref": REF}


def type_str(t: MLType) -> str:
    return str(t)


# ----------------------------------------------------------------------
# terms


@dataclass(frozen=True)
class MLTerm:
    pass


@dataclass(frozen=True)
class MLVar(MLTerm):
    name: str


@dataclass(frozen=True)
class Lam(MLTerm):
    var: str
    body: MLTerm
    ann: MLType | None = field(default=None, compare=False)


@dataclass(frozen=True)
class App(MLTerm):
    fun: MLTerm
    arg: MLTerm


@dataclass(frozen=True)
class NumLit(MLTerm):
    value: int


@dataclass(frozen=True)
class BoolLit(MLTerm):
    value: bool


@dataclass(frozen=True)
class UnitLit(MLTerm):
    pass


@dataclass(frozen=True)
class Const(MLTerm):
    name: str


@dataclass(frozen=True)
class If(MLTerm):
    cond: MLTerm
    then: MLTerm
    els: MLTerm


# how many value arguments a constant consumes before it can fire
CONST_ARITY = {"plus": 2, "equal": 2, "get": 1, "set": 2, "var": 1,
               "Y": 2, "bot": 0}


def spine(t: MLTerm):
    """Head and argument list of an application chain."""
    args = []
    while isinstance(t, App):
        args.append(t.arg)
        t = t.fun
    args.reverse()
    return t, args


def is_value(t: MLTerm) -> bool:
    """Values: variables, abstractions, literals, plus constants still
    waiting for arguments.  `Y V` counts as a value: the unfolding rule
    only fires on `Y V V'`, and the fixpoint would be stuck otherwise.
    """
    if isinstance(t, (MLVar, Lam, NumLit, BoolLit, UnitLit)):
        return True
    if isinstance(t, Const):
        return t.name != "bot"
    if isinstance(t, App):
        head, args = spine(t)
        if isinstance(head, Const) and head.name != "bot":
            return (len(args) < CONST_ARITY[head.name]
                    and all(is_value(a) for a in args))
    return False


def free_vars(t: MLTerm) -> frozenset:
    if isinstance(t, MLVar):
        return frozenset((t.name,))
    if isinstance(t, Lam):
        return free_vars(t.body) - {t.var}
    if isinstance(t, App):
        return free_vars(t.fun) | free_vars(t.arg)
    if isinstance(t, If):
        return free_vars(t.cond) | free_vars(t.then) | free_vars(t.els)
    return frozenset()


def _fresh_name(base: str, avoid) -> str:
    if base not in avoid:
        return base
    i = 0
    while f"{base}_{i}" in avoid:
        i += 1
    return f"{base}_{i}"


def subst(t: MLTerm, x: str, v: MLTerm) -> MLTerm:
    """Capture-avoiding substitution of ``v`` for ``x``."""
    if isinstance(t, MLVar):
        return v if t.name == x else t
    if isinstance(t, Lam):
        if t.var == x:
            return t
        if t.var in free_vars(v):
            fresh = _fresh_name(t.var, free_vars(v) | free_vars(t.body))
            body = subst(t.body, t.var, MLVar(fresh))
            return Lam(fresh, subst(body, x, v), t.ann)
        return Lam(t.var, subst(t.body, x, v), t.ann)
    if isinstance(t, App):
        return App(subst(t.fun, x, v), subst(t.arg, x, v))
    if isinstance(t, If):
        return If(subst(t.cond, x, v), subst(t.then, x, v),
                  subst(t.els, x, v))
    return t


# ----------------------------------------------------------------------
# printing


def _atom_str(t: MLTerm) -> str:
    s = term_str(t)
    if isinstance(t, (MLVar, NumLit, BoolLit, UnitLit, Const)):
        return s
    return f"({s})"


def term_str(t: MLTerm) -> str:
    if isinstance(t, MLVar):
        return t.name
    if isinstance(t, NumLit):
        return str(t.value)
    if isinstance(t, BoolLit):
        return "tt" if t.value else "ff"
    if isinstance(t, UnitLit):
        return "()"
    if isinstance(t, Const):
        return t.name
    if isinstance(t, Lam):
        return f"fun {t.var} -> {term_str(t.body)}"
    if isinstance(t, If):
        return (f"if {term_str(t.cond)} then {term_str(t.then)}"
                f" else {term_str(t.els)}")
    head, args = spine(t)
    if isinstance(head, Const) and len(args) == 2 and \
            head.name in ("plus", "equal", "set"):
        op = {"plus": "+", "equal": "=", "set": ":="}[head.name]
        return f"{_atom_str(args[0])} {op} {_atom_str(args[1])}"
    if isinstance(head, Const) and head.name == "get" and len(args) == 1:
        return f"!{_atom_str(args[0])}"
    return " ".join(_atom_str(p) for p in [head] + args)


# ----------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_']*)"
                    r"|(->|\|\||:=|[();:+=!]))")
_KEYWORDS = {"fun", "let", "in", "if", "then", "else"}
_CONST_NAMES = {"plus", "equal", "get", "set", "var", "Y", "bot"}


def _tokenize(src: str):
    out = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            if src[pos:].strip():
                raise SyntaxError(f"bad character {src[pos:].strip()[0]!r} "
                                  f"at offset {pos}")
            break
        num, ident, sym = m.groups()
        if num is not None:
            out.append(("num", int(num), m.start(1)))
        elif ident is not None:
            out.append(("ident", ident, m.start(2)))
        else:
            out.append(("sym", sym, m.start(3)))
        pos = m.end()
    out.append(("eof", None, len(src)))
    return out


class _MLParser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def eat_sym(self, s: str) -> bool:
        k, v, _ = self.peek()
        if k == "sym" and v == s:
            self.i += 1
            return True
        return False

    def expect(self, kind, val):
        k, v, p = self.next()
        if k != kind or v != val:
            raise SyntaxError(f"expected {val!r} at offset {p}, got {v!r}")

    def ident(self) -> str:
        k, v, p = self.next()
        if k != "ident" or v in _KEYWORDS or v in _CONST_NAMES:
            raise SyntaxError(f"expected a name at offset {p}, got {v!r}")
        return v

    # ---- types (for ascriptions) ----

    def type_atom(self) -> MLType:
        k, v, p = self.next()
        if k == "ident" and v in BASE_TYPES:
            return BASE_TYPES[v]
        if k == "sym" and v == "(":
            t = self.type_expr()
            self.expect("sym", ")")
            return t
        raise SyntaxError(f"expected a type at offset {p}, got {v!r}")

    def type_expr(self) -> MLType:
        left = self.type_atom()
        if self.eat_sym("->"):
            return ArrowT(left, self.type_expr())
        return left

    # ---- terms ----

    def expr(self) -> MLTerm:
        k, v, _ = self.peek()
        if k == "ident" and v == "fun":
            self.next()
            if self.eat_sym("("):
                x = self.ident()
                self.expect("sym", ":")
                ann = self.type_expr()
                self.expect("sym", ")")
            else:
                x, ann = self.ident(), None
            self.expect("sym", "->")
            return Lam(x, self.expr(), ann)
        if k == "ident" and v == "let":
            self.next()
            x = self.ident()
            self.expect("sym", "=")
            rhs = self.expr()
            self.expect("ident", "in")
            return App(Lam(x, self.expr()), rhs)
        if k == "ident" and v == "if":
            self.next()
            c = self.expr()
            self.expect("ident", "then")
            a = self.expr()
            self.expect("ident", "else")
            return If(c, a, self.expr())
        return self.seq()

    def seq(self) -> MLTerm:
        left = self.par()
        if self.eat_sym(";"):
            return App(Lam("_", self.expr()), left)
        return left

    def par(self) -> MLTerm:
        left = self.assign()
        while self.eat_sym("||"):
            right = self.assign()
            left = App(App(Lam("_", Lam("_'", UnitLit())), left), right)
        return left

    def assign(self) -> MLTerm:
        left = self.cmp()
        if self.eat_sym(":="):
            return App(App(Const("set"), left), self.cmp())
        return left

    def cmp(self) -> MLTerm:
        left = self.sum()
        if self.eat_sym("="):
            return App(App(Const("equal"), left), self.sum())
        return left

    def sum(self) -> MLTerm:
        left = self.app()
        while self.eat_sym("+"):
            left = App(App(Const("plus"), left), self.app())
        return left

    def app(self) -> MLTerm:
        out = self.prefix()
        while True:
            k, v, _ = self.peek()
            if (k == "num" or (k == "ident" and v not in _KEYWORDS)
                    or (k == "sym" and v in ("(", "!"))):
                out = App(out, self.prefix())
            else:
                return out

    def prefix(self) -> MLTerm:
        if self.eat_sym("!"):
            return App(Const("get"), self.prefix())
        return self.atom()

    def atom(self) -> MLTerm:
        k, v, p = self.next()
        if k == "num":
            return NumLit(v)
        if k == "ident":
            if v == "tt":
                return BoolLit(True)
            if v == "ff":
                return BoolLit(False)
            if v in _CONST_NAMES:
                return Const(v)
            if v in ("fun", "let", "if"):
                self.i -= 1
                return self.expr()
            if v in _KEYWORDS:
                raise SyntaxError(f"unexpected keyword {v!r} at offset {p}")
            return MLVar(v)
        if k == "sym" and v == "(":
            if self.eat_sym(")"):
                return UnitLit()
            e = self.expr()
            if self.eat_sym(":"):
                ann = self.type_expr()
                self.expect("sym", ")")
                return _Ascribe(e, ann)
            self.expect("sym", ")")
            return e
        raise SyntaxError(f"unexpected {v!r} at offset {p}")


@dataclass(frozen=True)
class _Ascribe(MLTerm):
    """Parse-time type ascription; erased by parse_and_type."""

    term: MLTerm
    ann: MLType


def parse_ml(src: str) -> MLTerm:
    p = _MLParser(src)
    t = p.expr()
    k, v, pos = p.peek()
    if k != "eof":
        raise SyntaxError(f"trailing input at offset {pos}: {v!r}")
    return t


# ----------------------------------------------------------------------
# typing: plain unification, no polymorphism


class _Unifier:
    def __init__(self):
        self.sub: dict = {}
        self.count = 0

    def fresh(self) -> TVar:
        self.count += 1
        return TVar(self.count)

    def find(self, t: MLType) -> MLType:
        while isinstance(t, TVar) and t in self.sub:
            t = self.sub[t]
        return t

    def zonk(self, t: MLType) -> MLType:
        t = self.find(t)
        if isinstance(t, ArrowT):
            return ArrowT(self.zonk(t.arg), self.zonk(t.res))
        return t

    def occurs(self, v: TVar, t: MLType) -> bool:
        t = self.find(t)
        if t == v:
            return True
        if isinstance(t, ArrowT):
            return self.occurs(v, t.arg) or self.occurs(v, t.res)
        return False

    def unify(self, a: MLType, b: MLType, rule: str) -> None:
        a, b = self.find(a), self.find(b)
        if a == b:
            return
        if isinstance(a, TVar):
            if self.occurs(a, b):
                raise MLTypeError(f"rule {rule}: circular type")
            self.sub[a] = b
            return
        if isinstance(b, TVar):
            self.unify(b, a, rule)
            return
        if isinstance(a, ArrowT) and isinstance(b, ArrowT):
            self.unify(a.arg, b.arg, rule)
            self.unify(a.res, b.res, rule)
            return
        raise MLTypeError(f"rule {rule}: expected {b}, got {a}")


def _const_type(name: str, u: _Unifier) -> MLType:
    if name == "plus":
        return ArrowT(NAT, ArrowT(NAT, NAT))
    if name == "equal":
        return ArrowT(NAT, ArrowT(NAT, BOOL))
    if name == "get":
        return ArrowT(REF, NAT)
    if name == "set":
        return ArrowT(REF, ArrowT(NAT, UNIT))
    if name == "var":
        return ArrowT(NAT, REF)
    if name == "Y":
        st = ArrowT(u.fresh(), u.fresh())
        return ArrowT(ArrowT(st, st), st)
    if name == "bot":
        return u.fresh()
    raise MLTypeError(f"unknown constant {name}")


def _infer(t: MLTerm, env: dict, u: _Unifier) -> tuple[MLTerm, MLType]:
    """Returns the term with ascriptions erased, and its type."""
    if isinstance(t, MLVar):
        if t.name not in env:
            raise MLTypeError(f"rule var: unbound name {t.name}")
        return t, env[t.name]
    if isinstance(t, NumLit):
        return t, NAT
    if isinstance(t, BoolLit):
        return t, BOOL
    if isinstance(t, UnitLit):
        return t, UNIT
    if isinstance(t, Const):
        return t, _const_type(t.name, u)
    if isinstance(t, Lam):
        a = t.ann if t.ann is not None else u.fresh()
        body, res = _infer(t.body, {**env, t.var: a}, u)
        return Lam(t.var, body), ArrowT(a, res)
    if isinstance(t, App):
        fun, ft = _infer(t.fun, env, u)
        arg, at = _infer(t.arg, env, u)
        res = u.fresh()
        u.unify(ArrowT(at, res), ft, "app")
        return App(fun, arg), res
    if isinstance(t, If):
        cond, ct = _infer(t.cond, env, u)
        u.unify(ct, BOOL, "if")
        then, tt = _infer(t.then, env, u)
        els, et = _infer(t.els, env, u)
        u.unify(tt, et, "if")
        return If(cond, then, els), tt
    if isinstance(t, _Ascribe):
        inner, it = _infer(t.term, env, u)
        u.unify(it, t.ann, "ascription")
        return inner, t.ann
    raise MLTypeError(f"cannot type {t!r}")


def _default_unit(t: MLType, u: _Unifier) -> MLType:
    t = u.zonk(t)
    if isinstance(t, TVar):
        return UNIT
    if isinstance(t, ArrowT):
        return ArrowT(_default_unit(t.arg, u), _default_unit(t.res, u))
    return t


def parse_and_type(src: str, env: dict | None = None):
    """Parses and types a term.

    Free variables take their types from ``env`` when given, fresh
    inference variables otherwise; types left unconstrained default to
    unit.  Returns the term (ascriptions erased), its type, and the
    context of its free variables.
    """
    term = parse_ml(src) if isinstance(src, str) else src
    u = _Unifier()
    ctx = dict(env or {})
    for name in sorted(free_vars(term)):
        ctx.setdefault(name, u.fresh())
    term, ty = _infer(term, ctx, u)
    ty = _default_unit(ty, u)
    ctx = {x: _default_unit(tx, u) for x, tx in ctx.items()
           if x in free_vars(term)}
    return term, ty, ctx


def typecheck_term(term: MLTerm, env: dict) -> MLType:
    """Types a bare term in a fixed context."""
    u = _Unifier()
    term2, ty = _infer(term, dict(env), u)
    return _default_unit(ty, u)


# ----------------------------------------------------------------------
# pure reduction


def _root_steps(t: MLTerm) -> list[tuple[MLTerm, bool]]:
    """Redexes at the root; the flag marks fixpoint unfoldings."""
    out = []
    if isinstance(t, App):
        if isinstance(t.fun, Lam) and is_value(t.arg):
            out.append((subst(t.fun.body, t.fun.var, t.arg), False))
        head, args = spine(t)
        if isinstance(head, Const) and len(args) == CONST_ARITY.get(
                head.name, -1):
            if head.name == "plus" and all(isinstance(a, NumLit)
                                           for a in args):
                out.append((NumLit(args[0].value + args[1].value), False))
            elif head.name == "equal" and all(isinstance(a, NumLit)
                                              for a in args):
                out.append((BoolLit(args[0].value == args[1].value), False))
            elif head.name == "Y" and all(is_value(a) for a in args):
                v, v2 = args
                out.append((App(App(v, App(Const("Y"), v)), v2), True))
    elif isinstance(t, If) and isinstance(t.cond, BoolLit):
        out.append((t.then if t.cond.value else t.els, False))
    return out


def _positions(t: MLTerm):
    """Subterms in evaluation position, with their rebuilders.  Both
    sides of an application count: operands run in parallel."""
    yield t, lambda s: s
    if isinstance(t, App):
        for sub, rb in _positions(t.fun):
            yield sub, lambda s, rb=rb: App(rb(s), t.arg)
        for sub, rb in _positions(t.arg):
            yield sub, lambda s, rb=rb: App(t.fun, rb(s))
    elif isinstance(t, If):
        for sub, rb in _positions(t.cond):
            yield sub, lambda s, rb=rb: If(rb(s), t.then, t.els)


def pure_step(t: MLTerm) -> list[MLTerm]:
    """All one-step pure successors.  Reference operations do not move."""
    out = []
    seen = set()
    for sub, rb in _positions(t):
        for nxt, _ in _root_steps(sub):
            whole = rb(nxt)
            if whole not in seen:
                seen.add(whole)
                out.append(whole)
    return out


class Diverged:
    """Marker for a pure run that exhausted its fixpoint budget."""

    def __repr__(self):
        return "Diverged"


DIVERGED = Diverged()


def normalize_pure(t: MLTerm, *, max_steps: int = 2000,
                   y_budget: int = 16):
    """Drives pure reduction to a normal form, taking the leftmost
    step each time.  Returns DIVERGED once the step or fixpoint budget
    runs out."""
    unfolds = 0
    for _ in range(max_steps):
        chosen = None
        for sub, rb in _positions(t):
            roots = _root_steps(sub)
            if roots:
                nxt, is_y = roots[0]
                chosen = (rb(nxt), is_y)
                break
        if chosen is None:
            return t
        t, is_y = chosen
        if is_y:
            unfolds += 1
            if unfolds > y_budget:
                return DIVERGED
    return DIVERGED


def y_approximant(k: int) -> MLTerm:
    """Finite stand-ins for the fixpoint: level 0 always diverges, and
    each level lets the functional call one layer deeper."""
    t = Lam("phi", Lam("x", Const("bot")))
    for _ in range(k):
        deeper = Lam("y", App(App(t, MLVar("phi")), MLVar("y")))
        t = Lam("phi", Lam("x", App(App(MLVar("phi"), deeper), MLVar("x"))))
    return t


def expand_y(t: MLTerm, k: int) -> MLTerm:
    """Replaces the fixpoint constant by its level-k approximant."""
    if isinstance(t, Const) and t.name == "Y":
        return y_approximant(k)
    if isinstance(t, Lam):
        return Lam(t.var, expand_y(t.body, k), t.ann)
    if isinstance(t, App):
        return App(expand_y(t.fun, k), expand_y(t.arg, k))
    if isinstance(t, If):
        return If(expand_y(t.cond, k), expand_y(t.then, k),
                  expand_y(t.els, k))
    return t


# ----------------------------------------------------------------------
# machines


@dataclass(frozen=True)
class TransitionLabel:
    kind: str  # tau | read | write
    loc: str | None = None
    value: int | None = None

    def __str__(self):
        if self.kind == "tau":
            return "tau"
        return f"{self.kind.capitalize()} {self.loc} {self.value}"


TAU = TransitionLabel("tau")


@dataclass(frozen=True)
class Machine:
    """A semiclosed term with a store.  ``public`` lists the locations
    the environment watches; the rest stay silent."""

    term: MLTerm
    store: tuple
    public: frozenset

    @staticmethod
    def make(term, store: dict | None = None,
             public=()) -> "Machine":
        if isinstance(term, str):
            term = parse_ml(term)
        store = dict(store or {})
        public = frozenset(public)
        if not public <= store.keys():
            raise MLTypeError("public locations must be in the store")
        m = Machine(term, tuple(sorted(store.items())), public)
        m.machine_type()  # semiclosedness check
        return m

    def mu(self) -> dict:
        return dict(self.store)

    def machine_type(self) -> MLType:
        env = {a: REF for a, _ in self.store}
        missing = free_vars(self.term) - env.keys()
        if missing:
            raise MLTypeError(
                f"not semiclosed: unbound locations {sorted(missing)}")
        ty = typecheck_term(self.term, env)
        if isinstance(ty, ArrowT):
            raise MLTypeError(f"not semiclosed: functional type {ty}")
        return ty

    def with_term(self, term, extra: dict | None = None) -> "Machine":
        store = self.mu()
        store.update(extra or {})
        return Machine(term, tuple(sorted(store.items())), self.public)


def _machine_root(m: Machine, sub: MLTerm, rebuild):
    """Store transitions available when ``sub`` sits in evaluation
    position."""
    out = []
    store = m.mu()
    head, args = spine(sub) if isinstance(sub, App) else (None, None)
    if isinstance(head, Const):
        if head.name == "get" and len(args) == 1 and \
                isinstance(args[0], MLVar) and args[0].name in store:
            x = args[0].name
            lab = (TransitionLabel("read", x, store[x])
                   if x in m.public else TAU)
            out.append((lab, m.with_term(rebuild(NumLit(store[x])))))
        elif head.name == "set" and len(args) == 2 and \
                isinstance(args[0], MLVar) and args[0].name in store and \
                isinstance(args[1], NumLit):
            x, n = args[0].name, args[1].value
            lab = (TransitionLabel("write", x, n)
                   if x in m.public else TAU)
            out.append((lab, m.with_term(rebuild(UnitLit()), {x: n})))
        elif head.name == "var" and len(args) == 1 and \
                isinstance(args[0], NumLit):
            i = 0
            while f"r{i}" in store:
                i += 1
            r = f"r{i}"
            out.append((TAU, m.with_term(rebuild(MLVar(r)),
                                         {r: args[0].value})))
    return out


def machine_step(m: Machine) -> list[tuple[TransitionLabel, Machine]]:
    """All labelled successors: pure steps are silent, reads and
    writes on public locations show, allocation extends the store with
    a fresh private cell."""
    out = []
    seen = set()
    for sub, rb in _positions(m.term):
        cands = [(TAU, m.with_term(rb(nxt)))
                 for nxt, _ in _root_steps(sub)]
        cands.extend(_machine_root(m, sub, rb))
        for lab, m2 in cands:
            key = (lab, m2)
            if key not in seen:
                seen.add(key)
                out.append((lab, m2))
    return out


# ----------------------------------------------------------------------
# weak bisimulation on machines


def _tau_closure(m: Machine, bound: int, max_states: int):
    from ..strategies import StateSpaceTooLarge
    seen = {m}
    frontier = [m]
    for _ in range(bound):
        nxt = []
        for s in frontier:
            for lab, s2 in machine_step(s):
                if lab.kind == "tau" and s2 not in seen:
                    seen.add(s2)
                    nxt.append(s2)
                    if len(seen) > max_states:
                        raise StateSpaceTooLarge(
                            "silent closure grew past the bound")
        if not nxt:
            break
        frontier = nxt
    return seen


def machine_weak_bisim(m1: Machine, m2: Machine, depth: int = 8, *,
                       tau_bound: int = 24,
                       max_states: int = 20000) -> dict:
    """Bounded weak bisimulation on the machine transition system.

    Each round one side takes a strong step; the other may absorb it
    into silence (for tau) or answer with tau* label tau* (for a
    visible label).  Both machines must have the same non-functional
    type.

    Returns a verdict dict; ``witness`` lists the unmatchable steps on
    failure.
    """
    t1, t2 = m1.machine_type(), m2.machine_type()
    if t1 != t2:
        raise MLTypeError(f"machines of different types: {t1} vs {t2}")
    memo: dict = {}

    def weak_answers(m: Machine, lab: TransitionLabel):
        pre = _tau_closure(m, tau_bound, max_states)
        if lab.kind == "tau":
            return pre
        out = set()
        for s in pre:
            for lab2, s2 in machine_step(s):
                if lab2 == lab:
                    out |= _tau_closure(s2, tau_bound, max_states)
        return out

    def run(a: Machine, b: Machine, d: int):
        key = (a, b, d)
        if key in memo:
            return memo[key]
        result = (True, None)
        if d > 0:
            for side, atk, dfn in (("left", a, b), ("right", b, a)):
                for lab, nxt in machine_step(atk):
                    matched = False
                    subw = None
                    for ans in weak_answers(dfn, lab):
                        pair = (nxt, ans) if side == "left" else (ans, nxt)
                        ok, w = run(pair[0], pair[1], d - 1)
                        if ok:
                            matched = True
                            break
                        subw = w
                    if not matched:
                        entry = {"side": side, "label": str(lab)}
                        result = (False, [entry] + (subw or []))
                        break
                if not result[0]:
                    break
        memo[key] = result
        return result

    ok, witness = run(m1, m2, depth)
    return {"equivalent": ok, "depth": depth,
            "verdict": (f"equivalent up to depth {depth}" if ok
                        else "distinguished"),
            "witness": witness}
