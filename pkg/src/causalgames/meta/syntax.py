"""Syntax of the session-typed process metalanguage.

Types:  &{l1.T1, ...} input choice, +{...} output choice, (T || U)
parallel (1 is the empty parallel), !T replicable server, ?T client
side.  Numeral label families are kept intensionally: a branch
``Return(#)`` stands for one branch per natural number, materialized
under a numeric cap only when building games.

Processes: 0, P | Q, (nu a b : T) P, branching a?{...}, selection
a!l(xs).P, promotion !a(xs).P, codereliction coder a(xs).P,
dereliction ?a[xs].P, plus named recursive definitions with an unfold
budget standing in for infinite terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Union

# ----------------------------------------------------------------------
# labels


@dataclass(frozen=True)
class NumExpr:
    pass


@dataclass(frozen=True)
class Lit(NumExpr):
    value: int

    def __str__(self):
        return str(self.value)


@dataclass(frozen=True)
class NVar(NumExpr):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Add(NumExpr):
    left: NumExpr
    right: NumExpr

    def __str__(self):
        return f"{self.left}+{self.right}"


def num_eval(e: NumExpr, env: dict[str, int]) -> int:
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, NVar):
        if e.name not in env:
            raise KeyError(f"unbound numeric variable {e.name}")
        return env[e.name]
    if isinstance(e, Add):
        return num_eval(e.left, env) + num_eval(e.right, env)
    raise TypeError(e)


def num_vars(e: NumExpr) -> set[str]:
    if isinstance(e, Lit):
        return set()
    if isinstance(e, NVar):
        return {e.name}
    if isinstance(e, Add):
        return num_vars(e.left) | num_vars(e.right)
    raise TypeError(e)


@dataclass(frozen=True)
class Label:
    """A message label: a base token with optional arguments.

    Arguments are plain tokens (``tt``, ``lam``), integers, or numeric
    expressions awaiting substitution.  A label is ground when no
    argument is a non-literal expression.
    """

    base: str
    args: tuple = ()

    def ground(self) -> bool:
        return all(not isinstance(a, NumExpr) or isinstance(a, Lit)
                   for a in self.args)

    def render(self) -> str:
        if not self.args:
            return self.base
        parts = []
        for a in self.args:
            if isinstance(a, Lit):
                parts.append(str(a.value))
            elif isinstance(a, NumExpr):
                parts.append(str(a))
            else:
                parts.append(str(a))
        return f"{self.base}({','.join(parts)})"

    def __str__(self):
        return self.render()


def ground_label(base: str, *args) -> Label:
    coerced = tuple(Lit(a) if isinstance(a, int) else a for a in args)
    return Label(base, coerced)


def parse_label_string(s: str) -> tuple[str, tuple[str, ...]]:
    """Split a rendered label into base and raw argument tokens."""
    s = s.strip()
    if "(" not in s:
        return s, ()
    if not s.endswith(")"):
        raise SyntaxError(f"bad label {s!r}")
    base, rest = s.split("(", 1)
    inner = rest[:-1]
    if inner == "":
        return base, ("",)  # the unit token label like Call(())
    return base, tuple(t.strip() for t in inner.split(","))


# ----------------------------------------------------------------------
# session types


class SessionType:
    pass


@dataclass(frozen=True)
class TBranch:
    label: Label          # ground
    cont: "SessionType"


@dataclass(frozen=True)
class TFamily:
    """One branch per natural number: labels ``base(0)``, ``base(1)``, ...

    The continuation does not depend on the numeral; this is all the
    generality the translations need, since base-type payloads carry no
    further protocol.
    """

    base: str
    cont: "SessionType"


@dataclass(frozen=True)
class With(SessionType):
    branches: tuple

    def __post_init__(self):
        _check_branches(self.branches)


@dataclass(frozen=True)
class Plus(SessionType):
    branches: tuple

    def __post_init__(self):
        _check_branches(self.branches)


@dataclass(frozen=True)
class Par(SessionType):
    parts: tuple


@dataclass(frozen=True)
class Bang(SessionType):
    inner: SessionType


@dataclass(frozen=True)
class Ques(SessionType):
    inner: SessionType


UNIT = Par(())


def _check_branches(branches):
    seen = set()
    for b in branches:
        key = b.label.render() if isinstance(b, TBranch) else ("#family", b.base)
        if key in seen:
            raise ValueError(f"duplicate branch label {key}")
        seen.add(key)


def dual(t: SessionType) -> SessionType:
    if isinstance(t, With):
        return Plus(tuple(_dual_branch(b) for b in t.branches))
    if isinstance(t, Plus):
        return With(tuple(_dual_branch(b) for b in t.branches))
    if isinstance(t, Par):
        return Par(tuple(dual(p) for p in t.parts))
    if isinstance(t, Bang):
        return Ques(dual(t.inner))
    if isinstance(t, Ques):
        return Bang(dual(t.inner))
    raise TypeError(t)


def _dual_branch(b):
    if isinstance(b, TBranch):
        return TBranch(b.label, dual(b.cont))
    return TFamily(b.base, dual(b.cont))


def rooted(t: SessionType) -> bool:
    """A type with a unique head action: anything but a parallel."""
    return not isinstance(t, Par)


def slot_count(t: SessionType) -> int:
    """How many channel names a value of this type elaborates to."""
    if rooted(t):
        return 1
    return sum(slot_count(p) for p in t.parts)


def elaborate(names: tuple[str, ...], t: SessionType) -> list[tuple[str, SessionType]]:
    """Flatten a type over a name list into rooted context entries."""
    if rooted(t):
        if len(names) != 1:
            raise ValueError(f"type {type_str(t)} needs 1 name, got {list(names)}")
        return [(names[0], t)]
    out = []
    i = 0
    for p in t.parts:
        k = slot_count(p)
        out.extend(elaborate(names[i:i + k], p))
        i += k
    if i != len(names):
        raise ValueError(f"type {type_str(t)} needs {i} names, got {len(names)}")
    return out


def branch_lookup(t: Union[With, Plus], label: Label):
    """Find the branch matched by a ground label; None if absent.

    Returns the continuation type.  Family branches match ``base(k)``
    for any numeral k.
    """
    for b in t.branches:
        if isinstance(b, TBranch):
            if b.label.render() == label.render():
                return b.cont
        else:
            if (label.base == b.base and len(label.args) == 1
                    and isinstance(label.args[0], Lit)):
                return b.cont
    return None


def materialize_branches(t: Union[With, Plus], num_cap: int) -> list[tuple[Label, SessionType]]:
    out = []
    for b in t.branches:
        if isinstance(b, TBranch):
            out.append((b.label, b.cont))
        else:
            for n in range(num_cap):
                out.append((ground_label(b.base, n), b.cont))
    return out


def type_str(t: SessionType) -> str:
    if isinstance(t, Par):
        if not t.parts:
            return "1"
        return "(" + " || ".join(type_str(p) for p in t.parts) + ")"
    if isinstance(t, (With, Plus)):
        mark = "&" if isinstance(t, With) else "+"
        bs = []
        for b in t.branches:
            if isinstance(b, TBranch):
                bs.append(f"{b.label.render()}.{type_str(b.cont)}")
            else:
                bs.append(f"{b.base}(#).{type_str(b.cont)}")
        return mark + "{" + ", ".join(bs) + "}"
    if isinstance(t, Bang):
        return "!" + type_str(t.inner)
    if isinstance(t, Ques):
        return "?" + type_str(t.inner)
    raise TypeError(t)


# ----------------------------------------------------------------------
# processes


class Process:
    pass


@dataclass(frozen=True)
class Nil(Process):
    pass


@dataclass(frozen=True)
class Fork(Process):
    parts: tuple  # of Process; the empty fork is not allowed (use Nil)


@dataclass(frozen=True)
class Cut(Process):
    a: str
    b: str
    type: SessionType | None
    body: Process


@dataclass(frozen=True)
class PBranch:
    label: Label                 # ground
    names: tuple[str, ...]
    body: Process


@dataclass(frozen=True)
class PFamily:
    """Branch over all numerals ``base(k)``, binding the numeral to var."""

    base: str
    var: str
    names: tuple[str, ...]
    body: Process


@dataclass(frozen=True)
class BranchP(Process):
    chan: str
    branches: tuple  # of PBranch | PFamily


@dataclass(frozen=True)
class SelectP(Process):
    chan: str
    label: Label                 # may contain numeric expressions
    names: tuple[str, ...]
    body: Process


@dataclass(frozen=True)
class Prom(Process):
    chan: str
    names: tuple[str, ...]
    body: Process


@dataclass(frozen=True)
class Coder(Process):
    chan: str
    names: tuple[str, ...]
    body: Process


@dataclass(frozen=True)
class Der(Process):
    chan: str
    names: tuple[str, ...]
    body: Process


@dataclass(frozen=True)
class NumIf(Process):
    """Numeral-equality schema: behaves as then_p when left = right."""

    left: NumExpr
    right: NumExpr
    then_p: Process
    else_p: Process


@dataclass(frozen=True)
class CallDef(Process):
    name: str
    chans: tuple[str, ...]
    nums: tuple[NumExpr, ...] = ()


@dataclass(frozen=True)
class Definition:
    name: str
    chan_params: tuple[str, ...]
    num_params: tuple[str, ...]
    body: Process


DefEnv = dict


def fork(parts: Iterable[Process]) -> Process:
    parts = [p for p in parts if not isinstance(p, Nil)]
    flat = []
    for p in parts:
        if isinstance(p, Fork):
            flat.extend(p.parts)
        else:
            flat.append(p)
    if not flat:
        return Nil()
    if len(flat) == 1:
        return flat[0]
    return Fork(tuple(flat))


# ----------------------------------------------------------------------
# free names / substitution


def free_channels(p: Process) -> frozenset[str]:
    if isinstance(p, Nil):
        return frozenset()
    if isinstance(p, Fork):
        out = frozenset()
        for q in p.parts:
            out |= free_channels(q)
        return out
    if isinstance(p, Cut):
        return free_channels(p.body) - {p.a, p.b}
    if isinstance(p, BranchP):
        out = frozenset({p.chan})
        for b in p.branches:
            out |= free_channels(b.body) - frozenset(b.names)
        return out
    if isinstance(p, SelectP):
        return frozenset({p.chan}) | (free_channels(p.body) - frozenset(p.names))
    if isinstance(p, (Prom, Coder, Der)):
        return frozenset({p.chan}) | (free_channels(p.body) - frozenset(p.names))
    if isinstance(p, NumIf):
        return free_channels(p.then_p) | free_channels(p.else_p)
    if isinstance(p, CallDef):
        return frozenset(p.chans)
    raise TypeError(p)


class _Fresh:
    def __init__(self, avoid: set[str]):
        self.avoid = set(avoid)
        self.n = 0

    def __call__(self, hint: str) -> str:
        base = hint.split("~")[0]
        while True:
            self.n += 1
            cand = f"{base}~{self.n}"
            if cand not in self.avoid:
                self.avoid.add(cand)
                return cand


def rename_channels(p: Process, mapping: dict[str, str], fresh: _Fresh | None = None) -> Process:
    """Capture-avoiding simultaneous channel renaming."""
    if fresh is None:
        avoid = set(mapping.values()) | set(mapping.keys()) | set(free_channels(p))
        fresh = _Fresh(avoid)

    def look(x: str) -> str:
        return mapping.get(x, x)

    def bind(names: tuple[str, ...], m: dict[str, str]):
        m2 = dict(m)
        new = []
        for x in names:
            if x in fresh.avoid or x in m2.values():
                nx = fresh(x)
            else:
                nx = x
                fresh.avoid.add(x)
            m2[x] = nx
            new.append(nx)
        # drop shadowed entries mapping to themselves is fine
        return tuple(new), m2

    def go(p: Process, m: dict[str, str]) -> Process:
        if isinstance(p, Nil):
            return p
        if isinstance(p, Fork):
            return Fork(tuple(go(q, m) for q in p.parts))
        if isinstance(p, Cut):
            (na, nb), m2 = bind((p.a, p.b), m)
            return Cut(na, nb, p.type, go(p.body, m2))
        if isinstance(p, BranchP):
            bs = []
            for b in p.branches:
                names, m2 = bind(b.names, m)
                if isinstance(b, PBranch):
                    bs.append(PBranch(b.label, names, go(b.body, m2)))
                else:
                    bs.append(PFamily(b.base, b.var, names, go(b.body, m2)))
            return BranchP(m.get(p.chan, p.chan), tuple(bs))
        if isinstance(p, SelectP):
            names, m2 = bind(p.names, m)
            return SelectP(m.get(p.chan, p.chan), p.label, names, go(p.body, m2))
        if isinstance(p, (Prom, Coder, Der)):
            names, m2 = bind(p.names, m)
            return type(p)(m.get(p.chan, p.chan), names, go(p.body, m2))
        if isinstance(p, NumIf):
            return NumIf(p.left, p.right, go(p.then_p, m), go(p.else_p, m))
        if isinstance(p, CallDef):
            return CallDef(p.name, tuple(m.get(c, c) for c in p.chans), p.nums)
        raise TypeError(p)

    return go(p, dict(mapping))


def subst_nums(p: Process, env: dict[str, int]) -> Process:
    """Substitute numeral values for numeric variables, resolving NumIf."""

    def num(e: NumExpr) -> NumExpr:
        free = num_vars(e) & set(env)
        if not free:
            return e
        if num_vars(e) <= set(env):
            return Lit(num_eval(e, env))
        if isinstance(e, Add):
            return Add(num(e.left), num(e.right))
        if isinstance(e, NVar) and e.name in env:
            return Lit(env[e.name])
        return e

    def lab(l: Label) -> Label:
        return Label(l.base, tuple(
            num(a) if isinstance(a, NumExpr) else a for a in l.args
        ))

    def go(p: Process) -> Process:
        if isinstance(p, Nil):
            return p
        if isinstance(p, Fork):
            return Fork(tuple(go(q) for q in p.parts))
        if isinstance(p, Cut):
            return Cut(p.a, p.b, p.type, go(p.body))
        if isinstance(p, BranchP):
            bs = []
            for b in p.branches:
                if isinstance(b, PBranch):
                    bs.append(PBranch(lab(b.label), b.names, go(b.body)))
                else:
                    inner_env = {k: v for k, v in env.items() if k != b.var}
                    bs.append(PFamily(b.base, b.var, b.names,
                                      subst_nums(b.body, inner_env)))
            return BranchP(p.chan, tuple(bs))
        if isinstance(p, SelectP):
            return SelectP(p.chan, lab(p.label), p.names, go(p.body))
        if isinstance(p, (Prom, Coder, Der)):
            return type(p)(p.chan, p.names, go(p.body))
        if isinstance(p, NumIf):
            lv, rv = num(p.left), num(p.right)
            if isinstance(lv, Lit) and isinstance(rv, Lit):
                return go(p.then_p) if lv.value == rv.value else go(p.else_p)
            return NumIf(lv, rv, go(p.then_p), go(p.else_p))
        if isinstance(p, CallDef):
            return CallDef(p.name, p.chans, tuple(num(e) for e in p.nums))
        raise TypeError(p)

    return go(p)


def unfold(p: Process, defs: dict[str, Definition], budget: int) -> Process:
    """Expand named definitions ``budget`` layers deep; deeper calls become 0."""

    def go(p: Process, b: int) -> Process:
        if isinstance(p, Nil):
            return p
        if isinstance(p, Fork):
            return fork(go(q, b) for q in p.parts)
        if isinstance(p, Cut):
            return Cut(p.a, p.b, p.type, go(p.body, b))
        if isinstance(p, BranchP):
            bs = []
            for br in p.branches:
                if isinstance(br, PBranch):
                    bs.append(PBranch(br.label, br.names, go(br.body, b)))
                else:
                    bs.append(PFamily(br.base, br.var, br.names, go(br.body, b)))
            return BranchP(p.chan, tuple(bs))
        if isinstance(p, SelectP):
            return SelectP(p.chan, p.label, p.names, go(p.body, b))
        if isinstance(p, (Prom, Coder, Der)):
            return type(p)(p.chan, p.names, go(p.body, b))
        if isinstance(p, NumIf):
            return NumIf(p.left, p.right, go(p.then_p, b), go(p.else_p, b))
        if isinstance(p, CallDef):
            if b <= 0:
                return Nil()
            d = defs[p.name]
            if len(d.chan_params) != len(p.chans) or len(d.num_params) != len(p.nums):
                raise ValueError(f"arity mismatch calling {p.name}")
            body = rename_channels(d.body, dict(zip(d.chan_params, p.chans)))
            env = {}
            rest = {}
            for var, e in zip(d.num_params, p.nums):
                if isinstance(e, Lit):
                    env[var] = e.value
                else:
                    rest[var] = e
            body = subst_nums(body, env)
            if rest:
                body = _subst_num_exprs(body, rest)
            return go(body, b - 1)
        raise TypeError(p)

    return go(p, budget)


def _subst_num_exprs(p: Process, env: dict[str, NumExpr]) -> Process:
    """Substitute open numeric expressions (used by symbolic unfolding)."""

    def num(e: NumExpr) -> NumExpr:
        if isinstance(e, Lit):
            return e
        if isinstance(e, NVar):
            return env.get(e.name, e)
        if isinstance(e, Add):
            return Add(num(e.left), num(e.right))
        raise TypeError(e)

    def lab(l: Label) -> Label:
        return Label(l.base, tuple(
            num(a) if isinstance(a, NumExpr) else a for a in l.args
        ))

    def go(p: Process) -> Process:
        if isinstance(p, Nil):
            return p
        if isinstance(p, Fork):
            return Fork(tuple(go(q) for q in p.parts))
        if isinstance(p, Cut):
            return Cut(p.a, p.b, p.type, go(p.body))
        if isinstance(p, BranchP):
            bs = []
            for b in p.branches:
                if isinstance(b, PBranch):
                    bs.append(PBranch(lab(b.label), b.names, go(b.body)))
                else:
                    inner = {k: v for k, v in env.items() if k != b.var}
                    bs.append(PFamily(b.base, b.var, b.names,
                                      _subst_num_exprs(b.body, inner)))
            return BranchP(p.chan, tuple(bs))
        if isinstance(p, SelectP):
            return SelectP(p.chan, lab(p.label), p.names, go(p.body))
        if isinstance(p, (Prom, Coder, Der)):
            return type(p)(p.chan, p.names, go(p.body))
        if isinstance(p, NumIf):
            return NumIf(num(p.left), num(p.right), go(p.then_p), go(p.else_p))
        if isinstance(p, CallDef):
            return CallDef(p.name, p.chans, tuple(num(e) for e in p.nums))
        raise TypeError(p)

    return go(p)


# ----------------------------------------------------------------------
# printing


def proc_str(p: Process) -> str:
    if isinstance(p, Nil):
        return "0"
    if isinstance(p, Fork):
        return " | ".join(
            f"({proc_str(q)})" if isinstance(q, Fork) else proc_str(q)
            for q in p.parts
        )
    if isinstance(p, Cut):
        ann = f" : {type_str(p.type)}" if p.type is not None else ""
        body = proc_str(p.body)
        if isinstance(p.body, Fork):
            body = f"({body})"
        return f"(nu {p.a} {p.b}{ann}) {body}"
    if isinstance(p, BranchP):
        bs = []
        for b in p.branches:
            names = f"({','.join(b.names)})" if b.names else ""
            if isinstance(b, PBranch):
                head = b.label.render()
            else:
                head = f"{b.base}(#{b.var})"
            bs.append(f"{head}{names}.{_wrap(b.body)}" if not isinstance(b.body, Nil)
                      else f"{head}{names}")
        return f"{p.chan}?{{{' | '.join(bs)}}}"
    if isinstance(p, SelectP):
        names = f"({','.join(p.names)})" if p.names else ""
        tail = "" if isinstance(p.body, Nil) else f".{_wrap(p.body)}"
        return f"{p.chan}!{p.label.render()}{names}{tail}"
    if isinstance(p, Prom):
        return f"!{p.chan}({','.join(p.names)}).{_wrap(p.body)}"
    if isinstance(p, Coder):
        return f"coder {p.chan}({','.join(p.names)}).{_wrap(p.body)}"
    if isinstance(p, Der):
        tail = "" if isinstance(p.body, Nil) else f".{_wrap(p.body)}"
        return f"?{p.chan}[{','.join(p.names)}]{tail}"
    if isinstance(p, NumIf):
        return (f"ifnum {p.left}={p.right} then {_wrap(p.then_p)} "
                f"else {_wrap(p.else_p)}")
    if isinstance(p, CallDef):
        nums = f"; {', '.join(map(str, p.nums))}" if p.nums else ""
        return f"{p.name}({', '.join(p.chans)}{nums})"
    raise TypeError(p)


def _wrap(p: Process) -> str:
    s = proc_str(p)
    if isinstance(p, (Fork, Cut)):
        return f"({s})"
    return s


# ----------------------------------------------------------------------
# parsing


class _Tok:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self, s: str) -> bool:
        self.skip_ws()
        return self.text.startswith(s, self.pos)

    def eat(self, s: str) -> bool:
        if self.peek(s):
            self.pos += len(s)
            return True
        return False

    def expect(self, s: str):
        if not self.eat(s):
            raise SyntaxError(f"expected {s!r} at ...{self.text[self.pos:self.pos+25]!r}")

    def ident(self) -> str:
        self.skip_ws()
        i = self.pos
        while i < len(self.text) and (self.text[i].isalnum() or self.text[i] in "_'"):
            i += 1
        if i == self.pos:
            raise SyntaxError(f"expected name at ...{self.text[self.pos:self.pos+25]!r}")
        out = self.text[self.pos:i]
        self.pos = i
        return out

    def peek_kw(self, kw: str) -> bool:
        self.skip_ws()
        end = self.pos + len(kw)
        if not self.text.startswith(kw, self.pos):
            return False
        return end >= len(self.text) or not (self.text[end].isalnum() or self.text[end] in "_'")

    def eat_kw(self, kw: str) -> bool:
        if self.peek_kw(kw):
            self.pos += len(kw)
            return True
        return False

    def expect_kw(self, kw: str):
        if not self.eat_kw(kw):
            raise SyntaxError(f"expected {kw!r} at ...{self.text[self.pos:self.pos+25]!r}")

    def done(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)


def parse_type(src: str) -> SessionType:
    tok = _Tok(src)
    t = _parse_type(tok)
    if not tok.done():
        raise SyntaxError(f"trailing input: {tok.text[tok.pos:]!r}")
    return t


def _parse_type(tok: _Tok) -> SessionType:
    if tok.eat("1"):
        return UNIT
    if tok.eat("!"):
        return Bang(_parse_type(tok))
    if tok.eat("?"):
        return Ques(_parse_type(tok))
    if tok.peek("+{") or tok.peek("&{"):
        kind = Plus if tok.eat("+") else (tok.eat("&") and With)
        tok.expect("{")
        branches = []
        while True:
            label = _parse_type_label(tok)
            tok.expect(".")
            cont = _parse_type(tok)
            if label.endswith("(#)"):
                branches.append(TFamily(label[:-3], cont))
            else:
                base, args = parse_label_string(label)
                coerced = tuple(int(a) if a.isdigit() else a for a in args)
                branches.append(TBranch(ground_label(base, *coerced), cont))
            if not tok.eat(","):
                break
        tok.expect("}")
        return kind(tuple(branches))
    if tok.eat("("):
        parts = [_parse_type(tok)]
        while tok.eat("||"):
            parts.append(_parse_type(tok))
        tok.expect(")")
        if len(parts) == 1:
            # plain grouping
            return parts[0]
        return Par(tuple(parts))
    raise SyntaxError(f"bad type at ...{tok.text[tok.pos:tok.pos+25]!r}")


def _parse_type_label(tok: _Tok) -> str:
    tok.skip_ws()
    i = tok.pos
    depth = 0
    while i < len(tok.text):
        c = tok.text[i]
        if c == "(":
            depth += 1
        elif c == ")":
            if depth == 0:
                break
            depth -= 1
        elif depth == 0 and c in ".,}{":
            break
        i += 1
    out = tok.text[tok.pos:i].strip()
    if not out:
        raise SyntaxError("empty label")
    tok.pos = i
    return out


def parse_process(src: str) -> tuple[Process, dict[str, Definition]]:
    """Parse a process, possibly preceded by ``def Name(chans; nums) = P in`` blocks."""
    tok = _Tok(src)
    defs: dict[str, Definition] = {}
    while tok.peek_kw("def"):
        tok.eat_kw("def")
        name = tok.ident()
        tok.expect("(")
        chans, nums = [], []
        if not tok.peek(")"):
            if not tok.peek(";"):
                chans.append(tok.ident())
                while tok.eat(","):
                    chans.append(tok.ident())
            if tok.eat(";"):
                nums.append(tok.ident())
                while tok.eat(","):
                    nums.append(tok.ident())
        tok.expect(")")
        tok.expect("=")
        body = _parse_proc(tok, set(nums))
        tok.expect_kw("in")
        defs[name] = Definition(name, tuple(chans), tuple(nums), body)
    p = _parse_proc(tok, set())
    if not tok.done():
        raise SyntaxError(f"trailing input: {tok.text[tok.pos:]!r}")
    return p, defs


def _parse_proc(tok: _Tok, numvars: set[str]) -> Process:
    parts = [_parse_proc_atom(tok, numvars)]
    while True:
        tok.skip_ws()
        # '|' but not '||'
        if tok.text.startswith("|", tok.pos) and not tok.text.startswith("||", tok.pos):
            tok.pos += 1
            parts.append(_parse_proc_atom(tok, numvars))
        else:
            break
    return fork(parts) if len(parts) > 1 else parts[0]


def _parse_num_expr(tok: _Tok, numvars: set[str]) -> NumExpr:
    def atom() -> NumExpr:
        tok.skip_ws()
        if tok.text[tok.pos:tok.pos + 1].isdigit():
            i = tok.pos
            while i < len(tok.text) and tok.text[i].isdigit():
                i += 1
            v = int(tok.text[tok.pos:i])
            tok.pos = i
            return Lit(v)
        name = tok.ident()
        return NVar(name)

    e = atom()
    while tok.eat("+"):
        e = Add(e, atom())
    return e


def _parse_label(tok: _Tok, numvars: set[str]) -> Label:
    base = tok.ident()
    args: list = []
    if tok.eat("("):
        if not tok.peek(")"):
            while True:
                tok.skip_ws()
                c = tok.text[tok.pos:tok.pos + 1]
                if c == "(":  # the unit token ()
                    tok.expect("(")
                    tok.expect(")")
                    args.append("()")
                elif c.isdigit():
                    args.append(_parse_num_expr(tok, numvars))
                else:
                    j = tok.pos
                    name = tok.ident()
                    if tok.peek("+") or name in numvars:
                        tok.pos = j
                        args.append(_parse_num_expr(tok, numvars))
                    else:
                        args.append(name)
                if not tok.eat(","):
                    break
        tok.expect(")")
    norm = []
    for a in args:
        if isinstance(a, Lit):
            norm.append(a)
        else:
            norm.append(a)
    return Label(base, tuple(norm))


PAYLOAD_TOKENS = frozenset({"tt", "ff", "lam", "ref", "()"})


def _parse_select_group(tok: _Tok, numvars: set[str]) -> list:
    """One parenthesized group after a selection label.

    Elements are numeric expressions, payload tokens, or identifiers;
    whether the group carries arguments or binds names is decided by
    the caller from the element kinds.
    """
    tok.expect("(")
    out: list = []
    if not tok.peek(")"):
        while True:
            tok.skip_ws()
            c = tok.text[tok.pos:tok.pos + 1]
            if c == "(":
                tok.expect("(")
                tok.expect(")")
                out.append("()")
            elif c.isdigit():
                out.append(_parse_num_expr(tok, numvars))
            else:
                j = tok.pos
                nm = tok.ident()
                if tok.peek("+") or nm in numvars:
                    tok.pos = j
                    out.append(_parse_num_expr(tok, numvars))
                else:
                    out.append(nm)
            if not tok.eat(","):
                break
    tok.expect(")")
    return out


def _parse_head_group(tok: _Tok) -> list:
    """One parenthesized group in a branch head, elements kept raw."""
    tok.expect("(")
    out: list = []
    if not tok.peek(")"):
        while True:
            tok.skip_ws()
            c = tok.text[tok.pos:tok.pos + 1]
            if c == "#":
                tok.expect("#")
                out.append("#" + tok.ident())
            elif c == "(":
                tok.expect("(")
                tok.expect(")")
                out.append("()")
            elif c.isdigit():
                out.append(Lit(int(tok.ident())))
            else:
                out.append(tok.ident())
            if not tok.eat(","):
                break
    tok.expect(")")
    return out


def _split_head_groups(groups: list) -> tuple[list, tuple[str, ...]]:
    """Decide which head groups are payload arguments and which bind names.

    Two groups: arguments then names.  One group: arguments when every
    element is a numeral, a payload token, or a numeral slot; otherwise
    bound names.
    """
    if len(groups) == 2:
        args, names = groups
    elif len(groups) == 1:
        g = groups[0]
        if all(isinstance(a, Lit) or a in PAYLOAD_TOKENS
               or (isinstance(a, str) and a.startswith("#")) for a in g):
            args, names = g, []
        else:
            args, names = [], g
    else:
        args, names = [], []
    for n in names:
        if not isinstance(n, str) or n.startswith("#") or n == "()":
            raise SyntaxError(f"bad bound name {n!r}")
    return args, tuple(names)


def _parse_names(tok: _Tok) -> tuple[str, ...]:
    names = []
    if tok.eat("("):
        if not tok.peek(")"):
            names.append(tok.ident())
            while tok.eat(","):
                names.append(tok.ident())
        tok.expect(")")
    return tuple(names)


def _parse_proc_atom(tok: _Tok, numvars: set[str]) -> Process:
    tok.skip_ws()
    if tok.eat("0"):
        return Nil()
    if tok.peek("(nu ") or tok.peek("(nu\t"):
        tok.expect("(")
        tok.expect("nu")
        a = tok.ident()
        b = tok.ident()
        ty = None
        if tok.eat(":"):
            ty = _parse_type(tok)
        tok.expect(")")
        body = _parse_proc_atom(tok, numvars)
        return Cut(a, b, ty, body)
    if tok.eat("("):
        p = _parse_proc(tok, numvars)
        tok.expect(")")
        return p
    if tok.eat("!"):
        chan = tok.ident()
        names = _parse_names(tok)
        tok.expect(".")
        return Prom(chan, names, _parse_proc_atom(tok, numvars))
    if tok.eat("?"):
        chan = tok.ident()
        tok.expect("[")
        names = []
        if not tok.peek("]"):
            names.append(tok.ident())
            while tok.eat(","):
                names.append(tok.ident())
        tok.expect("]")
        body = Nil()
        if tok.eat("."):
            body = _parse_proc_atom(tok, numvars)
        return Der(chan, tuple(names), body)
    if tok.peek_kw("coder"):
        tok.eat_kw("coder")
        chan = tok.ident()
        names = _parse_names(tok)
        tok.expect(".")
        return Coder(chan, names, _parse_proc_atom(tok, numvars))
    if tok.peek_kw("ifnum"):
        tok.eat_kw("ifnum")
        left = _parse_num_expr(tok, numvars)
        tok.expect("=")
        right = _parse_num_expr(tok, numvars)
        tok.expect_kw("then")
        th = _parse_proc_atom(tok, numvars)
        tok.expect_kw("else")
        el = _parse_proc_atom(tok, numvars)
        return NumIf(left, right, th, el)
    # a name: selection, branching, or definition call
    name = tok.ident()
    if tok.eat("!"):
        base = tok.ident()
        groups = []
        while tok.peek("(") and len(groups) < 2:
            groups.append(_parse_select_group(tok, numvars))
        if len(groups) == 2:
            args, names = groups
        elif len(groups) == 1:
            g = groups[0]
            if all(isinstance(a, NumExpr)
                   or (isinstance(a, str) and a in PAYLOAD_TOKENS) for a in g):
                args, names = g, []
            else:
                args, names = [], g
        else:
            args, names = [], []
        for n in names:
            if not isinstance(n, str) or n == "()":
                raise SyntaxError(f"bad bound name {n!r}")
        body = Nil()
        if tok.eat("."):
            body = _parse_proc_atom(tok, numvars)
        return SelectP(name, Label(base, tuple(args)), tuple(names), body)
    if tok.eat("?"):
        tok.expect("{")
        branches = []
        while True:
            base = tok.ident()
            groups = []
            while tok.peek("(") and len(groups) < 2:
                groups.append(_parse_head_group(tok))
            args, names = _split_head_groups(groups)
            var = None
            norm_args = []
            for a in args:
                if isinstance(a, str) and a.startswith("#"):
                    if var is not None:
                        raise SyntaxError("at most one numeral slot per branch")
                    var = a[1:]
                else:
                    norm_args.append(a)
            body = Nil()
            if tok.eat("."):
                body = _parse_proc_atom(tok, numvars | ({var} if var else set()))
            if var is not None:
                if norm_args:
                    raise SyntaxError("numeral slot must be the only argument")
                branches.append(PFamily(base, var, names, body))
            else:
                branches.append(PBranch(Label(base, tuple(norm_args)), names, body))
            if not tok.eat("|"):
                break
        tok.expect("}")
        return BranchP(name, tuple(branches))
    if tok.eat("("):
        chans, nums = [], []
        if not tok.peek(")"):
            if not tok.peek(";"):
                chans.append(tok.ident())
                while tok.eat(","):
                    chans.append(tok.ident())
            if tok.eat(";"):
                nums.append(_parse_num_expr(tok, numvars))
                while tok.eat(","):
                    nums.append(_parse_num_expr(tok, numvars))
        tok.expect(")")
        return CallDef(name, tuple(chans), tuple(nums))
    raise SyntaxError(f"cannot parse process at ...{tok.text[tok.pos:tok.pos+25]!r}")
