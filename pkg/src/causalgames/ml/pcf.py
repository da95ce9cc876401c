"""Call-by-name PCF: λ-calculus with numbers, booleans, a fixpoint,
and reduction anywhere, including under binders.

Terms reuse the ML node types; the constants here are `Y`, `bot`,
`iszero` and `succ`.  β fires on arbitrary arguments, and `Y M`
unfolds to `M (Y M)` without waiting for anything.
"""

from __future__ import annotations

from .cml import (
    App,
    ArrowT,
    BoolLit,
    Const,
    If,
    Lam,
    MLTerm,
    MLType,
    MLTypeError,
    MLVar,
    NumLit,
    TVar,
    _MLParser,
    _Unifier,
    BOOL,
    NAT,
    free_vars,
    subst,
    term_str,
    Diverged,
    DIVERGED,
)

PCF_CONSTS = {"Y", "bot", "iszero", "succ"}


# ----------------------------------------------------------------------
# parsing: the ML reader, restricted and extended


class _PCFParser(_MLParser):
    def atom(self) -> MLTerm:
        k, v, _ = self.peek()
        if k == "ident" and v in ("iszero", "succ"):
            self.next()
            return Const(v)
        return super().atom()


def parse_pcf(src: str) -> MLTerm:
    p = _PCFParser(src)
    t = p.expr()
    k, v, pos = p.peek()
    if k != "eof":
        raise SyntaxError(f"trailing input at offset {pos}: {v!r}")
    _check_pcf_syntax(t)
    return t


def _check_pcf_syntax(t: MLTerm) -> None:
    if isinstance(t, Const):
        if t.name not in PCF_CONSTS:
            raise SyntaxError(f"{t.name} is not part of this calculus")
    elif isinstance(t, Lam):
        _check_pcf_syntax(t.body)
    elif isinstance(t, App):
        _check_pcf_syntax(t.fun)
        _check_pcf_syntax(t.arg)
    elif isinstance(t, If):
        for s in (t.cond, t.then, t.els):
            _check_pcf_syntax(s)


# ----------------------------------------------------------------------
# typing


def _pcf_const_type(name: str, u: _Unifier) -> MLType:
    if name == "iszero":
        return ArrowT(NAT, BOOL)
    if name == "succ":
        return ArrowT(NAT, NAT)
    if name == "Y":
        t = u.fresh()
        return ArrowT(ArrowT(t, t), t)
    if name == "bot":
        return u.fresh()
    raise MLTypeError(f"unknown constant {name}")


def _infer(t: MLTerm, env: dict, u: _Unifier) -> MLType:
    if isinstance(t, MLVar):
        if t.name not in env:
            raise MLTypeError(f"rule var: unbound name {t.name}")
        return env[t.name]
    if isinstance(t, NumLit):
        return NAT
    if isinstance(t, BoolLit):
        return BOOL
    if isinstance(t, Const):
        return _pcf_const_type(t.name, u)
    if isinstance(t, Lam):
        a = t.ann if t.ann is not None else u.fresh()
        return ArrowT(a, _infer(t.body, {**env, t.var: a}, u))
    if isinstance(t, App):
        ft = _infer(t.fun, env, u)
        at = _infer(t.arg, env, u)
        res = u.fresh()
        u.unify(ArrowT(at, res), ft, "app")
        return res
    if isinstance(t, If):
        u.unify(_infer(t.cond, env, u), BOOL, "if")
        tt = _infer(t.then, env, u)
        u.unify(tt, _infer(t.els, env, u), "if")
        return tt
    raise MLTypeError(f"not a PCF term: {t!r}")


def _resolve(t: MLType, u: _Unifier, default: MLType = NAT) -> MLType:
    t = u.zonk(t)
    if isinstance(t, TVar):
        return default
    if isinstance(t, ArrowT):
        return ArrowT(_resolve(t.arg, u, default), _resolve(t.res, u, default))
    return t


def parse_and_type_pcf(src, env: dict | None = None):
    """Parses and types a PCF term; unconstrained types default to nat.
    Returns (term, type, free-variable context)."""
    term = parse_pcf(src) if isinstance(src, str) else src
    u = _Unifier()
    ctx = dict(env or {})
    for name in sorted(free_vars(term)):
        ctx.setdefault(name, u.fresh())
    ty = _resolve(_infer(term, ctx, u), u)
    ctx = {x: _resolve(tx, u) for x, tx in ctx.items()
           if x in free_vars(term)}
    return term, ty, ctx


# ----------------------------------------------------------------------
# reduction: anywhere, even under λ


def _roots(t: MLTerm) -> list[tuple[MLTerm, bool]]:
    out = []
    if isinstance(t, App):
        if isinstance(t.fun, Lam):
            out.append((subst(t.fun.body, t.fun.var, t.arg), False))
        if isinstance(t.fun, Const):
            c, a = t.fun.name, t.arg
            if c == "iszero" and isinstance(a, NumLit):
                out.append((BoolLit(a.value == 0), False))
            elif c == "succ" and isinstance(a, NumLit):
                out.append((NumLit(a.value + 1), False))
            elif c == "Y":
                out.append((App(a, App(Const("Y"), a)), True))
    elif isinstance(t, If) and isinstance(t.cond, BoolLit):
        out.append((t.then if t.cond.value else t.els, False))
    return out


def _positions(t: MLTerm):
    yield t, lambda s: s
    if isinstance(t, App):
        for sub, rb in _positions(t.fun):
            yield sub, lambda s, rb=rb: App(rb(s), t.arg)
        if isinstance(t.fun, Const) and t.fun.name in ("iszero", "succ"):
            for sub, rb in _positions(t.arg):
                yield sub, lambda s, rb=rb: App(t.fun, rb(s))
    elif isinstance(t, Lam):
        for sub, rb in _positions(t.body):
            yield sub, lambda s, rb=rb: Lam(t.var, rb(s), t.ann)
    elif isinstance(t, If):
        for sub, rb in _positions(t.cond):
            yield sub, lambda s, rb=rb: If(rb(s), t.then, t.els)


def pcf_step(t: MLTerm) -> list[MLTerm]:
    """All one-step successors under E ::= [] | E N | λx.E
    | iszero(E) | succ(E) | if E M N."""
    out, seen = [], set()
    for sub, rb in _positions(t):
        for nxt, _ in _roots(sub):
            whole = rb(nxt)
            if whole not in seen:
                seen.add(whole)
                out.append(whole)
    return out


def normalize_pcf(t: MLTerm, *, max_steps: int = 4000, y_budget: int = 16):
    """Leftmost reduction to normal form; DIVERGED when a budget runs
    out.  Reduction is confluent, so the choice of redex cannot change
    the numeral a closed nat term reaches."""
    unfolds = 0
    for _ in range(max_steps):
        chosen = None
        for sub, rb in _positions(t):
            roots = _roots(sub)
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


def pcf_numeral(t: MLTerm, *, max_steps: int = 4000, y_budget: int = 16):
    """The numeral a closed nat term evaluates to, or None when it
    diverges or gets stuck on `bot`."""
    r = normalize_pcf(t, max_steps=max_steps, y_budget=y_budget)
    if isinstance(r, Diverged) or not isinstance(r, NumLit):
        return None
    return r.value
