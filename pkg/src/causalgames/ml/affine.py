"""The affine λ-calculus over booleans.

Types are bool and linear arrows; a variable is consumed at most once,
branching is only at result type bool, and the two branches of an
`if` may consume the same names (only one side runs).

The βη theory is the smallest congruence with: β, η at arrow types,
`if` on a literal picks its branch, and `if M tt ff = M`.  Terms are
decided equal by comparing η-long β-normal forms, computed by
evaluation into a domain with case trees: an `if` whose scrutinee is
itself an `if` gets flattened, and bare bool neutrals read back as
`if x tt ff`.  These identifications are exactly the ones the
translation to strategies cannot see.
"""

from __future__ import annotations

from dataclasses import dataclass

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
    _MLParser,
    BOOL,
    term_str,
)


def is_affine_type(t: MLType) -> bool:
    if t == BOOL:
        return True
    return isinstance(t, ArrowT) and is_affine_type(t.arg) and \
        is_affine_type(t.res)


def parse_affine(src: str) -> MLTerm:
    """Reads a term; abstractions need annotated binders, as in
    `fun (x : bool) -> x`."""
    p = _MLParser(src)
    t = p.expr()
    k, v, pos = p.peek()
    if k != "eof":
        raise SyntaxError(f"trailing input at offset {pos}: {v!r}")
    _check_syntax(t)
    return t


def _check_syntax(t: MLTerm) -> None:
    if isinstance(t, (MLVar, BoolLit)):
        return
    if isinstance(t, Lam):
        _check_syntax(t.body)
        return
    if isinstance(t, App):
        _check_syntax(t.fun)
        _check_syntax(t.arg)
        return
    if isinstance(t, If):
        for s in (t.cond, t.then, t.els):
            _check_syntax(s)
        return
    if isinstance(t, Const):
        raise SyntaxError(f"{t.name} is not part of this calculus")
    raise SyntaxError(f"not an affine term: {term_str(t)}")


def affine_type(t: MLTerm, env: dict | None = None) -> MLType:
    """Checks the affine typing rules and returns the type.

    Application splits the context; the branches of an `if` may share
    names with each other but not with the scrutinee.
    """
    def go(t, scope):
        if isinstance(t, MLVar):
            if t.name not in scope:
                raise MLTypeError(f"rule var: unbound name {t.name}")
            return scope[t.name], frozenset((t.name,))
        if isinstance(t, BoolLit):
            return BOOL, frozenset()
        if isinstance(t, Lam):
            if t.ann is None:
                raise MLTypeError(
                    f"rule abs: binder {t.var} needs a type annotation")
            if not is_affine_type(t.ann):
                raise MLTypeError(f"rule abs: {t.ann} is not an affine type")
            bt, used = go(t.body, {**scope, t.var: t.ann})
            return ArrowT(t.ann, bt), used - {t.var}
        if isinstance(t, App):
            ft, fu = go(t.fun, scope)
            at, au = go(t.arg, scope)
            if not isinstance(ft, ArrowT):
                raise MLTypeError(f"rule app: {ft} is not a function type")
            if ft.arg != at:
                raise MLTypeError(f"rule app: expected {ft.arg}, got {at}")
            shared = fu & au
            if shared:
                raise MLTypeError(
                    f"rule app: {sorted(shared)} used on both sides")
            return ft.res, fu | au
        if isinstance(t, If):
            ct, cu = go(t.cond, scope)
            tt, tu = go(t.then, scope)
            et, eu = go(t.els, scope)
            if ct != BOOL:
                raise MLTypeError(f"rule if: scrutinee has type {ct}")
            if tt != BOOL or et != BOOL:
                raise MLTypeError("rule if: branches must have type bool")
            shared = cu & (tu | eu)
            if shared:
                raise MLTypeError(
                    f"rule if: {sorted(shared)} used in scrutinee and branch")
            return BOOL, cu | tu | eu
        raise MLTypeError(f"not an affine term: {t!r}")

    ty, _ = go(t, dict(env or {}))
    return ty


# ----------------------------------------------------------------------
# η-long β-normal forms by evaluation


@dataclass(frozen=True)
class _VBool:
    value: bool


@dataclass(frozen=True)
class _VNeu:
    name: str
    ty: MLType
    args: tuple  # of (value, argument type)


@dataclass(frozen=True)
class _VCase:
    scrutinee: _VNeu
    then: object
    els: object


class _VClo:
    __slots__ = ("var", "body", "env")

    def __init__(self, var, body, env):
        self.var = var
        self.body = body
        self.env = env


def _eval(t: MLTerm, env: dict):
    if isinstance(t, MLVar):
        return env[t.name]
    if isinstance(t, BoolLit):
        return _VBool(t.value)
    if isinstance(t, Lam):
        return _VClo(t.var, t.body, env)
    if isinstance(t, App):
        return _vapp(_eval(t.fun, env), _eval(t.arg, env))
    if isinstance(t, If):
        return _vif(_eval(t.cond, env), _eval(t.then, env),
                    _eval(t.els, env))
    raise MLTypeError(f"not an affine term: {t!r}")


def _vapp(f, a):
    if isinstance(f, _VClo):
        return _eval(f.body, {**f.env, f.var: a})
    if isinstance(f, _VNeu):
        return _VNeu(f.name, f.ty.res, f.args + ((a, f.ty.arg),))
    if isinstance(f, _VCase):
        return _VCase(f.scrutinee, _vapp(f.then, a), _vapp(f.els, a))
    raise MLTypeError(f"cannot apply {f!r}")


def _vif(c, a, b):
    if isinstance(c, _VBool):
        return a if c.value else b
    if isinstance(c, _VNeu):
        return _VCase(c, a, b)
    if isinstance(c, _VCase):
        return _VCase(c.scrutinee, _vif(c.then, a, b), _vif(c.els, a, b))
    raise MLTypeError(f"cannot branch on {c!r}")


def _readback(v, ty: MLType, counter: list) -> MLTerm:
    if isinstance(ty, ArrowT):
        x = f"_x{counter[0]}"
        counter[0] += 1
        body = _readback(_vapp(v, _VNeu(x, ty.arg, ())), ty.res, counter)
        return Lam(x, body, ty.arg)
    if isinstance(v, _VBool):
        return BoolLit(v.value)
    if isinstance(v, _VNeu):
        return If(_read_spine(v, counter), BoolLit(True), BoolLit(False))
    if isinstance(v, _VCase):
        return If(_read_spine(v.scrutinee, counter),
                  _readback(v.then, BOOL, counter),
                  _readback(v.els, BOOL, counter))
    raise MLTypeError(f"cannot read back {v!r} at {ty}")


def _read_spine(n: _VNeu, counter: list) -> MLTerm:
    t: MLTerm = MLVar(n.name)
    for val, at in n.args:
        t = App(t, _readback(val, at, counter))
    return t


def canonical_form(t: MLTerm, env: dict | None = None) -> MLTerm:
    """The η-long β-normal form, with α-canonical binder names."""
    env = dict(env or {})
    ty = affine_type(t, env)
    venv = {x: _VNeu(x, tx, ()) for x, tx in env.items()}
    return _readback(_eval(t, venv), ty, [0])


def beta_eta_equal(a: MLTerm, b: MLTerm, env: dict | None = None) -> bool:
    """Whether two affine terms of the same type are βη-equal."""
    env = dict(env or {})
    ta, tb = affine_type(a, env), affine_type(b, env)
    if ta != tb:
        raise MLTypeError(f"comparing terms of different types {ta}, {tb}")
    return canonical_form(a, env) == canonical_form(b, env)


# ----------------------------------------------------------------------
# exhaustive term enumeration


def _subformulas(ty: MLType) -> set:
    out = {ty}
    if isinstance(ty, ArrowT):
        out |= _subformulas(ty.arg) | _subformulas(ty.res)
    return out


def enumerate_affine(ty: MLType, max_size: int, env: tuple = ()):
    """All affine-typed terms of ``ty`` in ``env`` with at most
    ``max_size`` nodes.  Application arguments range over the
    subformulas of the goal and context types, which keeps the space
    finite; redexes are enumerated, not just normal forms."""
    pool = _subformulas(ty) | {BOOL}
    for _, tx in env:
        pool |= _subformulas(tx)
    memo: dict = {}

    def gen(goal, size, scope):
        key = (goal, size, scope)
        if key in memo:
            return memo[key]
        out = []
        if size >= 1:
            if goal == BOOL:
                out += [BoolLit(True), BoolLit(False)]
            out += [MLVar(x) for x, tx in scope if tx == goal]
        if size >= 2 and isinstance(goal, ArrowT):
            x = f"x{len(scope)}"
            for body in gen(goal.res, size - 1, scope + ((x, goal.arg),)):
                out.append(Lam(x, body, goal.arg))
        if size >= 3:
            for at in sorted(pool, key=str):
                for k in range(1, size - 1):
                    for f in gen(ArrowT(at, goal), k, scope):
                        for a in gen(at, size - 1 - k, scope):
                            out.append(App(f, a))
        if size >= 4 and goal == BOOL:
            for k in range(1, size - 2):
                for c in gen(BOOL, k, scope):
                    for j in range(1, size - 1 - k):
                        for th in gen(BOOL, j, scope):
                            for el in gen(BOOL, size - 1 - k - j, scope):
                                out.append(If(c, th, el))
        memo[key] = out
        return out

    seen = set()
    scope_env = dict(env)
    for t in gen(ty, max_size, tuple(env)):
        if t in seen:
            continue
        seen.add(t)
        try:
            affine_type(t, scope_env)
        except MLTypeError:
            continue
        yield t
