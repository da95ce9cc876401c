"""Session typing for metalanguage processes.

Judgements are P |- ctx where ctx maps names to rooted session types.
The discipline is affine: nil accepts any context, a parallel
composition shares the ?-typed names and splits the rest, and both
request prefixes (dereliction on a ?-name, one-shot server on a
!-name) keep their subject usable in the continuation.  Promotion
requires every other name in scope to be ?-typed, since its body may
be replicated.

typecheck returns the full derivation tree; failures raise TypingError
with the offending name or subterm in the message.  Definition calls
are typechecked on their budgeted unfolding, whose cut-off turns deep
calls into 0; affinity makes that approximation sound.
"""

from __future__ import annotations

from dataclasses import dataclass

from .syntax import (
    Bang, BranchP, CallDef, Coder, Cut, Der, Fork, Label, Lit, Nil, NumExpr,
    NumIf, NVar, Par, PBranch, PFamily, Plus, Process, Prom, Ques, SelectP,
    SessionType, TBranch, TFamily, With, dual, elaborate, free_channels,
    proc_str, rename_channels, rooted, slot_count, type_str, unfold,
)

Context = tuple

__all__ = [
    "Context", "Derivation", "TypingError", "forwarder", "make_context",
    "payload_names", "typecheck",
]


class TypingError(Exception):
    pass


@dataclass(frozen=True)
class Derivation:
    """One node of a typing derivation, mirroring the applied rule."""

    rule: str
    process: Process
    context: Context
    premises: tuple = ()

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "process": proc_str(self.process),
            "context": [[n, type_str(t)] for n, t in self.context],
            "premises": [d.to_json() for d in self.premises],
        }


def make_context(entries) -> Context:
    """Normalize a dict or pair iterable into a validated context."""
    pairs = list(entries.items()) if isinstance(entries, dict) else list(entries)
    seen = set()
    for name, t in pairs:
        if name in seen:
            raise TypingError(f"duplicate context name {name}")
        seen.add(name)
        if not isinstance(t, SessionType):
            raise TypingError(f"context entry {name} is not a session type")
        if not rooted(t):
            raise TypingError(
                f"context entry {name}: {type_str(t)} is not rooted")
    return tuple(pairs)


def _lookup(ctx: Context, name: str) -> SessionType:
    for n, t in ctx:
        if n == name:
            return t
    raise TypingError(f"unbound name {name}")


def _drop(ctx: Context, name: str) -> Context:
    return tuple((n, t) for n, t in ctx if n != name)


def _elaborate(names, t: SessionType) -> Context:
    try:
        return tuple(elaborate(tuple(names), t))
    except ValueError as exc:
        raise TypingError(str(exc)) from None


def payload_names(names, chan: str, cont: SessionType):
    """Resolve the session-name reuse sugar for a consumed subject.

    An omitted payload list on a prefix whose continuation is a single
    session rebinds the subject name; it stays empty when the
    continuation has no sessions at all.
    """
    if names or slot_count(cont) == 0:
        return tuple(names)
    if slot_count(cont) == 1:
        return (chan,)
    raise TypingError(
        f"prefix on {chan} binds no names but {type_str(cont)} "
        f"elaborates to {slot_count(cont)} sessions")


def _bind(ctx: Context, names, t: SessionType, body: Process):
    """Extend ctx with the payload names, renaming those that shadow.

    Returns the premise context together with the (possibly renamed)
    body; the caller's names stay as written so printing is stable.
    """
    bound = _elaborate(names, t)
    taken = {n for n, _ in ctx}
    clashes = [n for n, _ in bound if n in taken]
    if clashes:
        avoid = taken | {n for n, _ in bound} | set(free_channels(body))
        mapping = {}
        for n in clashes:
            i = 1
            while f"{n}#{i}" in avoid:
                i += 1
            mapping[n] = f"{n}#{i}"
            avoid.add(mapping[n])
        body = rename_channels(body, mapping)
        bound = tuple((mapping.get(n, n), t2) for n, t2 in bound)
    return ctx + bound, body


def _match_branches(t, branches):
    """Pair each type branch with the process branch handling it.

    Families are infinite, so only a numeral-generic process branch
    covers one; every process branch must land on some type branch.
    """
    plain: dict[str, PBranch] = {}
    fams: dict[str, PFamily] = {}
    for b in branches:
        if isinstance(b, PBranch):
            key = b.label.render()
            if key in plain:
                raise TypingError(f"duplicate branch {key}")
            plain[key] = b
        else:
            if b.base in fams:
                raise TypingError(f"duplicate branch family {b.base}(#)")
            fams[b.base] = b
    out = []
    for tb in t.branches:
        if isinstance(tb, TBranch):
            key = tb.label.render()
            if key not in plain:
                raise TypingError(f"branch label {key} not covered")
            out.append((plain.pop(key), tb.cont))
        else:
            if tb.base not in fams:
                raise TypingError(
                    f"branch family {tb.base}(#) not covered "
                    "(a numeral-generic branch is required)")
            out.append((fams.pop(tb.base), tb.cont))
    if plain:
        raise TypingError(
            f"branch label {next(iter(plain))} not in channel type")
    if fams:
        raise TypingError(
            f"branch family {next(iter(fams))}(#) not in channel type")
    return out


def _select_branch(t: Plus, label: Label) -> SessionType:
    if label.ground():
        for tb in t.branches:
            if isinstance(tb, TBranch) and tb.label.render() == label.render():
                return tb.cont
            if (isinstance(tb, TFamily) and label.base == tb.base
                    and len(label.args) == 1 and isinstance(label.args[0], Lit)):
                return tb.cont
        raise TypingError(f"label {label.render()} not in {type_str(t)}")
    # an open numeral can stand for any value, so only a family is safe
    if len(label.args) == 1 and isinstance(label.args[0], NumExpr):
        for tb in t.branches:
            if isinstance(tb, TFamily) and tb.base == label.base:
                return tb.cont
    raise TypingError(
        f"label {label.render()} has free numerals but {type_str(t)} "
        "has no matching family")


def typecheck(p: Process, ctx, *, defs=None, unfold_budget: int = 4) -> Derivation:
    """Check p against a context of rooted types; return the derivation."""
    ctx = make_context(ctx)
    if defs:
        p = unfold(p, defs, unfold_budget)
    return _check(p, ctx)


def _check(p: Process, ctx: Context) -> Derivation:
    if isinstance(p, Nil):
        return Derivation("nil", p, ctx)

    if isinstance(p, Fork):
        if len(p.parts) == 1:
            return _check(p.parts[0], ctx)
        owner: dict[str, int] = {}
        for i, q in enumerate(p.parts):
            used = free_channels(q)
            for n, t in ctx:
                if isinstance(t, Ques) or n not in used:
                    continue
                if n in owner:
                    raise TypingError(
                        f"linear name {n} used in two parallel components")
                owner[n] = i
        premises = []
        for i, q in enumerate(p.parts):
            # unclaimed linear names ride along with the first component
            part_ctx = tuple(
                (n, t) for n, t in ctx
                if isinstance(t, Ques) or owner.get(n, 0) == i
            )
            premises.append(_check(q, part_ctx))
        return Derivation("par", p, ctx, tuple(premises))

    if isinstance(p, Cut):
        if p.type is None:
            raise TypingError(
                f"restriction (nu {p.a} {p.b}) needs a type annotation")
        if not rooted(p.type):
            raise TypingError(
                f"restriction type {type_str(p.type)} is not rooted")
        body = p.body
        a, b = p.a, p.b
        taken = {n for n, _ in ctx}
        if a == b:
            raise TypingError(f"restriction binds {a} twice")
        if a in taken or b in taken:
            avoid = taken | {a, b} | set(free_channels(body))
            mapping = {}
            for n in (a, b):
                if n in taken:
                    i = 1
                    while f"{n}#{i}" in avoid:
                        i += 1
                    mapping[n] = f"{n}#{i}"
                    avoid.add(mapping[n])
            body = rename_channels(body, mapping)
            a, b = mapping.get(a, a), mapping.get(b, b)
        prem = _check(body, ctx + ((a, p.type), (b, dual(p.type))))
        return Derivation("res", p, ctx, (prem,))

    if isinstance(p, SelectP):
        t = _lookup(ctx, p.chan)
        if not isinstance(t, Plus):
            raise TypingError(
                f"selection on {p.chan}: {type_str(t)} is not an output choice")
        cont = _select_branch(t, p.label)
        names = payload_names(p.names, p.chan, cont)
        prem_ctx, body = _bind(_drop(ctx, p.chan), names, cont, p.body)
        return Derivation("sel", p, ctx, (_check(body, prem_ctx),))

    if isinstance(p, BranchP):
        t = _lookup(ctx, p.chan)
        if not isinstance(t, With):
            raise TypingError(
                f"branching on {p.chan}: {type_str(t)} is not an input choice")
        premises = []
        for pb, cont in _match_branches(t, p.branches):
            names = payload_names(pb.names, p.chan, cont)
            prem_ctx, body = _bind(_drop(ctx, p.chan), names, cont, pb.body)
            premises.append(_check(body, prem_ctx))
        return Derivation("br", p, ctx, tuple(premises))

    if isinstance(p, Prom):
        t = _lookup(ctx, p.chan)
        if not isinstance(t, Bang):
            raise TypingError(
                f"promotion on {p.chan}: {type_str(t)} is not a server type")
        rest = _drop(ctx, p.chan)
        used = free_channels(p.body) - set(p.names) - {p.chan}
        for n, u in rest:
            # unused linear names are weakened away, not captured
            if n in used and not isinstance(u, Ques):
                raise TypingError(
                    f"promotion on {p.chan} over non-? name {n}: {type_str(u)}")
        names = payload_names(p.names, p.chan, t.inner)
        prem_ctx, body = _bind(rest, names, t.inner, p.body)
        return Derivation("rep", p, ctx, (_check(body, prem_ctx),))

    if isinstance(p, Der):
        t = _lookup(ctx, p.chan)
        if not isinstance(t, Ques):
            raise TypingError(
                f"dereliction on {p.chan}: {type_str(t)} is not a client type")
        # the subject stays in scope: a client may request again
        prem_ctx, body = _bind(ctx, p.names, t.inner, p.body)
        return Derivation("req", p, ctx, (_check(body, prem_ctx),))

    if isinstance(p, Coder):
        t = _lookup(ctx, p.chan)
        if not isinstance(t, Bang):
            raise TypingError(
                f"one-shot server on {p.chan}: {type_str(t)} is not a server type")
        # unlike promotion the context is unrestricted, and the subject
        # stays usable: the continuation may set up further servers
        prem_ctx, body = _bind(ctx, p.names, t.inner, p.body)
        return Derivation("nd", p, ctx, (_check(body, prem_ctx),))

    if isinstance(p, NumIf):
        then_d = _check(p.then_p, ctx)
        else_d = _check(p.else_p, ctx)
        return Derivation("ifnum", p, ctx, (then_d, else_d))

    if isinstance(p, CallDef):
        raise TypingError(
            f"definition call {p.name} not unfolded; pass defs to typecheck")

    raise TypingError(f"cannot type {p!r}")


# ----------------------------------------------------------------------
# forwarding agent


def forwarder(a, b, t: SessionType) -> Process:
    """The copycat process between ⟨a:t⟩ and ⟨b:dual(t)⟩.

    Built by induction on t following the eta-expansion laws: an input
    choice is re-emitted on the other side, a parallel type splits into
    independent forwarders, a server type promotes on the !-side and
    requests once on the ?-side, and output types swap the two sides.
    """
    a_names = (a,) if isinstance(a, str) else tuple(a)
    b_names = (b,) if isinstance(b, str) else tuple(b)
    _elaborate(a_names, t)
    _elaborate(b_names, dual(t))
    counter = [0]

    def fresh(hint: str) -> str:
        counter[0] += 1
        return f"{hint}{counter[0]}"

    def go(xs, ys, t: SessionType) -> Process:
        if isinstance(t, Par):
            parts = []
            i = 0
            for part in t.parts:
                k = slot_count(part)
                parts.append(go(xs[i:i + k], ys[i:i + k], part))
                i += k
            live = [q for q in parts if not isinstance(q, Nil)]
            if not live:
                return Nil()
            if len(live) == 1:
                return live[0]
            return Fork(tuple(live))
        if isinstance(t, (Plus, Ques)):
            return go(ys, xs, dual(t))
        x, y = xs[0], ys[0]
        if isinstance(t, With):
            branches = []
            for tb in t.branches:
                cont = tb.cont
                k = slot_count(cont)
                us = tuple(fresh("x") for _ in range(k))
                vs = tuple(fresh("y") for _ in range(k))
                inner = go(us, vs, cont)
                if isinstance(tb, TBranch):
                    send = SelectP(y, tb.label, vs, inner)
                    branches.append(PBranch(tb.label, us, send))
                else:
                    var = fresh("n")
                    send = SelectP(y, Label(tb.base, (NVar(var),)), vs, inner)
                    branches.append(PFamily(tb.base, var, us, send))
            return BranchP(x, tuple(branches))
        if isinstance(t, Bang):
            k = slot_count(t.inner)
            us = tuple(fresh("x") for _ in range(k))
            vs = tuple(fresh("y") for _ in range(k))
            return Prom(x, us, Der(y, vs, go(us, vs, t.inner)))
        raise TypingError(f"no forwarder for {type_str(t)}")

    return go(a_names, b_names, t)
