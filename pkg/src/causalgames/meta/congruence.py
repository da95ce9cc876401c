"""Structural congruence for the session metalanguage.

``normalize`` rewrites a process with directed instances of the
congruence laws: parallel monoid laws, restriction scoping, garbage
collection of permanently blocked cuts, forwarder elimination, the two
deterministic communication rules, hoisting of prefixes out of cuts,
and a deterministic ordering of commuting prefixes.  ``canonical``
erases bound-name choices, so two processes in the directed fragment
are congruent exactly when their canonical normal forms coincide.
``congruent_eq`` adds a bounded bidirectional search over the
reversible laws on top of that, which keeps the answer sound (only
congruence instances are ever applied) but incomplete beyond the
bound.

Design notes on the two hoisting rules, which go beyond pushing a cut
under a lone prefix:

* a positive prefix on a free name hoists out of a cut past any
  parallel siblings, because outputs gate only their own session;
* a branching on a free name hoists out when the siblings are
  "quiet": every output on a visible name is dominated by a branching
  on one of the cut's endpoints whose partner lies in the hoisted
  component, and no codereliction occurs (hoisting would duplicate or
  re-gate a race).  Receptions with all-negative causal histories are
  shared between branches by the interpretation, so only outputs
  matter for soundness.
"""

from __future__ import annotations

import itertools

from .syntax import (
    Add, BranchP, CallDef, Coder, Cut, Der, Fork, Label, Lit, NVar, Nil,
    NumExpr, NumIf, PBranch, PFamily, Plus, Process, Prom, Ques, SelectP,
    SessionType, _subst_num_exprs, dual, elaborate, fork, free_channels,
    proc_str, rename_channels, type_str,
)
from .typing import TypingError, payload_names

__all__ = [
    "normalize", "canonical", "congruent_eq", "barbs", "race_redexes",
]

_POSITIVE = (SelectP, Der)
_NEGATIVE = (BranchP, Prom, Coder)


# ----------------------------------------------------------------------
# name bookkeeping


def _parts(p: Process) -> list[Process]:
    if isinstance(p, Fork):
        return list(p.parts)
    if isinstance(p, Nil):
        return []
    return [p]


def _bound_view(p) -> set[str]:
    """Names a prefix may bind, counting the reuse sugar conservatively.

    An empty payload list can rebind the subject, so without the type
    we must treat the subject itself as bound in the continuation.
    """
    return set(p.names) if p.names else {p.chan}


def _ren_expr(e: NumExpr, nm: dict[str, str]) -> NumExpr:
    if isinstance(e, Lit):
        return e
    if isinstance(e, NVar):
        return NVar(nm.get(e.name, e.name))
    if isinstance(e, Add):
        return Add(_ren_expr(e.left, nm), _ren_expr(e.right, nm))
    raise TypeError(e)


def _ren_label(l: Label, nm: dict[str, str]) -> Label:
    return Label(l.base, tuple(
        _ren_expr(a, nm) if isinstance(a, NumExpr) else a for a in l.args))


def _expr_vars(e: NumExpr) -> set[str]:
    if isinstance(e, Lit):
        return set()
    if isinstance(e, NVar):
        return {e.name}
    return _expr_vars(e.left) | _expr_vars(e.right)


def _label_vars(l: Label) -> set[str]:
    out: set[str] = set()
    for a in l.args:
        if isinstance(a, NumExpr):
            out |= _expr_vars(a)
    return out


def _num_free(p: Process) -> set[str]:
    if isinstance(p, Nil):
        return set()
    if isinstance(p, Fork):
        return set().union(*(_num_free(q) for q in p.parts))
    if isinstance(p, Cut):
        return _num_free(p.body)
    if isinstance(p, BranchP):
        out: set[str] = set()
        for b in p.branches:
            inner = _num_free(b.body)
            if isinstance(b, PBranch):
                out |= _label_vars(b.label) | inner
            else:
                out |= inner - {b.var}
        return out
    if isinstance(p, SelectP):
        return _label_vars(p.label) | _num_free(p.body)
    if isinstance(p, (Prom, Coder, Der)):
        return _num_free(p.body)
    if isinstance(p, NumIf):
        return (_expr_vars(p.left) | _expr_vars(p.right)
                | _num_free(p.then_p) | _num_free(p.else_p))
    if isinstance(p, CallDef):
        return set().union(set(), *(_expr_vars(e) for e in p.nums))
    raise TypeError(p)


def _all_channels(p: Process) -> set[str]:
    """Every channel identifier occurring in p, free or bound."""
    if isinstance(p, Nil):
        return set()
    if isinstance(p, Fork):
        return set().union(*(_all_channels(q) for q in p.parts))
    if isinstance(p, Cut):
        return {p.a, p.b} | _all_channels(p.body)
    if isinstance(p, BranchP):
        out = {p.chan}
        for b in p.branches:
            out |= set(b.names) | _all_channels(b.body)
        return out
    if isinstance(p, (SelectP, Prom, Coder, Der)):
        return {p.chan} | set(p.names) | _all_channels(p.body)
    if isinstance(p, NumIf):
        return _all_channels(p.then_p) | _all_channels(p.else_p)
    if isinstance(p, CallDef):
        return set(p.chans)
    raise TypeError(p)


class _NamePool:
    def __init__(self, used: set[str]):
        self.used = set(used)

    def take(self, hint: str) -> str:
        base = hint.split("~")[0]
        if hint not in self.used:
            self.used.add(hint)
            return hint
        for i in itertools.count(1):
            cand = f"{base}~{i}"
            if cand not in self.used:
                self.used.add(cand)
                return cand
        raise AssertionError


def _uniquify(p: Process) -> Process:
    """Rename binders so no name is bound twice or shadows a free name."""
    chans = _NamePool(set(free_channels(p)))
    nums = _NamePool(_num_free(p))

    def go(p: Process, cm: dict[str, str], nm: dict[str, str]) -> Process:
        if isinstance(p, Nil):
            return p
        if isinstance(p, Fork):
            return Fork(tuple(go(q, cm, nm) for q in p.parts))
        if isinstance(p, Cut):
            na, nb = chans.take(p.a), chans.take(p.b)
            return Cut(na, nb, p.type, go(p.body, {**cm, p.a: na, p.b: nb}, nm))
        if isinstance(p, BranchP):
            bs = []
            for b in p.branches:
                names = tuple(chans.take(n) for n in b.names)
                cm2 = {**cm, **dict(zip(b.names, names))}
                if isinstance(b, PBranch):
                    bs.append(PBranch(_ren_label(b.label, nm), names,
                                      go(b.body, cm2, nm)))
                else:
                    var = nums.take(b.var)
                    bs.append(PFamily(b.base, var, names,
                                      go(b.body, cm2, {**nm, b.var: var})))
            return BranchP(cm.get(p.chan, p.chan), tuple(bs))
        if isinstance(p, SelectP):
            names = tuple(chans.take(n) for n in p.names)
            cm2 = {**cm, **dict(zip(p.names, names))}
            return SelectP(cm.get(p.chan, p.chan), _ren_label(p.label, nm),
                           names, go(p.body, cm2, nm))
        if isinstance(p, (Prom, Coder, Der)):
            names = tuple(chans.take(n) for n in p.names)
            cm2 = {**cm, **dict(zip(p.names, names))}
            return type(p)(cm.get(p.chan, p.chan), names, go(p.body, cm2, nm))
        if isinstance(p, NumIf):
            return NumIf(_ren_expr(p.left, nm), _ren_expr(p.right, nm),
                         go(p.then_p, cm, nm), go(p.else_p, cm, nm))
        if isinstance(p, CallDef):
            return CallDef(p.name, tuple(cm.get(c, c) for c in p.chans),
                           tuple(_ren_expr(e, nm) for e in p.nums))
        raise TypeError(p)

    return go(p, {}, {})


# ----------------------------------------------------------------------
# the quiet check for hoisting branchings


def _quiet(p: Process, dominating: frozenset[str], hidden: frozenset[str],
           dominated: bool = False) -> bool:
    if isinstance(p, Nil):
        return True
    if isinstance(p, Fork):
        return all(_quiet(q, dominating, hidden, dominated) for q in p.parts)
    if isinstance(p, Cut):
        return _quiet(p.body, dominating, hidden | {p.a, p.b}, dominated)
    if isinstance(p, Coder):
        return False
    if isinstance(p, Prom):
        return _quiet(p.body, dominating, hidden, dominated)
    if isinstance(p, BranchP):
        dom = dominated or p.chan in dominating
        return all(_quiet(b.body, dominating, hidden, dom)
                   for b in p.branches)
    if isinstance(p, (SelectP, Der)):
        if p.chan not in hidden and not dominated:
            return False
        return _quiet(p.body, dominating, hidden, dominated)
    if isinstance(p, NumIf):
        return (_quiet(p.then_p, dominating, hidden, dominated)
                and _quiet(p.else_p, dominating, hidden, dominated))
    if isinstance(p, CallDef):
        return False
    raise TypeError(p)


# ----------------------------------------------------------------------
# locating part heads through nested cuts


def _head_paths(body: Process, shadow: set[str]):
    """Part heads reachable through forks and non-shadowing cuts."""
    out = []

    def go(p: Process, path: tuple):
        if isinstance(p, Fork):
            for i, q in enumerate(p.parts):
                go(q, path + (("f", i),))
        elif isinstance(p, Cut):
            if not ({p.a, p.b} & shadow):
                go(p.body, path + (("c",),))
        elif not isinstance(p, Nil):
            out.append((path, p))

    go(body, ())
    return out


def _replace_at(body: Process, path: tuple, new: Process) -> Process:
    if not path:
        return new
    step, rest = path[0], path[1:]
    if step[0] == "f":
        parts = list(body.parts)
        parts[step[1]] = _replace_at(parts[step[1]], rest, new)
        return Fork(tuple(parts))
    return Cut(body.a, body.b, body.type, _replace_at(body.body, rest, new))


# ----------------------------------------------------------------------
# deterministic communications


def _family_cont(t, base: str):
    for br in t.branches:
        if getattr(br, "base", None) == base:
            return br.cont
    return None


def _ground_cont(t, label: Label):
    for br in t.branches:
        if hasattr(br, "label") and br.label.render() == label.render():
            return br.cont
        if getattr(br, "base", None) == label.base and len(label.args) == 1 \
                and isinstance(label.args[0], Lit):
            return br.cont
    return None


def _match_branch(t_sel: SessionType, sel: SelectP, br: BranchP):
    """Pair a selection against a branching; None when they don't meet.

    Returns (continuation type, selection body, branch body, branch
    names) with any family variable already substituted.
    """
    if not isinstance(t_sel, Plus):
        return None
    lab = sel.label
    ground = all(isinstance(a, Lit) or not isinstance(a, NumExpr)
                 for a in lab.args)
    for b in br.branches:
        if isinstance(b, PBranch):
            if ground and b.label.render() == lab.render():
                cont = _ground_cont(t_sel, lab)
                if cont is None:
                    return None
                return cont, sel.body, b.body, b.names
        else:
            if (lab.base == b.base and len(lab.args) == 1
                    and isinstance(lab.args[0], NumExpr)):
                cont = _family_cont(t_sel, b.base)
                if cont is None:
                    return None
                body = _subst_num_exprs(b.body, {b.var: lab.args[0]})
                return cont, sel.body, body, b.names
    return None


def _payload_cuts(cont: SessionType, pos_names, pos_chan, pos_body,
                  neg_names, neg_chan, neg_body, pool: _NamePool) -> Process:
    """Cut the two continuations together along the payload sessions."""
    try:
        xs = payload_names(pos_names, pos_chan, cont)
        ys = payload_names(neg_names, neg_chan, dual(cont))
        left = elaborate(xs, cont)
        right = elaborate(ys, dual(cont))
    except (TypingError, ValueError):
        return None
    ml = {n: pool.take(n) for n, _ in left}
    mr = {n: pool.take(n) for n, _ in right}
    core = fork([rename_channels(pos_body, ml),
                 rename_channels(neg_body, mr)])
    for (nx, tx), (ny, _) in zip(reversed(left), reversed(right)):
        core = Cut(ml[nx], mr[ny], tx, core)
    return core


def _try_select_comm(cut: Cut):
    if cut.type is None:
        return None
    heads = _head_paths(cut.body, {cut.a, cut.b})
    ends = {cut.a, cut.b}
    for path_s, sel in heads:
        if not isinstance(sel, SelectP) or sel.chan not in ends:
            continue
        other = cut.b if sel.chan == cut.a else cut.a
        t_sel = cut.type if sel.chan == cut.a else dual(cut.type)
        for path_b, br in heads:
            if not isinstance(br, BranchP) or br.chan != other:
                continue
            m = _match_branch(t_sel, sel, br)
            if m is None:
                continue
            cont, sel_body, br_body, br_names = m
            pool = _NamePool(_all_channels(cut))
            new = _payload_cuts(cont, sel.names, sel.chan, sel_body,
                                br_names, br.chan, br_body, pool)
            if new is None:
                continue
            body = _replace_at(cut.body, path_b, new)
            body = _replace_at(body, path_s, Nil())
            return Cut(cut.a, cut.b, cut.type, body)
    return None


def _request_fire(cut: Cut, server_kind, consume_server: bool):
    """Fire a request against a replicated server or a codereliction."""
    if cut.type is None:
        return []
    heads = _head_paths(cut.body, {cut.a, cut.b})
    ends = {cut.a, cut.b}
    results = []
    for path_d, der in heads:
        if not isinstance(der, Der) or der.chan not in ends:
            continue
        other = cut.b if der.chan == cut.a else cut.a
        t_der = cut.type if der.chan == cut.a else dual(cut.type)
        if not isinstance(t_der, Ques):
            continue
        for path_p, srv in heads:
            if not isinstance(srv, server_kind) or srv.chan != other:
                continue
            pool = _NamePool(_all_channels(cut))
            new = _payload_cuts(t_der.inner, der.names, der.chan, der.body,
                                srv.names, srv.chan, srv.body, pool)
            if new is None:
                continue
            body = _replace_at(cut.body, path_d, new)
            if consume_server:
                body = _replace_at(body, path_p, Nil())
            results.append(Cut(cut.a, cut.b, cut.type, body))
    return results


def _try_request_comm(cut: Cut):
    fired = _request_fire(cut, Prom, consume_server=False)
    return fired[0] if fired else None


def race_redexes(p: Process) -> list[Process]:
    """All one-step firings of a request against a codereliction in p.

    Each element is the whole process with exactly one race resolved;
    this is the only nondeterministic rule, so it is exposed as a
    transition rather than folded into normalization.
    """
    out = []

    def go(p: Process, wrap):
        if isinstance(p, Fork):
            for i, q in enumerate(p.parts):
                parts = list(p.parts)
                go(q, lambda new, i=i, parts=parts:
                    wrap(Fork(tuple(parts[:i] + [new] + parts[i + 1:]))))
        elif isinstance(p, Cut):
            for fired in _request_fire(p, Coder, consume_server=True):
                out.append(wrap(fired))
            go(p.body, lambda new, p=p: wrap(Cut(p.a, p.b, p.type, new)))
        elif isinstance(p, (SelectP, Der)):
            # requests stay enabled under outputs on other channels
            go(p.body, lambda new, p=p: wrap(_rebuild_prefix(p, new)))

    go(p, lambda x: x)
    return out


# ----------------------------------------------------------------------
# forwarder recognition and elimination


def _fwd_pairs(p: Process):
    """The endpoint bijection of an eta-expanded forwarder, else None."""
    if isinstance(p, Nil):
        return frozenset()
    if isinstance(p, Fork):
        out = set()
        for q in p.parts:
            sub = _fwd_pairs(q)
            if sub is None:
                return None
            out |= sub
        return frozenset(out)
    if isinstance(p, BranchP):
        peer = None
        for b in p.branches:
            body = b.body
            if not isinstance(body, SelectP):
                return None
            if peer is None:
                peer = body.chan
            elif body.chan != peer:
                return None
            if isinstance(b, PBranch):
                if body.label.render() != b.label.render():
                    return None
            else:
                want = Label(b.base, (NVar(b.var),))
                if body.label != want:
                    return None
            if len(b.names) != len(body.names):
                return None
            sub = _fwd_pairs(body.body)
            want_pairs = frozenset(frozenset((u, v))
                                   for u, v in zip(b.names, body.names))
            if sub != want_pairs:
                return None
        if peer is None:
            return None
        return frozenset({frozenset((p.chan, peer))})
    if isinstance(p, Prom):
        body = p.body
        if not isinstance(body, Der):
            return None
        sub = _fwd_pairs(body.body)
        want = frozenset(frozenset((u, v))
                         for u, v in zip(p.names, body.names))
        if len(p.names) != len(body.names) or sub != want:
            return None
        return frozenset({frozenset((p.chan, body.chan))})
    return None


def _try_forwarder(cut: Cut):
    parts = _parts(cut.body)
    for i, part in enumerate(parts):
        pairs = _fwd_pairs(part)
        if not pairs or len(pairs) != 1:
            continue
        (pair,) = pairs
        names = set(pair)
        if cut.a in names and cut.b in names:
            # an identity forwarder across the cut disappears
            return Cut(cut.a, cut.b, cut.type,
                       fork(parts[:i] + parts[i + 1:]))
        for end, partner in ((cut.a, cut.b), (cut.b, cut.a)):
            if end in names:
                (z,) = names - {end}
                rest = fork(parts[:i] + parts[i + 1:])
                return rename_channels(rest, {partner: z})
    return None


# ----------------------------------------------------------------------
# hoisting prefixes out of cuts


def _rebuild_prefix(p, body: Process) -> Process:
    if isinstance(p, SelectP):
        return SelectP(p.chan, p.label, p.names, body)
    return type(p)(p.chan, p.names, body)


def _try_pull_positive(cut: Cut):
    parts = _parts(cut.body)
    ends = {cut.a, cut.b}
    for i, part in enumerate(parts):
        if not isinstance(part, _POSITIVE) or part.chan in ends:
            continue
        rest = fork(parts[:i] + parts[i + 1:])
        clash = _bound_view(part) & (free_channels(rest) | ends)
        if clash:
            if not part.names:
                continue  # the sugar can rebind the subject; skip
            pool = _NamePool(_all_channels(cut))
            mp = {n: pool.take(n) for n in part.names}
            body = rename_channels(part.body, mp)
            names = tuple(mp[n] for n in part.names)
            if isinstance(part, SelectP):
                part = SelectP(part.chan, part.label, names, body)
            else:
                part = Der(part.chan, names, body)
        inner = Cut(cut.a, cut.b, cut.type, fork([part.body, rest]))
        return _rebuild_prefix(part, inner)
    return None


def _try_pull_negative(cut: Cut):
    parts = _parts(cut.body)
    ends = frozenset({cut.a, cut.b})
    for i, part in enumerate(parts):
        if not isinstance(part, BranchP) or part.chan in ends:
            continue
        rest = fork(parts[:i] + parts[i + 1:])
        fvr = free_channels(rest)
        dominating = frozenset(
            e for e, o in ((cut.a, cut.b), (cut.b, cut.a)) if o not in fvr)
        if not _quiet(rest, dominating, ends):
            continue
        rest_nums = _num_free(rest)
        new_branches = []
        ok = True
        for b in part.branches:
            names = b.names
            body = b.body
            if set(names) & (fvr | ends):
                pool = _NamePool(_all_channels(cut))
                mp = {n: pool.take(n) for n in names}
                names = tuple(mp[n] for n in names)
                body = rename_channels(body, mp)
            if isinstance(b, PFamily) and b.var in rest_nums:
                ok = False
                break
            inner = Cut(cut.a, cut.b, cut.type, fork([body, rest]))
            if isinstance(b, PBranch):
                new_branches.append(PBranch(b.label, names, inner))
            else:
                new_branches.append(PFamily(b.base, b.var, names, inner))
        if ok:
            return BranchP(part.chan, tuple(new_branches))
    return None


# ----------------------------------------------------------------------
# deterministic ordering of commuting prefixes


def _prefix_key(p):
    if isinstance(p, Der):
        return (p.chan, 0, "")
    if isinstance(p, SelectP):
        return (p.chan, 1, p.label.render())
    if isinstance(p, BranchP):
        return (p.chan, 2, tuple(
            b.label.render() if isinstance(b, PBranch) else b.base + "(#)"
            for b in p.branches))
    raise TypeError(p)


def _try_swap_positives(p):
    inner = p.body
    if not isinstance(inner, _POSITIVE):
        return None
    if _prefix_key(inner) >= _prefix_key(p):
        return None
    if p.chan == inner.chan:
        return None
    bo, bi = _bound_view(p), _bound_view(inner)
    if inner.chan in bo or p.chan in bi or (bo & bi):
        return None
    return _rebuild_prefix(inner, _rebuild_prefix(p, inner.body))


def _branch_headers(p: BranchP):
    return tuple(
        (b.label.render(), b.names) if isinstance(b, PBranch)
        else (b.base + "(#" + b.var + ")", b.names)
        for b in p.branches)


def _try_swap_negatives(p: BranchP):
    inners = [b.body for b in p.branches]
    if not inners or not all(isinstance(q, BranchP) for q in inners):
        return None
    c2 = inners[0].chan
    if any(q.chan != c2 for q in inners) or c2 == p.chan:
        return None
    if any(c2 in b.names for b in p.branches):
        return None
    headers = _branch_headers(inners[0])
    if any(_branch_headers(q) != headers for q in inners):
        return None
    if _prefix_key(inners[0]) >= _prefix_key(p):
        return None
    outer_vars = {b.var for b in p.branches if isinstance(b, PFamily)}
    outer_names = set().union(*(set(b.names) for b in p.branches))
    for q in inners:
        for h in q.branches:
            if p.chan in h.names or (set(h.names) & outer_names):
                return None
            if isinstance(h, PFamily) and h.var in outer_vars:
                return None
    # bodies[i][j]: outer branch i, inner branch j
    new_inner = []
    for j, h in enumerate(inners[0].branches):
        outer_bs = []
        for i, b in enumerate(p.branches):
            body = inners[i].branches[j].body
            if isinstance(b, PBranch):
                outer_bs.append(PBranch(b.label, b.names, body))
            else:
                outer_bs.append(PFamily(b.base, b.var, b.names, body))
        wrapped = BranchP(p.chan, tuple(outer_bs))
        if isinstance(h, PBranch):
            new_inner.append(PBranch(h.label, h.names, wrapped))
        else:
            new_inner.append(PFamily(h.base, h.var, h.names, wrapped))
    return BranchP(c2, tuple(new_inner))


# ----------------------------------------------------------------------
# the rewrite engine


def _local(p: Process, fuel: list) -> Process | None:
    if isinstance(p, Fork):
        flat = fork(p.parts)
        if flat != p:
            return flat
        return None
    if isinstance(p, NumIf):
        if isinstance(p.left, Lit) and isinstance(p.right, Lit):
            return p.then_p if p.left.value == p.right.value else p.else_p
        return None
    if isinstance(p, Cut):
        body = p.body
        if isinstance(body, Nil):
            return Nil()
        fv = free_channels(body)
        if p.a not in fv and p.b not in fv:
            return body
        parts = _parts(body)
        if len(parts) > 1:
            users = [q for q in parts
                     if free_channels(q) & {p.a, p.b}]
            outside = [q for q in parts
                       if not (free_channels(q) & {p.a, p.b})]
            if outside:
                return fork([Cut(p.a, p.b, p.type, fork(users))] + outside)
        if len(parts) == 1 and isinstance(parts[0], _NEGATIVE) \
                and parts[0].chan in {p.a, p.b}:
            return Nil()
        r = _try_forwarder(p)
        if r is not None:
            return r
        if fuel[0] > 0:
            r = _try_select_comm(p) or _try_request_comm(p)
            if r is not None:
                fuel[0] -= 1
                return r
        r = _try_pull_positive(p) or _try_pull_negative(p)
        if r is not None:
            return r
        if isinstance(body, Cut) and body.type is not None \
                and p.type is not None:
            if not ({p.a, p.b} & {body.a, body.b}) \
                    and type_str(body.type) < type_str(p.type):
                return Cut(body.a, body.b, body.type,
                           Cut(p.a, p.b, p.type, body.body))
        return None
    if isinstance(p, _POSITIVE):
        if isinstance(p.body, Fork):
            bvs = _bound_view(p)
            ins = [q for q in p.body.parts if free_channels(q) & bvs]
            outs = [q for q in p.body.parts if not (free_channels(q) & bvs)]
            if outs:
                return fork([_rebuild_prefix(p, fork(ins))] + outs)
        return _try_swap_positives(p)
    if isinstance(p, BranchP):
        return _try_swap_negatives(p)
    return None


def _rewrite(p: Process, fuel: list) -> Process | None:
    r = _local(p, fuel)
    if r is not None:
        return r
    if isinstance(p, Fork):
        for i, q in enumerate(p.parts):
            r = _rewrite(q, fuel)
            if r is not None:
                return fork(p.parts[:i] + (r,) + p.parts[i + 1:])
        return None
    if isinstance(p, Cut):
        r = _rewrite(p.body, fuel)
        if r is not None:
            return Cut(p.a, p.b, p.type, r)
        return None
    if isinstance(p, BranchP):
        for i, b in enumerate(p.branches):
            r = _rewrite(b.body, fuel)
            if r is not None:
                bs = list(p.branches)
                if isinstance(b, PBranch):
                    bs[i] = PBranch(b.label, b.names, r)
                else:
                    bs[i] = PFamily(b.base, b.var, b.names, r)
                return BranchP(p.chan, tuple(bs))
        return None
    if isinstance(p, (SelectP, Prom, Coder, Der)):
        r = _rewrite(p.body, fuel)
        if r is not None:
            return _rebuild_prefix(p, r)
        return None
    if isinstance(p, NumIf):
        r = _rewrite(p.then_p, fuel)
        if r is not None:
            return NumIf(p.left, p.right, r, p.else_p)
        r = _rewrite(p.else_p, fuel)
        if r is not None:
            return NumIf(p.left, p.right, p.then_p, r)
        return None
    return None


_MAX_STEPS = 20000


def normalize(p: Process, *, fuel: int = 64) -> Process:
    """Directed congruence normal form; fuel caps communication steps."""
    p = _uniquify(p)
    budget = [fuel]
    for _ in range(_MAX_STEPS):
        r = _rewrite(p, budget)
        if r is None:
            return p
        p = r
    raise RuntimeError("normalization did not terminate")


# ----------------------------------------------------------------------
# canonical forms


def canonical(p: Process) -> Process:
    """Erase bound-name choices and order parallel parts and branches."""

    def canon(p: Process, cm, nm, ctr) -> Process:
        if isinstance(p, Nil):
            return p
        if isinstance(p, Fork):
            keyed = sorted(
                p.parts,
                key=lambda q: proc_str(canon(q, cm, nm, itertools.count())))
            return Fork(tuple(canon(q, cm, nm, ctr) for q in keyed))
        if isinstance(p, Cut):
            a, b, t = p.a, p.b, p.type
            if t is not None and type_str(dual(t)) < type_str(t):
                a, b, t = b, a, dual(t)
            na, nb = f"c{next(ctr)}", f"c{next(ctr)}"
            return Cut(na, nb, t, canon(p.body, {**cm, a: na, b: nb}, nm, ctr))
        if isinstance(p, BranchP):
            def bkey(b):
                return b.label.render() if isinstance(b, PBranch) \
                    else b.base + "(#)"
            bs = []
            for b in sorted(p.branches, key=bkey):
                names = tuple(f"c{next(ctr)}" for _ in b.names)
                cm2 = {**cm, **dict(zip(b.names, names))}
                if isinstance(b, PBranch):
                    bs.append(PBranch(_ren_label(b.label, nm), names,
                                      canon(b.body, cm2, nm, ctr)))
                else:
                    var = f"k{next(ctr)}"
                    bs.append(PFamily(b.base, var, names,
                                      canon(b.body, cm2, {**nm, b.var: var},
                                            ctr)))
            return BranchP(cm.get(p.chan, p.chan), tuple(bs))
        if isinstance(p, SelectP):
            names = tuple(f"c{next(ctr)}" for _ in p.names)
            cm2 = {**cm, **dict(zip(p.names, names))}
            return SelectP(cm.get(p.chan, p.chan), _ren_label(p.label, nm),
                           names, canon(p.body, cm2, nm, ctr))
        if isinstance(p, (Prom, Coder, Der)):
            names = tuple(f"c{next(ctr)}" for _ in p.names)
            cm2 = {**cm, **dict(zip(p.names, names))}
            return type(p)(cm.get(p.chan, p.chan), names,
                           canon(p.body, cm2, nm, ctr))
        if isinstance(p, NumIf):
            return NumIf(_ren_expr(p.left, nm), _ren_expr(p.right, nm),
                         canon(p.then_p, cm, nm, ctr),
                         canon(p.else_p, cm, nm, ctr))
        if isinstance(p, CallDef):
            return CallDef(p.name, tuple(cm.get(c, c) for c in p.chans),
                           tuple(_ren_expr(e, nm) for e in p.nums))
        raise TypeError(p)

    return canon(p, {}, {}, itertools.count())


# ----------------------------------------------------------------------
# bounded equivalence and barbs


def _swap_moves(p: Process) -> list[Process]:
    """All single prefix or cut swaps anywhere in p, both directions."""
    out = []

    def attempt(p, wrap):
        if isinstance(p, _POSITIVE) and isinstance(p.body, _POSITIVE):
            inner = p.body
            if p.chan != inner.chan:
                bo, bi = _bound_view(p), _bound_view(inner)
                if inner.chan not in bo and p.chan not in bi and not (bo & bi):
                    out.append(wrap(_rebuild_prefix(
                        inner, _rebuild_prefix(p, inner.body))))
        if isinstance(p, BranchP):
            swapped = _force_swap_negatives(p)
            if swapped is not None:
                out.append(wrap(swapped))
        if isinstance(p, Cut) and isinstance(p.body, Cut):
            inner = p.body
            if not ({p.a, p.b} & {inner.a, inner.b}):
                out.append(wrap(Cut(inner.a, inner.b, inner.type,
                                    Cut(p.a, p.b, p.type, inner.body))))

    def go(p, wrap):
        attempt(p, wrap)
        if isinstance(p, Fork):
            for i, q in enumerate(p.parts):
                go(q, lambda new, i=i: wrap(
                    fork(p.parts[:i] + (new,) + p.parts[i + 1:])))
        elif isinstance(p, Cut):
            go(p.body, lambda new: wrap(Cut(p.a, p.b, p.type, new)))
        elif isinstance(p, BranchP):
            for i, b in enumerate(p.branches):
                def wr(new, i=i, b=b):
                    bs = list(p.branches)
                    if isinstance(b, PBranch):
                        bs[i] = PBranch(b.label, b.names, new)
                    else:
                        bs[i] = PFamily(b.base, b.var, b.names, new)
                    return wrap(BranchP(p.chan, tuple(bs)))
                go(b.body, wr)
        elif isinstance(p, (SelectP, Prom, Coder, Der)):
            go(p.body, lambda new: wrap(_rebuild_prefix(p, new)))
        elif isinstance(p, NumIf):
            go(p.then_p, lambda new: wrap(
                NumIf(p.left, p.right, new, p.else_p)))
            go(p.else_p, lambda new: wrap(
                NumIf(p.left, p.right, p.then_p, new)))

    go(p, lambda x: x)
    return out


def _force_swap_negatives(p: BranchP):
    """Like the ordered swap but ignoring the sorting key."""
    inners = [b.body for b in p.branches]
    if not inners or not all(isinstance(q, BranchP) for q in inners):
        return None
    c2 = inners[0].chan
    if any(q.chan != c2 for q in inners) or c2 == p.chan:
        return None
    if any(c2 in b.names for b in p.branches):
        return None
    headers = _branch_headers(inners[0])
    if any(_branch_headers(q) != headers for q in inners):
        return None
    outer_vars = {b.var for b in p.branches if isinstance(b, PFamily)}
    outer_names = set().union(*(set(b.names) for b in p.branches))
    for q in inners:
        for h in q.branches:
            if p.chan in h.names or (set(h.names) & outer_names):
                return None
            if isinstance(h, PFamily) and h.var in outer_vars:
                return None
    new_inner = []
    for j, h in enumerate(inners[0].branches):
        outer_bs = []
        for i, b in enumerate(p.branches):
            body = inners[i].branches[j].body
            if isinstance(b, PBranch):
                outer_bs.append(PBranch(b.label, b.names, body))
            else:
                outer_bs.append(PFamily(b.base, b.var, b.names, body))
        wrapped = BranchP(p.chan, tuple(outer_bs))
        if isinstance(h, PBranch):
            new_inner.append(PBranch(h.label, h.names, wrapped))
        else:
            new_inner.append(PFamily(h.base, h.var, h.names, wrapped))
    return BranchP(c2, tuple(new_inner))


def congruent_eq(p: Process, q: Process, *, bound: int = 3,
                 fuel: int = 64, max_states: int = 2000) -> bool:
    """Bounded congruence check: sound, incomplete beyond the bound."""
    np_, nq = normalize(p, fuel=fuel), normalize(q, fuel=fuel)

    def key(x: Process) -> str:
        return proc_str(canonical(x))

    seen_p = {key(np_)}
    seen_q = {key(nq)}
    if seen_p & seen_q:
        return True
    front_p, front_q = [np_], [nq]
    for _ in range(bound):
        if len(seen_p) + len(seen_q) > max_states:
            break
        if len(front_p) <= len(front_q):
            front, seen, goal = front_p, seen_p, seen_q
        else:
            front, seen, goal = front_q, seen_q, seen_p
        nxt = []
        for x in front:
            for y in _swap_moves(x):
                k = key(y)
                if k in goal:
                    return True
                if k not in seen:
                    seen.add(k)
                    nxt.append(y)
        front[:] = nxt
        if not front_p and not front_q:
            break
    return False


def barbs(p: Process, *, fuel: int = 64) -> frozenset[str]:
    """Free names carrying an unguarded output or request."""
    p = normalize(p, fuel=fuel)
    out: set[str] = set()

    def go(p: Process, hidden: frozenset[str]):
        if isinstance(p, Fork):
            for q in p.parts:
                go(q, hidden)
        elif isinstance(p, Cut):
            go(p.body, hidden | {p.a, p.b})
        elif isinstance(p, _POSITIVE):
            if p.chan not in hidden:
                out.add(p.chan)
            go(p.body, hidden | _bound_view(p))
        elif isinstance(p, NumIf):
            go(p.then_p, hidden)
            go(p.else_p, hidden)

    go(p, frozenset())
    return frozenset(out)
