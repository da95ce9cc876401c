"""Interpretation of typed processes as causal strategies.

A process typed in a context maps to a strategy on the parallel game
of its channels, each component tagged by the channel name.  The
interpretation is structural: nil is weakening, parallel composition
merges the shared client channels, a selection composes with the
injection wire, branching tuples the branch strategies behind their
guards, restriction composes with copycat and hides, promotion clones
the body across server copies, dereliction requests a fresh copy, and
the one-shot server is the codereliction race.

Everything is cut off at a budget: replicated games materialize that
many copies, deeper events are pruned, and numeral label families
widen up to a separate cap.  Raising the budget embeds the denotation
into the larger one; the chain of these prefixes stands in for the
ideal unbounded strategy.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .escore import Event, EventStructure
from .exponentials import (
    _mirror_edges, _receive_only, _under, _wire, cantor, codereliction,
    der_block, wn_game,
)
from .games import (
    Game, NEG, POS, depth_prune, game_truncated, parallel_games,
    type_to_game,
)
from .meta.congruence import canonical, normalize
from .meta.reduce import reduce_step
from .meta.syntax import (
    Bang, BranchP, CallDef, Coder, Cut, Der, Fork, Lit, Nil, NumIf,
    PBranch, PFamily, Plus, Process, Prom, Ques, SelectP, SessionType,
    dual, elaborate, free_channels, materialize_branches, proc_str,
    rooted, subst_nums, type_str, unfold,
)
from .meta.typing import (
    _select_branch, make_context, payload_names, typecheck,
)
from .strategies import (
    Strategy, compose, copycat, injection, pairing, weakening,
)

__all__ = [
    "Denotation", "InterpError", "interp_process", "approximant_chain",
    "soundness_check", "weak_embed", "after", "negative_strategy",
    "denotation_json",
]


class InterpError(Exception):
    pass


@dataclass
class Denotation:
    """A budgeted meaning: the strategy, the budget it was computed at,
    and whether a larger budget could still extend it."""
    strategy: Strategy
    budget: int
    stable: bool

    def to_json(self) -> dict:
        base = self.strategy.to_json()
        base["budget"] = self.budget
        base["stable"] = self.stable
        return base


def denotation_json(d: Denotation) -> dict:
    return d.to_json()


# ----------------------------------------------------------------------
# games of contexts


_GAME_CACHE: dict = {}


def _tg(t: SessionType, budget: int, num_cap: int) -> Game:
    key = (type_str(t), budget, num_cap)
    if key not in _GAME_CACHE:
        _GAME_CACHE[key] = type_to_game(t, budget, num_cap)
    return _GAME_CACHE[key]


def _shallow(t: SessionType, budget: int, num_cap: int) -> Game:
    """The game of t as it appears one level inside a prefix."""
    return depth_prune(_tg(t, budget, num_cap), budget - 1)


def _retag_game(g: Game, fn) -> Game:
    m = {e: fn(e) for e in g.es.events}
    es = EventStructure(
        frozenset(m.values()),
        {m[e]: {m[c] for c in g.es.imcause[e]} for e in g.es.events},
        frozenset(frozenset(m[x] for x in pair) for pair in g.es.minconf),
    )
    return Game(es, {m[e]: p for e, p in g.pol.items()})


def _named(g: Game, name: str) -> Game:
    return _retag_game(g, lambda e: Event((name,) + e.path, e.label))


def _ctx_game(ctx: dict, budget: int, num_cap: int) -> Game:
    parts = [_named(_tg(t, budget, num_cap), nm)
             for nm, t in sorted(ctx.items())]
    events: set = set()
    imcause: dict = {}
    minconf: set = set()
    pol: dict = {}
    for g in parts:
        events |= g.es.events
        imcause.update(g.es.imcause)
        minconf |= g.es.minconf
        pol.update(g.pol)
    return Game(EventStructure(frozenset(events), imcause,
                               frozenset(minconf)), pol)


def _slot_prefixes(t: SessionType) -> list[tuple]:
    """Game path prefix of each elaborated slot of a payload type."""
    if rooted(t):
        return [()]
    out = []
    for i, p in enumerate(t.parts):
        out.extend((i,) + q for q in _slot_prefixes(p))
    return out


# ----------------------------------------------------------------------
# regrouping between the named view and the two-sided view


def _remap(sig: Strategy, fn) -> Strategy:
    game = _retag_game(sig.game, fn)
    return Strategy(game, sig.es,
                    {s: Event(fn(a).path, a.label)
                     for s, a in sig.play.items()})


def _hom_from(sig: Strategy, left: list) -> Strategy:
    """View the named strategy as playing from the listed components
    (tag 0, at the given sub-prefixes) to the rest (tag 1, named)."""
    lm = {nm: pfx for nm, pfx in left}

    def fn(e: Event) -> Event:
        nm = e.path[0]
        if nm in lm:
            return Event((0,) + lm[nm] + tuple(e.path[1:]), e.label)
        return Event((1, nm) + tuple(e.path[1:]), e.label)

    return _remap(sig, fn)


def _unhom(sig: Strategy, out: list) -> Strategy:
    """Back to the named view: tag 1 components keep their names, the
    tag 0 side is distributed over the listed output channels."""
    def fn(e: Event) -> Event:
        if e.path[0] == 1:
            return Event(tuple(e.path[1:]), e.label)
        rest = tuple(e.path[1:])
        for nm, pfx in out:
            if rest[:len(pfx)] == pfx:
                return Event((nm,) + rest[len(pfx):], e.label)
        raise InterpError(f"unmapped output move {e.path}")

    return _remap(sig, fn)


def _swap01(sig: Strategy) -> Strategy:
    return _remap(sig, lambda e: Event((1 - e.path[0],) + tuple(e.path[1:]),
                                       e.label))


def _apply_wire(sig: Strategy, left: list, wire: Strategy, out: list,
                max_primes: int) -> Strategy:
    """Route the listed components of sig through a forwarding wire.

    The wire plays on the parallel of the dual of its input shape
    (tag 0) and its output shape (tag 1); the synchronized events are
    hidden and the outputs become channels named by ``out``.
    """
    tau = _hom_from(sig, left)
    sigma = _swap01(wire)
    comp = compose(tau, sigma, max_primes=max_primes)
    return _unhom(comp, out)


def _close_pair(sig: Strategy, a: str, b: str, g: Game,
                max_primes: int) -> Strategy:
    """Cut: synchronize the two dual endpoints and hide them."""
    tau = _hom_from(sig, [(a, (0,)), (b, (1,))])
    cc = copycat(g)
    sigma = _remap(cc, lambda e: Event((1, e.path[0]) + tuple(e.path[1:]),
                                       e.label))
    comp = compose(tau, sigma, max_primes=max_primes)
    return _unhom(comp, [])


def _tensor(s1: Strategy, s2: Strategy) -> Strategy:
    """Disjoint union of two named strategies on disjoint contexts."""
    g1, g2 = s1.game, s2.game
    shared = {e.path[0] for e in g1.es.events} & \
             {e.path[0] for e in g2.es.events}
    if shared:
        raise InterpError(f"tensor with shared channels {shared}")
    game = Game(
        EventStructure(
            g1.es.events | g2.es.events,
            {**g1.es.imcause, **g2.es.imcause},
            g1.es.minconf | g2.es.minconf,
        ),
        {**g1.pol, **g2.pol},
    )
    events: set = set()
    imcause: dict = {}
    minconf: set = set()
    play: dict = {}
    for tag, sig in (("L", s1), ("R", s2)):
        m = {s: Event((tag,) + tuple(s.path), s.label) for s in sig.es.events}
        events |= set(m.values())
        for s in sig.es.events:
            imcause[m[s]] = {m[c] for c in sig.es.imcause[s]}
        minconf |= {frozenset(m[x] for x in pair) for pair in sig.es.minconf}
        play.update({m[s]: a for s, a in sig.play.items()})
    return Strategy(game, EventStructure(frozenset(events), imcause,
                                         frozenset(minconf)), play)


def _rename_chan(sig: Strategy, ren: dict) -> Strategy:
    def fn(e: Event) -> Event:
        return Event((ren.get(e.path[0], e.path[0]),) + tuple(e.path[1:]),
                     e.label)
    return _remap(sig, fn)


def _drop_channels(sig: Strategy, names: set) -> Strategy:
    """Remove entire components the process never touches actively.

    Only sound for components carrying at most the receptive skeleton;
    used to take weakened linear names out of a promotion body.
    """
    game = sig.game.project([e for e in sig.game.es.events
                             if e.path[0] not in names])
    keep = [s for s in sig.es.events
            if sig.play.get(s) is None or sig.play[s].path[0] not in names]
    es = sig.es.project(keep)
    return Strategy(game, es, {s: a for s, a in sig.play.items()
                               if s in es.events})


# ----------------------------------------------------------------------
# budget adapters and merge wires


def _prune_wire(full: Game, shallow: Game) -> Strategy:
    """Forward a channel onto its shallower prefix.

    Events beyond the prefix are received and absorbed when they are
    moves of the other side, and never played when they would be ours.
    """
    game = parallel_games([full.dual(), shallow])
    sev = {e.path for e in shallow.es.events}
    kept = []
    for e in full.es.events:
        le = Event((0,) + e.path, e.label)
        if e.path in sev or game.pol[le] == NEG:
            kept.append(le)
    for e in shallow.es.events:
        kept.append(Event((1,) + e.path, e.label))
    edges = []
    for e in shallow.es.events:
        a = Event((0,) + e.path, e.label)
        b = Event((1,) + e.path, e.label)
        if game.pol[a] == NEG:
            edges.append((a, b))
        else:
            edges.append((b, a))
    return _wire(game, [kept], edges)


def _adapt(sig: Strategy, name: str, full: Game, shallow: Game,
           max_primes: int) -> Strategy:
    if full.structure_key() == shallow.structure_key():
        return sig
    return _apply_wire(sig, [(name, ())], _prune_wire(full, shallow),
                       [(name, ())], max_primes)


def _merge_wire(g: Game, maps: list[dict], width: int,
                out_width: int) -> Strategy:
    """Requests from several client channels renumbered into one.

    maps[s][k] is the output copy serving copy k of input s; a missing
    entry absorbs that copy's requests.
    """
    ins = parallel_games([wn_game(g, width) for _ in maps])
    game = parallel_games([ins.dual(), wn_game(g, out_width)])
    regions: list = []
    edges: list = []
    for s, m in enumerate(maps):
        for k in range(width):
            lp = (0, s, ("c", k), "Req")
            t = m.get(k)
            if t is not None and t < out_width:
                rp = (1, ("c", t), "Req")
                regions.append(_under(game, lp))
                regions.append(_under(game, rp))
                edges.extend(_mirror_edges(game, lp, rp))
            else:
                regions.append(_receive_only(game, lp))
    return _wire(game, regions, edges)


def _merge_clients(sig: Strategy, names: list[str], out: str,
                   inner: Game, budget: int, maps: list[dict],
                   max_primes: int) -> Strategy:
    wire = _merge_wire(inner, maps, budget, budget)
    left = [(nm, (i,)) for i, nm in enumerate(names)]
    return _apply_wire(sig, left, wire, [(out, ())], max_primes)


# ----------------------------------------------------------------------
# promotion


def _promote(body: Strategy, ques: dict, payload: list, x: str,
             t_inner: SessionType, budget: int, num_cap: int) -> Strategy:
    """Clone the body across the server copies.

    Copy i opens behind its own Req; its request j on a shared client
    channel is renumbered to the pair code of (i, j).  Moves that fall
    off the budgeted games are dropped together with everything that
    depended on them.
    """
    bang_game = _tg(Bang(t_inner), budget, num_cap)
    result_game_parts = [(nm, _tg(t, budget, num_cap))
                         for nm, t in sorted(ques.items())]
    game = Game(
        EventStructure(frozenset(), {}, frozenset()), {})
    parts = [_named(g, nm) for nm, g in result_game_parts]
    parts.append(_named(bang_game, x))
    events: set = set()
    imcause: dict = {}
    minconf: set = set()
    pol: dict = {}
    for g in parts:
        events |= g.es.events
        imcause.update(g.es.imcause)
        minconf |= g.es.minconf
        pol.update(g.pol)
    game = Game(EventStructure(frozenset(events), imcause,
                               frozenset(minconf)), pol)

    slot_of = {nm: pfx for nm, pfx in payload}

    c_events: set = set()
    c_imcause: dict = {}
    c_minconf: set = set()
    c_play: dict = {}

    for i in range(budget):
        gate = Event(("g", i), "Req")
        gate_move = Event((x, ("c", i), "Req"), "Req")
        kept: dict = {}
        for s in sorted(body.es.events, key=lambda e: body.es.depth(e)):
            if any(c not in kept for c in body.es.imcause[s]):
                continue
            a = body.play.get(s)
            if a is None:
                kept[s] = (Event(("p", i) + tuple(s.path), s.label), None)
                continue
            nm, rest = a.path[0], tuple(a.path[1:])
            if nm in slot_of:
                mv = Event((x, ("c", i), "Req") + slot_of[nm] + rest,
                           a.label)
            elif nm in ques:
                j = rest[0][1]
                mv = Event((nm, ("c", cantor(i, j))) + rest[1:], a.label)
            else:
                raise InterpError(f"promotion over non-client name {nm}")
            if mv not in game.es.events:
                continue
            kept[s] = (Event(("p", i) + tuple(s.path), s.label), mv)
        c_events.add(gate)
        c_imcause[gate] = set()
        c_play[gate] = gate_move
        for s, (ev, mv) in kept.items():
            c_events.add(ev)
            cs = {kept[c][0] for c in body.es.imcause[s]}
            if not cs:
                cs = {gate}
            c_imcause[ev] = cs
            if mv is not None:
                c_play[ev] = mv
        for pair in body.es.minconf:
            xs = [kept.get(e) for e in pair]
            if all(v is not None for v in xs):
                c_minconf.add(frozenset(v[0] for v in xs))

    es = EventStructure(frozenset(c_events), c_imcause, frozenset(c_minconf))
    return Strategy(game, es, c_play)


# ----------------------------------------------------------------------
# the interpretation proper


def _interp(p: Process, ctx: dict, budget: int, num_cap: int,
            max_primes: int) -> Strategy:
    if isinstance(p, Nil):
        return weakening(_ctx_game(ctx, budget, num_cap))

    if isinstance(p, Fork):
        return _interp_fork(p, ctx, budget, num_cap, max_primes)

    if isinstance(p, Cut):
        body_ctx = dict(ctx)
        a, b = p.a, p.b
        if a in ctx or b in ctx:
            raise InterpError(f"restriction shadows a free name: {a}, {b}")
        body_ctx[a] = p.type
        body_ctx[b] = dual(p.type)
        sig = _interp(p.body, body_ctx, budget, num_cap, max_primes)
        return _close_pair(sig, a, b, _tg(p.type, budget, num_cap),
                           max_primes)

    if isinstance(p, SelectP):
        return _interp_select(p, ctx, budget, num_cap, max_primes)

    if isinstance(p, BranchP):
        return _interp_branch(p, ctx, budget, num_cap, max_primes)

    if isinstance(p, Prom):
        return _interp_prom(p, ctx, budget, num_cap, max_primes)

    if isinstance(p, Der):
        return _interp_der(p, ctx, budget, num_cap, max_primes)

    if isinstance(p, Coder):
        return _interp_coder(p, ctx, budget, num_cap, max_primes)

    if isinstance(p, NumIf):
        if not (isinstance(p.left, Lit) and isinstance(p.right, Lit)):
            raise InterpError("numeral guard with free variables")
        chosen = p.then_p if p.left.value == p.right.value else p.else_p
        return _interp(chosen, ctx, budget, num_cap, max_primes)

    if isinstance(p, CallDef):
        raise InterpError(
            f"definition call {p.name} not unfolded before interpretation")

    raise InterpError(f"cannot interpret {p!r}")


def _payload_entries(names, chan, cont):
    names = payload_names(names, chan, cont)
    entries = elaborate(names, cont)
    prefixes = _slot_prefixes(cont)
    return entries, list(zip([nm for nm, _ in entries], prefixes))


def _interp_fork(p: Fork, ctx: dict, budget: int, num_cap: int,
                 max_primes: int) -> Strategy:
    owner: dict = {}
    for i, q in enumerate(p.parts):
        used = free_channels(q)
        for nm, t in ctx.items():
            if isinstance(t, Ques) or nm not in used:
                continue
            if nm in owner:
                raise InterpError(f"linear name {nm} in two components")
            owner[nm] = i
    ques = sorted(nm for nm, t in ctx.items() if isinstance(t, Ques))
    part_sigs = []
    for i, q in enumerate(p.parts):
        part_ctx = {nm: t for nm, t in ctx.items()
                    if isinstance(t, Ques) or owner.get(nm, 0) == i}
        part_sigs.append(_interp(q, part_ctx, budget, num_cap, max_primes))

    n = len(part_sigs)
    fresh = {}
    renamed = []
    for i, sig in enumerate(part_sigs):
        ren = {nm: f"{nm}~m{i}" for nm in ques}
        fresh[i] = ren
        renamed.append(_rename_chan(sig, ren))
    combined = renamed[0]
    for sig in renamed[1:]:
        combined = _tensor(combined, sig)
    for nm in ques:
        t = ctx[nm]
        inner = _shallow(t.inner, budget, num_cap)
        names = [fresh[i][nm] for i in range(n)]
        maps = [{k: k * n + i for k in range(budget)} for i in range(n)]
        combined = _merge_clients(combined, names, nm, inner, budget,
                                  maps, max_primes)
    return combined


def _interp_select(p: SelectP, ctx: dict, budget: int, num_cap: int,
                   max_primes: int) -> Strategy:
    t = ctx[p.chan]
    if not isinstance(t, Plus):
        raise InterpError(f"selection on non-output {p.chan}")
    if not p.label.ground():
        raise InterpError(f"selection label {p.label.render()} not ground")
    mats = materialize_branches(t, num_cap)
    want = p.label.render()
    k = next((i for i, (lab, _) in enumerate(mats)
              if lab.render() == want), None)
    cont = _select_branch(t, p.label)
    entries, payload = _payload_entries(p.names, p.chan, cont)
    body_ctx = {nm: u for nm, u in ctx.items() if nm != p.chan}
    body_ctx.update(dict(entries))
    sig = _interp(p.body, body_ctx, budget, num_cap, max_primes)

    if k is None:
        # the label fell off the widened family: the whole session is
        # truncated away, everything else survives
        pay = {nm for nm, _ in entries}
        keep = [s for s in sig.es.events
                if all(sig.play[c].path[0] not in pay
                       for c in sig.es.cone(s) if c in sig.play)]
        es = sig.es.project(keep)
        play = {s: a for s, a in sig.play.items() if s in es.events}
        out_ctx = {nm: u for nm, u in ctx.items()}
        game = _ctx_game(out_ctx, budget, num_cap)
        return Strategy(game, es, play)

    for nm, u in entries:
        sig = _adapt(sig, nm, _tg(u, budget, num_cap),
                     _shallow(u, budget, num_cap), max_primes)
    branches_g = [(lab.render(), _shallow(cu, budget, num_cap))
                  for lab, cu in mats]
    wire = injection(branches_g, k)
    return _apply_wire(sig, payload, wire, [(p.chan, ())], max_primes)


def _interp_branch(p: BranchP, ctx: dict, budget: int, num_cap: int,
                   max_primes: int) -> Strategy:
    t = ctx[p.chan]
    rest = {nm: u for nm, u in ctx.items() if nm != p.chan}
    mats = materialize_branches(t, num_cap)
    source = _ctx_game(rest, budget, num_cap).dual()

    tagged = []
    for lab, cont in mats:
        body = _find_branch_body(p, lab)
        entries, payload = _payload_entries(
            _branch_names(p, lab), p.chan, cont)
        body_ctx = dict(rest)
        body_ctx.update(dict(entries))
        sig = _interp(body, body_ctx, budget, num_cap, max_primes)
        for nm, u in entries:
            sig = _adapt(sig, nm, _tg(u, budget, num_cap),
                         _shallow(u, budget, num_cap), max_primes)
        hom = _hom_branch(sig, payload)
        tagged.append((lab.render(), hom))

    paired = pairing(source, tagged, max_primes=max_primes)

    def fn(e: Event) -> Event:
        if e.path[0] == 0:
            return Event(tuple(e.path[1:]), e.label)
        return Event((p.chan,) + tuple(e.path[1:]), e.label)

    return _remap(paired, fn)


def _hom_branch(sig: Strategy, payload: list) -> Strategy:
    pm = {nm: pfx for nm, pfx in payload}

    def fn(e: Event) -> Event:
        nm = e.path[0]
        if nm in pm:
            return Event((1,) + pm[nm] + tuple(e.path[1:]), e.label)
        return Event((0, nm) + tuple(e.path[1:]), e.label)

    return _remap(sig, fn)


def _find_branch_body(p: BranchP, lab) -> Process:
    for b in p.branches:
        if isinstance(b, PBranch) and b.label.render() == lab.render():
            return b.body
    for b in p.branches:
        if isinstance(b, PFamily) and b.base == lab.base \
                and len(lab.args) == 1 and isinstance(lab.args[0], Lit):
            return subst_nums(b.body, {b.var: lab.args[0].value})
    raise InterpError(f"no branch for label {lab.render()}")


def _branch_names(p: BranchP, lab):
    for b in p.branches:
        if isinstance(b, PBranch) and b.label.render() == lab.render():
            return b.names
    for b in p.branches:
        if isinstance(b, PFamily) and b.base == lab.base:
            return b.names
    raise InterpError(f"no branch for label {lab.render()}")


def _interp_prom(p: Prom, ctx: dict, budget: int, num_cap: int,
                 max_primes: int) -> Strategy:
    t = ctx[p.chan]
    if not isinstance(t, Bang):
        raise InterpError(f"promotion on non-server {p.chan}")
    rest = {nm: u for nm, u in ctx.items() if nm != p.chan}
    entries, payload = _payload_entries(p.names, p.chan, t.inner)
    body_ctx = dict(rest)
    body_ctx.update(dict(entries))
    sig = _interp(p.body, body_ctx, budget, num_cap, max_primes)
    for nm, u in entries:
        sig = _adapt(sig, nm, _tg(u, budget, num_cap),
                     _shallow(u, budget, num_cap), max_primes)
    ques = {nm: u for nm, u in rest.items() if isinstance(u, Ques)}
    others = set(rest) - set(ques)
    if others:
        sig = _drop_channels(sig, others)
    promoted = _promote(sig, ques, payload, p.chan, t.inner, budget, num_cap)
    if others:
        extra = weakening(_ctx_game({nm: rest[nm] for nm in others},
                                    budget, num_cap))
        promoted = _tensor(promoted, extra)
    return promoted


def _interp_der(p: Der, ctx: dict, budget: int, num_cap: int,
                max_primes: int) -> Strategy:
    t = ctx[p.chan]
    if not isinstance(t, Ques):
        raise InterpError(f"request on non-client {p.chan}")
    entries, payload = _payload_entries(p.names, p.chan, t.inner)
    if len(entries) != 1:
        raise InterpError("request payload must be a single session")
    y = entries[0][0]
    body_ctx = dict(ctx)
    body_ctx[y] = entries[0][1]
    sig = _interp(p.body, body_ctx, budget, num_cap, max_primes)
    inner = _shallow(t.inner, budget, num_cap)
    sig = _adapt(sig, y, _tg(entries[0][1], budget, num_cap), inner,
                 max_primes)
    tmp = f"{p.chan}~req"
    sig = _apply_wire(sig, [(y, ())], der_block(inner, budget),
                      [(tmp, ())], max_primes)
    # the fresh request takes copy 0, older ones shift up one
    maps = [{k: k + 1 for k in range(budget)}, {0: 0}]
    return _merge_clients(sig, [p.chan, tmp], p.chan, inner, budget,
                          maps, max_primes)


def _interp_coder(p: Coder, ctx: dict, budget: int, num_cap: int,
                  max_primes: int) -> Strategy:
    t = ctx[p.chan]
    if not isinstance(t, Bang):
        raise InterpError(f"one-shot server on non-server {p.chan}")
    entries, payload = _payload_entries(p.names, p.chan, t.inner)
    if len(entries) != 1:
        raise InterpError("server payload must be a single session")
    x = entries[0][0]
    body_ctx = dict(ctx)
    body_ctx[x] = entries[0][1]
    sig = _interp(p.body, body_ctx, budget, num_cap, max_primes)
    inner = _shallow(t.inner, budget, num_cap)
    sig = _adapt(sig, x, _tg(entries[0][1], budget, num_cap), inner,
                 max_primes)
    wire = codereliction(inner, budget, max_primes=max_primes)
    return _apply_wire(sig, [(p.chan, (0,)), (x, (1,))], wire,
                       [(p.chan, ())], max_primes)


# ----------------------------------------------------------------------
# entry points


_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def _guardedness(defs: dict) -> None:
    """Reject definitions whose recursion is not behind a prefix."""
    def heads(q: Process, out: set) -> None:
        if isinstance(q, Fork):
            for part in q.parts:
                heads(part, out)
        elif isinstance(q, Cut):
            heads(q.body, out)
        elif isinstance(q, NumIf):
            heads(q.then_p, out)
            heads(q.else_p, out)
        elif isinstance(q, CallDef):
            out.add(q.name)

    exposed = {}
    for name, d in defs.items():
        out: set = set()
        heads(d.body, out)
        exposed[name] = out
    for name in defs:
        seen = set()
        frontier = {name}
        while frontier:
            nxt = set()
            for n in frontier:
                for m in exposed.get(n, ()):
                    if m == name:
                        raise InterpError(f"unguarded recursion in {name}")
                    if m not in seen:
                        seen.add(m)
                        nxt.add(m)
            frontier = nxt


def interp_process(p: Process, ctx, *, budget: int = 4, num_cap: int = 3,
                   defs: dict | None = None, max_primes: int = 40000,
                   check_stable: bool = False) -> Denotation:
    """The budgeted denotation of a typed process.

    Raises TypingError when the process does not typecheck, and
    InterpError on malformed input.  Results are cached on the
    canonical form of the unfolded process and the budget.
    """
    ctx_t = make_context(ctx)
    typecheck(p, ctx_t, defs=defs, unfold_budget=max(budget, 1))
    if defs:
        _guardedness(defs)
        p_unf = unfold(p, defs, budget)
        rec_stable = proc_str(unfold(p, defs, budget + 1)) == proc_str(p_unf)
    else:
        p_unf = p
        rec_stable = True
    cd = dict(ctx_t)

    key = (proc_str(canonical(p_unf)),
           tuple(sorted((nm, type_str(t)) for nm, t in cd.items())),
           budget, num_cap)
    with _CACHE_LOCK:
        sig = _CACHE.get(key)
    if sig is None:
        if budget <= 0:
            sig = weakening(_ctx_game(cd, budget, num_cap))
        else:
            sig = _interp(p_unf, cd, budget, num_cap, max_primes)
        with _CACHE_LOCK:
            _CACHE[key] = sig

    stable = rec_stable and not any(
        game_truncated(t, budget, num_cap) for t in cd.values())
    if not stable and check_stable:
        bigger = interp_process(p, ctx, budget=budget + 1, num_cap=num_cap,
                                defs=defs, max_primes=max_primes)
        stable = weak_embed(bigger.strategy, sig) is not None
    return Denotation(sig, budget, stable)


def approximant_chain(p: Process, ctx, budgets, *, num_cap: int = 3,
                      defs: dict | None = None,
                      max_primes: int = 40000) -> dict:
    """Denotations at increasing budgets with embedding witnesses."""
    budgets = list(budgets)
    if sorted(budgets) != budgets:
        raise InterpError("budgets must be increasing")
    dens = [interp_process(p, ctx, budget=b, num_cap=num_cap, defs=defs,
                           max_primes=max_primes) for b in budgets]
    embeddings = []
    stabilized = None
    for small, large in zip(dens, dens[1:]):
        w = weak_embed(small.strategy, large.strategy)
        if w is None:
            raise InterpError(
                f"no embedding from budget {small.budget} into "
                f"{large.budget}")
        embeddings.append(w)
        if stabilized is None and \
                len(small.strategy.es.events) == len(large.strategy.es.events):
            stabilized = small.budget
    return {"denotations": dens, "embeddings": embeddings,
            "stabilized_at": stabilized}


# ----------------------------------------------------------------------
# embeddings and residuals


def _copy_positions(path) -> list[int]:
    return [k for k, s in enumerate(path)
            if isinstance(s, tuple) and len(s) == 2 and s[0] == "c"]


def _mask(path) -> tuple:
    return tuple("c#" if isinstance(s, tuple) and len(s) == 2 and s[0] == "c"
                 else s for s in path)


def weak_embed(a: Strategy, b: Strategy):
    """An injection of a's carrier into b's respecting causes, labels
    up to per-layer copy renaming, and conflict both ways.

    Returns the event map, or None.
    """
    if len(a.es.events) > len(b.es.events):
        return None

    def desc(sig: Strategy, e: Event):
        m = sig.play.get(e)
        return (sig.es.depth(e), sig.polarity(e),
                e.label if m is None else m.label,
                None if m is None else _mask(m.path))

    from collections import defaultdict
    aevs = sorted(a.es.events, key=lambda e: (a.es.depth(e), str(e.path)))
    cands = defaultdict(list)
    for f in sorted(b.es.events, key=lambda e: str(e.path)):
        cands[desc(b, f)].append(f)

    match: dict = {}
    used: set = set()
    layer: dict = {}
    fwd: dict = {}
    rev: dict = {}

    def constrain(pa, pb, trail) -> bool:
        for k in _copy_positions(pa):
            la, lb = pa[:k], pb[:k]
            if la not in fwd:
                layer[la] = lb
                fwd[la], rev[la] = {}, {}
                trail.append(la)
            elif layer[la] != lb:
                return False
            ia, ib = pa[k][1], pb[k][1]
            if ia in fwd[la]:
                if fwd[la][ia] != ib:
                    return False
            elif ib in rev[la]:
                return False
            else:
                fwd[la][ia] = ib
                rev[la][ib] = ia
                trail.append((la, ia, ib))
        return True

    def undo(trail):
        for t in reversed(trail):
            if isinstance(t, tuple) and len(t) == 3:
                la, ia, ib = t
                fwd[la].pop(ia, None)
                rev[la].pop(ib, None)
            else:
                layer.pop(t, None)
                fwd.pop(t, None)
                rev.pop(t, None)

    def assign(n: int) -> bool:
        if n == len(aevs):
            return True
        e = aevs[n]
        want = {match[c] for c in a.es.imcause[e]}
        for f in cands[desc(a, e)]:
            if f in used or set(b.es.imcause[f]) != want:
                continue
            if any(a.es.conflict(e, e2) != b.es.conflict(f, f2)
                   for e2, f2 in match.items()):
                continue
            ma, mb = a.play.get(e), b.play.get(f)
            trail: list = []
            ok = ma is None or constrain(ma.path, mb.path, trail)
            if ok:
                match[e] = f
                used.add(f)
                if assign(n + 1):
                    return True
                used.discard(f)
                del match[e]
            undo(trail)
        return False

    if assign(0):
        return dict(match)
    return None


def after(sig: Strategy, n: Event) -> Strategy:
    """The residual once an internal event has happened: the event and
    everything in conflict with it disappear."""
    if n not in sig.es.events or n in sig.play:
        raise InterpError("residuals are taken at internal events only")
    keep = [e for e in sig.es.events
            if e != n and not sig.es.conflict(e, n)]
    es = sig.es.project(keep)
    return Strategy(sig.game, es,
                    {s: a for s, a in sig.play.items() if s in es.events})


def negative_strategy(sig: Strategy) -> bool:
    """True when every opening move waits on the environment."""
    return all(sig.polarity(e) == NEG for e in sig.es.minimal())


def _internal_candidates(sig: Strategy):
    for n in sig.es.sorted_events():
        if n in sig.play:
            continue
        if all(sig.polarity(c) != POS for c in sig.es.down(n)):
            yield n


def soundness_check(p: Process, q: Process, relation: str, ctx, *,
                    budget: int = 4, num_cap: int = 3,
                    defs: dict | None = None,
                    max_primes: int = 40000) -> dict:
    """Checks that a syntactic relation is reflected semantically.

    congruent: both interpret to weakly isomorphic strategies.
    reduces:   the denotation has an internal event whose residual is
               weakly isomorphic to the successor's denotation.
    approx:    the smaller denotation embeds into the larger.
    """
    from .exponentials import weak_iso
    from .meta.congruence import congruent_eq

    dp = interp_process(p, ctx, budget=budget, num_cap=num_cap, defs=defs,
                        max_primes=max_primes)
    dq = interp_process(q, ctx, budget=budget, num_cap=num_cap, defs=defs,
                        max_primes=max_primes)
    out = {"relation": relation, "budget": budget}

    if relation == "congruent":
        out["premise"] = congruent_eq(p, q)
        out["semantic"] = weak_iso(dp.strategy, dq.strategy)
    elif relation == "reduces":
        key_q = proc_str(canonical(normalize(q)))
        out["premise"] = any(
            proc_str(canonical(s)) == key_q for s in reduce_step(p))
        witness = None
        for n in _internal_candidates(dp.strategy):
            if weak_iso(after(dp.strategy, n), dq.strategy):
                witness = str(n.path)
                break
        out["semantic"] = witness is not None
        out["witness"] = witness
    elif relation == "approx":
        out["premise"] = syntactic_leq(p, q)
        out["semantic"] = weak_embed(dp.strategy, dq.strategy) is not None
    else:
        raise InterpError(f"unknown relation {relation!r}")
    out["ok"] = bool(out["premise"]) and bool(out["semantic"])
    return out


def syntactic_leq(p: Process, q: Process) -> bool:
    """p is q with some subterms cut down to 0."""
    if isinstance(p, Nil):
        return True
    if type(p) is not type(q):
        return False
    if isinstance(p, Fork):
        if len(p.parts) != len(q.parts):
            return False
        return all(syntactic_leq(x, y) for x, y in zip(p.parts, q.parts))
    if isinstance(p, Cut):
        return (p.a, p.b, type_str(p.type)) == \
            (q.a, q.b, type_str(q.type)) and syntactic_leq(p.body, q.body)
    if isinstance(p, SelectP):
        return (p.chan, p.label.render(), p.names) == \
            (q.chan, q.label.render(), q.names) and \
            syntactic_leq(p.body, q.body)
    if isinstance(p, (Prom, Coder, Der)):
        return (p.chan, p.names) == (q.chan, q.names) and \
            syntactic_leq(p.body, q.body)
    if isinstance(p, BranchP):
        if p.chan != q.chan or len(p.branches) != len(q.branches):
            return False
        for bp, bq in zip(p.branches, q.branches):
            if type(bp) is not type(bq) or bp.names != bq.names:
                return False
            if isinstance(bp, PBranch):
                if bp.label.render() != bq.label.render():
                    return False
            else:
                if (bp.base, bp.var) != (bq.base, bq.var):
                    return False
            if not syntactic_leq(bp.body, bq.body):
                return False
        return True
    if isinstance(p, NumIf):
        return (p.left, p.right) == (q.left, q.right) and \
            syntactic_leq(p.then_p, q.then_p) and \
            syntactic_leq(p.else_p, q.else_p)
    if isinstance(p, CallDef):
        return p == q
    return False
