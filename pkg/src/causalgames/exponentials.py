"""Replication: copy-indexed games and the structural strategies.

The ! and ? games materialize finitely many indexed copies, each
opened by its own Req move.  The structural maps between them
(dereliction, digging, contraction and the ?-side merge) are
forwarding wires; codereliction is the genuinely concurrent piece,
racing the incoming requests against each other.

Copy indices are bookkeeping: two objects differing by a per-layer
renaming of indices are the same strategy for every semantic purpose.
weak_iso decides that relation exactly; canonicalize produces a
hashable normal form for quick equality.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from itertools import permutations, product

from .escore import Event, event_key, path_str
from .games import NEG, POS, Game, parallel_games, replicate
from .strategies import (
    NEUTRAL,
    Strategy,
    _closure_strategy,
    compose,
    copycat,
    included_strategy,
)


def oc_game(g: Game, width: int) -> Game:
    """The server game: width interleaved copies behind negative Reqs."""
    return replicate("Req", NEG, g, width)


def wn_game(g: Game, width: int) -> Game:
    """The client game: width interleaved copies behind positive Reqs."""
    return replicate("Req", POS, g, width)


def cantor(i: int, j: int) -> int:
    return (i + j) * (i + j + 1) // 2 + j


def uncantor(k: int) -> tuple[int, int]:
    w = 0
    while (w + 1) * (w + 2) // 2 <= k:
        w += 1
    j = k - w * (w + 1) // 2
    return w - j, j


# ----------------------------------------------------------------------
# forwarding wires


def _under(game: Game, prefix) -> list[Event]:
    n = len(prefix)
    return [e for e in game.es.events if e.path[:n] == tuple(prefix)]


def _partner(e: Event, old, new) -> Event:
    return Event(tuple(new) + e.path[len(old):], e.label)


def _mirror_edges(game: Game, pref_a, pref_b) -> list[tuple[Event, Event]]:
    """Forwarding between two dual regions: out of every negative event,
    into its partner on the other side."""
    edges = []
    for e in _under(game, pref_a):
        if game.pol[e] == NEG:
            edges.append((e, _partner(e, pref_a, pref_b)))
    for e in _under(game, pref_b):
        if game.pol[e] == NEG:
            edges.append((e, _partner(e, pref_b, pref_a)))
    return edges


def _receive_only(game: Game, prefix) -> list[Event]:
    """The passive part of a region: events whose game cone is all
    negative.  Receiving them discharges receptivity; nothing is sent."""
    return [e for e in _under(game, prefix)
            if all(game.pol[c] == NEG for c in game.es.cone(e))]


def _wire(game: Game, regions, extra_edges) -> Strategy:
    """Identity-labelled strategy on part of the game: the game's own
    order restricted to the kept events, plus the forwarding edges."""
    events: set = set()
    for r in regions:
        events.update(r)
    edges = [(c, e) for c, e in game.es.cause_edges()
             if c in events and e in events]
    edges.extend(extra_edges)
    return _closure_strategy(game, events, edges, {e: e for e in events})


def dereliction(g: Game, width: int) -> Strategy:
    """!A -o A: open copy 0 unprompted and forward it onto the right."""
    game = parallel_games([oc_game(g, width).dual(), g])
    return _wire(
        game,
        [_under(game, (0, ("c", 0))), _under(game, (1,))],
        _mirror_edges(game, (0, ("c", 0), "Req"), (1,)),
    )


def der_block(g: Game, width: int) -> Strategy:
    """A -o ?A: the request side of dereliction.

    Opens copy 0 of the client game unprompted, then forwards."""
    game = parallel_games([g.dual(), wn_game(g, width)])
    return _wire(
        game,
        [_under(game, (0,)), _under(game, (1, ("c", 0)))],
        _mirror_edges(game, (0,), (1, ("c", 0), "Req")),
    )


def digging(g: Game, width: int) -> Strategy:
    """!A -o !!A: copy (i, j) on the right is copy <i,j> on the left.

    The left game is wide enough for every pairing value, so nothing
    is absorbed."""
    src = cantor(width - 1, width - 1) + 1 if width else 0
    game = parallel_games([oc_game(g, src).dual(),
                           oc_game(oc_game(g, width), width)])
    regions = [[e for e in _under(game, (1,)) if len(e.path) == 3]]
    edges: list = []
    for i in range(width):
        for j in range(width):
            rp = (1, ("c", i), "Req", ("c", j), "Req")
            lp = (0, ("c", cantor(i, j)), "Req")
            regions.append(_under(game, rp))
            regions.append(_under(game, lp))
            edges.extend(_mirror_edges(game, rp, lp))
    return _wire(game, regions, edges)


def contraction(g: Game, width: int) -> Strategy:
    """!A -o !A || !A: the left copies split by parity, even copies
    feeding the first component and odd the second."""
    game = parallel_games([
        oc_game(g, 2 * width).dual(),
        parallel_games([oc_game(g, width), oc_game(g, width)]),
    ])
    regions: list = []
    edges: list = []
    for s in (0, 1):
        for k in range(width):
            rp = (1, s, ("c", k), "Req")
            lp = (0, ("c", 2 * k + s), "Req")
            regions.append(_under(game, rp))
            regions.append(_under(game, lp))
            edges.extend(_mirror_edges(game, rp, lp))
    return _wire(game, regions, edges)


def merge_ques(g: Game, width: int, out_width: int | None = None) -> Strategy:
    """?A || ?A -o ?A: requests from either side renumbered into one
    stream by parity.

    With out_width below 2*width the spill-over copies answer nothing:
    their requests are received and absorbed."""
    if out_width is None:
        out_width = 2 * width
    game = parallel_games([
        parallel_games([wn_game(g, width), wn_game(g, width)]).dual(),
        wn_game(g, out_width),
    ])
    regions: list = []
    edges: list = []
    for s in (0, 1):
        for k in range(width):
            t = 2 * k + s
            lp = (0, s, ("c", k), "Req")
            if t < out_width:
                rp = (1, ("c", t), "Req")
                regions.append(_under(game, lp))
                regions.append(_under(game, rp))
                edges.extend(_mirror_edges(game, lp, rp))
            else:
                regions.append(_receive_only(game, lp))
    return _wire(game, regions, edges)


def swap_pair(g: Game, width: int) -> Strategy:
    """!A || !A -o !A || !A, crossing the two components."""
    pair = parallel_games([oc_game(g, width), oc_game(g, width)])
    game = parallel_games([pair.dual(), pair])
    regions: list = []
    edges: list = []
    for s in (0, 1):
        regions.append(_under(game, (0, s)))
        regions.append(_under(game, (1, 1 - s)))
        edges.extend(_mirror_edges(game, (0, s), (1, 1 - s)))
    return _wire(game, regions, edges)


# ----------------------------------------------------------------------
# codereliction


def codereliction_raw(g: Game, width: int) -> Strategy:
    """The race, before the receptivity repair: !A || A -o !A.

    Each incoming request Req_i may win (neutral event *_i, the wins
    pairwise in conflict).  The winner's copy is forwarded to the
    fresh linear copy on the left; every loser is forwarded back to
    the surviving server.  Answers through the fresh side sit behind
    the race outcome, so this strategy is not receptive whenever the
    fresh side can start with a reception; codereliction repairs that
    by buffering through copycat.
    """
    src = parallel_games([oc_game(g, width), g])
    game = parallel_games([src.dual(), oc_game(g, width)])

    events: list[Event] = []
    edges: list[tuple[Event, Event]] = []
    play: dict = {}

    def add(path, label, move):
        e = Event(tuple(path), label)
        events.append(e)
        if move is not None:
            play[e] = move
        return e

    req, star = {}, {}
    for i in range(width):
        req[i] = add(("req", i), "Req", Event((1, ("c", i), "Req"), "Req"))
        star[i] = add(("star", i), "*", None)
        edges.append((req[i], star[i]))

    fwd = {}
    for i in range(width):
        for j in range(width):
            if i != j:
                fwd[i, j] = add(("fwd", i, j), "Req",
                                Event((0, 0, ("c", i), "Req"), "Req"))
                edges.append((req[i], fwd[i, j]))
                edges.append((star[j], fwd[i, j]))

    fresh = sorted(_under(game, (0, 1)), key=event_key)
    for i in range(width):
        copy = (1, ("c", i), "Req")
        content = [e for e in _under(game, copy) if len(e.path) > 3]
        shared = {e for e in content
                  if all(game.pol[c] == NEG for c in game.es.cone(e))}

        rx = {e: add(("rx", i) + e.path[3:], e.label, e) for e in shared}
        for e in shared:
            for c in game.es.imcause[e]:
                edges.append((req[i] if len(c.path) == 3 else rx[c], rx[e]))

        def chain(marker, gate, mirror_pref, split):
            """One forwarding variant: split copies of the non-shared
            right events, copycatted against the region at mirror_pref."""
            side = {e: add(marker + e.path[3:], e.label, e)
                    for e in content if e not in shared}
            far_events = [e for e in _under(game, mirror_pref)
                          if len(e.path) > len(mirror_pref)]
            far = {e: add(split + e.path[len(mirror_pref):], e.label, e)
                   for e in far_events}
            for e, v in side.items():
                for c in game.es.imcause[e]:
                    edges.append((req[i] if len(c.path) == 3
                                  else rx.get(c) or side[c], v))
            for e, v in far.items():
                cs = [c for c in game.es.imcause[e] if c in far]
                for c in cs:
                    edges.append((far[c], v))
                if not cs:
                    edges.append((gate, v))
            for e in content:
                if game.pol[e] == NEG:
                    p = _partner(e, copy, mirror_pref)
                    edges.append((rx.get(e) or side[e], far[p]))
            for e, v in far.items():
                if game.pol[e] == NEG:
                    p = _partner(e, mirror_pref, copy)
                    edges.append((v, side[p]))

        chain(("w", i), star[i], (0, 1), ("wf", i))
        for j in range(width):
            if i != j and (i, j) in fwd:
                chain(("l", i, j), fwd[i, j],
                      (0, 0, ("c", i), "Req"), ("lb", i, j))

    seeds = [frozenset((star[i], star[j]))
             for i in range(width) for j in range(i + 1, width)]
    return _closure_strategy(game, events, edges, play, seed_conflicts=seeds)


def codereliction(g: Game, width: int, *, max_primes: int = 40000) -> Strategy:
    """!A || A -o !A, receptive: the raw race buffered through copycat."""
    raw = codereliction_raw(g, width)
    buf = copycat(parallel_games([oc_game(g, width), g]))
    return compose(raw, buf, max_primes=max_primes)


# ----------------------------------------------------------------------
# symmetry: copy indices are interchangeable


def _is_copy(seg) -> bool:
    return isinstance(seg, tuple) and len(seg) == 2 and seg[0] == "c"


def _mask(path) -> tuple:
    return tuple("c#" if _is_copy(s) else s for s in path)


def _mask_key(path) -> tuple:
    """Like _mask but order-safe: every segment a string."""
    return tuple(str(s) for s in _mask(path))


def _copy_positions(path) -> list[int]:
    return [k for k, s in enumerate(path) if _is_copy(s)]


def weak_iso(a: Strategy, b: Strategy) -> bool:
    """Isomorphism of carriers up to per-layer renaming of copy indices
    in the played moves.

    A layer is a concrete path prefix ending at a copy segment, so
    nested replications renumber independently under each outer copy.
    The ambient games are not compared.
    """
    if len(a.es.events) != len(b.es.events):
        return False
    if len(a.es.minconf) != len(b.es.minconf):
        return False

    def desc(sig: Strategy, e: Event):
        m = sig.play.get(e)
        return (sig.es.depth(e), sig.polarity(e),
                e.label if m is None else m.label,
                None if m is None else _mask(m.path),
                len(sig.es.imcause[e]))

    if (Counter(desc(a, e) for e in a.es.events)
            != Counter(desc(b, e) for e in b.es.events)):
        return False

    aevs = sorted(a.es.events, key=lambda e: (a.es.depth(e), event_key(e)))
    cands = defaultdict(list)
    for f in sorted(b.es.events, key=event_key):
        cands[desc(b, f)].append(f)

    match: dict = {}
    used: set = set()
    layer: dict = {}    # a-prefix -> b-prefix
    fwd: dict = {}      # a-prefix -> {a-index: b-index}
    rev: dict = {}      # a-prefix -> {b-index: a-index}

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
            mapped = frozenset(frozenset(match[x] for x in pair)
                               for pair in a.es.minconf)
            return mapped == b.es.minconf
        e = aevs[n]
        want = {match[c] for c in a.es.imcause[e]}
        for f in cands[desc(a, e)]:
            if f in used or b.es.imcause[f] != want:
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

    return assign(0)


@dataclass(frozen=True)
class SymmetryClass:
    """A strategy or game prefix up to per-layer copy renaming.

    events holds, in canonical order, (renamed move path or None,
    label, polarity, cause ranks); two prefixes related by per-layer
    index permutations produce equal classes.
    """
    events: tuple
    minconf: tuple
    hash: str

    def to_json(self) -> str:
        evs = [{"id": "*" if p is None else path_str(p),
                "label": lab, "pol": pol, "causes": list(cs)}
               for p, lab, pol, cs in self.events]
        return json.dumps(
            {"events": evs,
             "minconf": [list(p) for p in self.minconf],
             "symmetryClassHash": self.hash},
            indent=2, sort_keys=True)


def canonicalize(x) -> SymmetryClass:
    """Rename copy indices per layer by first use along a deterministic
    traversal (causal order, negatives first, then address order)."""
    sig = included_strategy(x, x.es.events) if isinstance(x, Game) else x
    es = sig.es
    rank = {NEG: 0, POS: 1, NEUTRAL: 2}

    succs = defaultdict(set)
    for c, e in es.cause_edges():
        succs[c].add(e)
    fut: dict = {}
    for e in sorted(es.events, key=lambda e: -es.depth(e)):
        own = Counter([_desc_masked(sig, e)])
        for s in succs[e]:
            own += fut[s]
        fut[e] = own
    finger = {e: tuple(sorted(fut[e].items())) for e in es.events}

    assigned: dict = {}     # (layer prefix, original index) -> new index
    counter: dict = {}      # layer prefix -> next free index

    def tentative(e: Event):
        m = sig.play.get(e)
        if m is None:
            return ("*" + e.label,)
        out = []
        for k, s in enumerate(m.path):
            if _is_copy(s):
                key = (m.path[:k], s[1])
                out.append("c%012d" % assigned.get(key, 1 << 30))
            else:
                out.append("s" + str(s))
        return tuple(out)

    def sort_key(e: Event):
        m = sig.play.get(e)
        return (rank[sig.polarity(e)],
                _mask_key(m.path) if m is not None else ("*", e.label),
                e.label, finger[e], tentative(e), event_key(e))

    pending = {e: len(es.imcause[e]) for e in es.events}
    ready = {e for e, n in pending.items() if n == 0}
    order: list[Event] = []
    pos: dict = {}
    while ready:
        e = min(ready, key=sort_key)
        ready.discard(e)
        m = sig.play.get(e)
        if m is not None:
            for k, s in enumerate(m.path):
                if _is_copy(s):
                    key = (m.path[:k], s[1])
                    if key not in assigned:
                        nxt = counter.get(m.path[:k], 0)
                        assigned[key] = nxt
                        counter[m.path[:k]] = nxt + 1
        pos[e] = len(order)
        order.append(e)
        for s in succs[e]:
            pending[s] -= 1
            if pending[s] == 0:
                ready.add(s)
    if len(order) != len(es.events):
        raise ValueError("cyclic carrier")

    def renamed(m: Event):
        return tuple(("c", assigned[(m.path[:k], s[1])]) if _is_copy(s) else s
                     for k, s in enumerate(m.path))

    evs = []
    for e in order:
        m = sig.play.get(e)
        evs.append((None if m is None else renamed(m),
                    e.label if m is None else m.label,
                    sig.polarity(e),
                    tuple(sorted(pos[c] for c in es.imcause[e]))))
    mc = tuple(sorted(tuple(sorted(pos[x] for x in pair))
                      for pair in es.minconf))
    digest = hashlib.sha256(repr((tuple(evs), mc)).encode()).hexdigest()[:16]
    return SymmetryClass(tuple(evs), mc, digest)


def _desc_masked(sig: Strategy, e: Event):
    m = sig.play.get(e)
    return (sig.polarity(e), e.label if m is None else m.label,
            ("*",) if m is None else _mask_key(m.path))


def symmetry_class_hash(x) -> str:
    return canonicalize(x).hash


def permute_copies(sig: Strategy, perms: dict) -> Strategy:
    """Rename copy indices of the played moves: perms maps a layer
    prefix to an index permutation.  The renaming must be a game
    automorphism (true for replicated games and full permutations)."""
    def rename(m: Event) -> Event:
        path = list(m.path)
        for k, s in enumerate(path):
            if _is_copy(s):
                pm = perms.get(tuple(m.path[:k]))
                if pm is not None:
                    path[k] = ("c", pm.get(s[1], s[1]))
        return Event(tuple(path), m.label)

    play = {s: rename(a) for s, a in sig.play.items()}
    return Strategy(sig.game, sig.es, play)


# ----------------------------------------------------------------------
# isomorphism families on games, checked exhaustively on small prefixes


def iso_family_check(game: Game, max_config_size: int = 6) -> dict:
    """The family of configuration bijections induced by per-layer copy
    permutations, with the groupoid, restriction and extension axioms
    checked exhaustively on configurations up to max_config_size."""
    if max_config_size > 8:
        raise ValueError("max_config_size above 8")
    configs = set(game.es.configurations(max_size=max_config_size))

    layers: dict = defaultdict(set)
    for e in game.es.events:
        for k in _copy_positions(e.path):
            layers[e.path[:k]].add(e.path[k][1])
    keys = sorted(layers, key=str)
    sizes = 1
    for k in keys:
        n = len(layers[k])
        for m in range(2, n + 1):
            sizes *= m
        if sizes > 5000:
            raise ValueError("too many copy permutations")

    maps = []
    for combo in product(*[permutations(sorted(layers[k])) for k in keys]):
        pm = {k: dict(zip(sorted(layers[k]), p))
              for k, p in zip(keys, combo)}

        def rename(e: Event, pm=pm) -> Event:
            path = list(e.path)
            for k in _copy_positions(e.path):
                lay = pm.get(e.path[:k])
                if lay is not None:
                    path[k] = ("c", lay[e.path[k][1]])
            return Event(tuple(path), e.label)

        maps.append({e: rename(e) for e in game.es.events})

    ident = {e: e for e in game.es.events}
    family = set()
    for idx, m in enumerate(maps):
        for x in configs:
            y = frozenset(m[e] for e in x)
            if y in configs:
                family.add((x, idx))

    def image(x, idx):
        return frozenset(maps[idx][e] for e in x)

    identities = all((x, maps.index(ident)) in family for x in configs)
    inverses = True
    restriction = True
    extension = True
    for x, idx in family:
        y = image(x, idx)
        inv = {v: k for k, v in maps[idx].items()}
        back = next(i for i, m in enumerate(maps) if m == inv)
        if (y, back) not in family or image(y, back) != x:
            inverses = False
        for x2 in configs:
            if x2 < x and (x2, idx) not in family:
                restriction = False
            if x < x2 and (x2, idx) not in family:
                extension = False

    composition = True
    for x, i in family:
        y = image(x, i)
        for y2, j in family:
            if y2 != y:
                continue
            comp = {e: maps[j][maps[i][e]] for e in game.es.events}
            k = next(n for n, m in enumerate(maps) if m == comp)
            if (x, k) not in family or image(x, k) != image(y, j):
                composition = False

    ok = identities and inverses and composition and restriction and extension
    return {"configs": len(configs), "permutations": len(maps),
            "family_size": len(family), "identities": identities,
            "inverses": inverses, "composition": composition,
            "restriction": restriction, "extension": extension, "ok": ok}
