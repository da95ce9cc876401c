"""Causal strategies: event structures playing on a game.

A strategy is an event structure S with a partial labelling into a
game.  Unlabelled events are internal.  The axioms:

- the labelling maps configurations to configurations, injectively;
- receptivity: an enabled environment move is accepted in exactly one
  way;
- courtesy: causal links invented by the strategy only run out of
  negative or internal events and into positive or internal ones;
- secrecy: minimal conflict never touches an event labelled positive.

Composition synchronizes two strategies on a shared middle game and
deletes the synchronized events, keeping internal ones.  Its carrier
consists of primes: an occurrence together with one complete causal
history, so a move that can happen for two incompatible reasons
appears twice.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from typing import Callable, Sequence

from .escore import Event, EventStructure, event_key, path_str
from .games import (
    NEG,
    POS,
    Game,
    component,
    flip,
    parallel_games,
    prefix_sum,
)

NEUTRAL = "0"


class StrategyInvalid(Exception):
    pass


class StateSpaceTooLarge(Exception):
    pass


class Strategy:
    __slots__ = ("game", "es", "play")

    def __init__(self, game: Game, es: EventStructure, play: dict):
        for s, a in play.items():
            if s not in es.events:
                raise StrategyInvalid(f"labelled event {event_key(s)} not in carrier")
            if a not in game.es.events:
                raise StrategyInvalid(f"label {event_key(a)} not in game")
        self.game = game
        self.es = es
        self.play = dict(play)

    # ------------------------------------------------------------------

    def polarity(self, s: Event) -> str:
        a = self.play.get(s)
        return NEUTRAL if a is None else self.game.pol[a]

    def externals(self) -> frozenset:
        return frozenset(self.play)

    def neutrals(self) -> frozenset:
        return frozenset(self.es.events - set(self.play))

    def label_of(self, s: Event) -> str:
        a = self.play.get(s)
        return "*" if a is None else a.label

    # ------------------------------------------------------------------
    # axioms

    def validate(self, max_states: int = 20000) -> None:
        self.es.validate()
        cones = {s: self.es.cone(s) for s in self.es.events}

        for s in self.play:
            played = [t for t in cones[s] if t in self.play]
            img = {self.play[t] for t in played}
            if len(img) != len(played):
                raise StrategyInvalid(
                    f"labelling repeats a move below {event_key(s)}")
            for a in img:
                if not self.game.es.cone(a) <= img:
                    raise StrategyInvalid(
                        f"move {a.label} played before its game causes"
                        f" (below {event_key(s)})")
            self._image_compatible(img, f"cone of {event_key(s)}")

        evs = self.es.sorted_events()
        for i, s in enumerate(evs):
            for t in evs[i + 1:]:
                if not self.es.conflict_free(cones[s] | cones[t]):
                    continue
                a, b = self.play.get(s), self.play.get(t)
                if a is None or b is None:
                    continue
                if a == b:
                    raise StrategyInvalid(
                        f"compatible events {event_key(s)}, {event_key(t)}"
                        f" play the same move {a.label}")
                if self.game.es.conflict(a, b):
                    raise StrategyInvalid(
                        "compatible events play conflicting moves"
                        f" {a.label}, {b.label}")

        for c, e in self.es.cause_edges():
            a, b = self.play.get(c), self.play.get(e)
            if a is not None and b is not None and (
                    self.game.es.le(a, b) or self.game.es.le(b, a)):
                continue
            if a is not None and self.game.pol[a] == POS:
                raise StrategyInvalid(
                    f"discourteous link out of positive {a.label}")
            if b is not None and self.game.pol[b] == NEG:
                raise StrategyInvalid(
                    f"discourteous link into negative {b.label}")

        for pair in self.es.minconf:
            for s in pair:
                if self.polarity(s) == POS:
                    raise StrategyInvalid(
                        f"minimal conflict on positive {self.label_of(s)}")

        self._check_receptive(max_states)

    def _image_compatible(self, img, where: str) -> None:
        moves = sorted(img, key=event_key)
        for i, a in enumerate(moves):
            for b in moves[i + 1:]:
                if self.game.es.conflict(a, b):
                    raise StrategyInvalid(f"conflicting image in {where}")

    def _check_receptive(self, max_states: int) -> None:
        neg_game = [a for a in self.game.es.sorted_events()
                    if self.game.pol[a] == NEG]
        witnesses = defaultdict(list)
        for s, a in sorted(self.play.items(), key=lambda kv: event_key(kv[0])):
            witnesses[a].append(s)

        seen = {frozenset()}
        frontier = [frozenset()]
        while frontier:
            if len(seen) > max_states:
                raise StateSpaceTooLarge(
                    f"more than {max_states} configurations; "
                    "receptivity check needs a bigger budget")
            x = frontier.pop()
            img = {self.play[s] for s in x if s in self.play}
            for a in neg_game:
                if a in img or not self.game.es.down(a) <= img:
                    continue
                if any(self.game.es.conflict(a, b) for b in img):
                    continue
                found = [s for s in witnesses[a]
                         if s not in x and self.es.down(s) <= x
                         and all(not self.es.conflict(s, t) for t in x)]
                if len(found) != 1:
                    raise StrategyInvalid(
                        f"receptivity: move {a.label} has {len(found)} "
                        f"witnesses after {sorted(self.label_of(s) for s in x)}")
            for s in self.es.extensions(x):
                y = x | {s}
                if y not in seen:
                    seen.add(y)
                    frontier.append(y)

    # ------------------------------------------------------------------
    # exports

    def to_json(self) -> dict:
        def info(s: Event) -> dict:
            a = self.play.get(s)
            return {
                "move": None if a is None else path_str(a.path),
                "pol": self.polarity(s),
            }
        base = self.es.to_json(extra=info)
        for entry, s in zip(base["events"], self.es.sorted_events()):
            entry["label"] = self.label_of(s)
        return {"game": self.game.to_json(), **base}

    def to_dot(self) -> str:
        lines = ["digraph strategy {", "  rankdir=TB;"]
        for s in self.es.sorted_events():
            pol = self.polarity(s)
            shape = {POS: "box", NEG: "ellipse", NEUTRAL: "diamond"}[pol]
            sign = "" if pol == NEUTRAL else pol
            lines.append(
                f'  "{path_str(s.path)}" '
                f'[label="{self.label_of(s)}{sign}", shape={shape}];')
        for a, b in self.es.cause_edges():
            lines.append(f'  "{path_str(a.path)}" -> "{path_str(b.path)}";')
        for pair in sorted(self.es.minconf,
                           key=lambda p: sorted(event_key(e) for e in p)):
            a, b = sorted(pair, key=event_key)
            lines.append(
                f'  "{path_str(a.path)}" -> "{path_str(b.path)}"'
                " [style=dashed, dir=none, constraint=false];")
        lines.append("}")
        return "\n".join(lines)

    def structure_key(self):
        return (self.es.structure_key(), self.game.structure_key(),
                tuple(sorted((event_key(s), event_key(a))
                             for s, a in self.play.items())))

    def __repr__(self) -> str:
        return (f"Strategy({len(self.es.events)} events on "
                f"{len(self.game.es.events)}-move game, "
                f"{len(self.neutrals())} internal)")


# ----------------------------------------------------------------------
# basic strategies


def included_strategy(game: Game, events) -> Strategy:
    """The substructure of the game on ``events``, labelled by inclusion."""
    es = game.es.project(events)
    return Strategy(game, es, {e: e for e in es.events})


def weakening(game: Game) -> Strategy:
    """The minimal receptive strategy: only environment-driven events."""
    keep = [e for e in game.es.events
            if all(game.pol[c] == NEG for c in game.es.cone(e))]
    return included_strategy(game, keep)


def _closure_strategy(game: Game, events, edges, play: dict,
                      seed_conflicts=()) -> Strategy:
    """Build a strategy from explicit causal edges.

    The order is the transitive closure of ``edges``.  Two events
    clash when their combined histories play conflicting game moves,
    or sit above a seeded conflict pair; stored conflict is the
    minimal pairs of that relation.
    """
    events = list(events)
    down: dict = {e: set() for e in events}
    out = defaultdict(set)
    for a, b in edges:
        out[a].add(b)
    pend = {e: 0 for e in events}
    for a in out:
        for b in out[a]:
            pend[b] += 1
    stack = sorted((e for e in events if pend[e] == 0), key=event_key)
    order = []
    while stack:
        e = stack.pop()
        order.append(e)
        for b in sorted(out[e], key=event_key):
            down[b] |= down[e] | {e}
            pend[b] -= 1
            if pend[b] == 0:
                stack.append(b)
    if len(order) != len(events):
        raise StrategyInvalid("cyclic causal constraints")

    cone = {e: down[e] | {e} for e in events}
    seeds = [tuple(p) for p in seed_conflicts]

    gids = {m: i for i, m in enumerate(game.es.sorted_events())}
    gconf = _conflict_masks(game.es, gids)
    cid = {e: i for i, e in enumerate(sorted(events, key=event_key))}
    mmask: dict = {}
    cmask: dict = {}
    cbits: dict = {}
    for e in events:
        mm = cm = cb = 0
        for x in cone[e]:
            cb |= 1 << cid[x]
            a = play.get(x)
            if a is not None:
                i = gids[a]
                mm |= 1 << i
                cm |= gconf[i]
        mmask[e], cmask[e], cbits[e] = mm, cm, cb

    smm: dict = {}
    scm: dict = {}
    sdb: dict = {}
    for e in events:
        a = b = c = 0
        for x in down[e]:
            a |= mmask[x]
            b |= cmask[x]
            c |= 1 << cid[x]
        smm[e], scm[e], sdb[e] = a, b, c

    def clash(a: Event, b: Event) -> bool:
        if mmask[a] & cmask[b]:
            return True
        for u, v in seeds:
            iu, iv = 1 << cid[u], 1 << cid[v]
            if (cbits[a] & iu and cbits[b] & iv) or \
                    (cbits[b] & iu and cbits[a] & iv):
                return True
        return False

    def strictly_smaller_clash(a: Event, b: Event) -> bool:
        # some pair below (a, b), other than (a, b) itself, clashes
        if (smm[a] & cmask[b]) or (mmask[a] & scm[b]):
            return True
        for u, v in seeds:
            iu, iv = 1 << cid[u], 1 << cid[v]
            for x, y in ((iu, iv), (iv, iu)):
                if (sdb[a] & x and cbits[b] & y) or \
                        (cbits[a] & x and sdb[b] & y):
                    return True
        return False

    for e in events:
        if clash(e, e):
            raise StrategyInvalid(f"self-conflicting event {event_key(e)}")

    minconf = set()
    evs = sorted(events, key=event_key)
    for i, a in enumerate(evs):
        for b in evs[i + 1:]:
            if clash(a, b) and not strictly_smaller_clash(a, b):
                minconf.add(frozenset((a, b)))

    imcause = {}
    for e in events:
        ds = down[e]
        imcause[e] = {c for c in ds if not any(c in down[d] for d in ds)}
    es = EventStructure(frozenset(events), imcause, frozenset(minconf))
    return Strategy(game, es, play)


def copycat(game: Game) -> Strategy:
    """Asynchronous forwarding between a game and its dual."""
    gg = parallel_games([game.dual(), game])

    def mirror(e: Event) -> Event:
        return Event((1 - e.path[0],) + tuple(e.path[1:]), e.label)

    edges = list(gg.es.cause_edges())
    for e in gg.es.sorted_events():
        if gg.pol[e] == NEG:
            edges.append((e, mirror(e)))
    return _closure_strategy(gg, gg.es.events, edges,
                             {e: e for e in gg.es.events})


def transpose(sig: Strategy) -> Strategy:
    """Swap the two sides of a strategy.

    A strategy from A to B becomes one from B-dual to A-dual; the
    moves keep their polarity, only the component tag flips.
    """
    def swap(e: Event) -> Event:
        return Event((1 - e.path[0],) + tuple(e.path[1:]), e.label)

    g = sig.game
    es = EventStructure(
        frozenset(swap(e) for e in g.es.events),
        {swap(e): {swap(c) for c in g.es.imcause[e]} for e in g.es.events},
        frozenset(frozenset(swap(x) for x in pair) for pair in g.es.minconf),
    )
    new_game = Game(es, {swap(e): p for e, p in g.pol.items()})
    return Strategy(new_game, sig.es,
                    {s: swap(a) for s, a in sig.play.items()})


def relabel(sig: Strategy, new_game: Game,
            move_map: Callable[[Event], Event]) -> Strategy:
    """Rename the played moves through a map of games.

    The carrier is untouched; only the labelling changes.  Covers
    reindexing isomorphisms and lifting along inclusions of games.
    """
    return Strategy(new_game, sig.es,
                    {s: move_map(a) for s, a in sig.play.items()})


def restrict_strategy(sig: Strategy, keep) -> Strategy:
    """Cut the carrier down to ``keep``."""
    es = sig.es.project(keep)
    return Strategy(sig.game, es,
                    {s: a for s, a in sig.play.items() if s in es.events})


def parallel_strategies(tagged: Sequence[tuple]) -> Strategy:
    """Side-by-side strategies on the tagged parallel game."""
    from .games import parallel_games_tagged
    game = parallel_games_tagged([(tag, s.game) for tag, s in tagged])
    events: set = set()
    imcause: dict = {}
    minconf: set = set()
    play: dict = {}
    for tag, sig in tagged:
        m = {s: Event((tag,) + tuple(s.path), s.label) for s in sig.es.events}
        if events & set(m.values()):
            raise StrategyInvalid("overlapping carriers in parallel")
        events |= set(m.values())
        for s in sig.es.events:
            imcause[m[s]] = {m[c] for c in sig.es.imcause[s]}
        minconf |= {frozenset(m[x] for x in pair) for pair in sig.es.minconf}
        for s, a in sig.play.items():
            play[m[s]] = Event((tag,) + tuple(a.path), a.label)
    es = EventStructure(frozenset(events), imcause, frozenset(minconf))
    return Strategy(game, es, play)


# ----------------------------------------------------------------------
# isomorphism


def iso_strategies(a: Strategy, b: Strategy) -> bool:
    """Carrier isomorphism commuting with the labellings (same game)."""
    if a.game.structure_key() != b.game.structure_key():
        return False
    if len(a.es.events) != len(b.es.events):
        return False
    if len(a.es.minconf) != len(b.es.minconf):
        return False

    def sig(strat: Strategy, s: Event):
        m = strat.play.get(s)
        return (None if m is None else event_key(m),
                len(strat.es.imcause[s]), strat.es.depth(s))

    order = sorted(a.es.events, key=lambda s: (a.es.depth(s), event_key(s)))
    pool = b.es.sorted_events()
    cand = {s: [t for t in pool if sig(b, t) == sig(a, s)] for s in order}
    assign: dict = {}
    used: set = set()

    def fits(s: Event, t: Event) -> bool:
        return {assign[c] for c in a.es.imcause[s]} == set(b.es.imcause[t])

    def bt(i: int) -> bool:
        if i == len(order):
            mapped = {frozenset(assign[x] for x in p) for p in a.es.minconf}
            return mapped == set(b.es.minconf)
        s = order[i]
        for t in cand[s]:
            if t in used or not fits(s, t):
                continue
            assign[s] = t
            used.add(t)
            if bt(i + 1):
                return True
            del assign[s]
            used.discard(t)
        return False

    return bt(0)


# ----------------------------------------------------------------------
# composition


class _Prime:
    __slots__ = ("idx", "occ", "hist", "skey_memo",
                 "sbits", "tbits", "sconf", "tconf", "smap", "tmap")

    def __init__(self, idx: int, occ: tuple, hist: frozenset):
        self.idx = idx
        self.occ = occ
        self.hist = hist   # indices of all strictly earlier primes
        self.skey_memo = None
        # closed history as bitmasks over the underlying carriers, the
        # union of their conflict masks, and event-id -> prime index
        self.sbits = 0
        self.tbits = 0
        self.sconf = 0
        self.tconf = 0
        self.smap: dict = {}
        self.tmap: dict = {}


def _occ_key(occ: tuple):
    if occ[0] == "L":
        return (0, event_key(occ[1]))
    if occ[0] == "M":
        return (1, event_key(occ[1]), event_key(occ[2]))
    return (2, event_key(occ[1]))


def _conflict_masks(es: EventStructure, ids: dict) -> list[int]:
    """For each event, the bitmask of everything it conflicts with."""
    masks = [0] * len(ids)
    if not es.minconf:
        return masks

    up_memo: dict = {}

    def up_mask(x: Event) -> int:
        m = up_memo.get(x)
        if m is None:
            m = 0
            for e in es.events:
                if x == e or x in es.down(e):
                    m |= 1 << ids[e]
            up_memo[x] = m
        return m

    def spread(src: int, add: int) -> None:
        ov = src
        while ov:
            low = ov & -ov
            masks[low.bit_length() - 1] |= add
            ov ^= low

    for pair in es.minconf:
        x, y = tuple(pair)
        mx, my = up_mask(x), up_mask(y)
        spread(mx, my)
        spread(my, mx)
    for i in range(len(masks)):
        masks[i] &= ~(1 << i)
    return masks


class _Interaction:
    """Prime construction for the interaction of two strategies.

    ``sigma`` plays on A|B with B shared, ``tau`` on B'|C with B'
    dual to B.  An occurrence is an event of one side playing outside
    the shared game (or internally), or a matched pair on one shared
    move.
    """

    def __init__(self, sigma: Strategy, tau: Strategy, max_primes: int):
        self.sigma = sigma
        self.tau = tau
        self.max_primes = max_primes
        self.primes: list[_Prime] = []
        self.by_key: dict = {}
        self.by_s: dict = defaultdict(list)
        self.by_t: dict = defaultdict(list)
        self.sid = {e: i for i, e in enumerate(sigma.es.sorted_events())}
        self.tid = {e: i for i, e in enumerate(tau.es.sorted_events())}
        self.sconf_mask = _conflict_masks(sigma.es, self.sid)
        self.tconf_mask = _conflict_masks(tau.es, self.tid)
        self._build_occurrences()
        self._saturate()

    def _build_occurrences(self) -> None:
        t_match = defaultdict(list)
        self.occs: list[tuple] = []
        for t in self.tau.es.sorted_events():
            b = self.tau.play.get(t)
            if b is None or b.path[0] == 1:
                self.occs.append(("R", t))
            else:
                t_match[tuple(b.path[1:])].append(t)
        for s in self.sigma.es.sorted_events():
            a = self.sigma.play.get(s)
            if a is None or a.path[0] == 0:
                self.occs.append(("L", s))
            else:
                for t in t_match.get(tuple(a.path[1:]), ()):
                    self.occs.append(("M", s, t))
        self.occs.sort(key=_occ_key)

    @staticmethod
    def _s_of(occ):
        return occ[1] if occ[0] in ("L", "M") else None

    @staticmethod
    def _t_of(occ):
        if occ[0] == "R":
            return occ[1]
        return occ[2] if occ[0] == "M" else None

    def _merge(self, choice, occ):
        """Union of closed histories plus the new occurrence.

        Returns the merged mask data, or None when the union repeats a
        carrier event through two different primes or crosses conflict.
        """
        sbits = tbits = sconf = tconf = 0
        smap: dict = {}
        tmap: dict = {}
        for i in choice:
            p = self.primes[i]
            if (sbits & p.sconf) or (tbits & p.tconf):
                return None
            ov = sbits & p.sbits
            while ov:
                low = ov & -ov
                if smap[low.bit_length() - 1] != p.smap[low.bit_length() - 1]:
                    return None
                ov ^= low
            ov = tbits & p.tbits
            while ov:
                low = ov & -ov
                if tmap[low.bit_length() - 1] != p.tmap[low.bit_length() - 1]:
                    return None
                ov ^= low
            sbits |= p.sbits
            tbits |= p.tbits
            sconf |= p.sconf
            tconf |= p.tconf
            smap.update(p.smap)
            tmap.update(p.tmap)
        s, t = self._s_of(occ), self._t_of(occ)
        if s is not None:
            i = self.sid[s]
            bit = 1 << i
            if (sbits & bit) or (sconf & bit):
                return None
            sbits |= bit
            sconf |= self.sconf_mask[i]
        if t is not None:
            i = self.tid[t]
            bit = 1 << i
            if (tbits & bit) or (tconf & bit):
                return None
            tbits |= bit
            tconf |= self.tconf_mask[i]
        return sbits, tbits, sconf, tconf, smap, tmap

    def _saturate(self) -> None:
        changed = True
        while changed:
            changed = False
            for occ in self.occs:
                s, t = self._s_of(occ), self._t_of(occ)
                causes = []
                if s is not None:
                    causes += [("s", c) for c in
                               sorted(self.sigma.es.imcause[s], key=event_key)]
                if t is not None:
                    causes += [("t", c) for c in
                               sorted(self.tau.es.imcause[t], key=event_key)]
                slots = []
                ok = True
                for side, c in causes:
                    cands = (self.by_s if side == "s" else self.by_t).get(c)
                    if not cands:
                        ok = False
                        break
                    slots.append(cands)
                if not ok:
                    continue
                for choice in itertools.product(*slots):
                    hist = frozenset().union(
                        *(self.primes[i].hist | {i} for i in choice))
                    key = (occ, hist)
                    if key in self.by_key:
                        continue
                    merged = self._merge(choice, occ)
                    if merged is None:
                        continue
                    idx = len(self.primes)
                    if idx >= self.max_primes:
                        raise StateSpaceTooLarge(
                            f"interaction exceeds {self.max_primes} events")
                    pr = _Prime(idx, occ, hist)
                    pr.sbits, pr.tbits, pr.sconf, pr.tconf, \
                        pr.smap, pr.tmap = merged
                    if s is not None:
                        pr.smap[self.sid[s]] = idx
                    if t is not None:
                        pr.tmap[self.tid[t]] = idx
                    self.primes.append(pr)
                    self.by_key[key] = pr
                    if s is not None:
                        self.by_s[s].append(idx)
                    if t is not None:
                        self.by_t[t].append(idx)
                    changed = True

    # ------------------------------------------------------------------

    def _skey(self, idx: int):
        pr = self.primes[idx]
        if pr.skey_memo is None:
            imm = _maximal(self.primes, pr.hist)
            pr.skey_memo = (_occ_key(pr.occ),
                            tuple(sorted(self._skey(i) for i in imm)))
        return pr.skey_memo

    @staticmethod
    def _clash_pair(p: _Prime, q: _Prime) -> bool:
        """Two primes cannot coexist: conflicting closed histories or
        the same carrier event realized by different primes."""
        if (p.sbits & q.sconf) or (p.tbits & q.tconf):
            return True
        ov = p.sbits & q.sbits
        while ov:
            low = ov & -ov
            k = low.bit_length() - 1
            if p.smap[k] != q.smap[k]:
                return True
            ov ^= low
        ov = p.tbits & q.tbits
        while ov:
            low = ov & -ov
            k = low.bit_length() - 1
            if p.tmap[k] != q.tmap[k]:
                return True
            ov ^= low
        return False

    def occ_label(self, occ) -> str:
        if occ[0] == "M":
            return "*"
        if occ[0] == "L":
            a = self.sigma.play.get(occ[1])
        else:
            a = self.tau.play.get(occ[1])
        return "*" if a is None else a.label

    def result(self):
        """Carrier with order and minimal conflict; returns (es, idx map)."""
        n = len(self.primes)
        rank = {idx: i for i, idx in
                enumerate(sorted(range(n), key=self._skey))}
        evs = {idx: Event((rank[idx],), self.occ_label(self.primes[idx].occ))
               for idx in range(n)}

        imcause = {evs[i]: {evs[j]
                            for j in _maximal(self.primes, self.primes[i].hist)}
                   for i in range(n)}

        row = [0] * n
        for i in range(n):
            p = self.primes[i]
            for j in range(i + 1, n):
                if self._clash_pair(p, self.primes[j]):
                    row[i] |= 1 << j
                    row[j] |= 1 << i

        hbits = [0] * n
        for i in range(n):
            b = 0
            for c in self.primes[i].hist:
                b |= 1 << c
            hbits[i] = b

        minconf = set()
        for i in range(n):
            ri = row[i]
            for j in range(i + 1, n):
                if not (ri >> j) & 1:
                    continue
                if (row[j] & hbits[i]) or (ri & hbits[j]):
                    continue
                minconf.add(frozenset((evs[i], evs[j])))

        es = EventStructure(frozenset(evs.values()), imcause,
                            frozenset(minconf))
        return es, evs


def _maximal(primes, hist: frozenset):
    return [i for i in hist if not any(i in primes[j].hist for j in hist)]


def _split_check(sigma: Strategy, tau: Strategy) -> None:
    """The shared components must carry the same moves, dual polarity."""
    smid = {(tuple(e.path[1:]), e.label): sigma.game.pol[e]
            for e in sigma.game.es.events if e.path[0] == 1}
    tmid = {(tuple(e.path[1:]), e.label): tau.game.pol[e]
            for e in tau.game.es.events if e.path[0] == 0}
    if set(smid) != set(tmid):
        raise StrategyInvalid("shared games do not match")
    for k, p in smid.items():
        if tmid[k] != flip(p):
            raise StrategyInvalid(f"shared game not dual at {k}")


def interact(tau: Strategy, sigma: Strategy, *, max_primes: int = 40000):
    """The unhidden interaction.

    Returns the carrier together with its projections: maps sending
    each prime to the underlying event of ``sigma`` resp. ``tau``
    (where defined).
    """
    _split_check(sigma, tau)
    inter = _Interaction(sigma, tau, max_primes)
    es, evs = inter.result()
    to_s, to_t = {}, {}
    for idx, pr in enumerate(inter.primes):
        s, t = inter._s_of(pr.occ), inter._t_of(pr.occ)
        if s is not None:
            to_s[evs[idx]] = s
        if t is not None:
            to_t[evs[idx]] = t
    return es, to_s, to_t


def compose(tau: Strategy, sigma: Strategy, *,
            max_primes: int = 40000) -> Strategy:
    """Interaction on the shared game followed by hiding.

    ``sigma`` plays from A to B (on the parallel of A-dual and B,
    tags 0 and 1), ``tau`` from B to C; the result plays from A to C.
    Synchronized events vanish; internal events of either side stay
    internal.
    """
    _split_check(sigma, tau)
    inter = _Interaction(sigma, tau, max_primes)
    es, evs = inter.result()

    left = {e for e in sigma.game.es.events if e.path[0] == 0}
    right = {e for e in tau.game.es.events if e.path[0] == 1}
    game = Game(
        _merge_es(left | right, sigma.game, tau.game),
        {**{e: sigma.game.pol[e] for e in left},
         **{e: tau.game.pol[e] for e in right}},
    )

    play = {}
    hidden = set()
    for idx, pr in enumerate(inter.primes):
        e = evs[idx]
        if pr.occ[0] == "M":
            hidden.add(e)
            continue
        a = (sigma.play.get(pr.occ[1]) if pr.occ[0] == "L"
             else tau.play.get(pr.occ[1]))
        if a is not None:
            play[e] = a
    es2 = es.project([e for e in es.events if e not in hidden])
    return Strategy(game, es2, play)


def _merge_es(events, g1: Game, g2: Game) -> EventStructure:
    imcause = {}
    minconf = set()
    for g in (g1, g2):
        for e in g.es.events:
            if e in events:
                imcause[e] = {c for c in g.es.imcause[e] if c in events}
        for pair in g.es.minconf:
            if all(x in events for x in pair):
                minconf.add(pair)
    return EventStructure(frozenset(events), imcause, frozenset(minconf))


# ----------------------------------------------------------------------
# weak products and coproducts


def projection(branches: Sequence[tuple[str, Game]], k: int) -> Strategy:
    """From an offered choice to its k-th component.

    Plays the k-th guard, positive on the dual side, then forwards
    between the two copies of the chosen component.
    """
    lab, inner = branches[k]
    offer = prefix_sum(NEG, branches)
    game = parallel_games([offer.dual(), inner])
    return _guard_then_copycat(game, inner, lab, guard_side=0)


def injection(branches: Sequence[tuple[str, Game]], k: int) -> Strategy:
    """From a component into the labelled sum selecting it."""
    lab, inner = branches[k]
    choice = prefix_sum(POS, branches)
    game = parallel_games([inner.dual(), choice])
    return _guard_then_copycat(game, inner, lab, guard_side=1)


def _guard_then_copycat(game: Game, inner: Game, lab: str,
                        guard_side: int) -> Strategy:
    root = Event((guard_side, lab), lab)
    plain_side = 1 - guard_side

    def guarded(e: Event) -> Event:
        return Event((guard_side, lab) + tuple(e.path), e.label)

    def plain(e: Event) -> Event:
        return Event((plain_side,) + tuple(e.path), e.label)

    events = [root]
    play = {root: root}
    edges = []
    for e in inner.es.events:
        ge, pe = guarded(e), plain(e)
        events += [ge, pe]
        play[ge] = ge
        play[pe] = pe
        for c in inner.es.imcause[e]:
            edges.append((guarded(c), ge))
            edges.append((plain(c), pe))
        if not inner.es.imcause[e]:
            edges.append((root, ge))
        if game.pol[pe] == POS:
            edges.append((ge, pe))
        else:
            edges.append((pe, ge))
    return _closure_strategy(game, events, edges, play)


def pairing(source: Game, branches: Sequence[tuple[str, Strategy]],
            *, max_primes: int = 40000) -> Strategy:
    """Tuple strategies sharing a source, into an offered choice.

    Each component plays from ``source`` to its own game.  The raw
    sum guards every component behind its label, which breaks
    courtesy on the source side; forwarding through the source
    repairs it.
    """
    target = prefix_sum(NEG, [(lab, component(sig.game, 1))
                              for lab, sig in branches])
    game = parallel_games([source.dual(), target])

    events = []
    play: dict = {}
    edges = []
    seeds = []
    for lab, sig in branches:
        root = Event((1, lab), lab)
        events.append(root)
        play[root] = root

        def shift(s: Event, lab=lab) -> Event:
            return Event((lab,) + tuple(s.path), s.label)

        for s in sig.es.events:
            cs = shift(s)
            events.append(cs)
            a = sig.play.get(s)
            if a is not None:
                if a.path[0] == 0:
                    play[cs] = a
                else:
                    play[cs] = Event((1, lab) + tuple(a.path[1:]), a.label)
            for c in sig.es.imcause[s]:
                edges.append((shift(c), cs))
            if not sig.es.imcause[s]:
                edges.append((root, cs))
        seeds += [frozenset(shift(x) for x in pair)
                  for pair in sig.es.minconf]

    naive = _closure_strategy(game, events, edges, play, seeds)
    return compose(naive, copycat(source), max_primes=max_primes)


# ----------------------------------------------------------------------
# transitions and bounded weak bisimulation


def _copy_masked(path) -> tuple:
    return tuple("c#" if isinstance(s, tuple) and len(s) == 2 and s[0] == "c"
                 else s for s in path)


def canonical_visible(sig: Strategy, xs) -> tuple:
    """The image of a configuration, with copy indices renumbered.

    Indices are reassigned per layer (per path prefix) in order of
    first appearance along a deterministic sweep, so two
    configurations that differ only by a renaming of copies get the
    same key.
    """
    moves = [sig.play[e] for e in xs if e in sig.play]
    moves.sort(key=lambda m: (str(_copy_masked(m.path)), m.label,
                              str(m.path)))
    tables: dict = {}
    out = []
    for m in moves:
        renamed: list = []
        for part in m.path:
            if isinstance(part, tuple) and len(part) == 2 and part[0] == "c":
                tbl = tables.setdefault(tuple(renamed), {})
                if part[1] not in tbl:
                    tbl[part[1]] = len(tbl)
                renamed.append(("c", tbl[part[1]]))
            else:
                renamed.append(part)
        out.append((tuple(renamed), m.label))
    return tuple(sorted(out, key=str))


def strategy_after(sig: Strategy, xs) -> Strategy:
    """The strategy left over once configuration ``xs`` has been played.

    Events of ``xs`` and everything in conflict with them disappear;
    the game advances past the image the same way.
    """
    x = frozenset(xs)
    if not sig.es.is_configuration(x):
        raise StrategyInvalid("residuals are taken at configurations")
    keep = [e for e in sig.es.events
            if e not in x and not any(sig.es.conflict(e, c) for c in x)]
    img = {sig.play[e] for e in x if e in sig.play}
    gkeep = [a for a in sig.game.es.events
             if a not in img and not any(sig.game.es.conflict(a, b)
                                         for b in img)]
    es = sig.es.project(keep)
    return Strategy(sig.game.project(gkeep), es,
                    {s: a for s, a in sig.play.items() if s in es.events})


class StrategyTransition:
    """One labelled step: a configuration played, its visible image,
    and what remains afterwards."""

    __slots__ = ("events", "visible", "internal", "residual")

    def __init__(self, events, visible, residual):
        self.events = tuple(sorted(events, key=event_key))
        self.visible = visible
        self.internal = not visible
        self.residual = residual

    def __repr__(self):
        kind = "internal" if self.internal else str(self.visible)
        return f"<step {len(self.events)} events, {kind}>"


def transitions(sig: Strategy, budget: int) -> list[StrategyTransition]:
    """Every step the strategy can take by playing a nonempty
    configuration of at most ``budget`` events.  Steps whose image is
    empty are internal."""
    out = []
    for x in sig.es.configurations(max_size=budget):
        if not x:
            continue
        out.append(StrategyTransition(x, canonical_visible(sig, x),
                                      strategy_after(sig, x)))
    out.sort(key=lambda t: (len(t.events), str(t.visible),
                            [event_key(e) for e in t.events]))
    return out


def weak_bisim(sigma: Strategy, tau: Strategy, *, depth: int = 6,
               step: int = 3, slack: int = 3,
               max_states: int = 200000) -> dict:
    """Bounded weak bisimulation between strategies on one interface.

    Rounds alternate: one side plays a nonempty configuration of at
    most ``step`` events, the other answers with any configuration
    (``step + slack`` events at most, possibly empty) whose cumulative
    visible image matches up to copy renaming.  ``depth`` rounds are
    explored.

    Returns a verdict dict; on failure ``witness`` lists the
    distinguishing moves, each with the side that played and the
    cumulative visible image the other side could not match.
    """
    if sigma.game.structure_key() != tau.game.structure_key():
        raise StrategyInvalid("weak bisimulation needs a shared game")
    memo: dict = {}
    counter = [0]

    def residual_events(sig, consumed):
        return [e for e in sig.es.events
                if e not in consumed
                and not any(sig.es.conflict(e, c) for c in consumed)]

    def run(cons_s, cons_t, d):
        key = (cons_s, cons_t, d)
        if key in memo:
            return memo[key]
        counter[0] += 1
        if counter[0] > max_states:
            raise StateSpaceTooLarge("weak bisimulation state budget hit")
        result = (True, None)
        if d > 0:
            for side in ("left", "right"):
                atk, dfn = (sigma, tau) if side == "left" else (tau, sigma)
                ca, cd = (cons_s, cons_t) if side == "left" else \
                    (cons_t, cons_s)
                atk_es = atk.es.project(residual_events(atk, ca))
                dfn_es = dfn.es.project(residual_events(dfn, cd))
                answers = dfn_es.configurations(max_size=step + slack)
                for x in atk_es.configurations(max_size=step):
                    if not x:
                        continue
                    want = canonical_visible(atk, ca | x)
                    matched = False
                    subw = None
                    for y in answers:
                        if canonical_visible(dfn, cd | y) != want:
                            continue
                        na = ca | x
                        nd = cd | y
                        ok, w = run(na if side == "left" else nd,
                                    nd if side == "left" else na, d - 1)
                        if ok:
                            matched = True
                            break
                        subw = w
                    if not matched:
                        entry = {"side": side,
                                 "visible": [list(map(str, p)) + [lab]
                                             for p, lab in want]}
                        result = (False, [entry] + (subw or []))
                        break
                if not result[0]:
                    break
        memo[key] = result
        return result

    ok, witness = run(frozenset(), frozenset(), depth)
    return {"equivalent": ok, "depth": depth,
            "verdict": (f"equivalent up to depth {depth}" if ok
                        else "distinguished"),
            "witness": witness}
