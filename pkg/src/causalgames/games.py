"""Games: event structures with polarity, and games of session types.

A game is a confusion-free, race-free, forest-shaped event structure
whose events are moves of the program (+) or its environment (-).
Session types map to games homomorphically; replicated types
materialize finitely many copies and deep events are pruned, both
governed by one budget, while numeral label families are widened up to
a separate cap.
"""

from __future__ import annotations

import json
from typing import Iterable, Sequence

from .escore import ESInvalid, Event, EventStructure, empty_es, event_key, path_str
from .meta.syntax import (
    Bang,
    Par,
    Plus,
    Ques,
    SessionType,
    With,
    materialize_branches,
    type_str,
)

NEG = "-"
POS = "+"


def flip(p: str) -> str:
    return NEG if p == POS else POS


class GameInvalid(Exception):
    pass


class Game:
    """An event structure plus a total polarity labelling."""

    __slots__ = ("es", "pol")

    def __init__(self, es: EventStructure, pol: dict):
        for e in es.events:
            if pol.get(e) not in (POS, NEG):
                raise GameInvalid(f"missing polarity for {event_key(e)}")
        self.es = es
        self.pol = {e: pol[e] for e in es.events}

    def validate(self):
        self.es.validate()
        if not self.es.confusion_free():
            raise GameInvalid("game is not confusion-free")
        for e in self.es.events:
            if len(self.es.imcause[e]) > 1:
                raise GameInvalid(f"{event_key(e)} has several immediate causes")
        for pair in self.es.minconf:
            a, b = tuple(pair)
            if self.pol[a] != self.pol[b]:
                raise GameInvalid(
                    f"race between {event_key(a)} and {event_key(b)}")

    def dual(self) -> "Game":
        return Game(self.es, {e: flip(p) for e, p in self.pol.items()})

    def project(self, keep) -> "Game":
        es = self.es.project(keep)
        return Game(es, {e: self.pol[e] for e in es.events})

    def negatives(self):
        return frozenset(e for e in self.es.events if self.pol[e] == NEG)

    def positives(self):
        return frozenset(e for e in self.es.events if self.pol[e] == POS)

    def to_json(self, extra: dict | None = None) -> dict:
        base = self.es.to_json(extra=lambda e: {"pol": self.pol[e]})
        if extra:
            base.update(extra)
        return base

    def to_dot(self, extra: str | None = None) -> str:
        lines = ["digraph game {", "  rankdir=TB;"]
        for e in self.es.sorted_events():
            shape = "box" if self.pol[e] == POS else "ellipse"
            sign = self.pol[e]
            lines.append(
                f'  "{event_key(e)}" [label="{e.label}{sign}", shape={shape}];')
        for a, b in self.es.cause_edges():
            lines.append(f'  "{event_key(a)}" -> "{event_key(b)}";')
        for pair in sorted(self.es.minconf,
                           key=lambda p: sorted(event_key(e) for e in p)):
            a, b = sorted(pair, key=event_key)
            lines.append(
                f'  "{event_key(a)}" -> "{event_key(b)}"'
                " [style=dashed, dir=none, constraint=false];")
        if extra:
            lines.append(f"  {extra}")
        lines.append("}")
        return "\n".join(lines)

    def structure_key(self):
        return (self.es.structure_key(),
                tuple(sorted((event_key(e), p) for e, p in self.pol.items())))

    def __eq__(self, other):
        return isinstance(other, Game) and self.structure_key() == other.structure_key()

    def __hash__(self):
        return hash(self.structure_key())


def empty_game() -> Game:
    return Game(empty_es(), {})


def _retag(g: Game, tag) -> Game:
    m = {e: Event((tag,) + e.path, e.label) for e in g.es.events}
    es = EventStructure(
        frozenset(m.values()),
        {m[e]: {m[c] for c in g.es.imcause[e]} for e in g.es.events},
        frozenset(frozenset(m[e] for e in pair) for pair in g.es.minconf),
    )
    return Game(es, {m[e]: p for e, p in g.pol.items()})


def _union(parts: Sequence[Game], extra_minconf=()) -> Game:
    events: set = set()
    imcause: dict = {}
    minconf: set = set(extra_minconf)
    pol: dict = {}
    for g in parts:
        if events & g.es.events:
            raise ValueError("union of overlapping carriers")
        events |= g.es.events
        imcause.update(g.es.imcause)
        minconf |= g.es.minconf
        pol.update(g.pol)
    return Game(EventStructure(frozenset(events), imcause, frozenset(minconf)), pol)


def parallel_games(parts: Sequence[Game]) -> Game:
    return _union([_retag(g, i) for i, g in enumerate(parts)])


def parallel_games_tagged(pairs: Sequence[tuple]) -> Game:
    """Parallel composition with caller-chosen component tags."""
    if len({t for t, _ in pairs}) != len(pairs):
        raise ValueError("duplicate component tags")
    return _union([_retag(g, t) for t, g in pairs])


def component(g: Game, tag) -> Game:
    """The part of a parallel game under one tag, tag stripped."""
    kept = [e for e in g.es.events if e.path and e.path[0] == tag]
    m = {e: Event(e.path[1:], e.label) for e in kept}
    es = EventStructure(
        frozenset(m.values()),
        {m[e]: {m[c] for c in g.es.imcause[e] if c in m} for e in kept},
        frozenset(frozenset(m[x] for x in pair) for pair in g.es.minconf
                  if all(x in m for x in pair)),
    )
    return Game(es, {m[e]: g.pol[e] for e in kept})


def prefix_game(label: str, root_pol: str, g: Game) -> Game:
    head = Event((label,), label)
    m = {e: Event((label,) + e.path, e.label) for e in g.es.events}
    imcause = {head: set()}
    for e in g.es.events:
        cs = {m[c] for c in g.es.imcause[e]}
        if not g.es.imcause[e]:
            cs.add(head)
        imcause[m[e]] = cs
    es = EventStructure(
        frozenset(m.values()) | {head},
        imcause,
        frozenset(frozenset(m[e] for e in pair) for pair in g.es.minconf),
    )
    pol = {m[e]: p for e, p in g.pol.items()}
    pol[head] = root_pol
    return Game(es, pol)


def prefix_sum(root_pol: str, branches: Sequence[tuple[str, Game]]) -> Game:
    """Sum of prefixed games: one fresh root per branch, roots in conflict."""
    prefixed = [prefix_game(lab, root_pol, g) for lab, g in branches]
    roots = [Event((lab,), lab) for lab, _ in branches]
    extra = [frozenset((roots[i], roots[j]))
             for i in range(len(roots)) for j in range(i + 1, len(roots))]
    return _union(prefixed, extra)


def replicate(root_label: str, root_pol: str, inner: Game, width: int) -> Game:
    """Finitely many interleaved copies, each opened by its own root."""
    copies = [_retag(prefix_game(root_label, root_pol, inner), ("c", i))
              for i in range(width)]
    return _union(copies)


def depth_prune(g: Game, budget: int) -> Game:
    keep = [e for e in g.es.events if g.es.depth(e) <= budget]
    if len(keep) == len(g.es.events):
        return g
    return g.project(keep)


def type_to_game(t: SessionType, budget: int = 4, num_cap: int = 3) -> Game:
    """The game of a session type.

    Replication width and pruning depth share the budget; numeral
    families widen to num_cap labels.
    """
    return depth_prune(_build(t, budget, num_cap), budget)


def _build(t: SessionType, budget: int, num_cap: int) -> Game:
    if isinstance(t, Par):
        return parallel_games([_build(p, budget, num_cap) for p in t.parts])
    if isinstance(t, (With, Plus)):
        root_pol = NEG if isinstance(t, With) else POS
        branches = [(lab.render(), _build(cont, budget, num_cap))
                    for lab, cont in materialize_branches(t, num_cap)]
        return prefix_sum(root_pol, branches)
    if isinstance(t, Bang):
        return replicate("Req", NEG, _build(t.inner, budget, num_cap), budget)
    if isinstance(t, Ques):
        return replicate("Req", POS, _build(t.inner, budget, num_cap), budget)
    raise TypeError(f"not a session type: {t!r}")


def game_truncated(t: SessionType, budget: int, num_cap: int = 3) -> bool:
    """Whether the budgeted game omits events of the ideal game."""
    if _approximable(t):
        return True
    full = _build(t, budget, num_cap)
    return len(depth_prune(full, budget).es.events) != len(full.es.events)


def _approximable(t: SessionType) -> bool:
    from .meta.syntax import TBranch, TFamily
    if isinstance(t, Par):
        return any(_approximable(p) for p in t.parts)
    if isinstance(t, (With, Plus)):
        for b in t.branches:
            if isinstance(b, TFamily):
                return True
            if _approximable(b.cont):
                return True
        return False
    if isinstance(t, (Bang, Ques)):
        return True
    raise TypeError(t)


def game_json_str(g: Game, **extra) -> str:
    return json.dumps(g.to_json(extra or None), indent=2, sort_keys=True)
