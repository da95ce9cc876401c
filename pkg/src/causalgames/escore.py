"""Finite event structures with binary conflict.

An event structure is a finite set of events carrying a partial order
(causality) and an irreflexive symmetric conflict relation such that
conflict is inherited along causality.  We store only the immediate
causality and the *minimal* conflicts; the full order and conflict are
derived on demand.

Events carry a structural address (``path``) that records how the event
was built (parallel component, prefix label, copy index, ...), plus a
display label.  All constructors produce fresh paths, so events from
different structures never collide accidentally.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

__all__ = [
    "Event",
    "EventStructure",
    "ESInvalid",
    "path_key",
    "path_str",
    "empty_es",
    "parallel",
    "es_sum",
    "prefix",
]


class ESInvalid(Exception):
    """Raised when an event structure violates one of its axioms."""


class Event:
    """An event: a structural address plus a display label.

    Events are immutable and hash-heavy (they key every derived map),
    so the hash is computed once at construction.
    """

    __slots__ = ("path", "label", "_h")

    def __init__(self, path: tuple, label: str):
        self.path = path
        self.label = label
        self._h = hash((path, label))

    def __eq__(self, other):
        return self is other or (
            isinstance(other, Event)
            and self._h == other._h
            and self.label == other.label
            and self.path == other.path)

    def __hash__(self) -> int:
        return self._h

    def __repr__(self) -> str:
        return f"Event({path_str(self.path)}: {self.label})"


def _component_key(c):
    # Heterogeneous path components need a uniform sort key.
    if isinstance(c, bool):
        return (0, int(c), "")
    if isinstance(c, int):
        return (0, c, "")
    if isinstance(c, str):
        return (1, 0, c)
    if isinstance(c, tuple):
        return (2, 0, "") + tuple(_component_key(x) for x in c)
    raise TypeError(f"bad path component: {c!r}")


def path_key(path: tuple):
    """Deterministic total-order key for event paths."""
    return (len(path),) + tuple(_component_key(c) for c in path)


def event_key(e: Event):
    return (path_key(e.path), e.label)


def _component_str(c) -> str:
    if isinstance(c, tuple):
        if len(c) == 2 and c[0] == "#" and isinstance(c[1], int):
            return f"#{c[1]}"
        return "(" + ",".join(_component_str(x) for x in c) + ")"
    return str(c)


def path_str(path: tuple) -> str:
    """Stable printable identifier for a path."""
    return "/".join(_component_str(c) for c in path) or "<root>"


class EventStructure:
    """Events + immediate causality + minimal conflict.

    ``imcause`` maps each event to its set of immediate causes;
    ``minconf`` is a set of 2-element frozensets.  Instances are
    immutable by convention: all public attributes are frozen
    collections and derived data is cached.
    """

    __slots__ = ("events", "imcause", "minconf", "_down", "_depth",
                 "_sorted", "_conf", "_mcpairs")

    def __init__(
        self,
        events: Iterable[Event],
        imcause: Mapping[Event, Iterable[Event]] | None = None,
        minconf: Iterable[Iterable[Event]] | None = None,
    ):
        self.events: frozenset[Event] = frozenset(events)
        causes = {}
        for e in self.events:
            cs = frozenset((imcause or {}).get(e, ()))
            if not cs <= self.events:
                raise ESInvalid(f"cause outside carrier for {e}")
            causes[e] = cs
        self.imcause: dict[Event, frozenset[Event]] = causes
        mc = set()
        for pair in minconf or ():
            pair = frozenset(pair)
            if len(pair) != 2:
                raise ESInvalid(f"conflict pair must have 2 events: {set(pair)}")
            if not pair <= self.events:
                raise ESInvalid("conflict pair outside carrier")
            mc.add(pair)
        self.minconf: frozenset[frozenset[Event]] = frozenset(mc)
        self._down: dict[Event, frozenset[Event]] | None = None
        self._depth: dict[Event, int] | None = None
        self._sorted: list[Event] | None = None
        self._conf: dict[tuple[Event, Event], bool] = {}
        self._mcpairs: list[tuple[Event, Event]] | None = None

    # ------------------------------------------------------------------
    # derived causality

    def sorted_events(self) -> list[Event]:
        if self._sorted is None:
            self._sorted = sorted(self.events, key=event_key)
        return self._sorted

    def down(self, e: Event) -> frozenset[Event]:
        """Strict causes of ``e`` (transitively closed)."""
        self._close()
        return self._down[e]

    def cone(self, e: Event) -> frozenset[Event]:
        """[e]: the event together with all its causes."""
        return self.down(e) | {e}

    def _close(self) -> None:
        if self._down is not None:
            return
        down: dict[Event, frozenset[Event]] = {}
        depth: dict[Event, int] = {}
        state: dict[Event, int] = {}  # 0 fresh, 1 visiting, 2 done

        for root in self.events:
            stack = [root]
            while stack:
                e = stack[-1]
                st = state.get(e, 0)
                if st == 2:
                    stack.pop()
                    continue
                if st == 0:
                    state[e] = 1
                    pending = [c for c in self.imcause[e] if state.get(c, 0) != 2]
                    for c in pending:
                        if state.get(c, 0) == 1:
                            raise ESInvalid(f"causality cycle through {e}")
                    stack.extend(pending)
                    if not pending:
                        state[e] = 2
                        acc = set()
                        for c in self.imcause[e]:
                            acc.add(c)
                            acc |= down[c]
                        down[e] = frozenset(acc)
                        depth[e] = 1 + max((depth[c] for c in self.imcause[e]), default=0)
                        stack.pop()
                else:
                    state[e] = 2
                    acc = set()
                    for c in self.imcause[e]:
                        acc.add(c)
                        acc |= down[c]
                    down[e] = frozenset(acc)
                    depth[e] = 1 + max((depth[c] for c in self.imcause[e]), default=0)
                    stack.pop()
        self._down = down
        self._depth = depth

    def le(self, a: Event, b: Event) -> bool:
        return a == b or a in self.down(b)

    def depth(self, e: Event) -> int:
        """Causal depth, minimal events having depth 1."""
        self._close()
        return self._depth[e]

    def minimal(self) -> list[Event]:
        return [e for e in self.sorted_events() if not self.imcause[e]]

    def cause_edges(self) -> list[tuple[Event, Event]]:
        """All immediate (cause, effect) pairs, deterministically ordered."""
        return [(c, e)
                for e in self.sorted_events()
                for c in sorted(self.imcause[e], key=event_key)]

    # ------------------------------------------------------------------
    # derived conflict

    def conflict(self, a: Event, b: Event) -> bool:
        """Inherited conflict: some minimal-conflict pair sits below a,b."""
        if not self.minconf or a == b:
            return False
        key = (a, b)
        r = self._conf.get(key)
        if r is None:
            if self._mcpairs is None:
                self._mcpairs = [tuple(pair) for pair in self.minconf]
            self._close()
            da, db = self._down[a], self._down[b]
            r = False
            for m, m2 in self._mcpairs:
                if ((m == a or m in da) and (m2 == b or m2 in db)) or \
                        ((m == b or m in db) and (m2 == a or m2 in da)):
                    r = True
                    break
            self._conf[key] = r
            self._conf[(b, a)] = r
        return r

    def conflict_free(self, xs: Iterable[Event]) -> bool:
        xs = list(xs)
        for i, a in enumerate(xs):
            for b in xs[i + 1:]:
                if self.conflict(a, b):
                    return False
        return True

    def down_closed(self, xs: set[Event] | frozenset[Event]) -> bool:
        return all(self.down(e) <= xs for e in xs)

    # ------------------------------------------------------------------
    # configurations

    def is_configuration(self, xs: Iterable[Event]) -> bool:
        s = frozenset(xs)
        return s <= self.events and self.down_closed(s) and self.conflict_free(s)

    def extensions(self, x: Iterable[Event]) -> list[Event]:
        """Events that extend configuration ``x`` by one step."""
        s = frozenset(x)
        out = []
        for e in self.sorted_events():
            if e in s or not self.down(e) <= s:
                continue
            if any(self.conflict(e, f) for f in s):
                continue
            out.append(e)
        return out

    def configurations(self, max_size: int = 12) -> list[frozenset[Event]]:
        """All configurations up to ``max_size`` events.

        The enumeration is exponential; the guard keeps accidental use on
        large structures from blowing up.
        """
        if max_size > 12:
            raise ValueError("configuration enumeration capped at size 12")
        seen = {frozenset()}
        frontier = [frozenset()]
        while frontier:
            nxt = []
            for x in frontier:
                if len(x) >= max_size:
                    continue
                for e in self.extensions(x):
                    y = x | {e}
                    if y not in seen:
                        seen.add(y)
                        nxt.append(y)
            frontier = nxt
        return sorted(seen, key=lambda x: (len(x), sorted(map(event_key, x))))

    # ------------------------------------------------------------------
    # axioms

    def validate(self) -> None:
        """Check the event-structure axioms; raise ESInvalid on failure."""
        self._close()  # raises on cycles
        for pair in self.minconf:
            m, m2 = tuple(pair)
            if self.le(m, m2) or self.le(m2, m):
                raise ESInvalid(f"conflicting pair is causally ordered: {m}, {m2}")
            # Minimality: dropping either endpoint leaves a compatible set.
            both = self.cone(m) | self.cone(m2)
            if not self.conflict_free(both - {m}) or not self.conflict_free(both - {m2}):
                raise ESInvalid(f"non-minimal conflict stored: {m}, {m2}")
        for e in self.events:
            cone = self.cone(e)
            for pair in self.minconf:
                if pair <= cone:
                    raise ESInvalid(f"self-conflict at {e}: above {set(pair)}")

    # ------------------------------------------------------------------
    # cells (confusion-freeness)

    def straight_causes_equal(self, a: Event, b: Event) -> bool:
        return self.down(a) == self.down(b)

    def cells(self) -> list[frozenset[Event]]:
        """Partition events into cells: the minimal-conflict-or-equal classes.

        Only meaningful on confusion-free structures; use
        ``confusion_free`` to check first.
        """
        parent: dict[Event, Event] = {e: e for e in self.events}

        def find(e):
            while parent[e] != e:
                parent[e] = parent[parent[e]]
                e = parent[e]
            return e

        for pair in self.minconf:
            a, b = tuple(pair)
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
        groups: dict[Event, set[Event]] = {}
        for e in self.events:
            groups.setdefault(find(e), set()).add(e)
        return sorted((frozenset(g) for g in groups.values()),
                      key=lambda g: min(map(event_key, g)))

    def confusion_free(self) -> bool:
        for pair in self.minconf:
            a, b = tuple(pair)
            if not self.straight_causes_equal(a, b):
                return False
        # minconf-or-equal must be transitive: within a cell every distinct
        # pair is a stored minimal conflict.
        for cell in self.cells():
            members = sorted(cell, key=event_key)
            for i, a in enumerate(members):
                for b in members[i + 1:]:
                    if frozenset((a, b)) not in self.minconf:
                        return False
        return True

    # ------------------------------------------------------------------
    # restriction

    def project(self, keep: Iterable[Event]) -> "EventStructure":
        """Restrict to ``keep``: order and conflict restricted, re-minimized."""
        keep = frozenset(keep) & self.events
        lst = sorted(keep, key=event_key)
        ids = {e: i for i, e in enumerate(lst)}

        sdown = {}
        for e in lst:
            m = 0
            for c in self.down(e):
                i = ids.get(c)
                if i is not None:
                    m |= 1 << i
            sdown[e] = m

        order: dict[Event, set[Event]] = {}
        for e in lst:
            below = self.down(e) & keep
            # transitive reduction within the restriction
            u = 0
            for d in below:
                u |= sdown[d]
            order[e] = {c for c in below if not (u >> ids[c]) & 1}

        # conflict masks within the restriction, from inherited minconf
        conf = [0] * len(lst)
        for pair in self.minconf:
            x, y = tuple(pair)
            ux = uy = 0
            for e in lst:
                dx = self.down(e)
                if x == e or x in dx:
                    ux |= 1 << ids[e]
                if y == e or y in dx:
                    uy |= 1 << ids[e]
            if not ux or not uy:
                continue
            ov = ux
            while ov:
                low = ov & -ov
                conf[low.bit_length() - 1] |= uy
                ov ^= low
            ov = uy
            while ov:
                low = ov & -ov
                conf[low.bit_length() - 1] |= ux
                ov ^= low
        for i in range(len(lst)):
            conf[i] &= ~(1 << i)

        sconf = [0] * len(lst)
        for e in lst:
            i = ids[e]
            m = 0
            ov = sdown[e]
            while ov:
                low = ov & -ov
                m |= conf[low.bit_length() - 1]
                ov ^= low
            sconf[i] = m

        mc = []
        for i, a in enumerate(lst):
            for j in range(i + 1, len(lst)):
                if not (conf[i] >> j) & 1:
                    continue
                b = lst[j]
                # minimal unless a strictly smaller pair already conflicts
                if (sconf[i] & (sdown[b] | (1 << j))) or (conf[i] & sdown[b]):
                    continue
                mc.append(frozenset((a, b)))
        return EventStructure(keep, order, mc)

    # ------------------------------------------------------------------
    # exports

    def to_json(self, extra: Callable[[Event], dict] | None = None) -> dict:
        evs = []
        for e in self.sorted_events():
            d = {"id": path_str(e.path), "label": e.label}
            if extra:
                d.update(extra(e))
            evs.append(d)
        ident = {e: path_str(e.path) for e in self.events}
        imc = sorted(
            [ident[c], ident[e]]
            for e in self.events
            for c in self.imcause[e]
        )
        mc = sorted(sorted([ident[a], ident[b]]) for a, b in map(tuple, self.minconf))
        return {"events": evs, "imcause": imc, "minconf": mc}

    def to_dot(self, extra: Callable[[Event], dict] | None = None) -> str:
        lines = ["digraph es {", "  rankdir=TB;", "  node [shape=box];"]
        ident = {e: path_str(e.path) for e in self.events}
        for e in self.sorted_events():
            attrs = {"label": e.label}
            if extra:
                attrs.update(extra(e))
            rendered = ",".join(f'{k}="{v}"' for k, v in sorted(attrs.items()))
            lines.append(f'  "{ident[e]}" [{rendered}];')
        for e in self.sorted_events():
            for c in sorted(self.imcause[e], key=event_key):
                lines.append(f'  "{ident[c]}" -> "{ident[e]}";')
        for pair in sorted(self.minconf, key=lambda p: sorted(map(event_key, p))):
            a, b = sorted(pair, key=event_key)
            lines.append(
                f'  "{ident[a]}" -> "{ident[b]}" '
                "[style=dashed,dir=none,constraint=false];"
            )
        lines.append("}")
        return "\n".join(lines)

    def structure_key(self):
        """Hashable key identifying the structure up to nothing (exact)."""
        evs = tuple(event_key(e) for e in self.sorted_events())
        imc = tuple(
            (event_key(c), event_key(e))
            for e in self.sorted_events()
            for c in sorted(self.imcause[e], key=event_key)
        )
        mc = tuple(sorted(tuple(sorted(map(event_key, p))) for p in self.minconf))
        return (evs, imc, mc)

    def __repr__(self) -> str:
        return (f"EventStructure({len(self.events)} events, "
                f"{sum(len(v) for v in self.imcause.values())} causal links, "
                f"{len(self.minconf)} minimal conflicts)")


# ----------------------------------------------------------------------
# constructors


def empty_es() -> EventStructure:
    return EventStructure((), {}, ())


def _tag(i: int, e: Event) -> Event:
    return Event((i,) + e.path, e.label)


def parallel(parts: list[EventStructure]) -> EventStructure:
    """Disjoint union; relations componentwise."""
    events = []
    imcause = {}
    minconf = []
    for i, es in enumerate(parts):
        for e in es.events:
            te = _tag(i, e)
            events.append(te)
            imcause[te] = {_tag(i, c) for c in es.imcause[e]}
        for pair in es.minconf:
            a, b = tuple(pair)
            minconf.append(frozenset((_tag(i, a), _tag(i, b))))
    return EventStructure(events, imcause, minconf)


def es_sum(parts: list[EventStructure]) -> EventStructure:
    """Same carrier as ``parallel`` but components are mutually exclusive.

    Cross-component conflict is generated by putting the components'
    minimal events in pairwise conflict.
    """
    base = parallel(parts)
    minconf = set(base.minconf)
    roots = []
    for i, es in enumerate(parts):
        roots.append([_tag(i, e) for e in es.minimal()])
    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            for a in roots[i]:
                for b in roots[j]:
                    minconf.add(frozenset((a, b)))
    return EventStructure(base.events, base.imcause, minconf)


def prefix(label: str, es: EventStructure) -> EventStructure:
    """One new minimal event below everything in ``es``.

    Inner events get the label prepended to their paths, so distinct
    prefix labels keep distinct carriers.
    """
    head = Event((label,), label)

    def shift(e: Event) -> Event:
        return Event((label,) + e.path, e.label)

    events = [head] + [shift(e) for e in es.events]
    imcause = {head: set()}
    for e in es.events:
        cs = {shift(c) for c in es.imcause[e]}
        if not es.imcause[e]:
            cs = {head}
        imcause[shift(e)] = cs
    minconf = [frozenset(map(shift, pair)) for pair in es.minconf]
    return EventStructure(events, imcause, minconf)
