"""Race transitions, barbed equivalence, and the logging transition system.

Deterministic communications live in the congruence normalizer, so the
only transitions here are races: a request meeting a codereliction.
On top of those this module provides a bounded reduction-closed barbed
equivalence, and a labelled transition system for processes owning a
logging channel, where an action is the three-step request/select/ack
macro on that channel and everything else is internal.
"""

from __future__ import annotations

from .congruence import (
    _head_paths, _replace_at, barbs, canonical, normalize, race_redexes,
)
from .syntax import BranchP, Der, PBranch, Process, SelectP, proc_str

__all__ = [
    "TAU", "reduce_step", "obs_equiv_bounded", "transitions", "log_lts",
    "proc_weak_bisim",
]

TAU = "tau"


def _key(p: Process) -> str:
    return proc_str(canonical(p))


def reduce_step(p: Process, *, fuel: int = 64) -> list[Process]:
    """All race successors of p, normalized and deduplicated."""
    n = normalize(p, fuel=fuel)
    seen: dict[str, Process] = {}
    for fired in race_redexes(n):
        rn = normalize(fired, fuel=fuel)
        seen.setdefault(_key(rn), rn)
    return [seen[k] for k in sorted(seen)]


def _tau_closure(p: Process, depth: int, fuel: int,
                 cache: dict) -> list[Process]:
    """States reachable by at most depth races, including p itself."""
    seen = {_key(p): p}
    frontier = [p]
    for _ in range(depth):
        nxt = []
        for s in frontier:
            k = _key(s)
            if k not in cache:
                cache[k] = reduce_step(s, fuel=fuel)
            for s2 in cache[k]:
                k2 = _key(s2)
                if k2 not in seen:
                    seen[k2] = s2
                    nxt.append(s2)
        frontier = nxt
        if not frontier:
            break
    return list(seen.values())


def obs_equiv_bounded(p: Process, q: Process, *, depth: int = 4,
                      fuel: int = 64) -> bool:
    """Bounded reduction-closed barbed equivalence.

    Barbs are matched weakly (a barb must be reachable by internal
    steps on the other side) and every race must be answered by a
    bounded sequence of races.  Sound for inequivalence; equivalences
    hold only up to the bound.  No closure under contexts is taken.
    """
    step_cache: dict = {}
    memo: dict = {}

    def weak_barbs_ok(x: Process, y: Process, d: int) -> bool:
        ys = _tau_closure(y, d, fuel, step_cache)
        have = frozenset().union(*(barbs(s, fuel=fuel) for s in ys))
        return barbs(x, fuel=fuel) <= have

    def check(x: Process, y: Process, d: int) -> bool:
        key = (_key(x), _key(y), d)
        if key in memo:
            return memo[key]
        memo[key] = True  # assume success on cycles within the bound
        ok = weak_barbs_ok(x, y, d) and weak_barbs_ok(y, x, d)
        if ok and d > 0:
            for side_a, side_b in ((x, y), (y, x)):
                ka = _key(side_a)
                if ka not in step_cache:
                    step_cache[ka] = reduce_step(side_a, fuel=fuel)
                for nxt in step_cache[ka]:
                    cands = _tau_closure(side_b, d, fuel, step_cache)
                    if side_a is x:
                        good = any(check(nxt, c, d - 1) for c in cands)
                    else:
                        good = any(check(c, nxt, d - 1) for c in cands)
                    if not good:
                        ok = False
                        break
                if not ok:
                    break
        memo[key] = ok
        return ok

    return check(normalize(p, fuel=fuel), normalize(q, fuel=fuel), depth)


# ----------------------------------------------------------------------
# the logging transition system


def _match_action(head: Process, log: str):
    """Recognize the action macro: request, select, wait for the ack."""
    if not isinstance(head, Der) or head.chan != log or len(head.names) != 1:
        return None
    x = head.names[0]
    sel = head.body
    if not isinstance(sel, SelectP) or sel.chan != x:
        return None
    if sel.names == ():
        y = x
    elif len(sel.names) == 1:
        y = sel.names[0]
    else:
        return None
    br = sel.body
    if not isinstance(br, BranchP) or br.chan != y or len(br.branches) != 1:
        return None
    b = br.branches[0]
    if not isinstance(b, PBranch) or b.label.render() != "ok" or b.names:
        return None
    return sel.label.render(), b.body


def transitions(p: Process, log: str, *, fuel: int = 64):
    """Visible log actions and internal races from p, normalized."""
    n = normalize(p, fuel=fuel)
    out = []
    for succ in reduce_step(n, fuel=fuel):
        out.append((TAU, succ))
    for path, head in _head_paths(n, {log}):
        m = _match_action(head, log)
        if m is None:
            continue
        label, rest = m
        succ = normalize(_replace_at(n, path, rest), fuel=fuel)
        out.append((label, succ))
    return out


def log_lts(p: Process, log: str, *, depth: int = 5, fuel: int = 64,
            max_states: int = 200) -> dict:
    """Breadth-first labelled transition system up to the given depth."""
    p0 = normalize(p, fuel=fuel)
    states = [p0]
    index = {_key(p0): 0}
    trans: list[tuple[int, str, int]] = []
    frontier = [0]
    for _ in range(depth):
        nxt = []
        for i in frontier:
            for lab, s in transitions(states[i], log, fuel=fuel):
                k = _key(s)
                if k not in index:
                    if len(states) >= max_states:
                        continue
                    index[k] = len(states)
                    states.append(s)
                    nxt.append(index[k])
                edge = (i, lab, index[k])
                if edge not in trans:
                    trans.append(edge)
        frontier = nxt
        if not frontier:
            break
    return {"states": [proc_str(s) for s in states], "transitions": trans}


def proc_weak_bisim(p: Process, q: Process, log: str, *, depth: int = 5,
                    fuel: int = 64) -> bool:
    """Bounded weak bisimulation over the logging transition system."""
    trans_cache: dict = {}
    memo: dict = {}

    def steps(x: Process):
        k = _key(x)
        if k not in trans_cache:
            trans_cache[k] = transitions(x, log, fuel=fuel)
        return trans_cache[k]

    def tclose(x: Process, d: int) -> list[Process]:
        seen = {_key(x): x}
        frontier = [x]
        for _ in range(d):
            nxt = []
            for s in frontier:
                for lab, s2 in steps(s):
                    if lab != TAU:
                        continue
                    k2 = _key(s2)
                    if k2 not in seen:
                        seen[k2] = s2
                        nxt.append(s2)
            frontier = nxt
            if not frontier:
                break
        return list(seen.values())

    def weak(y: Process, label: str, d: int) -> list[Process]:
        out: dict[str, Process] = {}
        for y1 in tclose(y, d):
            for lab, y2 in steps(y1):
                if lab != label:
                    continue
                for y3 in tclose(y2, d):
                    out.setdefault(_key(y3), y3)
        return list(out.values())

    def check(x: Process, y: Process, d: int) -> bool:
        key = (_key(x), _key(y), d)
        if key in memo:
            return memo[key]
        memo[key] = True
        ok = True
        if d > 0:
            for a, b, flip in ((x, y, False), (y, x, True)):
                for lab, nxt in steps(a):
                    cands = tclose(b, d) if lab == TAU else weak(b, lab, d)
                    if flip:
                        good = any(check(c, nxt, d - 1) for c in cands)
                    else:
                        good = any(check(nxt, c, d - 1) for c in cands)
                    if not good:
                        ok = False
                        break
                if not ok:
                    break
        memo[key] = ok
        return ok

    return check(normalize(p, fuel=fuel), normalize(q, fuel=fuel), depth)
