"""Event-structure axioms and constructors, checked against brute-force oracles."""

from __future__ import annotations

import itertools
import random

import pytest

from causalgames.escore import (
    ESInvalid,
    Event,
    EventStructure,
    empty_es,
    es_sum,
    parallel,
    prefix,
)
from conftest import random_es


# ----------------------------------------------------------------------
# oracles


def oracle_down(es: EventStructure, e: Event) -> frozenset:
    """Transitive closure of immediate causes by naive iteration."""
    acc = set(es.imcause[e])
    changed = True
    while changed:
        changed = False
        for x in list(acc):
            for c in es.imcause[x]:
                if c not in acc:
                    acc.add(c)
                    changed = True
    return frozenset(acc)


def oracle_conflict(es: EventStructure, a: Event, b: Event) -> bool:
    if a == b:
        return False
    da, db = oracle_down(es, a) | {a}, oracle_down(es, b) | {b}
    for pair in es.minconf:
        m, m2 = tuple(pair)
        if (m in da and m2 in db) or (m in db and m2 in da):
            return True
    return False


def oracle_configurations(es: EventStructure, max_size: int) -> set:
    """Every subset, filtered; exponential, only for tiny structures."""
    out = set()
    evs = list(es.events)
    for k in range(0, max_size + 1):
        for combo in itertools.combinations(evs, k):
            s = frozenset(combo)
            closed = all(oracle_down(es, e) <= s for e in s)
            free = not any(
                oracle_conflict(es, a, b) for a, b in itertools.combinations(s, 2)
            )
            if closed and free:
                out.add(s)
    return out


# ----------------------------------------------------------------------
# a small worked example, values frozen by hand:
#   a < b, a < c, with b ~minconf~ c, and d independent.


def worked() -> EventStructure:
    a, b, c, d = (Event(("w", ch), ch) for ch in "abcd")
    return EventStructure(
        [a, b, c, d],
        {b: [a], c: [a]},
        [frozenset((b, c))],
    )


def test_worked_down_sets():
    es = worked()
    a, b, c, d = sorted(es.events, key=lambda e: e.label)
    assert es.down(a) == frozenset()
    assert es.down(b) == {a}
    assert es.down(c) == {a}
    assert es.down(d) == frozenset()


def test_worked_configuration_count():
    es = worked()
    # Frozen by hand: {}, {a}, {d}, {a,b}, {a,c}, {a,d}, {a,b,d}, {a,c,d}.
    configs = es.configurations()
    assert len(configs) == 8
    assert configs == sorted(
        oracle_configurations(es, 4),
        key=lambda x: (len(x), sorted((e.label for e in x))),
    ) or set(configs) == oracle_configurations(es, 4)


def test_worked_extensions():
    es = worked()
    a, b, c, d = sorted(es.events, key=lambda e: e.label)
    assert set(es.extensions([])) == {a, d}
    assert set(es.extensions([a])) == {b, c, d}
    assert set(es.extensions([a, b])) == {d}  # c excluded by conflict


def test_validation_rejects_cycle():
    a, b = Event(("x", 0), "a"), Event(("x", 1), "b")
    with pytest.raises(ESInvalid):
        EventStructure([a, b], {a: [b], b: [a]}, ()).validate()


def test_validation_rejects_ordered_conflict():
    a, b = Event(("x", 0), "a"), Event(("x", 1), "b")
    es = EventStructure([a, b], {b: [a]}, [frozenset((a, b))])
    with pytest.raises(ESInvalid):
        es.validate()


def test_validation_rejects_non_minimal_conflict():
    # a ~ b stored AND a2 ~ b, where a2 < a: the pair (a, b) is not minimal.
    a2 = Event(("x", 0), "a2")
    a = Event(("x", 1), "a")
    b = Event(("x", 2), "b")
    es = EventStructure(
        [a2, a, b], {a: [a2]}, [frozenset((a, b)), frozenset((a2, b))]
    )
    with pytest.raises(ESInvalid):
        es.validate()


# ----------------------------------------------------------------------
# randomized axioms


def test_random_structures_validate_and_match_oracles():
    rng = random.Random(7)
    for _ in range(300):
        es = random_es(rng)
        es.validate()
        for e in es.events:
            assert es.down(e) == oracle_down(es, e)
        evs = list(es.events)
        for a, b in itertools.combinations(evs, 2):
            assert es.conflict(a, b) == oracle_conflict(es, a, b)
            # conflict inheritance
            if es.conflict(a, b):
                for c in evs:
                    if es.le(b, c):
                        assert es.conflict(a, c)
        if len(evs) <= 6:
            assert set(es.configurations(6)) == oracle_configurations(es, 6)


def test_parallel_matches_product_oracle():
    rng = random.Random(11)
    for _ in range(50):
        l, r = random_es(rng, 4), random_es(rng, 4)
        both = parallel([l, r])
        both.validate()
        assert len(both.events) == len(l.events) + len(r.events)
        # configuration count of a product is the product of counts
        cl = len(l.configurations(8))
        cr = len(r.configurations(8))
        if len(both.events) <= 8:
            assert len(both.configurations(8)) == cl * cr


def test_sum_matches_disjoint_union_oracle():
    rng = random.Random(13)
    for _ in range(50):
        l, r = random_es(rng, 4), random_es(rng, 4)
        s = es_sum([l, r])
        s.validate()
        if len(s.events) <= 8:
            cl = l.configurations(8)
            cr = r.configurations(8)
            # nonempty configurations live in exactly one component
            expected = len(cl) + len(cr) - 1
            assert len(s.configurations(8)) == expected


def test_prefix_adds_root():
    rng = random.Random(17)
    for _ in range(30):
        es = random_es(rng, 4)
        p = prefix("go", es)
        p.validate()
        assert len(p.events) == len(es.events) + 1
        assert len(p.minimal()) == 1
        if len(p.events) <= 8:
            # configurations: empty one plus head-extended originals
            assert len(p.configurations(8)) == 1 + len(es.configurations(7))


def test_project_is_restriction():
    rng = random.Random(19)
    for _ in range(80):
        es = random_es(rng, 6)
        evs = sorted(es.events, key=lambda e: e.label)
        if not evs:
            continue
        keep = frozenset(rng.sample(evs, rng.randint(0, len(evs))))
        sub = es.project(keep)
        sub.validate()
        assert sub.events == keep
        for a in keep:
            for b in keep:
                if a != b:
                    assert sub.le(a, b) == es.le(a, b)
                    assert sub.conflict(a, b) == oracle_conflict(es, a, b)


def test_empty_is_unit_for_parallel():
    es = parallel([empty_es(), empty_es()])
    assert es.events == frozenset()
    assert es.configurations() == [frozenset()]


def test_json_and_dot_are_deterministic():
    es = worked()
    assert es.to_json() == es.to_json()
    j = es.to_json()
    assert {e["label"] for e in j["events"]} == {"a", "b", "c", "d"}
    assert len(j["minconf"]) == 1
    dot = es.to_dot()
    assert "style=dashed" in dot and "->" in dot
