"""Strategy layer: axioms, copycat, composition, weak products.

Composition is checked two ways: the prime construction in the
package, and an independent enumeration of secured states (pairs of
configurations agreeing on the shared game, reached step by step)
here in the tests.
"""

import random
from collections import Counter

import pytest

from conftest import random_session_type
from causalgames.escore import Event
from causalgames.games import parallel_games, type_to_game
from causalgames.meta.syntax import parse_type
from causalgames.strategies import (
    StrategyInvalid,
    Strategy,
    compose,
    copycat,
    included_strategy,
    injection,
    interact,
    iso_strategies,
    pairing,
    parallel_strategies,
    projection,
    relabel,
    restrict_strategy,
    transpose,
    weakening,
)

WITH2 = type_to_game(parse_type("&{A.1, B.1}"))
PLUS1 = type_to_game(parse_type("+{Done.1}"))
NEGATION_GAME = type_to_game(parse_type(
    "&{Call(tt).+{Return(tt).1, Return(ff).1},"
    " Call(ff).+{Return(tt).1, Return(ff).1}}"))
GL = type_to_game(parse_type("+{X.1}"))
GR = type_to_game(parse_type("+{Y.1}"))
BRANCHES = [("l", GL), ("r", GR)]


def labels(sig):
    return Counter((sig.label_of(s), sig.polarity(s)) for s in sig.es.events)

def label_edges(sig):
    return Counter((sig.label_of(a), sig.label_of(b))
                   for a, b in sig.es.cause_edges())

def label_conflicts(sig):
    return Counter(frozenset(sig.label_of(e) for e in p)
                   for p in sig.es.minconf)


# ----------------------------------------------------------------------
# independent composition oracle


def prime_count(sigma, x, y):
    synced = 0
    for s in x:
        a = sigma.play.get(s)
        if a is not None and a.path[0] == 1:
            synced += 1
    return len(x) + len(y) - synced


def oracle_states(sigma, tau, bound):
    """Secured states of the interaction, reached one event at a time.

    A state is a pair of configurations whose projections to the
    shared game agree; shared moves advance both sides at once.
    """
    start = (frozenset(), frozenset())
    seen = {start}
    stack = [start]
    while stack:
        x, y = stack.pop()
        if prime_count(sigma, x, y) >= bound:
            continue
        steps = []
        for s in sigma.es.extensions(x):
            a = sigma.play.get(s)
            if a is None or a.path[0] == 0:
                steps.append((x | {s}, y))
            else:
                for t in tau.es.extensions(y):
                    b = tau.play.get(t)
                    if (b is not None and b.path[0] == 0
                            and tuple(b.path[1:]) == tuple(a.path[1:])):
                        steps.append((x | {s}, y | {t}))
        for t in tau.es.extensions(y):
            b = tau.play.get(t)
            if b is None or b.path[0] == 1:
                steps.append((x, y | {t}))
        for nxt in steps:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def assert_matches_oracle(sigma, tau, bound=6):
    es, to_s, to_t = interact(tau, sigma)
    got = Counter()
    for cfg in es.configurations(max_size=bound):
        x = frozenset(to_s[e] for e in cfg if e in to_s)
        y = frozenset(to_t[e] for e in cfg if e in to_t)
        got[(x, y)] += 1
    want = oracle_states(sigma, tau, bound)
    assert set(got) == want
    assert all(n == 1 for n in got.values())


def branch_strategies():
    src = WITH2
    sl = included_strategy(parallel_games([src.dual(), GL]),
                           [Event((1, "X"), "X")])
    sr = included_strategy(parallel_games([src.dual(), GR]),
                           [Event((1, "Y"), "Y")])
    return sl, sr


# ----------------------------------------------------------------------
# goldens


def test_copycat_single_move():
    cc = copycat(PLUS1)
    cc.validate()
    assert labels(cc) == {("Done", "-"): 1, ("Done", "+"): 1}
    assert label_edges(cc) == {("Done", "Done"): 1}
    (a, b), = cc.es.cause_edges()
    assert a.path == (0, "Done") and b.path == (1, "Done")
    assert cc.polarity(a) == "-" and cc.polarity(b) == "+"


def test_copycat_offer_golden():
    cc = copycat(WITH2)
    cc.validate()
    assert labels(cc) == {("A", "+"): 1, ("B", "+"): 1,
                          ("A", "-"): 1, ("B", "-"): 1}
    assert label_edges(cc) == {("A", "A"): 1, ("B", "B"): 1}
    pair, = cc.es.minconf
    assert {e.path for e in pair} == {(1, "A"), (1, "B")}


def test_copycat_validates_on_random_types():
    rng = random.Random(7)
    done = 0
    while done < 40:
        t = random_session_type(rng, depth=2)
        g = type_to_game(t, budget=2, num_cap=2)
        if not 0 < len(g.es.events) <= 5:
            continue
        copycat(g).validate()
        done += 1


def test_weakening():
    w = weakening(type_to_game(parse_type("+{A.1}")))
    assert not w.es.events
    w2 = weakening(WITH2)
    w2.validate()
    assert labels(w2) == {("A", "-"): 1, ("B", "-"): 1}
    w3 = weakening(NEGATION_GAME)
    w3.validate()
    assert labels(w3) == {("Call(tt)", "-"): 1, ("Call(ff)", "-"): 1}


def test_negation_strategy_golden():
    keep = [Event(("Call(tt)",), "Call(tt)"),
            Event(("Call(ff)",), "Call(ff)"),
            Event(("Call(tt)", "Return(ff)"), "Return(ff)"),
            Event(("Call(ff)", "Return(tt)"), "Return(tt)")]
    neg = included_strategy(NEGATION_GAME, keep)
    neg.validate()
    assert labels(neg) == {("Call(tt)", "-"): 1, ("Call(ff)", "-"): 1,
                           ("Return(ff)", "+"): 1, ("Return(tt)", "+"): 1}
    assert label_edges(neg) == {("Call(tt)", "Return(ff)"): 1,
                                ("Call(ff)", "Return(tt)"): 1}
    assert label_conflicts(neg) == {frozenset(("Call(tt)", "Call(ff)")): 1}


def test_projection_golden():
    pil = projection(BRANCHES, 0)
    pil.validate()
    assert labels(pil) == {("l", "+"): 1, ("X", "+"): 1, ("X", "-"): 1}
    assert label_edges(pil) == {("l", "X"): 1, ("X", "X"): 1}
    root, = [s for s in pil.es.events if pil.label_of(s) == "l"]
    assert root.path == (0, "l")
    assert not pil.es.imcause[root]


def test_injection_golden():
    iol = injection(BRANCHES, 0)
    iol.validate()
    assert labels(iol) == {("l", "+"): 1, ("X", "+"): 1, ("X", "-"): 1}
    root, = [s for s in iol.es.events if iol.label_of(s) == "l"]
    assert root.path == (1, "l")
    assert not iol.es.imcause[root]


def test_pairing_golden():
    sl, sr = branch_strategies()
    pair = pairing(WITH2, [("l", sl), ("r", sr)])
    pair.validate()
    assert labels(pair) == {("l", "-"): 1, ("r", "-"): 1,
                            ("X", "+"): 1, ("Y", "+"): 1}
    assert label_edges(pair) == {("l", "X"): 1, ("r", "Y"): 1}
    assert label_conflicts(pair) == {frozenset(("l", "r")): 1}


# ----------------------------------------------------------------------
# laws


def test_copycat_is_identity_on_itself():
    for g in (PLUS1, WITH2, NEGATION_GAME):
        cc = copycat(g)
        comp = compose(cc, cc)
        comp.validate()
        assert iso_strategies(comp, cc)


def test_copycat_is_identity_on_projection():
    pil = projection(BRANCHES, 0)
    offer = type_to_game(parse_type("&{l.+{X.1}, r.+{Y.1}}"))
    assert iso_strategies(compose(pil, copycat(offer)), pil)
    assert iso_strategies(compose(copycat(GL), pil), pil)


def test_weak_product_law():
    sl, sr = branch_strategies()
    pair = pairing(WITH2, [("l", sl), ("r", sr)])
    assert iso_strategies(compose(projection(BRANCHES, 0), pair), sl)
    assert iso_strategies(compose(projection(BRANCHES, 1), pair), sr)


def test_transpose_swaps_sides():
    for g in (PLUS1, WITH2):
        assert iso_strategies(transpose(copycat(g)), copycat(g.dual()))
    pil = projection(BRANCHES, 0)
    tp = transpose(pil)
    tp.validate()
    assert iso_strategies(transpose(tp), pil)


def test_composite_of_injections_validates():
    pil = projection(BRANCHES, 0)
    iol = injection(BRANCHES, 0)
    comp = compose(iol, pil)
    comp.validate()
    assert labels(comp) == {("l", "+"): 2, ("X", "+"): 1, ("X", "-"): 1}


# ----------------------------------------------------------------------
# interaction against the oracle


def test_interaction_matches_oracle_copycat():
    assert_matches_oracle(copycat(WITH2), copycat(WITH2))
    assert_matches_oracle(copycat(NEGATION_GAME), copycat(NEGATION_GAME),
                          bound=5)


def test_interaction_matches_oracle_products():
    pil = projection(BRANCHES, 0)
    assert_matches_oracle(pil, injection(BRANCHES, 0))
    sl, sr = branch_strategies()
    pair = pairing(WITH2, [("l", sl), ("r", sr)])
    assert_matches_oracle(pair, pil)
    assert_matches_oracle(copycat(WITH2), pair)


def test_interaction_matches_oracle_random_copycats():
    rng = random.Random(23)
    done = 0
    while done < 12:
        t = random_session_type(rng, depth=2)
        g = type_to_game(t, budget=2, num_cap=2)
        if not 0 < len(g.es.events) <= 4:
            continue
        assert_matches_oracle(copycat(g), copycat(g), bound=5)
        done += 1


# ----------------------------------------------------------------------
# plumbing


def test_parallel_strategies():
    both = parallel_strategies([("u", copycat(PLUS1)), ("v", weakening(WITH2))])
    both.validate()
    assert labels(both) == {("Done", "-"): 1, ("Done", "+"): 1,
                            ("A", "-"): 1, ("B", "-"): 1}


def test_relabel_and_restrict():
    neg = included_strategy(NEGATION_GAME, [
        Event(("Call(tt)",), "Call(tt)"),
        Event(("Call(tt)", "Return(ff)"), "Return(ff)"),
        Event(("Call(ff)",), "Call(ff)"),
        Event(("Call(ff)", "Return(tt)"), "Return(tt)")])
    idem = relabel(neg, NEGATION_GAME, lambda a: a)
    assert iso_strategies(idem, neg)
    cut = restrict_strategy(neg, [Event(("Call(tt)",), "Call(tt)"),
                                  Event(("Call(ff)",), "Call(ff)")])
    assert labels(cut) == {("Call(tt)", "-"): 1, ("Call(ff)", "-"): 1}
    assert label_conflicts(cut) == {frozenset(("Call(tt)", "Call(ff)")): 1}


def test_axiom_violations_rejected():
    missing = included_strategy(WITH2, [Event(("A",), "A")])
    with pytest.raises(StrategyInvalid, match="receptivity"):
        missing.validate()

    two = parallel_games([PLUS1, PLUS1])
    a, b = sorted(two.es.events, key=lambda e: e.path)
    es = two.es.project([a, b])
    rushed = Strategy(two, type(es)(es.events, {a: set(), b: {a}}, ()),
                      {a: a, b: b})
    with pytest.raises(StrategyInvalid, match="discourteous"):
        rushed.validate()

    leaky = Strategy(two, type(es)(es.events, {a: set(), b: set()},
                                   [frozenset((a, b))]),
                     {a: a, b: b})
    with pytest.raises(StrategyInvalid, match="minimal conflict"):
        leaky.validate()


def test_exports_deterministic():
    pil = projection(BRANCHES, 0)
    again = projection(BRANCHES, 0)
    assert pil.to_dot() == again.to_dot()
    assert pil.to_json() == again.to_json()
    comp = compose(injection(BRANCHES, 0), pil)
    comp2 = compose(injection(BRANCHES, 0), again)
    assert comp.to_json() == comp2.to_json()
    data = comp.to_json()
    assert {e["pol"] for e in data["events"]} <= {"+", "-", "0"}
    assert all(e["move"] is not None for e in data["events"])


# ----------------------------------------------------------------------
# transitions and bounded weak bisimulation

from causalgames.escore import EventStructure
from causalgames.games import POS, empty_game, replicate
from causalgames.strategies import (
    canonical_visible,
    strategy_after,
    transitions,
    weak_bisim,
)

GO = type_to_game(parse_type("+{go.1}"))


def _go_event():
    return next(iter(GO.es.events))


def committed_go():
    return included_strategy(GO, [_go_event()])


def racy_go():
    """Internal race; one branch plays go, the other is stuck."""
    go = _go_event()
    n1, n2 = Event(("n", 1), "*"), Event(("n", 2), "*")
    es = EventStructure([n1, n2, go], {go: [n1], n1: [], n2: []},
                        [frozenset((n1, n2))])
    return Strategy(GO, es, {go: go})


def test_after_empty_configuration_is_identity():
    w = weakening(WITH2)
    r = strategy_after(w, frozenset())
    assert r.es.structure_key() == w.es.structure_key()
    assert r.game.structure_key() == w.game.structure_key()


def test_after_rejects_conflicting_set():
    w = weakening(WITH2)
    roots = list(w.es.events)
    with pytest.raises(StrategyInvalid):
        strategy_after(w, frozenset(roots))  # A and B conflict


def test_after_advances_game():
    w = weakening(WITH2)
    root = sorted(w.es.events, key=lambda e: e.label)[0]  # the A copy
    r = strategy_after(w, frozenset([root]))
    # playing A kills B on both boards
    assert len(r.es.events) == 0
    assert [e.label for e in r.game.es.events] == []


def test_weakening_transitions_are_negative_only():
    w = weakening(WITH2)
    steps = transitions(w, 2)
    assert steps, "receptive skeleton still reacts"
    for t in steps:
        for e in t.events:
            assert w.polarity(e) == "-"


def test_copycat_waits_then_answers():
    cc = copycat(PLUS1)
    first = transitions(cc, 1)
    assert len(first) == 1 and not first[0].internal
    (t,) = first
    assert all(cc.polarity(e) == "-" for e in t.events)
    rest = transitions(t.residual, 1)
    assert len(rest) == 1
    assert all(t.residual.polarity(e) == "+" for e in rest[0].events)


def test_transitions_flag_internal_steps():
    s = racy_go()
    first = transitions(s, 1)
    assert len(first) == 2
    assert all(t.internal and len(t.events) == 1 for t in first)
    two = [t for t in transitions(s, 2) if not t.internal]
    assert len(two) == 1 and len(two[0].events) == 2


def test_after_consumes_conflicts_transitively():
    s = racy_go()
    n2 = [e for e in s.es.events if e.path == ("n", 2)][0]
    r = strategy_after(s, frozenset([n2]))
    assert len(r.es.events) == 0  # go depended on the losing branch


def test_weak_bisim_reflexive():
    assert weak_bisim(committed_go(), committed_go(),
                      depth=4)["equivalent"]
    cc = copycat(NEGATION_GAME)
    assert weak_bisim(cc, cc, depth=3, step=2)["equivalent"]


def test_weak_bisim_distinguishes_stuck_branch():
    out = weak_bisim(committed_go(), racy_go(), depth=4)
    assert not out["equivalent"]
    assert out["verdict"] == "distinguished"
    sides = [w["side"] for w in out["witness"]]
    assert sides == ["right", "left"]
    assert out["witness"][0]["visible"] == []
    assert out["witness"][1]["visible"] == [["go", "go"]]


def test_weak_bisim_ignores_stuttering():
    go = _go_event()
    n = Event(("n", 3), "*")
    es = EventStructure([n, go], {go: [n], n: []}, [])
    quiet = Strategy(GO, es, {go: go})
    out = weak_bisim(committed_go(), quiet, depth=4)
    assert out["equivalent"]
    assert out["verdict"] == "equivalent up to depth 4"


def test_weak_bisim_up_to_copy_renaming():
    rep = replicate("Req", POS, empty_game(), 2)
    evs = sorted(rep.es.events, key=lambda e: str(e.path))
    a0 = included_strategy(rep, [evs[0]])
    a1 = included_strategy(rep, [evs[1]])
    assert canonical_visible(a0, frozenset([evs[0]])) == \
        canonical_visible(a1, frozenset([evs[1]]))
    assert weak_bisim(a0, a1, depth=3)["equivalent"]


def test_weak_bisim_needs_shared_game():
    with pytest.raises(StrategyInvalid):
        weak_bisim(committed_go(), weakening(WITH2), depth=2)
