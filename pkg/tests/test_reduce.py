"""Races, barbed equivalence, and the logging transition system."""

import random

from causalgames.meta.congruence import barbs, canonical, normalize
from causalgames.meta.reduce import (
    TAU, log_lts, obs_equiv_bounded, proc_weak_bisim, reduce_step,
    transitions,
)
from causalgames.meta.syntax import (
    Bang, Coder, Cut, Der, Nil, dual, fork, parse_process, parse_type,
    proc_str, rooted,
)
from causalgames.meta.typing import forwarder, typecheck

from conftest import random_session_type


def proc(src):
    p, defs = parse_process(src)
    assert not defs
    return p


def key(p):
    return proc_str(canonical(p))


def test_no_race_means_no_step():
    assert reduce_step(proc("a!l | b?{m. c!k}")) == []
    # deterministic communications are laws, not transitions
    p = proc("(nu a b : +{l.1}) (a!l | b?{l})")
    assert reduce_step(p) == []
    assert canonical(normalize(p)) == Nil()


TWO_REQUESTS = ("(nu a b : !(+{v(#).1})) "
                "(coder a(x). x!v(1)"
                " | ?b[y]. y?{v(#i). c!out(i)}"
                " | ?b[z]. z?{v(#j). d!out(j)})")


def test_two_requests_race_has_two_successors():
    p = proc(TWO_REQUESTS)
    succs = reduce_step(p)
    assert len(succs) == 2
    assert {barbs(s) for s in succs} == {frozenset({"c"}), frozenset({"d"})}
    # subject reduction: every successor types in the original context
    ctx = {"c": parse_type("+{out(#).1}"), "d": parse_type("+{out(#).1}")}
    typecheck(p, ctx)
    for s in succs:
        typecheck(s, ctx)


def test_subject_reduction_for_random_server_cuts():
    rng = random.Random(11)
    for _ in range(8):
        t = random_session_type(rng)
        if not rooted(t):
            t = parse_type("+{l.1}")
        server = Coder("a", ("x",), forwarder("x", "c", t))
        client = Der("b", ("y",), forwarder("y", "d", dual(t)))
        p = Cut("a", "b", Bang(t), fork([server, client]))
        ctx = {"c": dual(t), "d": t}
        typecheck(p, ctx)
        succs = reduce_step(p)
        assert len(succs) == 1
        typecheck(succs[0], ctx)
        # two forwarders cut together collapse to one
        want = normalize(forwarder("c", "d", dual(t)))
        assert key(succs[0]) == key(want)


def test_single_race_is_weakly_invisible():
    p = proc("(nu a b : !(+{l.1})) (coder a(x). x!l | ?b[y]. y?{l. c!win})")
    succs = reduce_step(p)
    assert len(succs) == 1
    assert obs_equiv_bounded(p, proc("c!win"))
    assert obs_equiv_bounded(p, succs[0])


def test_race_successors_are_observable():
    p = proc(TWO_REQUESTS)
    succ_c, succ_d = sorted(reduce_step(p), key=lambda s: sorted(barbs(s)))
    assert not obs_equiv_bounded(p, succ_c)
    assert not obs_equiv_bounded(succ_c, succ_d)


def test_obs_equiv_unit_and_reflexivity():
    p = proc(TWO_REQUESTS)
    assert obs_equiv_bounded(p, fork([p, Nil()]))
    assert obs_equiv_bounded(p, p)


def test_pure_process_has_only_internal_transitions():
    p = proc(TWO_REQUESTS)
    steps = transitions(p, "lg")
    assert len(steps) == 2
    assert all(lab == TAU for lab, _ in steps)


TWO_WRITES = ("?lg[x]. x!Write(1). x?{ok}"
              " | ?lg[x2]. x2!Write(2). x2?{ok}")


def test_log_actions_interleave():
    lts = log_lts(proc(TWO_WRITES), "lg", depth=3)
    assert len(lts["states"]) == 4
    assert len(lts["transitions"]) == 4
    labels = {lab for _, lab, _ in lts["transitions"]}
    assert labels == {"Write(1)", "Write(2)"}
    nil_ix = lts["states"].index(proc_str(Nil()))
    first = {lab: j for i, lab, j in lts["transitions"] if i == 0}
    assert set(first) == {"Write(1)", "Write(2)"}
    for lab, j in first.items():
        other = "Write(2)" if lab == "Write(1)" else "Write(1)"
        assert (j, other, nil_ix) in lts["transitions"]


RACY_WRITER = ("(nu a b : !(+{v(#).1})) "
               "(coder a(x). x!v(1)"
               " | coder a(x2). x2!v(2)"
               " | ?b[y]. y?{v(#i). ?lg[w]. w!Write(i). w?{ok}})")


def test_racy_writer_steps_internally_then_writes():
    lts = log_lts(proc(RACY_WRITER), "lg", depth=4)
    labels = {lab for _, lab, _ in lts["transitions"]}
    assert labels == {TAU, "Write(1)", "Write(2)"}
    from_root = [(lab, j) for i, lab, j in lts["transitions"] if i == 0]
    assert [lab for lab, _ in from_root] == [TAU, TAU]
    seen = set()
    for _, j in from_root:
        nxt = [lab for i, lab, _ in lts["transitions"] if i == j]
        assert len(nxt) == 1
        seen.add(nxt[0])
    assert seen == {"Write(1)", "Write(2)"}


def test_proc_weak_bisim_absorbs_internal_steps():
    racy = proc("(nu a b : !(+{l.1})) "
                "(coder a(x). x!l | ?b[y]. y?{l. ?lg[w]. w!Write(1). w?{ok}})")
    plain = proc("?lg[w]. w!Write(1). w?{ok}")
    assert proc_weak_bisim(racy, plain, "lg")
    assert proc_weak_bisim(plain, racy, "lg")
    other = proc("?lg[w]. w!Write(2). w?{ok}")
    assert not proc_weak_bisim(racy, other, "lg")
    assert not proc_weak_bisim(proc(RACY_WRITER), plain, "lg")


def test_proc_weak_bisim_is_reflexive_and_symmetric():
    ps = [proc(TWO_WRITES), proc(RACY_WRITER), Nil()]
    for p in ps:
        for d in (1, 3, 5):
            assert proc_weak_bisim(p, p, "lg", depth=d)
    for p in ps:
        for q in ps:
            got = proc_weak_bisim(p, q, "lg", depth=3)
            assert got == proc_weak_bisim(q, p, "lg", depth=3)
