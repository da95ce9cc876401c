"""ML frontend: parsing, typing, pure reduction, machine transitions,
and weak bisimulation on machines.

Numeric oracles here are computed by hand from the reduction rules and
frozen; randomized sections re-derive typability and confluence from
independent enumeration.
"""

import random

import pytest

from conftest import random_ml_machine, random_ml_term
from causalgames.ml.cml import (
    DIVERGED,
    App,
    ArrowT,
    BoolLit,
    Const,
    Diverged,
    Lam,
    Machine,
    MLTypeError,
    MLVar,
    NumLit,
    TransitionLabel,
    UnitLit,
    BOOL,
    NAT,
    REF,
    UNIT,
    expand_y,
    free_vars,
    is_value,
    machine_step,
    machine_weak_bisim,
    normalize_pure,
    parse_and_type,
    parse_ml,
    pure_step,
    term_str,
    typecheck_term,
    y_approximant,
)


def types(src, env=None):
    _, ty, _ = parse_and_type(src, env)
    return str(ty)


# ----------------------------------------------------------------------
# parsing and typing


def test_identity_types_under_annotation():
    assert types("fun (x : nat) -> x") == "nat -> nat"


def test_overview_source_types():
    term, ty, ctx = parse_and_type("f 1 + f 2", {"f": ArrowT(NAT, NAT)})
    assert ty == NAT
    assert ctx == {"f": ArrowT(NAT, NAT)}


def test_set_tt_is_a_type_error():
    with pytest.raises(MLTypeError, match="rule app"):
        parse_and_type("set tt")


def test_constant_types():
    assert types("plus") == "nat -> nat -> nat"
    assert types("equal 1") == "nat -> bool"
    assert types("get") == "ref -> nat"
    assert types("set") == "ref -> nat -> unit"
    assert types("var 3") == "ref"


def test_unconstrained_types_default_to_unit():
    assert types("fun x -> x") == "unit -> unit"
    assert types("bot") == "unit"


def test_sugar_expansions():
    assert parse_ml("a; b") == App(Lam("_", MLVar("b")), MLVar("a"))
    assert parse_ml("!r") == App(Const("get"), MLVar("r"))
    assert parse_ml("r := 1") == App(App(Const("set"), MLVar("r")),
                                     NumLit(1))
    assert parse_ml("let x = 1 in x") == App(Lam("x", MLVar("x")),
                                             NumLit(1))
    par = parse_ml("a || b")
    assert par == App(App(Lam("_", Lam("_'", UnitLit())),
                          MLVar("a")), MLVar("b"))


def test_precedence():
    assert parse_ml("!r + 1") == parse_ml("(!r) + (1)")
    assert parse_ml("r := 1 + 1") == parse_ml("r := (1 + 1)")
    assert parse_ml("f 1 + f 2") == parse_ml("(f 1) + (f 2)")
    assert parse_ml("a; b; c") == parse_ml("a; (b; c)")


def test_parse_error_has_location():
    with pytest.raises(SyntaxError, match="offset"):
        parse_ml("fun -> x")


def test_print_parse_roundtrip():
    rng = random.Random(11)
    for _ in range(60):
        t = random_ml_term(rng, {"r": REF}, NAT, 6)
        assert parse_ml(term_str(t)) == t


# ----------------------------------------------------------------------
# pure reduction


def steps(src):
    t, _, _ = parse_and_type(src)
    return sorted(term_str(s) for s in pure_step(t))


def test_beta_with_value():
    assert steps("(fun x -> x) 3") == ["3"]


def test_sum_rule():
    assert steps("2 + 2") == ["4"]


def test_equal_rules():
    assert steps("2 = 2") == ["tt"]
    assert steps("2 = 3") == ["ff"]


def test_if_rules():
    assert steps("if tt then 1 else 2") == ["1"]
    assert steps("if ff then 1 else 2") == ["2"]


def test_both_application_sides_reduce():
    # (1+1) = (1+1): the two operands are separate redexes
    assert steps("(1+1) = (1+1)") == ["(1 + 1) = 2", "2 = (1 + 1)"]


def test_beta_waits_for_value():
    assert steps("(fun x -> x) (1 + 1)") == ["(fun x -> x) 2"]


def test_references_do_not_step_purely():
    t, _, _ = parse_and_type("r := 1", {"r": REF})
    assert pure_step(t) == []
    t, _, _ = parse_and_type("!r", {"r": REF})
    assert pure_step(t) == []


def test_value_classification():
    for src in ("fun x -> x", "3", "tt", "()", "plus", "plus 1",
                "equal 2", "Y (fun f -> fun x -> x)"):
        t, _, _ = parse_and_type(src)
        assert is_value(t), src
    for src in ("plus 1 2", "1 + 1", "bot", "!r", "var 0"):
        t, _, _ = parse_and_type(src, {"r": REF})
        assert not is_value(t), src


def test_fix_unfolds_once():
    t, _, _ = parse_and_type("Y (fun f -> fun x -> x) ()")
    (s,) = pure_step(t)
    # Y V V' -> V (Y V) V'
    assert term_str(s) == "(fun f -> fun x -> x) (Y (fun f -> fun x -> x)) ()"


def test_normalize_converging_fix():
    src = ("let f = Y (fun self -> fun n -> "
           "if n = 3 then 7 else self (n + 1)) in f 1")
    t, _, _ = parse_and_type(src)
    assert term_str(normalize_pure(t, y_budget=8)) == "7"


def test_normalize_diverging_fix_is_marked():
    src = "Y (fun self -> fun n -> self (n + 1)) 0"
    t, _, _ = parse_and_type(src)
    assert normalize_pure(t, y_budget=6) is DIVERGED
    assert isinstance(DIVERGED, Diverged)


def test_approximants_agree_with_fix_when_deep_enough():
    body = "fun self -> fun n -> if n = 2 then 5 else self (n + 1)"
    t, _, _ = parse_and_type(f"Y ({body}) 0")
    full = normalize_pure(t, y_budget=10)
    approx = normalize_pure(expand_y(t, 4))
    assert term_str(full) == term_str(approx) == "5"
    shallow = normalize_pure(expand_y(t, 1))
    assert not isinstance(shallow, Diverged)
    assert "bot" in term_str(shallow)  # ran out of unfolding depth


def test_approximant_zero_is_stuck_function():
    t = y_approximant(0)
    assert typecheck_term(
        App(App(t, Lam("f", Lam("x", MLVar("x")))), UnitLit()), {}) == UNIT


# ----------------------------------------------------------------------
# machines


def test_read_rule():
    m = Machine.make("!x", {"x": 7}, {"x"})
    assert [(str(l), term_str(n.term)) for l, n in machine_step(m)] == \
        [("Read x 7", "7")]


def test_private_read_is_silent():
    m = Machine.make("!x", {"x": 7}, set())
    assert [str(l) for l, _ in machine_step(m)] == ["tau"]


def test_write_rule_updates_store():
    m = Machine.make("x := 5", {"x": 0}, {"x"})
    ((lab, n),) = machine_step(m)
    assert str(lab) == "Write x 5"
    assert n.mu() == {"x": 5} and term_str(n.term) == "()"


def test_alloc_rule():
    m = Machine.make("var 0", {}, set())
    ((lab, n),) = machine_step(m)
    assert lab.kind == "tau"
    assert n.mu() == {"r0": 0} and term_str(n.term) == "r0"
    assert n.public == frozenset()


def test_alloc_names_count_up():
    m = Machine.make("var 1 || var 2", {"r0": 9}, set())
    allocs = [n for _, n in machine_step(m) if len(n.store) == 2]
    assert all("r1" in n.mu() for n in allocs)


def weak_initial_visibles(m, rounds=8):
    seen, frontier, vis = {m}, [m], set()
    for _ in range(rounds):
        nxt = []
        for s in frontier:
            for lab, s2 in machine_step(s):
                if lab.kind == "tau":
                    if s2 not in seen:
                        seen.add(s2)
                        nxt.append(s2)
                else:
                    vis.add(str(lab))
        frontier = nxt
    return sorted(vis)


def test_write_race_initial_labels():
    m = Machine.make("x := 1 || x := 2", {"x": 0}, {"x"})
    assert weak_initial_visibles(m) == ["Write x 1", "Write x 2"]


def test_machine_rejects_functional_type():
    with pytest.raises(MLTypeError, match="functional"):
        Machine.make("fun x -> x", {}, set())


def test_machine_rejects_unknown_location():
    with pytest.raises(MLTypeError, match="semiclosed"):
        Machine.make("!x", {}, set())


def test_weak_bisim_reflexive():
    m = Machine.make("x := 1; x := 2", {"x": 0}, {"x"})
    assert machine_weak_bisim(m, m, 8)["equivalent"]


def test_write_order_observable_when_public():
    a = Machine.make("x := 1; x := 2", {"x": 0}, {"x"})
    b = Machine.make("x := 2; x := 1", {"x": 0}, {"x"})
    out = machine_weak_bisim(a, b, 8)
    assert not out["equivalent"]
    assert out["witness"][0] == {"side": "left", "label": "Write x 1"}


def test_write_order_silent_when_private():
    a = Machine.make("x := 1; x := 2", {"x": 0}, set())
    b = Machine.make("x := 2; x := 1", {"x": 0}, set())
    assert machine_weak_bisim(a, b, 8)["equivalent"]


def test_weak_bisim_needs_matching_types():
    a = Machine.make("1", {}, set())
    b = Machine.make("()", {}, set())
    with pytest.raises(MLTypeError):
        machine_weak_bisim(a, b, 4)


def test_read_value_matters():
    a = Machine.make("!x", {"x": 1}, {"x"})
    b = Machine.make("!x", {"x": 2}, {"x"})
    out = machine_weak_bisim(a, b, 4)
    assert not out["equivalent"]


# ----------------------------------------------------------------------
# randomized invariants


def test_subject_reduction_pure():
    rng = random.Random(23)
    for _ in range(150):
        ty = rng.choice([NAT, BOOL, UNIT])
        t = random_ml_term(rng, {"r": REF}, ty, rng.randint(0, 8))
        before = typecheck_term(t, {"r": REF})
        for s in pure_step(t):
            assert typecheck_term(s, {"r": REF}) == before


def test_subject_reduction_machines():
    rng = random.Random(29)
    for _ in range(150):
        m = random_ml_machine(rng, size=rng.randint(0, 8))
        ty = m.machine_type()
        for lab, n in machine_step(m):
            assert n.machine_type() == ty
            assert n.public == m.public  # watched set never changes
            assert set(n.mu()) >= set(m.mu())
            if lab.kind != "tau":
                assert lab.loc in m.public


def test_pure_confluence_on_ref_free_nat_terms():
    """Every maximal pure-reduction sequence of a closed ref-free nat
    term ends in one and the same numeral."""
    rng = random.Random(31)
    checked = 0
    for _ in range(120):
        t = random_ml_term(rng, {}, NAT, rng.randint(0, 6),
                           refs=False, fix=False)
        frontier, seen, finals = [t], {t}, set()
        while frontier:
            if len(seen) > 4000:
                break
            nxt = []
            for s in frontier:
                succ = pure_step(s)
                if not succ:
                    finals.add(s)
                for s2 in succ:
                    if s2 not in seen:
                        seen.add(s2)
                        nxt.append(s2)
            frontier = nxt
        else:
            assert len(finals) == 1, [term_str(f) for f in finals]
            final = next(iter(finals))
            assert isinstance(final, NumLit)
            checked += 1
    assert checked >= 100


# ----------------------------------------------------------------------
# call-by-name PCF

from conftest import random_pcf_term
from causalgames.ml.pcf import (
    normalize_pcf,
    parse_and_type_pcf,
    parse_pcf,
    pcf_numeral,
    pcf_step,
)


def test_pcf_constant_rules():
    assert pcf_numeral(parse_pcf("succ (succ 1)")) == 3
    t, ty, _ = parse_and_type_pcf("if iszero 0 then 3 else bot")
    assert ty == NAT and pcf_numeral(t) == 3
    t, _, _ = parse_and_type_pcf("if iszero 2 then bot else 4")
    assert pcf_numeral(t) == 4


def test_pcf_beta_does_not_wait():
    # call-by-name: the argument substitutes unevaluated
    t = parse_pcf("(fun x -> 3) bot")
    assert pcf_numeral(t) == 3


def test_pcf_reduces_under_lambda():
    t = parse_pcf("fun x -> succ 1")
    assert term_str(normalize_pcf(t)) == "fun x -> 2"


def test_pcf_fix_unfolds_freely():
    t = parse_pcf("Y (fun x -> x)")
    assert term_str(pcf_step(t)[0]) == "(fun x -> x) (Y (fun x -> x))"


def test_pcf_fix_converges():
    src = "Y (fun f -> fun n -> if iszero n then 42 else f 0) 3"
    t, ty, _ = parse_and_type_pcf(src)
    assert ty == NAT and pcf_numeral(t, y_budget=5) == 42


def test_pcf_divergence_is_none():
    assert pcf_numeral(parse_pcf("Y (fun x -> x)"), y_budget=4) is None
    assert pcf_numeral(parse_pcf("succ bot")) is None


def test_pcf_rejects_ml_constants():
    with pytest.raises(SyntaxError):
        parse_pcf("x := 1")
    with pytest.raises(SyntaxError):
        parse_pcf("var 0")


def test_pcf_subject_reduction():
    rng = random.Random(37)
    for _ in range(150):
        ty = rng.choice([NAT, BOOL])
        t = random_pcf_term(rng, {}, ty, rng.randint(0, 7))
        _, before, _ = parse_and_type_pcf(t)
        for s in pcf_step(t):
            _, after, _ = parse_and_type_pcf(s)
            assert after == before


def test_pcf_confluence_without_fix():
    rng = random.Random(41)
    for _ in range(100):
        t = random_pcf_term(rng, {}, NAT, rng.randint(0, 6), fix=False)
        frontier, seen, finals = [t], {t}, set()
        while frontier and len(seen) <= 3000:
            nxt = []
            for s in frontier:
                succ = pcf_step(s)
                if not succ:
                    finals.add(s)
                for s2 in succ:
                    if s2 not in seen:
                        seen.add(s2)
                        nxt.append(s2)
            frontier = nxt
        assert len(finals) == 1


# ----------------------------------------------------------------------
# affine λ-calculus

from causalgames.ml.affine import (
    affine_type,
    beta_eta_equal,
    canonical_form,
    enumerate_affine,
    parse_affine,
)

B2B = ArrowT(BOOL, BOOL)


def aff(src):
    return parse_affine(src)


def test_affine_typing():
    assert affine_type(aff("fun (x : bool) -> x")) == B2B
    assert affine_type(aff("fun (f : bool -> bool) -> f tt")) == \
        ArrowT(B2B, BOOL)


def test_affine_rejects_duplication():
    with pytest.raises(MLTypeError, match="both sides"):
        affine_type(aff("fun (f : bool -> bool) -> fun (x : bool) "
                        "-> f (f x)"))


def test_affine_branches_may_share():
    t = aff("fun (x : bool) -> fun (y : bool) -> "
            "if x then y else if y then ff else tt")
    assert affine_type(t) == ArrowT(BOOL, B2B)
    with pytest.raises(MLTypeError, match="scrutinee"):
        affine_type(aff("fun (x : bool) -> if x then x else tt"))


def test_affine_needs_annotations():
    with pytest.raises(MLTypeError, match="annotation"):
        affine_type(aff("fun x -> x"))


def test_affine_if_only_at_bool():
    bad = aff("fun (x : bool) -> fun (f : bool -> bool) -> "
              "fun (g : bool -> bool) -> (if x then f else g) tt")
    with pytest.raises(MLTypeError, match="rule if"):
        affine_type(bad)


def test_bool_eta_identifies():
    assert beta_eta_equal(aff("fun (x : bool) -> x"),
                          aff("fun (x : bool) -> if x then tt else ff"))


def test_negation_is_not_identity():
    assert not beta_eta_equal(aff("fun (x : bool) -> if x then ff else tt"),
                              aff("fun (x : bool) -> x"))


def test_strict_constant_differs_from_constant():
    # consuming the argument is visible, even when both answers agree
    assert not beta_eta_equal(aff("fun (x : bool) -> if x then tt else tt"),
                              aff("fun (x : bool) -> tt"))


def test_arrow_eta():
    assert beta_eta_equal(
        aff("fun (f : bool -> bool) -> f"),
        aff("fun (f : bool -> bool) -> fun (y : bool) -> f y"))


def test_beta():
    assert beta_eta_equal(aff("(fun (x : bool) -> x) tt"), aff("tt"))


def test_case_commuting_is_identified():
    a = aff("fun (x : bool) -> if (if x then tt else tt) then ff else tt")
    b = aff("fun (x : bool) -> if x then ff else ff")
    assert beta_eta_equal(a, b)


def test_canonical_form_is_idempotent_and_typed():
    for t in enumerate_affine(B2B, 6):
        c = canonical_form(t)
        assert affine_type(c) == B2B
        assert canonical_form(c) == c


def test_equivalence_class_counts():
    # derived by hand: a bool -> bool function either answers directly
    # (2) or consumes its argument and picks one of 2x2 answer tables
    classes = {term_str(canonical_form(t))
               for t in enumerate_affine(B2B, 7)}
    assert len(classes) == 6
    closed = {term_str(canonical_form(t))
              for t in enumerate_affine(BOOL, 7)}
    assert closed == {"tt", "ff"}


def test_enumeration_contains_redexes():
    terms = list(enumerate_affine(BOOL, 5))
    assert any(isinstance(t, App) for t in terms)


def test_comparing_different_types_fails():
    with pytest.raises(MLTypeError):
        beta_eta_equal(aff("tt"), aff("fun (x : bool) -> x"))
