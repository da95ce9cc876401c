"""Shared generators for randomized suites.

The generators here are deliberately independent of the library's fast
paths: random structures are assembled from raw relations and validated
afterwards, so they exercise the constructors rather than trusting them.
"""

from __future__ import annotations

import random
import sys
from pathlib import Path

SRC = Path(__file__).resolve().parent.parent / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from causalgames.escore import Event, EventStructure  # noqa: E402


def random_es(rng: random.Random, max_events: int = 6) -> EventStructure:
    """A random valid event structure built bottom-up.

    Events are added in order; each picks causes among earlier events
    and we then pick conflict pairs among causally-unrelated events,
    keeping only pairs that stay minimal.
    """
    n = rng.randint(0, max_events)
    events = [Event(("r", i), f"e{i}") for i in range(n)]
    imcause = {}
    for i, e in enumerate(events):
        pool = events[:i]
        k = rng.randint(0, min(2, len(pool)))
        imcause[e] = set(rng.sample(pool, k))
    es = EventStructure(events, imcause, ())
    # candidate conflicts among unordered pairs
    pairs = [
        (a, b)
        for i, a in enumerate(events)
        for b in events[i + 1:]
        if not es.le(a, b) and not es.le(b, a)
    ]
    rng.shuffle(pairs)
    chosen: list[frozenset] = []
    for a, b in pairs[: rng.randint(0, 3)]:
        trial = EventStructure(events, imcause, chosen + [frozenset((a, b))])
        try:
            trial.validate()
        except Exception:
            continue
        chosen.append(frozenset((a, b)))
    return EventStructure(events, imcause, chosen)


def random_session_type(rng: random.Random, depth: int = 3):
    """A random well-formed session type (no ℕ-families)."""
    from causalgames.meta.syntax import Plus, With, Par, Bang, Ques, TBranch, UNIT, ground_label

    if depth == 0:
        return UNIT
    kind = rng.choice(["plus", "with", "par", "bang", "ques", "unit"])
    if kind == "unit":
        return UNIT
    if kind == "par":
        return Par(tuple(random_session_type(rng, depth - 1)
                         for _ in range(rng.randint(2, 3))))
    if kind in ("bang", "ques"):
        inner = random_session_type(rng, depth - 1)
        from causalgames.meta.syntax import rooted
        if not rooted(inner):
            return UNIT
        return (Bang if kind == "bang" else Ques)(inner)
    labels = rng.sample(["a", "b", "c", "d"], rng.randint(1, 2))
    branches = tuple(
        TBranch(ground_label(lab), random_session_type(rng, depth - 1))
        for lab in labels
    )
    return (Plus if kind == "plus" else With)(branches)


def random_ml_term(rng: random.Random, env: dict, ty, size: int,
                   *, refs: bool = True, fix: bool = True):
    """A random well-typed ML term of type ``ty`` in context ``env``.

    Built by rule inversion, so typability holds by construction.
    ``refs`` allows reference constants, ``fix`` allows Y and bot.
    """
    from causalgames.ml.cml import (App, ArrowT, BoolLit, Const, If, Lam,
                                    MLVar, NumLit, UnitLit, NAT, BOOL,
                                    UNIT, REF)

    def leaf():
        fits = [x for x, tx in env.items() if tx == ty]
        picks = []
        if fits:
            picks.append(lambda: MLVar(rng.choice(fits)))
        if ty == NAT:
            picks.append(lambda: NumLit(rng.randint(0, 3)))
        if ty == BOOL:
            picks.append(lambda: BoolLit(rng.random() < 0.5))
        if ty == UNIT:
            picks.append(lambda: UnitLit())
        if isinstance(ty, ArrowT):
            x = f"v{len(env)}"
            picks.append(lambda: Lam(x, random_ml_term(
                rng, {**env, x: ty.arg}, ty.res, 0, refs=refs, fix=fix)))
        if ty == REF:
            fits_ref = [x for x, tx in env.items() if tx == REF]
            if fits_ref:
                picks.append(lambda: MLVar(rng.choice(fits_ref)))
            elif refs:
                picks.append(lambda: App(Const("var"),
                                         NumLit(rng.randint(0, 3))))
        if not picks:
            if fix:
                return Const("bot")
            if isinstance(ty, ArrowT):
                x = f"v{len(env)}"
                return Lam(x, random_ml_term(rng, {**env, x: ty.arg},
                                             ty.res, 0, refs=refs, fix=fix))
            return NumLit(0)
        return rng.choice(picks)()

    if size <= 0:
        return leaf()
    small = rng.randint(0, size - 1)
    arg_pool = [NAT, BOOL, UNIT] + ([REF] if refs else [])
    kinds = ["leaf", "if", "app", "seq"]
    if ty == NAT:
        kinds += ["plus", "plus"]
        if refs:
            kinds.append("get")
    if ty == BOOL:
        kinds.append("equal")
    if ty == UNIT and refs:
        kinds += ["set", "parallel"]
    if fix and isinstance(ty, ArrowT) and size >= 3:
        kinds.append("fix")
    kind = rng.choice(kinds)
    sub = lambda t, s: random_ml_term(rng, env, t, s, refs=refs, fix=fix)
    if kind == "leaf":
        return leaf()
    if kind == "if":
        return If(sub(BOOL, small // 2), sub(ty, small // 2),
                  sub(ty, small // 2))
    if kind == "app":
        at = rng.choice(arg_pool)
        fun = random_ml_term(rng, env, ArrowT(at, ty), small // 2,
                             refs=refs, fix=fix)
        return App(fun, sub(at, small // 2))
    if kind == "seq":
        at = rng.choice(arg_pool)
        return App(Lam("_", sub(ty, small // 2)), sub(at, small // 2))
    if kind == "plus":
        return App(App(Const("plus"), sub(NAT, small // 2)),
                   sub(NAT, small // 2))
    if kind == "equal":
        return App(App(Const("equal"), sub(NAT, small // 2)),
                   sub(NAT, small // 2))
    if kind == "get":
        return App(Const("get"), sub(REF, small))
    if kind == "set":
        return App(App(Const("set"), sub(REF, small // 2)),
                   sub(NAT, small // 2))
    if kind == "parallel":
        at, bt = rng.choice(arg_pool), rng.choice(arg_pool)
        return App(App(Lam("_", Lam("_'", UnitLit())),
                       sub(at, small // 2)), sub(bt, small // 2))
    if kind == "fix":
        f = f"self{len(env)}"
        body = Lam(f, random_ml_term(rng, {**env, f: ty}, ty, small // 2,
                                     refs=refs, fix=fix))
        return App(Const("Y"), body)


def random_ml_machine(rng: random.Random, size: int = 8):
    """A random semiclosed machine with a couple of locations."""
    from causalgames.ml.cml import Machine, NAT, BOOL, UNIT, REF
    locs = [f"x{i}" for i in range(rng.randint(0, 2))]
    store = {x: rng.randint(0, 3) for x in locs}
    public = {x for x in locs if rng.random() < 0.6}
    ty = rng.choice([NAT, BOOL, UNIT])
    term = random_ml_term(rng, {x: REF for x in locs}, ty, size)
    return Machine.make(term, store, public)


def random_pcf_term(rng: random.Random, env: dict, ty, size: int,
                    *, fix: bool = True):
    """A random well-typed PCF term (call-by-name constants only)."""
    from causalgames.ml.cml import (App, ArrowT, BoolLit, Const, If, Lam,
                                    MLVar, NumLit, NAT, BOOL)

    def leaf():
        fits = [x for x, tx in env.items() if tx == ty]
        picks = []
        if fits:
            picks.append(lambda: MLVar(rng.choice(fits)))
        if ty == NAT:
            picks.append(lambda: NumLit(rng.randint(0, 3)))
        if ty == BOOL:
            picks.append(lambda: BoolLit(rng.random() < 0.5))
        if isinstance(ty, ArrowT):
            x = f"v{len(env)}"
            picks.append(lambda: Lam(x, random_pcf_term(
                rng, {**env, x: ty.arg}, ty.res, 0, fix=fix)))
        if not picks:
            picks.append(lambda: Const("bot") if fix else NumLit(0))
        return rng.choice(picks)()

    if size <= 0:
        return leaf()
    small = rng.randint(0, size - 1)
    kinds = ["leaf", "if", "app"]
    if ty == NAT:
        kinds += ["succ", "succ"]
    if ty == BOOL:
        kinds.append("iszero")
    if fix and size >= 3:
        kinds.append("fix")
    kind = rng.choice(kinds)
    sub = lambda t, s: random_pcf_term(rng, env, t, s, fix=fix)
    if kind == "leaf":
        return leaf()
    if kind == "if":
        return If(sub(BOOL, small // 2), sub(ty, small // 2),
                  sub(ty, small // 2))
    if kind == "app":
        at = rng.choice([NAT, BOOL])
        fun = random_pcf_term(rng, env, ArrowT(at, ty), small // 2, fix=fix)
        return App(fun, sub(at, small // 2))
    if kind == "succ":
        return App(Const("succ"), sub(NAT, small))
    if kind == "iszero":
        return App(Const("iszero"), sub(NAT, small))
    if kind == "fix":
        f = f"self{len(env)}"
        body = Lam(f, random_pcf_term(rng, {**env, f: ty}, ty, small // 2,
                                      fix=fix))
        return App(Const("Y"), body)
