import itertools
import random

import pytest

from mscgossip.cfm import (
    attach_annotation,
    find_accepting_run,
    materialize,
    validate_run,
)
from mscgossip.constructions import (
    bottom_bits,
    build_fa_label_cfm,
    build_first_label_cfm,
    build_fixpoint_cfm,
    build_gossip_cfm,
    build_last_label_cfm,
    build_preorder_cfm,
    canonical_coloring,
    closure_with_star,
    drive_fix_core,
    drive_gossip_components,
    drive_last_core,
    drive_preorder_components,
    fa_target,
    fa_value,
    first_value,
    fixpoint_bits,
    last_value,
    oracle_gossip_annotation,
    ord_annotation,
    preorder_bits,
    reachable_state_report,
)
from mscgossip.corpus import random_corpus
from mscgossip.msc import BOTTOM, TOP, ExtendedMsc, Msc, SystemSignature
from mscgossip.paths import (
    EPS,
    PLUS,
    STAR,
    PathError,
    f_pair,
    first,
    format_path,
    last,
    parse_path,
    plus_prepend,
    preorder_at,
    star_prepend,
)
from figures import SIG3, fig_base, fig_flipped

PI = parse_path("msg(p,q) ->*", SIG3)
PI2 = parse_path("msg(p,r) ->* msg(r,q) ->*", SIG3)

SIG2 = SystemSignature(("p", "q"), ("a", "b"))
CORPUS3 = random_corpus(SIG3, count=25, seed=23)
CORPUS2 = random_corpus(SIG2, count=15, seed=5, max_events_per_proc=3)

PATH_SHAPES = [
    EPS,
    STAR,
    PLUS,
    PI,
    PI2,
    parse_path("[a] ->*", SIG3),
    parse_path("-> [b] msg(p,q)", SIG3),
]


def encode(m, annot):
    return attach_annotation(ExtendedMsc(m, annot))


# -- direct passes against the relational oracle -------------------------------


def test_last_value_matches_oracle():
    checked = 0
    for m in CORPUS3[:12]:
        labels = dict(m.label)
        for pi in PATH_SHAPES:
            vals = last_value(m, pi, labels)
            for e in m.events:
                g = last(m, pi, e)
                want = BOTTOM if g is BOTTOM else m.label[g]
                assert vals[e] == want
                checked += 1
    assert checked > 300


def test_first_value_matches_oracle():
    checked = 0
    for m in CORPUS3[:12]:
        labels = dict(m.label)
        for pi in PATH_SHAPES:
            vals = first_value(m, pi, labels)
            for e in m.events:
                g = first(m, pi, e)
                want = TOP if g is TOP else m.label[g]
                assert vals[e] == want
                checked += 1
    assert checked > 300


def test_fa_value_matches_oracle():
    star_pi2 = star_prepend(PI2)
    plus_pi = plus_prepend(PI)
    combos = [(PI, star_pi2), (PI2, plus_pi), (PLUS, STAR), (EPS, EPS)]
    for m in CORPUS3[:10]:
        labels = dict(m.label)
        for pi, pi2 in combos:
            vals = fa_value(m, pi, pi2, labels)
            for e in m.events:
                g = f_pair(m, pi, pi2, e)
                want = g if g in (BOTTOM, TOP) else m.label[g]
                assert vals[e] == want


def test_fixpoint_bits_match_oracle():
    star_pi2 = star_prepend(PI2)
    for m in CORPUS3[:10]:
        bits = fixpoint_bits(m, PI, star_pi2)
        targets = fa_target(m, PI, star_pi2)
        for e in m.events:
            assert bits[e] == (f_pair(m, PI, star_pi2, e) == e)
            assert targets[e] == f_pair(m, PI, star_pi2, e)


def test_bottom_bits_match_oracle():
    for m in CORPUS3[:10]:
        for pi in PATH_SHAPES:
            bb = bottom_bits(m, pi)
            for e in m.events:
                assert bb[e] == (last(m, pi, e) is BOTTOM)


def test_preorder_bits_match_oracle():
    checked = 0
    for m in CORPUS3[:8]:
        # all paths in one set must share the source process (PLUS is q -> q)
        for paths in [(PI, PI2), (PLUS,), (PI,), (PI2,)]:
            bits = preorder_bits(m, "q", paths)
            for e in m.events_of("q"):
                po = preorder_at(m, paths, e)
                got = ord_annotation(bits[e], paths)
                want = frozenset(
                    (format_path(a), format_path(b)) for a, b in po.leq
                )
                assert got == want
                checked += 1
    assert checked > 80


def test_preorder_bits_all_source_target_pairs():
    m = fig_base()
    from mscgossip.paths import gossip_paths_between

    for src in SIG3.processes:
        for tgt in SIG3.processes:
            fam = gossip_paths_between(SIG3, src, tgt)
            bits = preorder_bits(m, tgt, fam)
            for e in m.events_of(tgt):
                po = preorder_at(m, fam, e)
                assert ord_annotation(bits[e], fam) == frozenset(
                    (format_path(a), format_path(b)) for a, b in po.leq
                )


# -- last-label machine --------------------------------------------------------


def test_last_machine_fixture_value():
    # the most recent msg(p,q)->* predecessor of f5 is e4
    m = fig_base()
    mach = build_last_label_cfm(SIG3.alphabet, PI)
    ann = mach.annotate(m, dict(m.label))
    assert ann["f5"] == (m.label["f5"], m.label["e4"])
    assert mach.decide(ExtendedMsc(m, ann))


def test_last_machine_eps_is_identity():
    mach = build_last_label_cfm(SIG3.alphabet, EPS)
    for m in CORPUS3[:5]:
        ann = mach.annotate(m, dict(m.label))
        assert all(ann[e] == (m.label[e], m.label[e]) for e in m.events)
        assert mach.decide(ExtendedMsc(m, ann))


def test_last_machine_rejects_mutation():
    m = fig_base()
    mach = build_last_label_cfm(SIG3.alphabet, PI)
    ann = mach.annotate(m, dict(m.label))
    bad = dict(ann)
    bad["f5"] = (ann["f5"][0], "d")
    assert not mach.decide(ExtendedMsc(m, bad))
    assert find_accepting_run(mach, encode(m, bad)) is None


def test_last_machine_theta_excludes_bottom():
    with pytest.raises(ValueError):
        build_last_label_cfm(("a", BOTTOM), PI)


# -- first-label machine -------------------------------------------------------


def test_first_machine_fixture_value():
    m = fig_base()
    pi = parse_path("->* msg(p,r)", SIG3)
    mach = build_first_label_cfm(SIG3.alphabet, pi)
    ann = mach.annotate(m, dict(m.label))
    assert first(m, pi, "e2") == "g2"
    assert ann["e2"] == (m.label["e2"], m.label["g2"])
    assert mach.decide(ExtendedMsc(m, ann))


def test_first_machine_eps_and_top():
    mach = build_first_label_cfm(("a", "b"), EPS)
    step = build_first_label_cfm(("a", "b"), parse_path("->"))
    for m in CORPUS2[:5]:
        ann = mach.annotate(m, dict(m.label))
        assert all(ann[e] == (m.label[e], m.label[e]) for e in m.events)
        ann2 = step.annotate(m, dict(m.label))
        for p in m.signature.processes:
            es = m.events_of(p)
            if es:
                # the last event on a process has no ⊏-successor
                assert ann2[es[-1]][1] is TOP
        assert step.decide(ExtendedMsc(m, ann2))


def test_first_machine_theta_excludes_top():
    with pytest.raises(ValueError):
        build_first_label_cfm(("a", TOP), EPS)


# -- fa machine ----------------------------------------------------------------


def test_fa_machine_fixture_fixpoint():
    # f3 is its own image under the star-closed pair of comparison paths
    m = fig_flipped()
    star_pi2 = star_prepend(PI2)
    assert fa_target(m, PI, star_pi2)["f3"] == "f3"
    mach = build_fa_label_cfm(("c1", "c2", "z1", "z2"), "p", "q", PI, star_pi2)
    xi1 = {e: "c1" if e == "f3" else "z1" for e in m.events}
    ann = mach.annotate(m, xi1)
    assert ann["f3"] == ("c1", "c1")
    assert mach.decide(ExtendedMsc(m, ann))


def test_fa_machine_eps_identity_and_mutation():
    mach = build_fa_label_cfm(("a", "b"), "q", "q", EPS, EPS)
    for m in CORPUS2[:5]:
        ann = mach.annotate(m, dict(m.label))
        assert all(ann[e] == (m.label[e], m.label[e]) for e in m.events)
        assert mach.decide(ExtendedMsc(m, ann))
        qs = m.events_of("q")
        if qs:
            bad = dict(ann)
            e = qs[0]
            bad[e] = (ann[e][0], BOTTOM)
            assert not mach.decide(ExtendedMsc(m, bad))


def test_fa_machine_argument_checks():
    with pytest.raises(ValueError):
        build_fa_label_cfm(("a", TOP), "p", "q", PI, PI2)
    with pytest.raises(PathError):
        # PI ends on q but the second path targets r: no common pair
        build_fa_label_cfm(
            ("x",), "p", "q", PI, parse_path("msg(p,r) ->*", SIG3), sig=SIG3
        )


# -- fixpoint machine ----------------------------------------------------------


def test_fixpoint_machine_fixture_bits():
    m = fig_flipped()
    mach = build_fixpoint_cfm("p", "q", PI, star_prepend(PI2))
    ann = mach.annotate(m)
    assert [ann[f"f{i}"] for i in range(4)] == [0, 0, 0, 1]
    assert mach.decide(ExtendedMsc(m, ann))


def test_fixpoint_machine_rejects_all_zero_when_fixpoint_exists():
    m = fig_flipped()
    mach = build_fixpoint_cfm("p", "q", PI, star_prepend(PI2))
    zeros = {e: 0 for e in m.events}
    assert not mach.decide(ExtendedMsc(m, zeros))


def test_fixpoint_machine_empty_target_process():
    mach = build_fixpoint_cfm("p", "q", PLUS, STAR)
    m = Msc(SIG2, [("e0", "p", "a"), ("e1", "p", "b")], [])
    ann = mach.annotate(m)
    assert mach.decide(ExtendedMsc(m, ann))
    assert find_accepting_run(mach, encode(m, ann)) is not None


# -- preorder machine ----------------------------------------------------------


def test_preorder_machine_fixture_row():
    # strict π' ≺ π at f0, f1, f2, f6; π ⪯ π' at f3, f4, f5, f7
    m = fig_flipped()
    mach = build_preorder_cfm("p", "q", (PI, PI2))
    ann = mach.annotate(m)
    a, b = format_path(PI), format_path(PI2)
    strict = {"f0", "f1", "f2", "f6"}
    for i in range(8):
        e = f"f{i}"
        if e in strict:
            assert (b, a) in ann[e] and (a, b) not in ann[e]
        else:
            assert (a, b) in ann[e]
    assert mach.decide(ExtendedMsc(m, ann))


def test_preorder_machine_rejects_flipped_entry():
    m = fig_flipped()
    mach = build_preorder_cfm("p", "q", (PI, PI2))
    ann = mach.annotate(m)
    a, b = format_path(PI), format_path(PI2)
    bad = dict(ann)
    bad["f3"] = frozenset({(a, a), (b, b), (b, a)})  # claim π' ≺ π at f3
    assert not mach.decide(ExtendedMsc(m, bad))


def test_preorder_singleton_is_constant_reflexive():
    mach = build_preorder_cfm("q", "q", (PLUS,))
    want = frozenset({(format_path(PLUS), format_path(PLUS))})
    for m in CORPUS2[:6]:
        ann = mach.annotate(m)
        assert all(ann[e] == want for e in m.events_of("q"))
        assert mach.decide(ExtendedMsc(m, ann))


def test_preorder_mixed_comp_pairs_rejected():
    with pytest.raises(PathError):
        build_preorder_cfm("p", "q", (PI, parse_path("msg(p,r) ->*", SIG3)), sig=SIG3)


def test_closure_identifies_double_star():
    step = parse_path("->")
    clos = closure_with_star((step, STAR))
    assert len(clos) == 3  # ->, -> ->*, ->* (->* ->* folds into ->*)
    assert closure_with_star((PI,)) == (PI,)  # already ends in ->*
    assert star_prepend(STAR) == STAR


# -- transition-relation route (run search) ------------------------------------


def _mutants(rng, ann, domain):
    e = rng.choice(sorted(ann))
    x1, x2 = ann[e]
    alts = [v for v in domain if v != x2]
    bad = dict(ann)
    bad[e] = (x1, rng.choice(alts))
    return bad


def test_last_machine_search_route():
    rng = random.Random(0)
    theta = ("x", "y")
    mach = build_last_label_cfm(theta, PLUS)
    for m in CORPUS2[:6]:
        xi1 = {e: rng.choice(theta) for e in m.events}
        ann = mach.annotate(m, xi1)
        run = find_accepting_run(mach, encode(m, ann))
        assert run is not None
        assert validate_run(mach.with_signature(encode(m, ann).signature),
                            encode(m, ann), run) == []
        if m.events:
            bad = _mutants(rng, ann, theta + (BOTTOM,))
            assert find_accepting_run(mach, encode(m, bad)) is None


def test_first_machine_search_route():
    rng = random.Random(1)
    theta = ("x", "y")
    mach = build_first_label_cfm(theta, parse_path("-> ->*"))
    for m in CORPUS2[:6]:
        xi1 = {e: rng.choice(theta) for e in m.events}
        ann = mach.annotate(m, xi1)
        assert find_accepting_run(mach, encode(m, ann)) is not None
        if m.events:
            bad = _mutants(rng, ann, theta + (TOP,))
            assert find_accepting_run(mach, encode(m, bad)) is None


def test_fa_machine_search_route():
    rng = random.Random(2)
    theta = ("x", "y")
    mach = build_fa_label_cfm(theta, "p", "q", PLUS, STAR)
    for m in CORPUS2[:5]:
        xi1 = {e: rng.choice(theta) for e in m.events}
        ann = mach.annotate(m, xi1)
        assert find_accepting_run(mach, encode(m, ann)) is not None
        if m.events_of("q"):
            e = rng.choice(m.events_of("q"))
            bad = dict(ann)
            alts = [v for v in theta + (BOTTOM, TOP) if v != ann[e][1]]
            bad[e] = (ann[e][0], rng.choice(alts))
            assert find_accepting_run(mach, encode(m, bad)) is None


def test_fixpoint_machine_search_route():
    rng = random.Random(3)
    mach = build_fixpoint_cfm("p", "q", PLUS, STAR)
    for m in CORPUS2[:5]:
        ann = mach.annotate(m)
        assert find_accepting_run(mach, encode(m, ann)) is not None
        qs = m.events_of("q")
        if qs:
            e = rng.choice(qs)
            bad = dict(ann)
            bad[e] = 1 - ann[e]
            assert find_accepting_run(mach, encode(m, bad)) is None


def test_preorder_machine_search_route_local():
    # the composite product explodes the search beyond two events, so the
    # full-relation cross-check runs on a two-event single-process MSC;
    # larger instances are certified componentwise below
    mach = build_preorder_cfm("q", "q", (PLUS,))
    m = Msc(SIG2, [("f0", "q", "a"), ("f1", "q", "b")], [])
    ann = mach.annotate(m)
    assert find_accepting_run(mach, encode(m, ann)) is not None
    bad = dict(ann)
    bad["f1"] = frozenset()
    assert find_accepting_run(mach, encode(m, bad)) is None


def test_preorder_components_drive_canonical_runs():
    mach = build_preorder_cfm("p", "q", (PI, PI2))
    assert drive_preorder_components(mach.core, fig_flipped())
    for m in CORPUS3[:2]:
        assert drive_preorder_components(mach.core, m)


# -- gossip machine ------------------------------------------------------------


def test_gossip_oracle_annotation_fixture():
    m = fig_flipped()
    ext = oracle_gossip_annotation(m)
    # e5 is the latest p-event below f5 (via g4, g5, f4)
    assert ext.annot["f5"][0] == m.label["e5"] == "a"
    assert ext.annot["e0"] == (None, None, None)
    # q announces exactly the latest p-label at every f_i
    for i in range(8):
        assert m.label[f"f{i}"] == ext.annot[f"f{i}"][0]


def test_gossip_machine_accepts_fixture():
    mach = build_gossip_cfm(SIG3)
    m = fig_flipped()
    ext = oracle_gossip_annotation(m)
    assert mach.annotate(m) == ext.annot
    assert mach.decide(ext)


def test_gossip_machine_single_event_all_bottom():
    mach = build_gossip_cfm(SIG3)
    m = Msc(SIG3, [("e", "p", "a")], [])
    ext = ExtendedMsc(m, {"e": (None, None, None)})
    assert mach.decide(ext)


def test_gossip_machine_rejects_stale_claim():
    # claiming the directly-received label at f2/f5 instead of the newest one
    m = fig_flipped()
    ext = oracle_gossip_annotation(m)
    bad = dict(ext.annot)
    for e in ("f2", "f5"):
        vals = list(bad[e])
        assert vals[0] == "a"
        vals[0] = "b"
        bad[e] = tuple(vals)
    assert not build_gossip_cfm(SIG3).decide(ExtendedMsc(m, bad))


def test_gossip_matches_oracle_on_corpus():
    mach = build_gossip_cfm(SIG3)
    rng = random.Random(11)
    for m in CORPUS3[:15]:
        ext = oracle_gossip_annotation(m)
        assert mach.decide(ext)
        if m.events:
            e = rng.choice(m.events)
            i = rng.randrange(len(SIG3.processes))
            vals = list(ext.annot[e])
            alts = [v for v in SIG3.alphabet + (None,) if v != vals[i]]
            vals[i] = rng.choice(alts)
            bad = dict(ext.annot)
            bad[e] = tuple(vals)
            assert not mach.decide(ExtendedMsc(m, bad))


def test_gossip_components_drive_canonical_runs():
    mach = build_gossip_cfm(SIG3)
    assert drive_gossip_components(mach, fig_base())


def test_gossip_message_carries_label():
    mach = build_gossip_cfm(SIG2)
    m = Msc(SIG2, [("s", "p", "a"), ("r", "q", "b")], [("s", "r")])
    ext = oracle_gossip_annotation(m)
    assert ext.annot["r"] == ("a", None)
    assert mach.decide(ext)
    bad = dict(ext.annot)
    bad["r"] = ("b", None)
    assert not mach.decide(ExtendedMsc(m, bad))


def test_gossip_search_route_single_process():
    # the composite transition relation branches on every component's guesses,
    # so the genuine run search is only tractable on the smallest signature;
    # larger instances are certified componentwise by the drive tests
    sig1 = SystemSignature(("p",), ("a", "b"))
    mach = build_gossip_cfm(sig1)
    m = Msc(sig1, [("e", "p", "a")], [])
    ext = oracle_gossip_annotation(m)
    assert ext.annot["e"] == (None,)
    assert find_accepting_run(mach, encode(m, ext.annot)) is not None
    assert find_accepting_run(mach, encode(m, {"e": ("a",)})) is None


# -- canonical states and reporting --------------------------------------------


def test_canonical_coloring_is_valid():
    m = fig_flipped()
    star_pi2 = star_prepend(PI2)
    zeta = canonical_coloring(m, "q", PI, star_pi2)
    bits = fixpoint_bits(m, PI, star_pi2)
    targets = fa_target(m, PI, star_pi2)
    real = [zeta[e] for e in m.events_of("q") if bits[e]]
    assert all(c in ("c1", "c2") for c in real)
    assert all(a != b for a, b in zip(real, real[1:]))
    for e in m.events_of("q"):
        if not bits[e]:
            assert zeta[e] in ("z1", "z2")
            t = targets[e]
            if isinstance(t, str) and t in zeta and m.loc.get(t) == "q":
                assert zeta[e] != zeta[t] or bits[t]


def test_fix_core_drives_canonical_run():
    mach = build_fixpoint_cfm("p", "q", PI, star_prepend(PI2))
    assert drive_fix_core(mach.core, fig_flipped())
    for m in CORPUS3[:3]:
        assert drive_fix_core(mach.core, m)


def test_last_core_drives_deterministically():
    from mscgossip.constructions import LastCore

    core = LastCore(PI)
    for m in CORPUS3[:5]:
        assert drive_last_core(core, m, dict(m.label))


def test_state_report_monotone_in_path_size():
    family = CORPUS2[:6]
    sizes = []
    for paths in [(PLUS,), (PLUS, STAR)]:
        mach = build_preorder_cfm("q", "q", paths)
        rep = reachable_state_report(mach, family)
        assert set(rep["per_process"]) == {"p", "q"}
        assert rep["total"] == sum(rep["per_process"].values())
        sizes.append(rep["total"])
    assert sizes[0] <= sizes[1]


def test_gossip_state_report_runs():
    mach = build_gossip_cfm(SIG2)
    rep = reachable_state_report(mach, CORPUS2[:3])
    assert rep["total"] >= 2


# -- materialization -----------------------------------------------------------


def test_materialize_last_machine_exact():
    theta = ("x", "y")
    mach = build_last_label_cfm(theta, PLUS)
    annots = [(x1, x2) for x1 in theta for x2 in theta + (BOTTOM,)]
    full = SystemSignature(
        ("p", "q"), tuple((s, a) for s in ("a", "b") for a in annots)
    )
    c = materialize(mach, full)
    rng = random.Random(4)
    checked = 0
    for m in CORPUS2[:4]:
        for combo in itertools.product(theta, repeat=len(m.events)):
            xi1 = dict(zip(m.events, combo))
            ann = mach.annotate(m, xi1)
            enc = encode(m, ann)
            enc_full = Msc(
                full, [(e, enc.loc[e], enc.label[e]) for e in enc.events], enc.msg
            )
            assert find_accepting_run(c, enc_full) is not None
            checked += 1
            if m.events:
                bad = _mutants(rng, ann, theta + (BOTTOM,))
                encb = encode(m, bad)
                encb_full = Msc(
                    full,
                    [(e, encb.loc[e], encb.label[e]) for e in encb.events],
                    encb.msg,
                )
                assert find_accepting_run(c, encb_full) is None
    assert checked >= 20


def test_materialize_cap_enforced():
    from mscgossip.cfm import CfmError

    mach = build_last_label_cfm(("x", "y", "z"), PI)
    annots = [(x1, x2) for x1 in ("x", "y", "z") for x2 in ("x", "y", "z", BOTTOM)]
    full = SystemSignature(
        SIG3.processes, tuple((s, a) for s in SIG3.alphabet for a in annots)
    )
    with pytest.raises(CfmError):
        materialize(mach, full, cap=5)
