"""Why no deterministic machine solves gossip: counterexample family and refuter.

The target specification is the language L of MSCs over processes {p,q,r} and
labels {b,a,d} where every q-event is labeled with the label of the latest
p-event in its strict causal past.  ``refute_deterministic`` takes a
deterministic claimant machine and produces a machine-verified counterexample:
either an MSC the claimant accepts whose q-labels are wrong, or an MSC in L
that the claimant rejects.

The positive tool is the family M^k: p alternates b-sends (to q) and a-sends
(to r, forwarded to q), with k of the n direct messages delivered before the
forwarded block and n-k after.  The claimant's q-state pairs at the two block
boundaries collide for some k < k' by pigeonhole, and splicing the two runs
yields an accepted MSC with wrong labels.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Optional

from .cfm import BudgetExhausted, Cfm, Transition, accepts, is_deterministic
from .msc import (
    BOTTOM,
    Msc,
    MscError,
    SystemSignature,
    last_on_process,
    linearize,
    validate_msc,
)

GOSSIP_SIG = SystemSignature(processes=("p", "q", "r"), alphabet=("a", "b", "d"))


def q_label_spec(m: Msc) -> dict[str, object]:
    """For each q-event, the label demanded by L: the latest p-label in its past."""
    out = {}
    for f in m.events_of("q"):
        g = last_on_process(m, "p", f)
        out[f] = BOTTOM if g is BOTTOM else m.label[g]
    return out


def q_labels_correct(m: Msc) -> bool:
    return all(m.label[f] == want for f, want in q_label_spec(m).items())


@dataclass(frozen=True)
class FamilyParams:
    n: int
    k: int

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.k < self.n:
            raise MscError(f"need 0 <= k < n, got n={self.n}, k={self.k}")


def build_family_msc(params: FamilyParams) -> Msc:
    """The MSC M^k: 2n events per process, labels forced by the specification."""
    n, k = params.n, params.k
    messages = []
    for i in range(k):
        messages.append((f"e{2 * i}", f"f{i}"))
    for i in range(k, n):
        messages.append((f"e{2 * i}", f"f{n + i}"))
    for i in range(n):
        messages.append((f"e{2 * i + 1}", f"g{2 * i}"))
        messages.append((f"g{2 * i + 1}", f"f{k + i}"))
    events = []
    for i in range(2 * n):
        events.append((f"e{i}", "p", "b" if i % 2 == 0 else "a"))
    for i in range(2 * n):
        events.append((f"f{i}", "q", "x"))  # placeholder, fixed below
    for i in range(2 * n):
        events.append((f"g{i}", "r", "d"))
    skeleton = Msc(GOSSIP_SIG, events, messages)
    spec = q_label_spec(skeleton)  # q labels never feed back into last_p
    events = [
        (e, p, spec[e] if p == "q" else lab) for e, p, lab in events
    ]
    m = Msc(GOSSIP_SIG, events, messages)
    # closed form: b for i < 2k-1, a otherwise; any deviation means the
    # construction above drifted from the intended shape.
    for i in range(2 * n):
        want = "b" if i < 2 * k - 1 else "a"
        if m.label[f"f{i}"] != want:
            raise AssertionError(
                f"family labels disagree with closed form at f{i} (n={n}, k={k})"
            )
    bad = validate_msc(m)
    if bad:
        raise AssertionError(f"family MSC invalid: {bad}")
    return m


def splice_family_msc(n: int, k: int, kp: int) -> Msc:
    """Structure of M^k with q-labels b below index k+k'-1 and a from there on."""
    base = build_family_msc(FamilyParams(n, k))
    cut = k + kp - 1
    events = [
        (e, p, ("b" if int(e[1:]) < cut else "a") if p == "q" else lab)
        for e, lab, p in ((e, base.label[e], base.loc[e]) for e in base.events)
    ]
    return Msc(GOSSIP_SIG, events, base.msg)


def naive_gossip_cfm() -> Cfm:
    """The three-process forwarding machine: p broadcasts its label, r relays
    p's messages to q, q outputs each incoming message letter as its label."""
    sig = GOSSIP_SIG
    states = {"p": ["s0p"], "q": ["s0q"], "r": ["s0r", "s1r", "s2r"]}
    initial = {"p": "s0p", "q": "s0q", "r": "s0r"}
    t = []
    for x in ("b", "a"):
        for dest in ("q", "r"):
            t.append(Transition("p", "s0p", "send", x, "s0p", x, dest))
        for src in ("p", "r"):
            t.append(Transition("q", "s0q", "recv", x, "s0q", x, src))
    t.append(Transition("r", "s0r", "recv", "d", "s1r", "b", "p"))
    t.append(Transition("r", "s1r", "send", "d", "s0r", "b", "q"))
    t.append(Transition("r", "s0r", "recv", "d", "s2r", "a", "p"))
    t.append(Transition("r", "s2r", "send", "d", "s0r", "a", "q"))
    accepting = [("s0p", "s0q", "s0r")]
    return Cfm(sig, ["b", "a"], states, initial, t, accepting)


# -- deterministic simulation --------------------------------------------------


def simulate_deterministic(c: Cfm, m: Msc):
    """The unique run of a deterministic machine along a linearization.

    Returns (accepted: bool, q_state_after: dict event -> state).  The run
    either completes or gets stuck; both outcomes are decisive for a
    deterministic machine, no backtracking needed.
    """
    procs = c.signature.processes
    states = {p: c.initial[p] for p in procs}
    chans: dict[tuple, list] = {}
    after = {}
    for e in linearize(m):
        p = m.loc[e]
        kind = m.kind_of(e)
        peer = m.peer_of(e)
        msg_in = None
        if kind == "recv":
            msg_in = chans[(peer, p)][0]
        moves = list(dict.fromkeys(
            (ns, mo) for ns, mo, _ in c.step(p, states[p], kind, m.label[e], peer, msg_in)
        ))
        if not moves:
            return False, after
        if len(moves) > 1:
            raise ValueError("machine is not deterministic")
        moves = [moves[0] + (None,)]
        new_state, msg_out, _ = moves[0]
        states[p] = new_state
        if kind == "send":
            chans.setdefault((p, peer), []).append(msg_out)
        elif kind == "recv":
            chans[(peer, p)].pop(0)
        after[e] = new_state
    final = tuple(states[p] for p in procs)
    return c.is_accepting(final), after


# -- accepted-but-wrong labeling search ----------------------------------------


def accepted_q_labelings(c: Cfm, m: Msc, budget: int = 10**6) -> Iterator[Msc]:
    """All relabelings of m's q-events that the machine accepts, by DFS.

    Labels are drawn from {b, a}; candidates are tried in alphabet order, so
    the enumeration is deterministic.  Non-q labels are kept as given.
    """
    q_events = [e for e in m.events if m.loc[e] == "q"]
    procs = c.signature.processes
    order = linearize(m)
    nodes = 0

    def dfs(i, states, chans, labels):
        nonlocal nodes
        nodes += 1
        if nodes > budget:
            raise BudgetExhausted(budget)
        if i == len(order):
            if c.is_accepting(tuple(states[p] for p in procs)):
                events = [
                    (e, m.loc[e], labels.get(e, m.label[e])) for e in m.events
                ]
                yield Msc(m.signature, events, m.msg)
            return
        e = order[i]
        p = m.loc[e]
        kind = m.kind_of(e)
        peer = m.peer_of(e)
        msg_in = chans[(peer, p)][0] if kind == "recv" else None
        options = ("b", "a") if p == "q" else (m.label[e],)
        for lab in options:
            for new_state, msg_out, _ in c.step(p, states[p], kind, lab, peer, msg_in):
                states2 = dict(states)
                states2[p] = new_state
                chans2 = {k: list(v) for k, v in chans.items()}
                if kind == "send":
                    chans2.setdefault((p, peer), []).append(msg_out)
                elif kind == "recv":
                    chans2[(peer, p)].pop(0)
                labels2 = dict(labels)
                if p == "q":
                    labels2[e] = lab
                yield from dfs(i + 1, states2, chans2, labels2)

    init = {p: c.initial[p] for p in procs}
    chans: dict[tuple, list] = {}
    for s, r in m.msg:
        chans.setdefault((m.loc[s], m.loc[r]), [])
    yield from dfs(0, init, chans, {})


# -- the refuter ----------------------------------------------------------------


@dataclass
class RefutationResult:
    verdict: str  # 'not-deterministic' | 'accepts-wrong' | 'rejects-correct'
    #               | 'no-counterexample-found'
    counterexample: Optional[Msc] = None
    detail: str = ""

    @property
    def refuted(self) -> bool:
        return self.verdict in ("not-deterministic", "accepts-wrong", "rejects-correct")


def refute_deterministic(c: Cfm, budget: int = 10**6) -> RefutationResult:
    """Disprove that a claimant machine deterministically recognizes L.

    Strategy: (1) check the determinism clauses; (2) run the claimant on the
    family M^0..M^{n-1} with n = |S_q|^2 + 1, splice colliding runs, and
    machine-verify the splice (accepted and wrong); (3) if the claimant
    rejects family members, search its accepted q-labelings of those same
    structures for one that violates the specification, which both exhibits
    an accepted-but-wrong MSC and dominates the weaker rejects-correct
    verdict; the rejected M^k is the fallback counterexample.
    """
    for needed in ("p", "q", "r"):
        if needed not in c.signature.processes:
            raise ValueError(f"claimant lacks process {needed!r}")
    if not is_deterministic(c):
        return RefutationResult("not-deterministic", detail="determinism clauses fail")
    # |S_q|^2 + 1 guarantees a collision; the floor of 3 guarantees a collision
    # other than (0, 1), whose splice relabels nothing and proves nothing.
    n = max(len(c.states["q"]) ** 2 + 1, 3)
    family = [build_family_msc(FamilyParams(n, k)) for k in range(n)]
    rejected_k = None
    sig_pairs: dict[int, tuple] = {}
    for k, mk in enumerate(family):
        ok, after = simulate_deterministic(c, mk)
        if not ok:
            if rejected_k is None:
                rejected_k = k
            continue
        s_k = c.initial["q"] if k == 0 else after[f"f{k - 1}"]
        t_k = after[f"f{k + n - 1}"]
        sig_pairs[k] = (s_k, t_k)

    # collisions in lexicographic order; verify each candidate splice.
    # (k, k') = (0, 1) is skipped implicitly: its splice relabels nothing,
    # so it equals M^0, is in L, and fails the wrongness check.
    for k, kp in itertools.combinations(sorted(sig_pairs), 2):
        if sig_pairs[k] != sig_pairs[kp]:
            continue
        spliced = splice_family_msc(n, k, kp)
        if q_labels_correct(spliced):
            continue
        if accepts(c, spliced, budget):
            return RefutationResult(
                "accepts-wrong",
                spliced,
                f"splice of runs k={k}, k'={kp} at n={n}",
            )

    # accepted-but-wrong search over the family structures and, first, the
    # structure where p interleaves direct and forwarded messages (the shape
    # on which the forwarding machine shows its defect).
    candidates = [_interleaved_structure()] + family
    for structure in candidates:
        try:
            for labeled in accepted_q_labelings(c, structure, budget):
                if not q_labels_correct(labeled):
                    return RefutationResult(
                        "accepts-wrong", labeled, "accepted labeling violates L"
                    )
        except BudgetExhausted:
            continue

    if rejected_k is not None:
        return RefutationResult(
            "rejects-correct",
            family[rejected_k],
            f"M^{rejected_k} (n={n}) is in L but is rejected",
        )
    return RefutationResult("no-counterexample-found")


def _interleaved_structure() -> Msc:
    """p alternates sends to q and (via r) to q; 24 events, 12 messages."""
    events = []
    events += [(f"e{i}", "p", "b" if i in (0, 1, 3, 4, 6) else "a") for i in range(8)]
    events += [(f"f{i}", "q", "a") for i in range(8)]
    events += [(f"g{i}", "r", "d") for i in range(8)]
    messages = [
        ("e0", "f0"), ("e1", "g0"), ("e2", "f1"), ("g1", "f2"),
        ("e3", "g2"), ("g3", "f3"), ("e4", "f5"), ("e5", "g4"),
        ("g5", "f4"), ("e6", "f6"), ("e7", "g6"), ("g7", "f7"),
    ]
    return Msc(GOSSIP_SIG, events, messages)
