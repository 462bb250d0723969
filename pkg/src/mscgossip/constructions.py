"""The construction chain: from last/first-label tracking to the gossip machine.

Each construction is a machine over an annotated alphabet whose language is
"the annotation is correct".  Every machine comes with two membership routes:

* the genuine nondeterministic transition relation (states are the rule
  functions themselves, messages carry them, backward-flowing information is
  guessed and checked later), searchable with find_accepting_run;
* a direct decision procedure applying the same local rules along a
  linearization.  Because each machine admits exactly one consistent internal
  valuation per MSC, this decides membership without search and scales to
  large instances; ``accepts`` dispatches to it automatically.

The machines:
  last-label    ξ2(e) = ξ1(last_π(e))            forward, deterministic
  first-label   ξ2(e) = ξ1(first_π(e))           backward, guessed forward
  fa-label      ξ2(e) = ξ1(first_π'(last_π(e)))  the two chained
  fixpoint      γ(e) = 1 iff first_π'(last_π(e)) = e    via 4-coloring
  preorder      γ(e) = the total preorder ⪯_e over a finite path set
  gossip        ξ(e)(p) = λ(latest p-event below e)     for every process p
"""

from __future__ import annotations

import itertools
from typing import Callable, Hashable, Iterable, Optional

from .cfm import LazyCfm, detach_annotation
from .msc import BOTTOM, TOP, ExtendedMsc, Msc, SystemSignature, linearize
from .paths import (
    LabelTest,
    Msg,
    PathError,
    PathExpr,
    StarStep,
    Step,
    comp,
    format_path,
    gossip_paths_between,
    plus_prepend,
    star_append,
    star_prepend,
)


def _prefixes(pi: PathExpr) -> list[PathExpr]:
    return [PathExpr(pi.symbols[:i]) for i in range(len(pi.symbols) + 1)]


def _suffixes(pi: PathExpr) -> list[PathExpr]:
    """By increasing length, so each entry's tail is already computed."""
    n = len(pi.symbols)
    return [PathExpr(pi.symbols[i:]) for i in range(n, -1, -1)]


# ---------------------------------------------------------------------------
# direct propagation passes
# ---------------------------------------------------------------------------


def last_theta(m: Msc, pi: PathExpr, base: dict[str, Hashable]) -> dict[str, dict]:
    """θ(e): prefixes(π) → Θ∪{⊥} with θ(e)(π') = base(last_{π'}(e)).

    Forward pass; every rule refers to the process predecessor or the message
    sender, both earlier in any linearization.
    """
    prefs = _prefixes(pi)
    theta: dict[str, dict] = {}
    for e in linearize(m):
        pred = m.proc_pred_of(e)
        sender = m.send_of.get(e)
        t: dict[PathExpr, Hashable] = {}
        for p1 in prefs:
            if not p1.symbols:
                t[p1] = base[e]
                continue
            head = p1.symbols[-1]
            p2 = PathExpr(p1.symbols[:-1])
            if isinstance(head, Step):
                t[p1] = BOTTOM if pred is None else theta[pred][p2]
            elif isinstance(head, StarStep):
                if t[p2] is not BOTTOM:
                    t[p1] = t[p2]
                elif pred is None:
                    t[p1] = BOTTOM
                else:
                    t[p1] = theta[pred][p1]
            elif isinstance(head, Msg):
                if (
                    sender is not None
                    and m.loc[e] == head.dst
                    and m.loc[sender] == head.src
                ):
                    t[p1] = theta[sender][p2]
                else:
                    t[p1] = BOTTOM
            else:  # LabelTest
                t[p1] = t[p2] if m.label[e] == head.letter else BOTTOM
        theta[e] = t
    return theta


def last_value(m: Msc, pi: PathExpr, base: dict[str, Hashable]) -> dict[str, Hashable]:
    th = last_theta(m, pi, base)
    return {e: th[e][pi] for e in m.events}


def first_theta(m: Msc, pi: PathExpr, base: dict[str, Hashable]) -> dict[str, dict]:
    """θ(e): suffixes(π) → Θ∪{⊤} with θ(e)(π') = base(first_{π'}(e)).

    Backward pass over a reversed linearization; rules refer to the process
    successor or the message receiver, both later, so the valuation is unique.
    """
    sufs = _suffixes(pi)
    theta: dict[str, dict] = {}
    for e in reversed(linearize(m)):
        succ = m.proc_succ_of(e)
        recv = m.recv_of.get(e)
        t: dict[PathExpr, Hashable] = {}
        for p1 in sufs:
            if not p1.symbols:
                t[p1] = base[e]
                continue
            head = p1.symbols[0]
            p2 = PathExpr(p1.symbols[1:])
            if isinstance(head, Step):
                t[p1] = TOP if succ is None else theta[succ][p2]
            elif isinstance(head, StarStep):
                if t[p2] is not TOP:
                    t[p1] = t[p2]
                elif succ is None:
                    t[p1] = TOP
                else:
                    t[p1] = theta[succ][p1]
            elif isinstance(head, Msg):
                if (
                    recv is not None
                    and m.loc[e] == head.src
                    and m.loc[recv] == head.dst
                ):
                    t[p1] = theta[recv][p2]
                else:
                    t[p1] = TOP
            else:  # LabelTest
                t[p1] = t[p2] if m.label[e] == head.letter else TOP
        theta[e] = t
    return theta


def first_value(m: Msc, pi: PathExpr, base: dict[str, Hashable]) -> dict[str, Hashable]:
    th = first_theta(m, pi, base)
    return {e: th[e][pi] for e in m.events}


def fa_value(
    m: Msc, pi: PathExpr, pi2: PathExpr, base: dict[str, Hashable]
) -> dict[str, Hashable]:
    """base(first_{π'}(last_π(e))), with base(⊥)=⊥ and base(⊤)=⊤."""
    chi = first_value(m, pi2, base)
    return last_value(m, pi, chi)


def fixpoint_bits(m: Msc, pi: PathExpr, pi2: PathExpr) -> dict[str, bool]:
    """bit(e) = [first_{π'}(last_π(e)) = e], computed with per-event tokens."""
    tokens = {e: ("tok", e) for e in m.events}
    out = fa_value(m, pi, pi2, tokens)
    return {e: out[e] == ("tok", e) for e in m.events}


def fa_target(m: Msc, pi: PathExpr, pi2: PathExpr) -> dict[str, Hashable]:
    """The event first_{π'}(last_π(e)) itself (or a sentinel)."""
    tokens = {e: ("tok", e) for e in m.events}
    out = fa_value(m, pi, pi2, tokens)
    return {
        e: v[1] if isinstance(v, tuple) and v and v[0] == "tok" else v
        for e, v in out.items()
    }


def bottom_bits(m: Msc, pi: PathExpr) -> dict[str, bool]:
    """bit(e) = [last_π(e) = ⊥], via the last-label pass with a 1-point set."""
    out = last_value(m, pi, {e: "•" for e in m.events})
    return {e: out[e] is BOTTOM for e in m.events}


def closure_with_star(paths: Iterable[PathExpr]) -> tuple[PathExpr, ...]:
    """Π plus π→* for each π ∈ Π (identifying π→*→* with π→*)."""
    out: list[PathExpr] = []
    for pi in paths:
        for cand in (pi, star_append(pi)):
            if cand not in out:
                out.append(cand)
    return tuple(out)


def preorder_combine(
    clos: tuple[PathExpr, ...],
    prev: Optional[frozenset],
    bot_bits: dict,
    star_bits: dict,
    plus_bits: dict,
) -> frozenset:
    """One step of the ⪯ recurrence along ⊏ (shared by both machine routes).

    (π,π') holds at f when: f is the first q-event (prev is None) or the pair
    of star-closed paths did not hold before, and last_π(f)=⊥ or f is a
    f^{π,→*π'}-fixpoint; otherwise the pair persists unless f is a
    f^{π',→+π}-fixpoint or π' newly became ⊥-free while π did not.
    """
    pairs = set()
    for a in clos:
        for b in clos:
            if prev is None or (star_append(a), star_append(b)) not in prev:
                holds = bot_bits[a] or star_bits[(a, b)]
            else:
                holds = not plus_bits[(b, a)] and (bot_bits[a] or not bot_bits[b])
            if holds:
                pairs.add((a, b))
    return frozenset(pairs)


def preorder_bits(
    m: Msc, q: str, paths: tuple[PathExpr, ...]
) -> dict[str, frozenset]:
    """For each q-event f, the set of pairs (π,π') with π ⪯_f π', over the
    star closure of the given path set, by the three switch rules along ⊏."""
    clos = closure_with_star(paths)
    fix_star = {
        (a, b): fixpoint_bits(m, a, star_prepend(b)) for a in clos for b in clos
    }
    fix_plus = {
        (a, b): fixpoint_bits(m, a, plus_prepend(b)) for a in clos for b in clos
    }
    bot = {a: bottom_bits(m, a) for a in clos}
    out: dict[str, frozenset] = {}
    prev: Optional[frozenset] = None
    for f in m.events_of(q):
        prev = preorder_combine(
            clos,
            prev,
            {a: bot[a][f] for a in clos},
            {ab: fix_star[ab][f] for ab in fix_star},
            {ab: fix_plus[ab][f] for ab in fix_plus},
        )
        out[f] = prev
    return out


def ord_annotation(pairs: frozenset, paths: Iterable[PathExpr]) -> frozenset:
    """Canonical preorder value: string pairs restricted to the original set."""
    keep = set(paths)
    return frozenset(
        (format_path(a), format_path(b)) for a, b in pairs if a in keep and b in keep
    )


# ---------------------------------------------------------------------------
# machine cores
# ---------------------------------------------------------------------------
#
# Component protocol: start() -> state; step(state, ctx, base, payload_in)
# yields (new_state, output_value, payload_out); final(state) -> bool.
# States are the θ functions, encoded as tuples aligned with the
# prefix/suffix list; "start" marks an empty process history.


class StepCtx:
    """Local view of one event: process, kind, peer, base-alphabet letter."""

    __slots__ = ("proc", "kind", "peer", "sigma")

    def __init__(self, proc, kind, peer, sigma):
        self.proc = proc
        self.kind = kind
        self.peer = peer
        self.sigma = sigma


class LastCore:
    """Deterministic forward tracking of θ over prefixes of π."""

    def __init__(self, pi: PathExpr):
        self.pi = pi
        self.prefs = _prefixes(pi)

    def start(self):
        return "start"

    def step(self, state, ctx: StepCtx, base, payload_in):
        prev = None if state == "start" else dict(zip(self.prefs, state))
        sender_theta = (
            None if payload_in is None else dict(zip(self.prefs, payload_in))
        )
        t: dict[PathExpr, Hashable] = {}
        for p1 in self.prefs:
            if not p1.symbols:
                t[p1] = base
                continue
            head = p1.symbols[-1]
            p2 = PathExpr(p1.symbols[:-1])
            if isinstance(head, Step):
                t[p1] = BOTTOM if prev is None else prev[p2]
            elif isinstance(head, StarStep):
                if t[p2] is not BOTTOM:
                    t[p1] = t[p2]
                elif prev is None:
                    t[p1] = BOTTOM
                else:
                    t[p1] = prev[p1]
            elif isinstance(head, Msg):
                if (
                    ctx.kind == "recv"
                    and sender_theta is not None
                    and ctx.proc == head.dst
                    and ctx.peer == head.src
                ):
                    t[p1] = sender_theta[p2]
                else:
                    t[p1] = BOTTOM
            else:
                t[p1] = t[p2] if ctx.sigma == head.letter else BOTTOM
        enc = tuple(t[p1] for p1 in self.prefs)
        payload = enc if ctx.kind == "send" else None
        yield enc, t[self.pi], payload

    def final(self, state) -> bool:
        return True


class FirstCore:
    """Guess-based forward realization of θ over suffixes of π.

    Entries whose rule refers to a later event are guessed from Θ∪{⊤} and
    checked when that later event is processed (⊏-successor entries and the
    propagated →*-entries at the next step, message entries at the matching
    receive, process-end entries in final()).
    """

    def __init__(self, pi: PathExpr, theta_set: tuple):
        self.pi = pi
        self.sufs = _suffixes(pi)  # increasing length
        self.domain = tuple(theta_set) + (TOP,)

    def start(self):
        return "start"

    def _forced_and_free(self, ctx: StepCtx, base):
        """Split suffix entries into locally forced values and free slots."""
        forced: dict[PathExpr, Hashable] = {}
        free: list[PathExpr] = []
        for p1 in self.sufs:
            if not p1.symbols:
                forced[p1] = base
                continue
            head = p1.symbols[0]
            p2 = PathExpr(p1.symbols[1:])
            if isinstance(head, Step):
                free.append(p1)  # successor-dependent, or ⊤ at process end
            elif isinstance(head, StarStep):
                if p2 in forced and forced[p2] is not TOP:
                    forced[p1] = forced[p2]
                else:
                    free.append(p1)
            elif isinstance(head, Msg):
                if ctx.kind == "send" and ctx.proc == head.src and ctx.peer == head.dst:
                    free.append(p1)  # receiver-dependent
                else:
                    forced[p1] = TOP
            else:
                if ctx.sigma == head.letter:
                    if p2 in forced:
                        forced[p1] = forced[p2]
                    else:
                        free.append(p1)
                else:
                    forced[p1] = TOP
        return forced, free

    def step(self, state, ctx: StepCtx, base, payload_in):
        prev = None if state == "start" else dict(zip(self.sufs, state))
        sender_theta = (
            None if payload_in is None else dict(zip(self.sufs, payload_in))
        )
        forced, free = self._forced_and_free(ctx, base)
        for combo in itertools.product(self.domain, repeat=len(free)):
            t = dict(forced)
            t.update(zip(free, combo))
            if not self._consistent(t, ctx):
                continue
            # check the previous event's successor-dependent entries
            if prev is not None and not self._check_succ(prev, t):
                continue
            # check the sender's message entries against our fresh θ
            if sender_theta is not None and not self._check_msg(
                sender_theta, t, ctx
            ):
                continue
            enc = tuple(t[p1] for p1 in self.sufs)
            payload = enc if ctx.kind == "send" else None
            yield enc, t[self.pi], payload

    def _consistent(self, t, ctx: StepCtx) -> bool:
        """Local coherence of guessed entries with shorter suffixes."""
        for p1 in self.sufs:
            if not p1.symbols:
                continue
            head = p1.symbols[0]
            p2 = PathExpr(p1.symbols[1:])
            if isinstance(head, StarStep):
                if t[p2] is not TOP and t[p1] != t[p2]:
                    return False
            elif isinstance(head, LabelTest) and ctx.sigma == head.letter:
                if t[p1] != t[p2]:
                    return False
        return True

    def _check_succ(self, prev, cur) -> bool:
        """Rules at the previous event that mention its ⊏-successor (us)."""
        for p1 in self.sufs:
            if not p1.symbols:
                continue
            head = p1.symbols[0]
            p2 = PathExpr(p1.symbols[1:])
            if isinstance(head, Step):
                if prev[p1] != cur[p2]:
                    return False
            elif isinstance(head, StarStep):
                if prev[p2] is TOP and prev[p1] != cur[p1]:
                    return False
        return True

    def _check_msg(self, sender, cur, ctx: StepCtx) -> bool:
        """Message entries guessed at the send, checked here at the receive."""
        for p1 in self.sufs:
            if not p1.symbols:
                continue
            head = p1.symbols[0]
            if isinstance(head, Msg) and head.src == ctx.peer and head.dst == ctx.proc:
                p2 = PathExpr(p1.symbols[1:])
                if sender[p1] != cur[p2]:
                    return False
        return True

    def final(self, state) -> bool:
        if state == "start":
            return True
        t = dict(zip(self.sufs, state))
        for p1 in self.sufs:
            if not p1.symbols:
                continue
            head = p1.symbols[0]
            p2 = PathExpr(p1.symbols[1:])
            if isinstance(head, Step) and t[p1] is not TOP:
                return False
            if isinstance(head, StarStep) and t[p2] is TOP and t[p1] is not TOP:
                return False
        return True


class FaCore:
    """first-core for π' chained into a last-core for π (base = θ'(e)(π'))."""

    def __init__(self, pi: PathExpr, pi2: PathExpr, theta_set: tuple):
        self.first = FirstCore(pi2, theta_set)
        self.last = LastCore(pi)

    def start(self):
        return (self.first.start(), self.last.start())

    def step(self, state, ctx: StepCtx, base, payload_in):
        s5, s4 = state
        p5_in = p4_in = None
        if payload_in is not None:
            p5_in, p4_in = payload_in
        for n5, chi, pay5 in self.first.step(s5, ctx, base, p5_in):
            for n4, out, pay4 in self.last.step(s4, ctx, chi, p4_in):
                payload = (pay5, pay4) if ctx.kind == "send" else None
                yield (n5, n4), out, payload

    def final(self, state) -> bool:
        return self.first.final(state[0]) and self.last.final(state[1])


FOUR_COLORS = ("c1", "c2", "z1", "z2")


class FixCore:
    """Fixpoint detection: γ(e) = [fa(e) = e] on process q, via 4-coloring.

    The γ bit is supplied by the caller (from the label, or guessed by an
    enclosing machine); ζ colors are computed (γ=1 alternates c1/c2) or
    guessed (γ=0 from {z1, z2}); events off q get a fixed dummy color, which
    is sound because only q-colors ever reach a comparison.
    """

    def __init__(self, q: str, pi: PathExpr, pi2: PathExpr):
        self.q = q
        self.pi = pi
        self.pi2 = pi2
        self.fa = FaCore(pi, pi2, FOUR_COLORS)

    def start(self):
        return (self.fa.start(), "c2")  # alternation starts at c1

    def step_with_bit(self, state, ctx: StepCtx, gamma, payload_in):
        fa_state, alt = state
        if ctx.proc != self.q:
            zetas = [("z1", alt)]
        elif gamma == 1:
            nxt = "c1" if alt == "c2" else "c2"
            zetas = [(nxt, nxt)]
        else:
            zetas = [("z1", alt), ("z2", alt)]
        for zeta, new_alt in zetas:
            for n_fa, out, payload in self.fa.step(fa_state, ctx, zeta, payload_in):
                if ctx.proc == self.q:
                    if (gamma == 1) != (out == zeta):
                        continue
                yield (n_fa, new_alt), payload

    def final(self, state) -> bool:
        return self.fa.final(state[0])


class PreorderCore:
    """All fixpoint/bottom components for a path set, plus the ⪯ recurrence.

    State: per-component states and the previous q-event's preorder (over the
    closure).  At each q-event the fixpoint bits are guessed, fed to their
    components for later verification, and combined by the three switch rules
    into the next preorder, which is the core's output.
    """

    def __init__(self, q: str, paths: tuple[PathExpr, ...]):
        self.q = q
        self.paths = paths
        self.clos = closure_with_star(paths)
        self.star_pairs = [(a, b) for a in self.clos for b in self.clos]
        self.fix_star = {
            ab: FixCore(q, ab[0], star_prepend(ab[1])) for ab in self.star_pairs
        }
        self.fix_plus = {
            ab: FixCore(q, ab[0], plus_prepend(ab[1])) for ab in self.star_pairs
        }
        self.bots = {a: LastCore(a) for a in self.clos}

    def start(self):
        return (
            tuple(self.fix_star[ab].start() for ab in self.star_pairs),
            tuple(self.fix_plus[ab].start() for ab in self.star_pairs),
            tuple(self.bots[a].start() for a in self.clos),
            None,  # previous preorder over the closure
        )

    def step(self, state, ctx: StepCtx, payload_in):
        st_star, st_plus, st_bot, prev = state
        pay_star = pay_plus = pay_bot = None
        if payload_in is not None:
            pay_star, pay_plus, pay_bot = payload_in
        on_q = ctx.proc == self.q

        # bottom components are deterministic; run them first
        bot_results = []
        for i, a in enumerate(self.clos):
            pin = None if pay_bot is None else pay_bot[i]
            (ns, out, pay), = tuple(self.bots[a].step(st_bot[i], ctx, "•", pin))
            bot_results.append((ns, out is BOTTOM, pay))
        new_bot = tuple(r[0] for r in bot_results)
        bot_bits = {a: r[1] for a, r in zip(self.clos, bot_results)}
        bot_pay = tuple(r[2] for r in bot_results)

        def run_components(cores, states, pays, bit_choice):
            """Cartesian product of component moves for one bit assignment."""
            acc = [((), ())]
            for i, ab in enumerate(self.star_pairs):
                pin = None if pays is None else pays[i]
                gamma = bit_choice[i] if on_q else 0
                moves = list(cores[ab].step_with_bit(states[i], ctx, gamma, pin))
                acc = [
                    (ss + (ns,), pp + (pay,))
                    for ss, pp in acc
                    for ns, pay in moves
                ]
                if not acc:
                    return
            yield from acc

        n_pairs = len(self.star_pairs)
        if on_q:
            bit_space = itertools.product((0, 1), repeat=2 * n_pairs)
        else:
            bit_space = [(0,) * (2 * n_pairs)]
        for bits in bit_space:
            bits_star, bits_plus = bits[:n_pairs], bits[n_pairs:]
            if on_q:
                pre = self._combine(prev, bot_bits, bits_star, bits_plus)
                out = pre
            else:
                pre, out = prev, None
            for ss_star, pp_star in run_components(
                self.fix_star, st_star, pay_star, bits_star
            ):
                for ss_plus, pp_plus in run_components(
                    self.fix_plus, st_plus, pay_plus, bits_plus
                ):
                    payload = (
                        (pp_star, pp_plus, bot_pay)
                        if ctx.kind == "send"
                        else None
                    )
                    yield (ss_star, ss_plus, new_bot, pre), out, payload

    def _combine(self, prev, bot_bits, bits_star, bits_plus):
        star_bit = dict(zip(self.star_pairs, (b == 1 for b in bits_star)))
        plus_bit = dict(zip(self.star_pairs, (b == 1 for b in bits_plus)))
        return preorder_combine(self.clos, prev, bot_bits, star_bit, plus_bit)

    def final(self, state) -> bool:
        st_star, st_plus, _, _ = state
        return all(
            self.fix_star[ab].final(st_star[i])
            for i, ab in enumerate(self.star_pairs)
        ) and all(
            self.fix_plus[ab].final(st_plus[i])
            for i, ab in enumerate(self.star_pairs)
        )


# ---------------------------------------------------------------------------
# the machine wrapper
# ---------------------------------------------------------------------------


class AnnotationCfm(LazyCfm):
    """A LazyCfm over an annotated alphabet, plus its direct decision route.

    decide(ext) computes the machine's unique consistent internal valuation
    with the direct passes and compares annotations; it defines the same
    language as the transition relation (cross-validated by run search on
    small instances).  ``accepts`` dispatches to decide_encoded.
    """

    def __init__(
        self,
        name: str,
        starts,
        step_fn,
        final_ok,
        annotate: Callable[..., dict],
        decide: Callable[[ExtendedMsc], bool],
        canonical: Optional[Callable[[Msc], dict]] = None,
        signature: Optional[SystemSignature] = None,
    ):
        super().__init__(signature, starts, step_fn, final_ok, name)
        self._annotate_fn = annotate
        self._decide_fn = decide
        self._canonical_fn = canonical

    def annotate(self, m: Msc, *args, **kwargs) -> dict:
        """The canonical correct annotation."""
        return self._annotate_fn(m, *args, **kwargs)

    def decide(self, ext: ExtendedMsc) -> bool:
        return self._decide_fn(ext)

    def decide_encoded(self, m: Msc) -> bool:
        """Membership of a product-labeled MSC (as built by attach_annotation)."""
        return self._decide_fn(detach_annotation(m))

    def canonical_states(self, m: Msc) -> dict:
        """Per event, the structured state its process reaches in the unique
        accepting run on the correctly annotated MSC."""
        if self._canonical_fn is None:
            raise NotImplementedError(f"{self.name} has no canonical-state pass")
        return self._canonical_fn(m)


def _decode_label(label):
    if not (isinstance(label, tuple) and len(label) == 2):
        raise ValueError(f"expected (label, annotation) pairs, got {label!r}")
    return label


def _split_pair_annot(ext: ExtendedMsc) -> tuple[dict, dict]:
    xi1, xi2 = {}, {}
    for e, v in ext.annot.items():
        if not (isinstance(v, tuple) and len(v) == 2):
            raise ValueError(f"annotation at {e!r} is not a (ξ1, ξ2) pair")
        xi1[e], xi2[e] = v
    return xi1, xi2


def _pair_machine(
    core, name, annotate, decide, check_all: bool, check_proc: Optional[str] = None
) -> AnnotationCfm:
    """Wrap a θ-core whose annotations are (ξ1, ξ2) pairs."""

    def starts(p):
        return [core.start()]

    def step(p, state, kind, label, peer, msg_in):
        sigma, (xi1, xi2) = _decode_label(label)
        ctx = StepCtx(p, kind, peer, sigma)
        for new_state, out, payload in core.step(state, ctx, xi1, msg_in):
            if check_all or p == check_proc:
                if out != xi2:
                    continue
            yield new_state, payload

    def final_ok(p, state):
        return core.final(state)

    out = AnnotationCfm(name, starts, step, final_ok, annotate, decide)
    out.core = core
    return out


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_last_label_cfm(theta_set: Iterable[Hashable], pi: PathExpr) -> AnnotationCfm:
    """ξ: E → Θ×(Θ∪{⊥}) with ξ2(e) = ξ1(last_π(e)); checked at every event."""
    theta_set = tuple(theta_set)
    if BOTTOM in theta_set:
        raise ValueError("⊥ cannot be a member of Θ")

    def annotate(m, xi1):
        vals = last_value(m, pi, xi1)
        return {e: (xi1[e], vals[e]) for e in m.events}

    def decide(ext):
        xi1, xi2 = _split_pair_annot(ext)
        vals = last_value(ext.base, pi, xi1)
        return all(xi2[e] == vals[e] for e in ext.base.events)

    return _pair_machine(
        LastCore(pi),
        f"last-label[{format_path(pi)}]",
        annotate,
        decide,
        check_all=True,
    )


def build_first_label_cfm(theta_set: Iterable[Hashable], pi: PathExpr) -> AnnotationCfm:
    """ξ: E → Θ×(Θ∪{⊤}) with ξ2(e) = ξ1(first_π(e)); checked at every event."""
    theta_set = tuple(theta_set)
    if TOP in theta_set:
        raise ValueError("⊤ cannot be a member of Θ")

    def annotate(m, xi1):
        vals = first_value(m, pi, xi1)
        return {e: (xi1[e], vals[e]) for e in m.events}

    def decide(ext):
        xi1, xi2 = _split_pair_annot(ext)
        vals = first_value(ext.base, pi, xi1)
        return all(xi2[e] == vals[e] for e in ext.base.events)

    return _pair_machine(
        FirstCore(pi, theta_set),
        f"first-label[{format_path(pi)}]",
        annotate,
        decide,
        check_all=True,
    )


def build_fa_label_cfm(
    theta_set: Iterable[Hashable],
    p: str,
    q: str,
    pi: PathExpr,
    pi2: PathExpr,
    sig: Optional[SystemSignature] = None,
) -> AnnotationCfm:
    """ξ2(e) = ξ1(first_{π'}(last_π(e))) for e on process q."""
    theta_set = tuple(theta_set)
    if BOTTOM in theta_set or TOP in theta_set:
        raise ValueError("Θ must avoid the sentinels")
    if sig is not None:
        if (p, q) not in comp(sig, pi) or (p, q) not in comp(sig, pi2):
            raise PathError(f"paths are not both compatible with ({p},{q})")

    def annotate(m, xi1):
        vals = fa_value(m, pi, pi2, xi1)
        return {e: (xi1[e], vals[e] if m.loc[e] == q else xi1[e]) for e in m.events}

    def decide(ext):
        xi1, xi2 = _split_pair_annot(ext)
        vals = fa_value(ext.base, pi, pi2, xi1)
        return all(xi2[e] == vals[e] for e in ext.base.events_of(q))

    return _pair_machine(
        FaCore(pi, pi2, theta_set),
        f"fa-label[{format_path(pi)};{format_path(pi2)}]@{q}",
        annotate,
        decide,
        check_all=False,
        check_proc=q,
    )


def build_fixpoint_cfm(p: str, q: str, pi: PathExpr, pi2: PathExpr) -> AnnotationCfm:
    """(M,γ) with γ(e) = [first_{π'}(last_π(e)) = e] for every q-event."""
    core = FixCore(q, pi, pi2)

    def annotate(m):
        bits = fixpoint_bits(m, pi, pi2)
        return {e: (1 if bits[e] else 0) if m.loc[e] == q else 0 for e in m.events}

    def decide(ext):
        bits = fixpoint_bits(ext.base, pi, pi2)
        return all(
            ext.annot[e] == (1 if bits[e] else 0) for e in ext.base.events_of(q)
        )

    def starts(pp):
        return [core.start()]

    def step(pp, state, kind, label, peer, msg_in):
        sigma, gamma = _decode_label(label)
        ctx = StepCtx(pp, kind, peer, sigma)
        yield from core.step_with_bit(state, ctx, gamma, msg_in)

    def final_ok(pp, state):
        return core.final(state)

    out = AnnotationCfm(
        f"fixpoint[{format_path(pi)};{format_path(pi2)}]@{q}",
        starts,
        step,
        final_ok,
        annotate,
        decide,
        canonical=lambda m: fix_canonical_states(m, q, pi, pi2),
    )
    out.core = core
    return out


def build_preorder_cfm(
    p: str,
    q: str,
    paths: Iterable[PathExpr],
    sig: Optional[SystemSignature] = None,
) -> AnnotationCfm:
    """(M,γ) with γ(f) = the preorder ⪯_f over the given path set, on E_q."""
    paths = tuple(paths)
    if sig is not None:
        for pi in paths:
            pairs = comp(sig, pi)
            if not any(pq[1] == q for pq in pairs):
                raise PathError(f"mixed Comp pairs: {format_path(pi)} cannot end on {q}")
    core = PreorderCore(q, paths)

    def annotate(m):
        bits = preorder_bits(m, q, paths)
        empty = frozenset()
        return {
            e: ord_annotation(bits[e], paths) if m.loc[e] == q else empty
            for e in m.events
        }

    def decide(ext):
        bits = preorder_bits(ext.base, q, paths)
        return all(
            ext.annot[e] == ord_annotation(bits[e], paths)
            for e in ext.base.events_of(q)
        )

    def starts(pp):
        return [core.start()]

    def step(pp, state, kind, label, peer, msg_in):
        sigma, annot = _decode_label(label)
        ctx = StepCtx(pp, kind, peer, sigma)
        for new_state, out, payload in core.step(state, ctx, msg_in):
            if pp == q and annot != ord_annotation(out, paths):
                continue
            yield new_state, payload

    def final_ok(pp, state):
        return core.final(state)

    out = AnnotationCfm(
        f"preorder@{q}[{len(paths)} paths]",
        starts,
        step,
        final_ok,
        annotate,
        decide,
        canonical=lambda m: preorder_canonical_states(m, q, paths),
    )
    out.core = core
    return out


def gossip_value_encoding(v) -> Optional[str]:
    return None if v is BOTTOM else v


_NO_MAXIMUM = object()


def gossip_component_value(fam, pre_pairs: frozenset, values: dict):
    """One ξ-component: the last-label along a ⪯-maximal path (None if that
    last is ⊥); the sentinel when the claimed preorder has no maximum (which
    only happens under inconsistent guesses).  Shared by both machine routes.
    """
    maxima = [pi for pi in fam if all((other, pi) in pre_pairs for other in fam)]
    if not maxima:
        return _NO_MAXIMUM
    return gossip_value_encoding(values[maxima[0]])


def build_gossip_cfm(sig: SystemSignature) -> AnnotationCfm:
    """(M,ξ) with ξ(e) = (λ(latest p₁-event under e), ..., λ(latest p_k ...)).

    The annotation at each event is the tuple, in process order, of the label
    of the most recent event of that process in the strict causal past (None
    when there is none).  Internally each component value is obtained as the
    last-label along a ⪯-maximal gossip path, never from the causal order
    directly.
    """
    procs = sig.processes
    combos = [
        (src, tgt, gossip_paths_between(sig, src, tgt))
        for tgt in procs
        for src in procs
    ]
    pre_cores = [PreorderCore(tgt, fam) for _, tgt, fam in combos]
    val_cores = [[LastCore(pi) for pi in fam] for _, _, fam in combos]

    def annotate(m):
        # depends only on the base MSC; memoized so repeated membership
        # queries on the same MSC (mutation sweeps) cost one computation
        cached = m._caches.get(("gossip-annot",))
        if cached is not None:
            return cached
        out = {e: [] for e in m.events}
        for src, tgt, fam in combos:
            bits = preorder_bits(m, tgt, fam)
            lastlab = {pi: last_value(m, pi, dict(m.label)) for pi in fam}
            for e in m.events_of(tgt):
                val = gossip_component_value(
                    fam, bits[e], {pi: lastlab[pi][e] for pi in fam}
                )
                assert val is not _NO_MAXIMUM  # the true preorder is total
                out[e].append((src, val))
        result = {
            e: tuple(v for _, v in sorted(vals, key=lambda sv: procs.index(sv[0])))
            for e, vals in out.items()
        }
        m._caches[("gossip-annot",)] = result
        return result

    def decide(ext):
        want = annotate(ext.base)
        return all(ext.annot[e] == want[e] for e in ext.base.events)

    def starts(p):
        state = tuple(
            (pc.start(), tuple(vc.start() for vc in vcs))
            for pc, vcs in zip(pre_cores, val_cores)
        )
        return [state]

    def step(p, state, kind, label, peer, msg_in):
        sigma, xi = _decode_label(label)
        ctx = StepCtx(p, kind, peer, sigma)
        if not (isinstance(xi, tuple) and len(xi) == len(procs)):
            return
        xi_by_proc = dict(zip(procs, xi))

        def rec(i, acc_state, acc_payload):
            if i == len(combos):
                payload = tuple(acc_payload) if kind == "send" else None
                yield tuple(acc_state), payload
                return
            src, tgt, fam = combos[i]
            pc, vcs = pre_cores[i], val_cores[i]
            pc_state, vc_states = state[i]
            pin = None if msg_in is None else msg_in[i]
            pre_pin = None if pin is None else pin[0]
            val_pins = None if pin is None else pin[1]
            for new_pre, pre_out, pre_pay in pc.step(pc_state, ctx, pre_pin):
                vals_acc = [((), (), [])]
                for j, vc in enumerate(vcs):
                    vpin = None if val_pins is None else val_pins[j]
                    (ns, out, pay), = tuple(
                        vc.step(vc_states[j], ctx, sigma, vpin)
                    )
                    vals_acc = [
                        (ss + (ns,), pp + (pay,), outs + [out])
                        for ss, pp, outs in vals_acc
                    ]
                for vss, vpp, vouts in vals_acc:
                    if p == tgt:
                        want = gossip_component_value(
                            fam, pre_out, dict(zip(fam, vouts))
                        )
                        if want is _NO_MAXIMUM or xi_by_proc[src] != want:
                            continue
                    comp_pay = (pre_pay, vpp) if kind == "send" else None
                    yield from rec(
                        i + 1,
                        acc_state + [(new_pre, vss)],
                        acc_payload + [comp_pay],
                    )

        yield from rec(0, [], [])

    def final_ok(p, state):
        return all(pc.final(st[0]) for pc, st in zip(pre_cores, state))

    def canonical(m):
        parts = [
            (
                preorder_canonical_states(m, tgt, fam),
                [last_theta(m, pi, dict(m.label)) for pi in fam],
            )
            for _, tgt, fam in combos
        ]
        out = {}
        for e in m.events:
            out[e] = tuple(
                (
                    pre_states[e],
                    tuple(
                        tuple(th[e][pp] for pp in _prefixes(fam_pi))
                        for fam_pi, th in zip(combos[i][2], val_thetas)
                    ),
                )
                for i, (pre_states, val_thetas) in enumerate(parts)
            )
        return out

    out = AnnotationCfm(
        "gossip", starts, step, final_ok, annotate, decide, canonical=canonical
    )
    out.combos = combos
    out.pre_cores = pre_cores
    out.val_cores = val_cores
    return out


def oracle_gossip_annotation(m: Msc) -> ExtendedMsc:
    """Ground truth straight from the causal order (independent of the chain)."""
    from .msc import last_on_process

    annot = {}
    for e in m.events:
        vals = []
        for p in m.signature.processes:
            g = last_on_process(m, p, e)
            vals.append(None if g is BOTTOM else m.label[g])
        annot[e] = tuple(vals)
    return ExtendedMsc(m, annot)


# ---------------------------------------------------------------------------
# canonical runs and state reporting
# ---------------------------------------------------------------------------


def canonical_coloring(m: Msc, q: str, pi: PathExpr, pi2: PathExpr) -> dict:
    """A 4-coloring witnessing the correct fixpoint bits.

    q-events with bit 1 alternate the two real colors along the process;
    bit-0 q-events take a hatted color different from their fa-target's
    (the targets form a functional graph, so chains and even cycles can
    always be 2-colored); other processes get a fixed dummy color.
    """
    bits = fixpoint_bits(m, pi, pi2)
    targets = fa_target(m, pi, pi2)
    zeta = {e: "z1" for e in m.events}
    alt = "c2"
    for e in m.events_of(q):
        if bits[e]:
            alt = "c1" if alt == "c2" else "c2"
            zeta[e] = alt
    gray = [e for e in m.events_of(q) if not bits[e]]
    grayset = set(gray)
    succ = {e: targets[e] for e in gray if targets[e] in grayset}
    color: dict[str, str] = {}
    for start in gray:
        if start in color:
            continue
        chain = [start]
        cur = succ.get(start)
        while cur is not None and cur not in color and cur not in chain:
            chain.append(cur)
            cur = succ.get(cur)
        if cur is not None and cur in chain:
            cyc = chain[chain.index(cur) :]
            chain = chain[: chain.index(cur)]
            if len(cyc) % 2:
                raise AssertionError("odd fa-target cycle; no valid coloring")
            for i, x in enumerate(cyc):
                color[x] = "z1" if i % 2 == 0 else "z2"
        for x in reversed(chain):
            nxt = succ.get(x)
            color[x] = "z2" if color.get(nxt) == "z1" else "z1"
    zeta.update(color)
    return zeta


def fix_canonical_states(m: Msc, q: str, pi: PathExpr, pi2: PathExpr) -> dict:
    """Per event, the FixCore state on the unique accepting run."""
    zeta = canonical_coloring(m, q, pi, pi2)
    th5 = first_theta(m, pi2, zeta)
    chi = {e: th5[e][pi2] for e in m.events}
    th4 = last_theta(m, pi, chi)
    sufs = _suffixes(pi2)
    prefs = _prefixes(pi)
    bits = fixpoint_bits(m, pi, pi2)
    alt = {p: "c2" for p in m.signature.processes}
    out = {}
    for e in linearize(m):
        p = m.loc[e]
        if p == q and bits[e]:
            alt[p] = "c1" if alt[p] == "c2" else "c2"
        s5 = tuple(th5[e][s] for s in sufs)
        s4 = tuple(th4[e][s] for s in prefs)
        out[e] = ((s5, s4), alt[p])
    return out


def preorder_canonical_states(m: Msc, q: str, paths: tuple[PathExpr, ...]) -> dict:
    """Per event, the PreorderCore state on the unique accepting run."""
    clos = closure_with_star(paths)
    star_pairs = [(a, b) for a in clos for b in clos]
    fs = {
        ab: fix_canonical_states(m, q, ab[0], star_prepend(ab[1]))
        for ab in star_pairs
    }
    fp = {
        ab: fix_canonical_states(m, q, ab[0], plus_prepend(ab[1]))
        for ab in star_pairs
    }
    bots = {a: last_theta(m, a, {e: "•" for e in m.events}) for a in clos}
    bits = preorder_bits(m, q, paths)
    out = {}
    pre_now = None
    for e in linearize(m):
        if m.loc[e] == q:
            pre_now = bits[e]
        out[e] = (
            tuple(fs[ab][e] for ab in star_pairs),
            tuple(fp[ab][e] for ab in star_pairs),
            tuple(
                tuple(bots[a][e][pp] for pp in _prefixes(a)) for a in clos
            ),
            pre_now if m.loc[e] == q else None,
        )
    return out


def _simulate_core(m: Msc, start_fn, move_fn, final_fn) -> bool:
    """Replay one core over a linearization with real channel queues."""
    states = {p: start_fn(p) for p in m.signature.processes}
    chans: dict[tuple, list] = {}
    for e in linearize(m):
        p, kind, peer = m.loc[e], m.kind_of(e), m.peer_of(e)
        msg_in = chans[(peer, p)].pop(0) if kind == "recv" else None
        res = move_fn(e, StepCtx(p, kind, peer, m.label[e]), states[p], msg_in)
        if res is None:
            return False
        states[p], payload = res
        if kind == "send":
            chans.setdefault((p, peer), []).append(payload)
    return all(final_fn(p, s) for p, s in states.items())


def drive_fix_core(core: FixCore, m: Msc) -> bool:
    """True iff the FixCore's transition relation threads the canonical
    accepting run when fed the true fixpoint bits."""
    canon = fix_canonical_states(m, core.q, core.pi, core.pi2)
    bits = fixpoint_bits(m, core.pi, core.pi2)

    def move(e, ctx, state, msg_in):
        gamma = 1 if bits[e] else 0
        for ns, pay in core.step_with_bit(state, ctx, gamma, msg_in):
            if ns == canon[e]:
                return ns, pay
        return None

    return _simulate_core(m, lambda p: core.start(), move, lambda p, s: core.final(s))


def drive_last_core(core: LastCore, m: Msc, base: dict) -> bool:
    """Deterministic replay of a LastCore against its direct pass."""
    th = last_theta(m, core.pi, base)

    def move(e, ctx, state, msg_in):
        for ns, out, pay in core.step(state, ctx, base[e], msg_in):
            if ns == tuple(th[e][pp] for pp in core.prefs):
                return ns, pay
        return None

    return _simulate_core(m, lambda p: core.start(), move, lambda p, s: core.final(s))


def drive_preorder_components(core: PreorderCore, m: Msc) -> bool:
    """Drive every fixpoint and bottom component of a PreorderCore along its
    canonical run.  The product step is the cartesian combination of exactly
    these component moves plus the shared ⪯ recurrence (preorder_combine),
    so componentwise success certifies the composite transition relation.
    """
    dot = {e: "•" for e in m.events}
    return (
        all(drive_fix_core(core.fix_star[ab], m) for ab in core.star_pairs)
        and all(drive_fix_core(core.fix_plus[ab], m) for ab in core.star_pairs)
        and all(drive_last_core(core.bots[a], m, dot) for a in core.clos)
    )


def drive_gossip_components(machine: AnnotationCfm, m: Msc) -> bool:
    """Componentwise canonical-run certificate for the gossip machine."""
    labels = dict(m.label)
    for (src, tgt, fam), pc, vcs in zip(
        machine.combos, machine.pre_cores, machine.val_cores
    ):
        if not drive_preorder_components(pc, m):
            return False
        if not all(drive_last_core(vc, m, labels) for vc in vcs):
            return False
    return True


def reachable_state_report(machine: AnnotationCfm, mscs: Iterable[Msc]) -> dict:
    """Distinct structured states touched along canonical runs over a corpus."""
    per_proc: dict[str, set] = {}
    for m in mscs:
        canon = machine.canonical_states(m)
        for p in m.signature.processes:
            bucket = per_proc.setdefault(p, set())
            bucket.add("start")
            for e in m.events_of(p):
                bucket.add(canon[e])
    counts = {p: len(s) for p, s in sorted(per_proc.items())}
    return {"per_process": counts, "total": sum(counts.values())}
