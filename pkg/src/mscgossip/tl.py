"""Event-based temporal logic over MSCs: syntax, semantics, CFM compilation.

Formulas are evaluated at events.  The core connectives are label and process
atoms, boolean constants, negation, disjunction, a concurrency modality, and
strict until/since along the causal order.  Derived process-local modalities
(next/previous/non-strict until/first-observable) expand into the core.

``eval_tl`` is the brute-force semantic oracle (causal matrix only).
``compile_tl`` produces machines over Σ×{0,1} recognizing exactly the
correctly bit-annotated MSCs, built from the preorder construction chain:
a since formula reduces, after recoding subformula bits to a four-letter
alphabet, to a per-process-pair dominance test between two families of
letter-decorated paths, decided by the preorder machinery.  Until machines
are the mirror images of since machines for the mirrored operands.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Hashable, Iterable, Optional

from .cfm import attach_annotation
from .constructions import (
    AnnotationCfm,
    PreorderCore,
    StepCtx,
    last_value,
    preorder_bits,
)
from .msc import (
    ExtendedMsc,
    Msc,
    SystemSignature,
    causal_leq,
    causal_lt,
    mirror_msc,
)
from .paths import LabelTest, PathExpr, gossip_paths_between


class TlError(ValueError):
    """Malformed formula, bad syntax, or unsupported compilation target."""


# ---------------------------------------------------------------------------
# abstract syntax
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TlFormula:
    pass


@dataclass(frozen=True)
class Atom(TlFormula):
    letter: Hashable


@dataclass(frozen=True)
class Proc(TlFormula):
    proc: str


@dataclass(frozen=True)
class Bool(TlFormula):
    value: bool


@dataclass(frozen=True)
class Not(TlFormula):
    sub: TlFormula


@dataclass(frozen=True)
class Or(TlFormula):
    left: TlFormula
    right: TlFormula


@dataclass(frozen=True)
class And(TlFormula):
    left: TlFormula
    right: TlFormula


@dataclass(frozen=True)
class Co(TlFormula):
    """Holds at e iff some causally incomparable event satisfies the body."""

    sub: TlFormula


@dataclass(frozen=True)
class Until(TlFormula):
    """Strict until: a strictly later witness, the body along the strict gap."""

    left: TlFormula
    right: TlFormula


@dataclass(frozen=True)
class Since(TlFormula):
    """Strict since: the past dual of Until."""

    left: TlFormula
    right: TlFormula


@dataclass(frozen=True)
class NextOn(TlFormula):
    """X: the next event on the given process satisfies the body."""

    proc: str
    sub: TlFormula


@dataclass(frozen=True)
class PrevOn(TlFormula):
    """Y: the previous event on the given process satisfies the body."""

    proc: str
    sub: TlFormula


@dataclass(frozen=True)
class UntilOn(TlFormula):
    """Non-strict until restricted to the given process's events."""

    proc: str
    left: TlFormula
    right: TlFormula


@dataclass(frozen=True)
class ObsOn(TlFormula):
    """Holds at e iff the first event of the process not in e's past
    satisfies the body."""

    proc: str
    sub: TlFormula


CORE_TYPES = (Atom, Proc, Bool, Not, Or, Co, Until, Since)


# ---------------------------------------------------------------------------
# concrete syntax
# ---------------------------------------------------------------------------
#
#   formula  := orexpr (("U" | "S" | "Up_<proc>") orexpr)?
#   orexpr   := andexpr ("|" andexpr)*
#   andexpr  := unary ("&" unary)*
#   unary    := "!" unary | "co" unary
#             | "X_<proc>" unary | "Y_<proc>" unary | "O_<proc>" unary
#             | atom
#   atom     := "(" formula ")" | "@"<proc> | "true" | "false" | <identifier>

_TL_TOKEN = re.compile(
    r"\s*(?:(?P<lpar>\()|(?P<rpar>\))|(?P<bang>!)|(?P<bar>\|)|(?P<amp>&)"
    r"|(?P<at>@(?P<atproc>\w+))"
    r"|(?P<word>\w+))"
)

_SUGAR_UNARY = re.compile(r"(?P<op>[XYO])_(?P<proc>\w+)$")
_SUGAR_UNTIL = re.compile(r"Up_(?P<proc>\w+)$")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            mt = _TL_TOKEN.match(text, pos)
            if mt is None or mt.end() == pos:
                if text[pos:].strip() == "":
                    break
                raise TlError(f"syntax error at position {pos}: {text[pos:]!r}")
            pos = mt.end()
            if mt.group("lpar"):
                self.toks.append(("(", "(", mt.start()))
            elif mt.group("rpar"):
                self.toks.append((")", ")", mt.start()))
            elif mt.group("bang"):
                self.toks.append(("!", "!", mt.start()))
            elif mt.group("bar"):
                self.toks.append(("|", "|", mt.start()))
            elif mt.group("amp"):
                self.toks.append(("&", "&", mt.start()))
            elif mt.group("at"):
                self.toks.append(("@", mt.group("atproc"), mt.start()))
            else:
                self.toks.append(("word", mt.group("word"), mt.start()))
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None, len(self.text))

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def error(self, msg: str):
        _, _, at = self.peek()
        raise TlError(f"syntax error at position {at}: {msg}")

    def formula(self) -> TlFormula:
        left = self.orexpr()
        kind, val, _ = self.peek()
        if kind == "word":
            if val == "U":
                self.take()
                return Until(left, self.orexpr())
            if val == "S":
                self.take()
                return Since(left, self.orexpr())
            mu = _SUGAR_UNTIL.match(val)
            if mu:
                self.take()
                return UntilOn(mu.group("proc"), left, self.orexpr())
        return left

    def orexpr(self) -> TlFormula:
        out = self.andexpr()
        while self.peek()[0] == "|":
            self.take()
            out = Or(out, self.andexpr())
        return out

    def andexpr(self) -> TlFormula:
        out = self.unary()
        while self.peek()[0] == "&":
            self.take()
            out = And(out, self.unary())
        return out

    def unary(self) -> TlFormula:
        kind, val, _ = self.peek()
        if kind == "!":
            self.take()
            return Not(self.unary())
        if kind == "word":
            if val == "co":
                self.take()
                return Co(self.unary())
            mu = _SUGAR_UNARY.match(val)
            if mu:
                self.take()
                body = self.unary()
                op = mu.group("op")
                p = mu.group("proc")
                return {"X": NextOn, "Y": PrevOn, "O": ObsOn}[op](p, body)
        return self.atom()

    def atom(self) -> TlFormula:
        kind, val, _ = self.take()
        if kind == "(":
            out = self.formula()
            k, _, _ = self.take()
            if k != ")":
                self.error("expected ')'")
            return out
        if kind == "@":
            return Proc(val)
        if kind == "word":
            if val == "true":
                return Bool(True)
            if val == "false":
                return Bool(False)
            if val in ("U", "S", "co"):
                self.error(f"{val!r} is an operator, not an atom")
            return Atom(val)
        self.error("expected a formula")


def parse_tl(text: str) -> TlFormula:
    p = _Parser(text)
    out = p.formula()
    if p.i != len(p.toks):
        p.error("trailing input")
    return out


def format_tl(phi: TlFormula) -> str:
    """Canonical fully-parenthesized rendering; parse ∘ format = identity."""
    if isinstance(phi, Atom):
        return str(phi.letter)
    if isinstance(phi, Proc):
        return f"@{phi.proc}"
    if isinstance(phi, Bool):
        return "true" if phi.value else "false"
    if isinstance(phi, Not):
        return f"!{format_tl(phi.sub)}"
    if isinstance(phi, Or):
        return f"({format_tl(phi.left)} | {format_tl(phi.right)})"
    if isinstance(phi, And):
        return f"({format_tl(phi.left)} & {format_tl(phi.right)})"
    if isinstance(phi, Co):
        return f"co {_wrap(phi.sub)}"
    if isinstance(phi, Until):
        return f"({format_tl(phi.left)} U {format_tl(phi.right)})"
    if isinstance(phi, Since):
        return f"({format_tl(phi.left)} S {format_tl(phi.right)})"
    if isinstance(phi, NextOn):
        return f"X_{phi.proc} {_wrap(phi.sub)}"
    if isinstance(phi, PrevOn):
        return f"Y_{phi.proc} {_wrap(phi.sub)}"
    if isinstance(phi, UntilOn):
        return f"({format_tl(phi.left)} Up_{phi.proc} {format_tl(phi.right)})"
    if isinstance(phi, ObsOn):
        return f"O_{phi.proc} {_wrap(phi.sub)}"
    raise TlError(f"unknown formula node {phi!r}")


def _wrap(phi: TlFormula) -> str:
    s = format_tl(phi)
    return s if s.startswith(("(", "!", "@")) or " " not in s else f"({s})"


# ---------------------------------------------------------------------------
# derived-modality expansion
# ---------------------------------------------------------------------------


def _and(l: TlFormula, r: TlFormula) -> TlFormula:
    return Not(Or(Not(l), Not(r)))


def expand_derived(phi: TlFormula) -> TlFormula:
    """Eliminate sugar, producing the core connectives only."""
    if isinstance(phi, (Atom, Proc, Bool)):
        return phi
    if isinstance(phi, Not):
        return Not(expand_derived(phi.sub))
    if isinstance(phi, Or):
        return Or(expand_derived(phi.left), expand_derived(phi.right))
    if isinstance(phi, Co):
        return Co(expand_derived(phi.sub))
    if isinstance(phi, Until):
        return Until(expand_derived(phi.left), expand_derived(phi.right))
    if isinstance(phi, Since):
        return Since(expand_derived(phi.left), expand_derived(phi.right))
    if isinstance(phi, And):
        return _and(expand_derived(phi.left), expand_derived(phi.right))
    if isinstance(phi, NextOn):
        p, body = Proc(phi.proc), expand_derived(phi.sub)
        return Until(Not(p), _and(p, body))
    if isinstance(phi, PrevOn):
        p, body = Proc(phi.proc), expand_derived(phi.sub)
        return Since(Not(p), _and(p, body))
    if isinstance(phi, UntilOn):
        p = Proc(phi.proc)
        f1, f2 = expand_derived(phi.left), expand_derived(phi.right)
        now = _and(p, f2)
        keep = Or(Not(p), f1)
        return Or(now, _and(keep, Until(keep, now)))
    if isinstance(phi, ObsOn):
        p = phi.proc
        body = phi.sub
        never_before = And(Not(PrevOn(p, Bool(True))), body)
        return expand_derived(
            Or(
                PrevOn(p, NextOn(p, body)),
                Or(
                    Co(And(Proc(p), never_before)),
                    NextOn(p, never_before),
                ),
            )
        )
    raise TlError(f"unknown formula node {phi!r}")


def mirror_formula(phi: TlFormula) -> TlFormula:
    """Time reversal on core formulas: until and since swap roles."""
    if isinstance(phi, (Atom, Proc, Bool)):
        return phi
    if isinstance(phi, Not):
        return Not(mirror_formula(phi.sub))
    if isinstance(phi, Or):
        return Or(mirror_formula(phi.left), mirror_formula(phi.right))
    if isinstance(phi, Co):
        return Co(mirror_formula(phi.sub))
    if isinstance(phi, Until):
        return Since(mirror_formula(phi.left), mirror_formula(phi.right))
    if isinstance(phi, Since):
        return Until(mirror_formula(phi.left), mirror_formula(phi.right))
    return mirror_formula(expand_derived(phi))


def subformula_atoms(phi: TlFormula) -> set:
    if isinstance(phi, Atom):
        return {phi.letter}
    out = set()
    for f in getattr(phi, "__dataclass_fields__", {}):
        v = getattr(phi, f)
        if isinstance(v, TlFormula):
            out |= subformula_atoms(v)
    return out


# ---------------------------------------------------------------------------
# brute-force semantics (the oracle)
# ---------------------------------------------------------------------------


def eval_tl(m: Msc, phi: TlFormula) -> dict[str, bool]:
    """Per-event truth values straight from the causal matrix."""
    if isinstance(phi, Atom):
        return {e: m.label[e] == phi.letter for e in m.events}
    if isinstance(phi, Proc):
        return {e: m.loc[e] == phi.proc for e in m.events}
    if isinstance(phi, Bool):
        return {e: phi.value for e in m.events}
    if isinstance(phi, Not):
        v = eval_tl(m, phi.sub)
        return {e: not v[e] for e in m.events}
    if isinstance(phi, Or):
        v1, v2 = eval_tl(m, phi.left), eval_tl(m, phi.right)
        return {e: v1[e] or v2[e] for e in m.events}
    if isinstance(phi, Co):
        v = eval_tl(m, phi.sub)
        return {
            e: any(
                v[f]
                and not causal_lt(m, e, f)
                and not causal_lt(m, f, e)
                and e != f
                for f in m.events
            )
            for e in m.events
        }
    if isinstance(phi, Until):
        v1, v2 = eval_tl(m, phi.left), eval_tl(m, phi.right)
        out = {}
        for e in m.events:
            out[e] = any(
                causal_lt(m, e, f)
                and v2[f]
                and all(
                    v1[g]
                    for g in m.events
                    if causal_lt(m, e, g) and causal_lt(m, g, f)
                )
                for f in m.events
            )
        return out
    if isinstance(phi, Since):
        v1, v2 = eval_tl(m, phi.left), eval_tl(m, phi.right)
        out = {}
        for e in m.events:
            out[e] = any(
                causal_lt(m, f, e)
                and v2[f]
                and all(
                    v1[g]
                    for g in m.events
                    if causal_lt(m, f, g) and causal_lt(m, g, e)
                )
                for f in m.events
            )
        return out
    if isinstance(phi, And):
        v1, v2 = eval_tl(m, phi.left), eval_tl(m, phi.right)
        return {e: v1[e] and v2[e] for e in m.events}
    if isinstance(phi, NextOn):
        # the first p-event strictly above e satisfies the body
        v = eval_tl(m, phi.sub)
        out = {}
        for e in m.events:
            above = [
                f
                for f in m.events_of(phi.proc)
                if causal_lt(m, e, f)
            ]
            nxt = [
                f
                for f in above
                if not any(causal_lt(m, g, f) for g in above if g != f)
            ]
            out[e] = bool(nxt) and v[nxt[0]]
        return out
    if isinstance(phi, PrevOn):
        v = eval_tl(m, phi.sub)
        out = {}
        for e in m.events:
            below = [
                f
                for f in m.events_of(phi.proc)
                if causal_lt(m, f, e)
            ]
            prv = [
                f
                for f in below
                if not any(causal_lt(m, f, g) for g in below if g != f)
            ]
            out[e] = bool(prv) and v[prv[0]]
        return out
    if isinstance(phi, UntilOn):
        # non-strict until over the p-events at or above e
        v1, v2 = eval_tl(m, phi.left), eval_tl(m, phi.right)
        p = phi.proc
        out = {}
        for e in m.events:
            if m.loc[e] == p and v2[e]:
                out[e] = True
                continue
            ok = False
            for f in m.events_of(p):
                if not causal_lt(m, e, f) or not v2[f]:
                    continue
                gap = [
                    g
                    for g in m.events_of(p)
                    if causal_lt(m, g, f) and (g == e or causal_lt(m, e, g))
                ]
                if all(v1[g] for g in gap):
                    ok = True
                    break
            out[e] = ok
        return out
    return eval_tl(m, expand_derived(phi))


# ---------------------------------------------------------------------------
# compilation to bit-annotated machines
# ---------------------------------------------------------------------------


ABCD = ("a", "b", "c", "d")


def _recode(b1: int, b2: int) -> str:
    """Two subformula bits to the four-letter alphabet: a=11, b=10, c=01, d=00."""
    return ABCD[(1 - b1) * 2 + (1 - b2)]


def _label_prepend(letter: str, pi: PathExpr) -> PathExpr:
    return PathExpr((LabelTest(letter),) + pi.symbols)


def _label_join(pi1: PathExpr, letter: str, pi2: PathExpr) -> PathExpr:
    return PathExpr(pi1.symbols + (LabelTest(letter),) + pi2.symbols)


def since_path_sets(
    sig: SystemSignature, src: str, tgt: str
) -> tuple[tuple[PathExpr, ...], tuple[PathExpr, ...]]:
    """The two letter-decorated families compared at each tgt-event.

    Left: paths from a src-event satisfying the witness letters (a or c)
    straight to tgt.  Right: paths from src that pass through an intermediate
    event violating the gap letters (c or d) on the way to tgt.  The witness
    condition "some left strictly dominates every right" then says: the most
    recent witness is more recent than any src-event whose connection to here
    crosses a gap violation.
    """
    left = []
    for letter in ("a", "c"):
        for pi in gossip_paths_between(sig, src, tgt):
            left.append(_label_prepend(letter, pi))
    right = []
    for r in sig.processes:
        for pi1 in gossip_paths_between(sig, src, r):
            for letter in ("c", "d"):
                for pi2 in gossip_paths_between(sig, r, tgt):
                    cand = _label_join(pi1, letter, pi2)
                    if cand not in right:
                        right.append(cand)
    return tuple(left), tuple(right)


def _dominates(pre_pairs: frozenset, left, right) -> bool:
    """Some left path strictly above every right path in the total preorder."""
    return any(all((l, r) not in pre_pairs for r in right) for l in left)


def _abcd_msc(m: Msc, bits1: dict, bits2: dict) -> Msc:
    sig = SystemSignature(m.signature.processes, ABCD)
    events = [(e, m.loc[e], _recode(bits1[e], bits2[e])) for e in m.events]
    return Msc(sig, events, m.msg)


def _bit_of(annot) -> int:
    if annot not in (0, 1):
        raise TlError(f"annotation {annot!r} is not a bit")
    return annot


class _TlMachine(AnnotationCfm):
    """Compiled formula machine: bit annotations over Σ×{0,1}.

    Annotations are cached on the MSC (they do not depend on the claimed
    bits), so deciding many mutations of one instance costs one computation.
    """

    def __init__(self, phi, sig, starts, step_fn, final_ok, annotate_fn):
        name = f"tl[{format_tl(phi)}]"

        def annotate_cached(m):
            key = ("tl-annot", name)
            if key not in m._caches:
                m._caches[key] = annotate_fn(m)
            return m._caches[key]

        def decide(ext):
            want = annotate_cached(ext.base)
            return all(_bit_of(ext.annot[e]) == want[e] for e in ext.base.events)

        super().__init__(
            name,
            starts,
            step_fn,
            final_ok,
            annotate_cached,
            decide,
            signature=None,
        )
        self.formula = phi
        self.base_signature = sig


def _checker_machine(phi, sig, holds) -> _TlMachine:
    """One-state machine for connectives decidable from the event itself."""

    def starts(p):
        return ["s"]

    def step(p, state, kind, label, peer, msg_in):
        sigma, bit = label
        if _bit_of(bit) == (1 if holds(p, sigma) else 0):
            yield "s", None

    def annotate(m):
        return {e: (1 if holds(m.loc[e], m.label[e]) else 0) for e in m.events}

    return _TlMachine(phi, sig, starts, step, lambda p, s: True, annotate)


def _not_machine(phi, sig, inner: _TlMachine) -> _TlMachine:
    def starts(p):
        return inner._starts(p)

    def step(p, state, kind, label, peer, msg_in):
        sigma, bit = label
        yield from inner._step(p, state, kind, (sigma, 1 - _bit_of(bit)), peer, msg_in)

    def annotate(m):
        sub = inner._annotate_fn(m)
        return {e: 1 - sub[e] for e in m.events}

    return _TlMachine(phi, sig, starts, step, inner._final, annotate)


def _or_machine(phi, sig, m1: _TlMachine, m2: _TlMachine) -> _TlMachine:
    def starts(p):
        return [(s1, s2) for s1 in m1._starts(p) for s2 in m2._starts(p)]

    def step(p, state, kind, label, peer, msg_in):
        sigma, bit = label
        bit = _bit_of(bit)
        s1, s2 = state
        in1 = in2 = None
        if msg_in is not None:
            in1, in2 = msg_in
        for b1 in (0, 1):
            for b2 in (0, 1):
                if (b1 | b2) != bit:
                    continue
                for n1, p1 in m1._step(p, s1, kind, (sigma, b1), peer, in1):
                    for n2, p2 in m2._step(p, s2, kind, (sigma, b2), peer, in2):
                        payload = (p1, p2) if kind == "send" else None
                        yield (n1, n2), payload

    def final_ok(p, state):
        return m1._final(p, state[0]) and m2._final(p, state[1])

    def annotate(m):
        v1, v2 = m1._annotate_fn(m), m2._annotate_fn(m)
        return {e: v1[e] | v2[e] for e in m.events}

    return _TlMachine(phi, sig, starts, step, final_ok, annotate)


def _since_machine(phi, sig, m1: _TlMachine, m2: _TlMachine) -> _TlMachine:
    """The dominance test per (src, tgt) pair over the abcd recoding.

    The bit at an event on process tgt is 1 iff, for some src, the most
    recent src-witness (letters a/c) strictly dominates every src-event whose
    path to here crosses a letter in {c, d}; dominance is read off the
    preorder machinery over the decorated path families.
    """
    procs = sig.processes
    combos = []
    for tgt in procs:
        for src in procs:
            lf, rt = since_path_sets(sig, src, tgt)
            paths = tuple(dict.fromkeys(lf + rt))
            combos.append((src, tgt, lf, rt, paths))
    cores = [PreorderCore(tgt, paths) for _, tgt, _, _, paths in combos]

    def starts(p):
        base = [
            (s1, s2, tuple(c.start() for c in cores))
            for s1 in m1._starts(p)
            for s2 in m2._starts(p)
        ]
        return base

    def step(p, state, kind, label, peer, msg_in):
        sigma, bit = label
        bit = _bit_of(bit)
        s1, s2, core_states = state
        in1 = in2 = core_ins = None
        if msg_in is not None:
            in1, in2, core_ins = msg_in

        def core_rec(i, acc_state, acc_pay, dom, ctx):
            if i == len(combos):
                yield tuple(acc_state), tuple(acc_pay), dom
                return
            src, tgt, lf, rt, paths = combos[i]
            cin = None if core_ins is None else core_ins[i]
            for ns, out, cpay in cores[i].step(core_states[i], ctx, cin):
                new_dom = dom
                if p == tgt:
                    new_dom = dom or _dominates(out, lf, rt)
                yield from core_rec(
                    i + 1, acc_state + [ns], acc_pay + [cpay], new_dom, ctx
                )

        for b1 in (0, 1):
            for b2 in (0, 1):
                ctx = StepCtx(p, kind, peer, _recode(b1, b2))
                for n1, p1 in m1._step(p, s1, kind, (sigma, b1), peer, in1):
                    for n2, p2 in m2._step(p, s2, kind, (sigma, b2), peer, in2):
                        for cs, cp, dom in core_rec(0, [], [], False, ctx):
                            if (1 if dom else 0) != bit:
                                continue
                            payload = (
                                (p1, p2, cp) if kind == "send" else None
                            )
                            yield (n1, n2, cs), payload

    def final_ok(p, state):
        s1, s2, core_states = state
        return (
            m1._final(p, s1)
            and m2._final(p, s2)
            and all(c.final(cs) for c, cs in zip(cores, core_states))
        )

    def annotate(m):
        # dominance read off the last events directly: (l,r) is in the
        # preorder iff last_l(e) <= last_r(e), so "l strictly above every r"
        # is a causal comparison of last values; one pass per decorated path
        v1, v2 = m1._annotate_fn(m), m2._annotate_fn(m)
        recoded = _abcd_msc(m, v1, v2)
        ident = {e: e for e in m.events}
        lasts: dict[PathExpr, dict] = {}
        out = {e: 0 for e in m.events}
        for src, tgt, lf, rt, paths in combos:
            for pi in paths:
                if pi not in lasts:
                    lasts[pi] = last_value(recoded, pi, ident)
            for e in m.events_of(tgt):
                if out[e]:
                    continue
                if any(
                    all(
                        not causal_leq(recoded, lasts[l][e], lasts[r][e])
                        for r in rt
                    )
                    for l in lf
                ):
                    out[e] = 1
        return out

    return _TlMachine(phi, sig, starts, step, final_ok, annotate)


def _until_machine(phi, sig, since: _TlMachine) -> _TlMachine:
    """Mirror image of the since machine built for the mirrored operands."""

    def starts(p):
        raise TlError(
            "the until machine's transition relation is the mirror of its "
            "since core and cannot be searched forward; use accepts()"
        )

    def step(p, state, kind, label, peer, msg_in):
        starts(p)

    def annotate(m):
        key = ("tl-mirror",)
        if key not in m._caches:
            m._caches[key] = mirror_msc(m)
        return since._annotate_fn(m._caches[key])

    return _TlMachine(phi, sig, starts, step, lambda p, s: False, annotate)


def compile_since(
    p: str, q: str, sig: SystemSignature
) -> AnnotationCfm:
    """The single-pair dominance machine over the four-letter alphabet.

    Reads (letter, bit) pairs with letter in {a, b, c, d}; the bit on
    q-events must be 1 iff some decorated left path from p strictly
    dominates every right path.  Events off q must carry bit 0.
    """
    if p not in sig.processes or q not in sig.processes:
        raise TlError(f"unknown process in pair ({p!r}, {q!r})")
    lf, rt = since_path_sets(sig, p, q)
    paths = tuple(dict.fromkeys(lf + rt))
    core = PreorderCore(q, paths)
    abcd_sig = SystemSignature(sig.processes, ABCD)

    def starts(pp):
        return [core.start()]

    def step(pp, state, kind, label, peer, msg_in):
        sigma, bit = label
        bit = _bit_of(bit)
        if sigma not in ABCD:
            return
        ctx = StepCtx(pp, kind, peer, sigma)
        for ns, out, pay in core.step(state, ctx, msg_in):
            if pp == q:
                if (1 if _dominates(out, lf, rt) else 0) != bit:
                    continue
            elif bit != 0:
                continue
            yield ns, pay

    def final_ok(pp, state):
        return core.final(state)

    def annotate(m):
        pb = preorder_bits(m, q, paths)
        out = {e: 0 for e in m.events}
        for e in m.events_of(q):
            out[e] = 1 if _dominates(pb[e], lf, rt) else 0
        return out

    def decide(ext):
        want = annotate(ext.base)
        return all(_bit_of(ext.annot[e]) == want[e] for e in ext.base.events)

    out = AnnotationCfm(
        f"since[{p}->{q}]", starts, step, final_ok, annotate, decide
    )
    out.core = core
    out.left_paths = lf
    out.right_paths = rt
    out.base_signature = abcd_sig
    return out


def compile_tl(phi: TlFormula, sig: SystemSignature) -> AnnotationCfm:
    """Machine over Σ×{0,1} accepting exactly the correctly bit-annotated
    MSCs: the bit at every event equals the formula's truth value there."""
    phi = expand_derived(phi)
    return _compile_core(phi, sig)


def _compile_core(phi, sig) -> _TlMachine:
    if isinstance(phi, Atom):
        return _checker_machine(phi, sig, lambda p, s: s == phi.letter)
    if isinstance(phi, Proc):
        if phi.proc not in sig.processes:
            raise TlError(f"unknown process {phi.proc!r}")
        return _checker_machine(phi, sig, lambda p, s: p == phi.proc)
    if isinstance(phi, Bool):
        return _checker_machine(phi, sig, lambda p, s: phi.value)
    if isinstance(phi, Not):
        return _not_machine(phi, sig, _compile_core(phi.sub, sig))
    if isinstance(phi, Or):
        return _or_machine(
            phi, sig, _compile_core(phi.left, sig), _compile_core(phi.right, sig)
        )
    if isinstance(phi, Since):
        return _since_machine(
            phi, sig, _compile_core(phi.left, sig), _compile_core(phi.right, sig)
        )
    if isinstance(phi, Until):
        mirrored = Since(mirror_formula(phi.left), mirror_formula(phi.right))
        return _until_machine(phi, sig, _compile_core(mirrored, sig))
    if isinstance(phi, Co):
        raise TlError(
            "unsupported: external construction (the concurrency modality's "
            "machine is delegated to prior work and is not compiled here)"
        )
    raise TlError(f"cannot compile {phi!r}")


# ---------------------------------------------------------------------------
# the acceptance harness
# ---------------------------------------------------------------------------


def check_translation(
    phi: TlFormula, m: Msc, sig: Optional[SystemSignature] = None
) -> tuple[bool, list[str]]:
    """True iff the compiled machine accepts the oracle bits and rejects
    every single-bit mutation; the diff lists each failing case."""
    from .cfm import accepts

    sig = sig or m.signature
    machine = compile_tl(phi, sig)
    want = eval_tl(m, phi)
    bits = {e: (1 if want[e] else 0) for e in m.events}
    diffs: list[str] = []
    if not accepts(machine, attach_annotation(ExtendedMsc(m, bits))):
        diffs.append("correct annotation rejected")
    for e in m.events:
        flipped = dict(bits)
        flipped[e] = 1 - bits[e]
        if accepts(machine, attach_annotation(ExtendedMsc(m, flipped))):
            diffs.append(f"mutation at {e!r} accepted")
    return not diffs, diffs
