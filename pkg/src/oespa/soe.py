"""Sequential operation expression AST, write sets and validity checking.

Terms are write operations (simple, conditional, multi-choice, simultaneous
composition, array comprehension); nodes add sequencing, guarding, fixed
powers and guarded loops.  `validate` checks semantic determinism: multi
choice branches and simultaneous writers must agree wherever their guards
overlap, and conditional expressions must be total where that is decidable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import expr as E
from .errors import TypeCheckError
from .expr import (
    FALSE, TRUE, And, Cmp, Cond, Expr, IntLit, Not, Or, TestGrid, TypeEnv,
    Var, VarRef, eval_expr, expr_key, free_names, grid_states, normalize,
    sat_decide, to_text,
)


class Term:
    __slots__ = ()


@dataclass(frozen=True)
class SimpleWrite(Term):
    target: VarRef
    value: Expr


@dataclass(frozen=True)
class Epsilon(Term):
    pass


@dataclass(frozen=True)
class CondWrite(Term):
    target: VarRef
    value: Expr
    guard: Expr


@dataclass(frozen=True)
class MultiChoiceWrite(Term):
    target: VarRef
    branches: tuple  # of (value, guard)


@dataclass(frozen=True)
class MultiTerm(Term):
    parts: tuple  # simultaneous composition of write terms


@dataclass(frozen=True)
class GuardedMulti(Term):
    body: MultiTerm
    guard: Expr


@dataclass(frozen=True)
class ArrayComp(Term):
    array: str
    index: str
    guard: Expr  # over the index variable
    value: Expr  # over the index variable


class SoeNode:
    __slots__ = ()


@dataclass(frozen=True)
class TermNode(SoeNode):
    term: Term


@dataclass(frozen=True)
class Seq(SoeNode):
    left: SoeNode
    right: SoeNode


@dataclass(frozen=True)
class Guarded(SoeNode):
    body: SoeNode
    guard: Expr


@dataclass(frozen=True)
class Power(SoeNode):
    body: SoeNode
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise TypeCheckError("power exponent must be >= 1")


@dataclass(frozen=True)
class Loop(SoeNode):
    body: SoeNode
    until: Expr  # evaluated on the running state


def seq_of(nodes) -> SoeNode:
    """Left-nested sequence of the given nodes."""
    nodes = list(nodes)
    out = nodes[0]
    for n in nodes[1:]:
        out = Seq(out, n)
    return out


# ---------------------------------------------------------------------------
# Write sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WriteSet:
    """Variables a node may write.  Whole-array entries are conservative:
    they subsume every element of that array."""

    refs: frozenset

    def names(self) -> set:
        return {r.name for r in self.refs}

    def contains_name(self, name: str) -> bool:
        return name in self.names()

    def contains(self, ref: VarRef) -> bool:
        for r in self.refs:
            if r.name != ref.name:
                continue
            if r.whole or ref.whole:
                return True
            if r.index is None and ref.index is None:
                return True
            if r.index is not None and ref.index is not None:
                if expr_key(r.index) == expr_key(ref.index):
                    return True
                if not (isinstance(r.index, IntLit) and isinstance(ref.index, IntLit)):
                    return True  # may alias
        return False

    def union(self, other: "WriteSet") -> "WriteSet":
        return WriteSet(self.refs | other.refs)

    def isdisjoint_names(self, names) -> bool:
        return self.names().isdisjoint(names)


def _term_targets(t: Term) -> list:
    if isinstance(t, SimpleWrite):
        return [t.target]
    if isinstance(t, Epsilon):
        return []
    if isinstance(t, CondWrite):
        return [t.target]
    if isinstance(t, MultiChoiceWrite):
        return [t.target]
    if isinstance(t, MultiTerm):
        out = []
        for p in t.parts:
            out.extend(_term_targets(p))
        return out
    if isinstance(t, GuardedMulti):
        return _term_targets(t.body)
    if isinstance(t, ArrayComp):
        return [VarRef(t.array, whole=True)]
    raise TypeError(f"unknown term {t!r}")


def write_set(p: SoeNode) -> WriteSet:
    """Exactly the variables syntactically written anywhere in p."""
    if isinstance(p, TermNode):
        refs = []
        for r in _term_targets(p.term):
            if r.index is not None and not isinstance(r.index, IntLit):
                refs.append(VarRef(r.name, whole=True))  # may touch any element
            else:
                refs.append(r)
        return WriteSet(frozenset(refs))
    if isinstance(p, Seq):
        return write_set(p.left).union(write_set(p.right))
    if isinstance(p, (Guarded, Loop)):
        return write_set(p.body)
    if isinstance(p, Power):
        return write_set(p.body)
    raise TypeError(f"unknown node {p!r}")


# ---------------------------------------------------------------------------
# Effective writes (shared with the final-map engine and the interpreter)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WriteIntent:
    """One guarded write: target gets value when guard holds (guard over the
    pre-state).  Array-comprehension writes are expanded per element."""

    target: VarRef
    value: Expr
    guard: Expr


def effective_writes(t: Term, env: TypeEnv) -> list:
    """Flatten a term into guarded element-level write intents."""
    if isinstance(t, Epsilon):
        return []
    if isinstance(t, SimpleWrite):
        return _target_writes(t.target, t.value, TRUE, env)
    if isinstance(t, CondWrite):
        return _target_writes(t.target, t.value, t.guard, env)
    if isinstance(t, MultiChoiceWrite):
        out = []
        for value, guard in t.branches:
            out.extend(_target_writes(t.target, value, guard, env))
        return out
    if isinstance(t, MultiTerm):
        out = []
        for p in t.parts:
            out.extend(effective_writes(p, env))
        return out
    if isinstance(t, GuardedMulti):
        inner = effective_writes(t.body, env)
        return [WriteIntent(w.target, w.value, And((t.guard, w.guard)))
                for w in inner]
    if isinstance(t, ArrayComp):
        out = []
        for k in range(env.array_length()):
            s = E.Subst(scalars={t.index: IntLit(k)})
            guard_k = E._subst_raw(t.guard, s, env)
            value_k = E._subst_raw(t.value, s, env)
            out.append(WriteIntent(VarRef(t.array, index=IntLit(k)), value_k, guard_k))
        return out
    raise TypeError(f"unknown term {t!r}")


def _target_writes(target: VarRef, value: Expr, guard: Expr, env: TypeEnv) -> list:
    if target.whole:
        if not (isinstance(value, Var) and value.ref.whole):
            raise TypeCheckError(
                f"whole-array write to {target.name} requires an array source")
        return [WriteIntent(VarRef(target.name, index=IntLit(k)),
                            E.av(value.ref.name, IntLit(k)), guard)
                for k in range(env.array_length())]
    return [WriteIntent(target, value, guard)]


# ---------------------------------------------------------------------------
# Validity checking
# ---------------------------------------------------------------------------

@dataclass
class Violation:
    kind: str
    location: str
    detail: str
    witness: dict | None = None

    def to_json(self):
        w = None
        if self.witness is not None:
            w = {k: v for k, v in self.witness.items()}
        return {"kind": self.kind, "location": self.location,
                "detail": self.detail, "witness": w}


@dataclass
class ValidityReport:
    status: str  # 'valid' | 'invalid'
    violations: list = field(default_factory=list)

    def to_json(self):
        return {"status": self.status,
                "violations": [v.to_json() for v in self.violations]}

    def __bool__(self):
        return self.status == "valid"


def _conflict_witness(g1, g2, v1, v2, extra, env, grid) -> dict | None:
    """State where both guards hold and the values differ."""
    names = set()
    for e in (g1, g2, v1, v2, *extra):
        free_names(e, names)
    names = {n for n in names if env.is_declared(n)}
    consts: set = set()
    for e in (g1, g2, v1, v2):
        E._int_constants(e, consts)
    for st in grid_states(env, names, grid, tuple(consts)):
        try:
            if not (eval_expr(g1, st) and eval_expr(g2, st)):
                continue
            if all(eval_expr(x, st) for x in extra) and eval_expr(v1, st) != eval_expr(v2, st):
                return st
        except E.EvalError:
            continue
    return None


def _check_write_pair(w1: WriteIntent, w2: WriteIntent, env, grid, loc, out):
    if w1.target.name != w2.target.name:
        return
    extra = []
    if w1.target.index is not None and w2.target.index is not None:
        i1, i2 = w1.target.index, w2.target.index
        if isinstance(i1, IntLit) and isinstance(i2, IntLit) and i1.value != i2.value:
            return
        extra = [Cmp("=", i1, i2)]
    g1 = normalize(w1.guard, env)
    g2 = normalize(w2.guard, env)
    overlap = [g1, g2] + [normalize(x, env) for x in extra]
    if sat_decide(overlap) is False:
        return
    # provably equal values under the overlap?
    same = E.equivalent(w1.value, w2.value, env, grid)
    if same.status == "equal":
        return
    diff = E._cmp_norm(Cmp("!=", w1.value, w2.value), env, True)
    if sat_decide(overlap + [diff]) is False:
        return
    witness = _conflict_witness(w1.guard, w2.guard, w1.value, w2.value,
                                extra, env, grid)
    if witness is not None:
        out.append(Violation(
            kind="conflicting-writes", location=loc,
            detail=(f"{w1.target.pretty()} written with distinct values "
                    f"{to_text(w1.value)} / {to_text(w2.value)}"),
            witness=witness))
    # undecided without a witness: tolerated (may be spurious aliasing)


def _check_cond_total(c: Cond, env, grid, loc, out):
    cover = Or(tuple(g for _, g in c.branches))
    n = normalize(cover, env)
    if n == TRUE:
        return
    names = {n2 for n2 in free_names(cover) if env.is_declared(n2)}
    consts: set = set()
    E._int_constants(cover, consts)
    for st in grid_states(env, names, grid, tuple(consts)):
        try:
            if not eval_expr(cover, st):
                out.append(Violation(
                    kind="cond-undefined", location=loc,
                    detail=f"no guard true in {to_text(c)}", witness=st))
                return
        except E.EvalError:
            continue


def _check_cond_overlap(c: Cond, env, grid, loc, out):
    for i in range(len(c.branches)):
        for j in range(i + 1, len(c.branches)):
            v1, g1 = c.branches[i]
            v2, g2 = c.branches[j]
            witness = _conflict_witness(g1, g2, v1, v2, [], env, grid)
            if witness is not None:
                out.append(Violation(
                    kind="cond-ambiguous", location=loc,
                    detail=(f"overlapping guards select {to_text(v1)} and "
                            f"{to_text(v2)}"), witness=witness))
                return


def _exprs_of_term(t: Term) -> list:
    if isinstance(t, SimpleWrite):
        out = [t.value]
        if t.target.index is not None:
            out.append(t.target.index)
        return out
    if isinstance(t, Epsilon):
        return []
    if isinstance(t, CondWrite):
        out = [t.value, t.guard]
        if t.target.index is not None:
            out.append(t.target.index)
        return out
    if isinstance(t, MultiChoiceWrite):
        out = []
        for v, g in t.branches:
            out.extend((v, g))
        return out
    if isinstance(t, MultiTerm):
        out = []
        for p in t.parts:
            out.extend(_exprs_of_term(p))
        return out
    if isinstance(t, GuardedMulti):
        return _exprs_of_term(t.body) + [t.guard]
    if isinstance(t, ArrayComp):
        return [t.guard, t.value]
    raise TypeError(f"unknown term {t!r}")


def _walk_conds(e: Expr, acc: list):
    if isinstance(e, Cond):
        acc.append(e)
        for v, g in e.branches:
            _walk_conds(v, acc)
            _walk_conds(g, acc)
    elif isinstance(e, (E.Add, E.Mul, And, Or)):
        for a in e.args:
            _walk_conds(a, acc)
    elif isinstance(e, (E.Sub, E.Div, E.Mod, E.Implies, Cmp)):
        _walk_conds(e.a, acc)
        _walk_conds(e.b, acc)
    elif isinstance(e, (E.Neg, Not)):
        _walk_conds(e.a, acc)
    elif isinstance(e, E.Sum):
        _walk_conds(e.lo, acc)
        _walk_conds(e.hi, acc)
        _walk_conds(e.body, acc)
    elif isinstance(e, E.MultisetEq):
        for x in e.lhs + e.rhs:
            _walk_conds(x, acc)
    elif isinstance(e, E.Fn):
        _walk_conds(e.arg, acc)


def validate(p: SoeNode, env: TypeEnv, grid: TestGrid | None = None) -> ValidityReport:
    """Semantic determinism report: violations are entries, not exceptions."""
    grid = grid or TestGrid()
    out: list = []
    _validate_node(p, env, grid, "p", out)
    return ValidityReport("valid" if not out else "invalid", out)


def _validate_node(p: SoeNode, env, grid, loc, out):
    if isinstance(p, TermNode):
        _validate_term(p.term, env, grid, loc, out)
        return
    if isinstance(p, Seq):
        _validate_node(p.left, env, grid, loc + ".left", out)
        _validate_node(p.right, env, grid, loc + ".right", out)
        return
    if isinstance(p, (Guarded, Loop)):
        _validate_node(p.body, env, grid, loc + ".body", out)
        if isinstance(p, Guarded):
            for c in _collect_conds([p.guard]):
                _check_cond_total(c, env, grid, loc, out)
                _check_cond_overlap(c, env, grid, loc, out)
        return
    if isinstance(p, Power):
        _validate_node(p.body, env, grid, loc + ".body", out)
        return
    raise TypeError(f"unknown node {p!r}")


def _collect_conds(exprs) -> list:
    acc: list = []
    for e in exprs:
        _walk_conds(e, acc)
    return acc


def _validate_term(t: Term, env, grid, loc, out):
    if isinstance(t, MultiChoiceWrite):
        for i in range(len(t.branches)):
            for j in range(i + 1, len(t.branches)):
                v1, g1 = t.branches[i]
                v2, g2 = t.branches[j]
                overlap = [normalize(g1, env), normalize(g2, env)]
                if sat_decide(overlap) is False:
                    continue
                if E.equivalent(v1, v2, env, grid).status == "equal":
                    continue
                diff = E._cmp_norm(Cmp("!=", v1, v2), env, True)
                if sat_decide(overlap + [diff]) is False:
                    continue
                witness = _conflict_witness(g1, g2, v1, v2, [], env, grid)
                if witness is not None:
                    out.append(Violation(
                        kind="choice-ambiguous", location=loc,
                        detail=(f"branches {i} and {j} of {t.target.pretty()} "
                                "overlap with distinct values"),
                        witness=witness))
    if isinstance(t, (MultiTerm, GuardedMulti)):
        writes = effective_writes(t, env)
        for i in range(len(writes)):
            for j in range(i + 1, len(writes)):
                _check_write_pair(writes[i], writes[j], env, grid, loc, out)
        if isinstance(t, MultiTerm):
            for p in t.parts:
                _validate_term(p, env, grid, loc, out)
        else:
            _validate_term(t.body, env, grid, loc, out)
    for c in _collect_conds(_exprs_of_term(t)):
        _check_cond_total(c, env, grid, loc, out)
        _check_cond_overlap(c, env, grid, loc, out)


# ---------------------------------------------------------------------------
# Rendering (round-trips through the parser)
# ---------------------------------------------------------------------------

def term_text(t: Term) -> str:
    if isinstance(t, Epsilon):
        return "skip"
    if isinstance(t, SimpleWrite):
        return f"{t.target.pretty()}!({to_text(t.value)})"
    if isinstance(t, CondWrite):
        return f"{t.target.pretty()}!({to_text(t.value)})?({to_text(t.guard)})"
    if isinstance(t, MultiChoiceWrite):
        inner = " | ".join(f"{to_text(v)} if {to_text(g)}" for v, g in t.branches)
        return f"{t.target.pretty()}!{{{inner}}}"
    if isinstance(t, MultiTerm):
        return " . ".join(term_text(p) for p in t.parts)
    if isinstance(t, GuardedMulti):
        return f"({term_text(t.body)})?({to_text(t.guard)})"
    if isinstance(t, ArrayComp):
        return f"{t.array}[{t.index}: {to_text(t.guard)}]!({to_text(t.value)})"
    raise TypeError(f"unknown term {t!r}")


def soe_text(p: SoeNode) -> str:
    if isinstance(p, TermNode):
        return term_text(p.term)
    if isinstance(p, Seq):
        return f"{soe_text(p.left)}; {soe_text(p.right)}"
    if isinstance(p, Guarded):
        return f"({soe_text(p.body)})?({to_text(p.guard)})"
    if isinstance(p, Power):
        return f"({soe_text(p.body)})^{p.n}"
    if isinstance(p, Loop):
        return f"({soe_text(p.body)})*({to_text(p.until)})"
    raise TypeError(f"unknown node {p!r}")
