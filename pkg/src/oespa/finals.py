"""Symbolic final-value engine.

Computes, for a valid operation expression, the final value of every declared
variable as an expression over initial values.  Sequencing composes by
substituting the left map into the right map's entries; guarded nodes produce
two-branch conditionals; powers unroll; loops iterate until their guard is
provably true on the accumulated symbolic state, within a budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import expr as E
from . import soe as S
from .errors import InconclusiveGuardError, NonterminationError
from .expr import (
    FALSE, TRUE, Cmp, Cond, Equivalence, Expr, IntLit, Not, Or, Subst,
    TestGrid, TypeEnv, Var, VarRef, equivalent, expr_key, normalize,
    sat_decide, to_text,
)
from .interp import DEFAULT_BUDGET, LoopBudget


@dataclass
class FinalMap:
    """Total map from declared variables to expressions over initial values.
    Arrays are kept element-wise."""

    env: TypeEnv
    scalars: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)  # name -> tuple of exprs

    def get(self, ref: VarRef) -> Expr:
        if ref.is_scalar():
            return self.scalars[ref.name]
        if ref.is_element() and isinstance(ref.index, IntLit):
            return self.arrays[ref.name][ref.index.value]
        raise KeyError(f"no entry for {ref.pretty()}")

    def entries(self):
        for name, _ in self.env.scalars:
            yield VarRef(name), self.scalars[name]
        for name in self.env.arrays:
            for k, e in enumerate(self.arrays[name]):
                yield VarRef(name, index=IntLit(k)), e

    def as_subst(self) -> Subst:
        return Subst(scalars=dict(self.scalars),
                     arrays={n: tuple(v) for n, v in self.arrays.items()})

    def copy(self) -> "FinalMap":
        return FinalMap(self.env, dict(self.scalars),
                        {n: tuple(v) for n, v in self.arrays.items()})

    def is_identity_for(self, ref: VarRef) -> bool:
        return expr_key(self.get(ref)) == expr_key(Var(ref))


def identity_map(env: TypeEnv) -> FinalMap:
    """Every variable maps to itself (the meaning of the empty operation)."""
    fm = FinalMap(env)
    for name, _ in env.scalars:
        fm.scalars[name] = Var(VarRef(name))
    for name in env.arrays:
        fm.arrays[name] = tuple(
            E.av(name, IntLit(k)) for k in range(env.array_length()))
    return fm


# ---------------------------------------------------------------------------
# Term-level maps
# ---------------------------------------------------------------------------

def _term_entries(term: S.Term, env: TypeEnv) -> tuple[dict, dict]:
    """Relative map of one term: expressions over the pre-term state.
    Returns (scalar entries, array entries); untouched variables omitted."""
    writes = S.effective_writes(term, env)
    scalar_ups: dict = {}
    array_ups: dict = {}
    for w in writes:
        if w.target.index is None:
            scalar_ups.setdefault(w.target.name, []).append((w.value, w.guard))
        else:
            array_ups.setdefault(w.target.name, []).append(
                (w.target.index, w.value, w.guard))
    scalars = {}
    for name, ups in scalar_ups.items():
        scalars[name] = _assemble(ups, Var(VarRef(name)), env)
    arrays = {}
    for name, ups in array_ups.items():
        vec = []
        for k in range(env.array_length()):
            branches = []
            for idx, value, guard in ups:
                if isinstance(idx, IntLit):
                    if idx.value == k:
                        branches.append((value, guard))
                else:
                    branches.append(
                        (value, E.And((guard, Cmp("=", idx, IntLit(k))))))
            vec.append(_assemble(branches, E.av(name, IntLit(k)), env)
                       if branches else E.av(name, IntLit(k)))
        arrays[name] = tuple(vec)
    return scalars, arrays


def _assemble(branches: list, self_expr: Expr, env: TypeEnv) -> Expr:
    """Conditional over guarded write values with an unchanged fallback."""
    if len(branches) == 1 and normalize(branches[0][1], env) == TRUE:
        return normalize(branches[0][0], env)
    guards = [g for _, g in branches]
    fallback = Not(Or(tuple(guards))) if len(guards) > 1 else Not(guards[0])
    cond = Cond(tuple(branches) + ((self_expr, fallback),))
    return normalize(cond, env)


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------

def _compose_term(term: S.Term, acc: FinalMap, env: TypeEnv) -> FinalMap:
    scalars, arrays = _term_entries(term, env)
    if not scalars and not arrays:
        return acc
    sub = acc.as_subst()
    out = acc.copy()
    for name, e in scalars.items():
        out.scalars[name] = E.substitute(e, sub, env)
    for name, vec in arrays.items():
        out.arrays[name] = tuple(E.substitute(e, sub, env) for e in vec)
    return out


def _wrap_guard(after: FinalMap, before: FinalMap, guard: Expr,
                env: TypeEnv) -> FinalMap:
    """Entries take `after` under the guard and `before` otherwise."""
    g = normalize(guard, env)
    if g == TRUE:
        return after
    if g == FALSE:
        return before
    ng = E._bool_norm(Not(guard), env, True)
    out = before.copy()
    for name in before.scalars:
        a, b = after.scalars[name], before.scalars[name]
        if expr_key(a) != expr_key(b):
            out.scalars[name] = normalize(Cond(((a, g), (b, ng))), env)
    for name in before.arrays:
        vec = []
        for a, b in zip(after.arrays[name], before.arrays[name]):
            if expr_key(a) != expr_key(b):
                vec.append(normalize(Cond(((a, g), (b, ng))), env))
            else:
                vec.append(b)
        out.arrays[name] = tuple(vec)
    return out


def _guard_truth(guard: Expr, acc: FinalMap, env: TypeEnv):
    """Decide a loop guard on the accumulated symbolic state.

    Returns True / False when provable, otherwise the normalized residual."""
    g = E.substitute(guard, acc.as_subst(), env)
    if g == TRUE:
        return True
    if g == FALSE:
        return False
    if sat_decide([g]) is False:
        return False
    if sat_decide([E._bool_norm(Not(g), env, True)]) is False:
        return True
    return g


def _final_onto(p: S.SoeNode, acc: FinalMap, env: TypeEnv,
                budget: LoopBudget) -> FinalMap:
    if isinstance(p, S.TermNode):
        return _compose_term(p.term, acc, env)
    if isinstance(p, S.Seq):
        return _final_onto(p.right, _final_onto(p.left, acc, env, budget),
                           env, budget)
    if isinstance(p, S.Guarded):
        guard = E.substitute(p.guard, acc.as_subst(), env)
        if guard == FALSE:
            return acc
        after = _final_onto(p.body, acc, env, budget)
        return _wrap_guard(after, acc, guard, env)
    if isinstance(p, S.Power):
        cur = acc
        for _ in range(p.n):
            cur = _final_onto(p.body, cur, env, budget)
        return cur
    if isinstance(p, S.Loop):
        cur = acc
        iters = 0
        while True:
            t = _guard_truth(p.until, cur, env)
            if t is True:
                return cur
            if t is not False:
                raise InconclusiveGuardError(
                    f"loop guard {to_text(p.until)} undecided after {iters} "
                    f"iterations (residual {to_text(t)})",
                    guard_text=to_text(t))
            if iters >= budget.max_unroll:
                raise NonterminationError(
                    f"loop guard {to_text(p.until)} not provably true within "
                    f"{budget.max_unroll} iterations", iterations=iters,
                    partial=cur if budget.on_exhaust == "report-partial" else None)
            cur = _final_onto(p.body, cur, env, budget)
            iters += 1
    raise TypeError(f"unknown node {p!r}")


def final(p: S.SoeNode, env: TypeEnv,
          budget: LoopBudget | None = None) -> FinalMap:
    """The final-value map of p: each declared variable as an expression
    over initial values."""
    return _final_onto(p, identity_map(env), env, budget or DEFAULT_BUDGET)


# ---------------------------------------------------------------------------
# Program equality and read-before
# ---------------------------------------------------------------------------

@dataclass
class ProgramEquality:
    status: str  # 'equal' | 'not-equal' | 'unknown'
    witness: dict | None = None
    variable: VarRef | None = None

    def __bool__(self):
        return self.status == "equal"


def program_equal(p: S.SoeNode, q: S.SoeNode, env: TypeEnv,
                  budget: LoopBudget | None = None,
                  grid: TestGrid | None = None) -> ProgramEquality:
    """Pointwise equality of final-value maps, three-valued."""
    fp = final(p, env, budget)
    fq = final(q, env, budget)
    unknown: VarRef | None = None
    for ref, ep in fp.entries():
        eq = equivalent(ep, fq.get(ref), env, grid)
        if eq.status == "not-equal":
            return ProgramEquality("not-equal", eq.witness, ref)
        if eq.status == "unknown" and unknown is None:
            unknown = ref
    if unknown is not None:
        return ProgramEquality("unknown", None, unknown)
    return ProgramEquality("equal")


def _seq_spine(node: S.SoeNode) -> list:
    if isinstance(node, S.Seq):
        return _seq_spine(node.left) + _seq_spine(node.right)
    return [node]


def read_before(v: VarRef, p: S.SoeNode, context: S.SoeNode | None,
                env: TypeEnv, budget: LoopBudget | None = None) -> Expr:
    """Value of v on entry to p: v itself in isolation, otherwise the final
    value of v after the part of the context sequenced before p."""
    if context is None:
        return Var(v)
    spine = _seq_spine(context)
    pos = None
    for k, node in enumerate(spine):
        if node is p:
            pos = k
            break
    if pos is None:
        for k, node in enumerate(spine):
            if node == p:
                pos = k
                break
    if pos is None:
        from .errors import NotInContextError
        raise NotInContextError("expression not found in the given context")
    acc = identity_map(env)
    for node in spine[:pos]:
        acc = _final_onto(node, acc, env, budget or DEFAULT_BUDGET)
    return acc.get(v)
