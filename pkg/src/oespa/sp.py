"""Semantic predicates: relations between final and initial variable values.

A predicate body is an expression whose leaves name initial values (`x`),
final values (`x'`) and, for calculus intermediates, inner values (`x''`).
Guarded-clause predicates join clauses with pairwise-disjoint initial-state
guards; a state outside every guard is unconstrained.

`check_property` decides whether substituting a program's final-value map
makes the predicate valid; `classify_bipartite` attaches the mirror-form
taxonomy (stable/constant/decreasing/...); `check_invariant` re-checks a
state predicate across a program under an optional entry condition.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import expr as E
from . import soe as S
from .errors import ContradictionError, NotBipartiteError, TypeCheckError
from .expr import (
    FALSE, TRUE, And, BoolLit, Cmp, Cond, Expr, Implies, IntLit, Not, Or,
    Subst, Sum, TestGrid, TypeEnv, Var, VarRef, eval_expr, expr_key,
    free_names, grid_states, normalize, sat_decide, to_text,
)
from .finals import FinalMap, final, identity_map
from .interp import LoopBudget


def role_of(name: str) -> str:
    if name.endswith("''"):
        return "inner"
    if name.endswith("'"):
        return "final"
    return "initial"


def sp_env(env: TypeEnv) -> TypeEnv:
    """Environment extended with final and inner copies of every variable."""
    scalars = list(env.scalars)
    for n, t in env.scalars:
        scalars.append((n + "'", t))
        scalars.append((n + "''", t))
    arrays = list(env.arrays)
    for a in env.arrays:
        arrays.append(a + "'")
        arrays.append(a + "''")
    return TypeEnv(scalars=tuple(scalars), arrays=tuple(arrays), upper=env.upper)


@dataclass(frozen=True)
class SpClause:
    guard: Expr | None  # over initial values; None for an unguarded body
    body: Expr


@dataclass(frozen=True)
class SemPredicate:
    clauses: tuple  # of SpClause

    # -- constructors -------------------------------------------------------

    @classmethod
    def plain(cls, body: Expr) -> "SemPredicate":
        return cls((SpClause(None, body),))

    @classmethod
    def true_(cls) -> "SemPredicate":
        return cls((SpClause(None, TRUE),))

    @classmethod
    def guarded(cls, pairs) -> "SemPredicate":
        return cls(tuple(SpClause(g, b) for g, b in pairs))

    # -- structure ----------------------------------------------------------

    def is_true(self) -> bool:
        return (len(self.clauses) == 1 and self.clauses[0].guard is None
                and self.clauses[0].body == TRUE)

    def is_plain(self) -> bool:
        return len(self.clauses) == 1 and self.clauses[0].guard is None

    @property
    def body(self) -> Expr:
        if not self.is_plain():
            raise TypeCheckError("guarded predicate has no single body")
        return self.clauses[0].body

    def names_by_role(self, role: str) -> set:
        out = set()
        for c in self.clauses:
            for n in free_names(c.body):
                if role_of(n) == role:
                    out.add(n.rstrip("'"))
            if c.guard is not None:
                for n in free_names(c.guard):
                    if role_of(n) == role:
                        out.add(n.rstrip("'"))
        return out

    def final_vars(self) -> set:
        return self.names_by_role("final")

    def initial_vars(self) -> set:
        return self.names_by_role("initial")

    def inner_vars(self) -> set:
        return self.names_by_role("inner")

    def as_formula_expr(self) -> Expr:
        """Conjunction of guard->body implications."""
        parts = []
        for c in self.clauses:
            if c.guard is None:
                parts.append(c.body)
            else:
                parts.append(Implies(c.guard, c.body))
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    # -- validation -----------------------------------------------------------

    def validate(self, env: TypeEnv):
        """Reject predicates without final leaves (unless the constant True)
        and provably contradictory bodies."""
        if self.is_true():
            return
        if not self.final_vars():
            raise TypeCheckError(
                "a semantic predicate must mention at least one final value")
        se = sp_env(env)
        for c in self.clauses:
            if c.guard is not None:
                for n in free_names(c.guard):
                    if role_of(n) != "initial":
                        raise TypeCheckError(
                            "clause guards range over initial values only")
        whole = normalize(self.as_formula_expr(), se)
        if whole == FALSE or sat_decide([whole]) is False:
            raise ContradictionError(
                f"predicate {self.pretty()} admits no satisfying pair of states")
        # pairwise-disjoint clause guards
        guards = [c.guard for c in self.clauses if c.guard is not None]
        for i in range(len(guards)):
            for j in range(i + 1, len(guards)):
                g = normalize(And((guards[i], guards[j])), se)
                if g != FALSE and sat_decide([g]) is not False:
                    raise TypeCheckError(
                        "guarded clauses must have pairwise-disjoint guards")

    # -- substitutions ----------------------------------------------------------

    def _subst(self, env: TypeEnv, mapping: Subst) -> "SemPredicate":
        out = []
        se = sp_env(env)
        for c in self.clauses:
            body = E.substitute(c.body, mapping, se)
            out.append(SpClause(c.guard, body))
        return SemPredicate(tuple(out))

    def over_initials(self, env: TypeEnv) -> Expr:
        """Final leaves replaced by their initial counterparts (entry check)."""
        sub = _final_to_initial_subst(env)
        se = sp_env(env)
        parts = []
        for c in self.clauses:
            body = E.substitute(c.body, sub, se)
            parts.append(body if c.guard is None else Implies(c.guard, body))
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def substitute_finals(self, fm: FinalMap, env: TypeEnv) -> Expr:
        """Final leaves replaced by the program's final-value expressions."""
        sub = Subst()
        for name, e in fm.scalars.items():
            sub.scalars[name + "'"] = e
        for name, vec in fm.arrays.items():
            sub.arrays[name + "'"] = tuple(vec)
        se = sp_env(env)
        parts = []
        for c in self.clauses:
            body = E.substitute(c.body, sub, se)
            parts.append(body if c.guard is None else Implies(c.guard, body))
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def pretty(self) -> str:
        parts = []
        for c in self.clauses:
            if c.guard is None:
                parts.append(to_text(c.body))
            else:
                parts.append(f"({to_text(c.guard)} -> {to_text(c.body)})")
        return " (+) ".join(parts)


def _final_to_initial_subst(env: TypeEnv) -> Subst:
    sub = Subst()
    for n, _ in env.scalars:
        sub.scalars[n + "'"] = Var(VarRef(n))
    for a in env.arrays:
        sub.arrays[a + "'"] = tuple(
            E.av(a, IntLit(k)) for k in range(env.array_length()))
    return sub


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------

@dataclass
class PropertyVerdict:
    status: str  # 'holds' | 'fails' | 'unknown'
    witness: dict | None = None
    reason: str | None = None
    classification: str | None = None

    def __bool__(self):
        return self.status == "holds"

    def to_json(self):
        return {"status": self.status, "witness": self.witness,
                "reason": self.reason, "classification": self.classification}


# ---------------------------------------------------------------------------
# Entailment with assumption substitution and summation peeling
# ---------------------------------------------------------------------------

def _equation_subst(assumptions: list, env: TypeEnv) -> Subst:
    """Extract oriented equalities (v = e with v absent from e) usable as a
    substitution, iterating to a fixpoint."""
    sub = Subst()
    pending = []
    for a in assumptions:
        pending.extend(a.args if isinstance(a, And) else (a,))
    changed = True
    while changed:
        changed = False
        rest = []
        for c in pending:
            if isinstance(c, Cmp) and c.op == "=":
                for lhs, rhs in ((c.a, c.b), (c.b, c.a)):
                    if (isinstance(lhs, Var) and lhs.ref.is_scalar()
                            and lhs.ref.name not in sub.scalars
                            and lhs.ref.name not in free_names(rhs)):
                        sub.scalars[lhs.ref.name] = rhs
                        changed = True
                        break
                else:
                    rest.append(c)
            else:
                rest.append(c)
        pending = rest
    return sub


def _sum_atoms(e: Expr, acc: list):
    if isinstance(e, Sum):
        acc.append(e)
    if isinstance(e, (E.Add, E.Mul, And, Or)):
        for a in e.args:
            _sum_atoms(a, acc)
    elif isinstance(e, (E.Sub, E.Div, E.Mod, Implies, Cmp)):
        _sum_atoms(e.a, acc)
        _sum_atoms(e.b, acc)
    elif isinstance(e, (E.Neg, Not)):
        _sum_atoms(e.a, acc)
    elif isinstance(e, Cond):
        for v, g in e.branches:
            _sum_atoms(v, acc)
            _sum_atoms(g, acc)
    elif isinstance(e, E.Fn):
        _sum_atoms(e.arg, acc)


def _replace_atom(e: Expr, target_key, replacement: Expr) -> Expr:
    if expr_key(e) == target_key:
        return replacement
    if isinstance(e, (E.Add, E.Mul, And, Or)):
        return type(e)(tuple(_replace_atom(a, target_key, replacement)
                             for a in e.args))
    if isinstance(e, (E.Sub, E.Div, E.Mod, Implies)):
        return type(e)(_replace_atom(e.a, target_key, replacement),
                       _replace_atom(e.b, target_key, replacement))
    if isinstance(e, Cmp):
        return Cmp(e.op, _replace_atom(e.a, target_key, replacement),
                   _replace_atom(e.b, target_key, replacement))
    if isinstance(e, (E.Neg, Not)):
        return type(e)(_replace_atom(e.a, target_key, replacement))
    if isinstance(e, Cond):
        return Cond(tuple((_replace_atom(v, target_key, replacement),
                           _replace_atom(g, target_key, replacement))
                          for v, g in e.branches))
    return e


def _peel_sums(goal: Expr, assumptions: list, env: TypeEnv) -> Expr | None:
    """Rewrite sum(i, lo, h, b) into sum(i, lo, h-1, b) + b[h] when the
    assumptions entail h >= lo, so that equal-body sums with adjacent upper
    bounds cancel.  Returns the rewritten goal or None."""
    sums: list = []
    _sum_atoms(goal, sums)
    for s1, s2 in itertools.permutations(sums, 2):
        if s1.index != s2.index or expr_key(s1.body) != expr_key(s2.body):
            continue
        if expr_key(s1.lo) != expr_key(s2.lo):
            continue
        d = normalize(E.Sub(s1.hi, s2.hi), env)
        if not (isinstance(d, IntLit) and d.value == 1):
            continue
        side = normalize(Cmp(">=", s1.hi, s1.lo), sp_env(env))
        if side != TRUE and not E.proves(assumptions, side):
            continue
        top = E.substitute(s1.body, Subst(scalars={s1.index: s1.hi}), sp_env(env))
        replacement = E.Add((s2, top))
        return _replace_atom(goal, expr_key(s1), replacement)
    return None


def prove_under(assumptions: list, goal: Expr, env: TypeEnv,
                grid: TestGrid | None = None) -> PropertyVerdict:
    """Three-valued validity of `assumptions -> goal` over all states."""
    grid = grid or TestGrid()
    se = sp_env(env)
    assumptions = [normalize(a, se) for a in assumptions]
    if any(a == FALSE for a in assumptions):
        return PropertyVerdict("holds", reason="vacuous: assumptions are false")
    sub = _equation_subst(assumptions, env)
    goal_s = E.substitute(goal, sub, se) if not sub.is_empty() else normalize(goal, se)
    assumptions_s = [E.substitute(a, sub, se) for a in assumptions]
    for _ in range(4):
        if goal_s == TRUE:
            return PropertyVerdict("holds")
        peeled = _peel_sums(goal_s, assumptions_s, env)
        if peeled is None:
            break
        goal_s = normalize(peeled, se)
    if goal_s == TRUE:
        return PropertyVerdict("holds")
    neg = E._bool_norm(Not(goal_s), se, True)
    if sat_decide(assumptions_s + [neg]) is False:
        return PropertyVerdict("holds")
    ordered = E.order_prove(assumptions_s, goal_s)
    if ordered is True:
        return PropertyVerdict("holds")
    # witness hunt over the full implication
    witness = _violation_witness(assumptions, goal, env, grid)
    if witness is not None:
        return PropertyVerdict("fails", witness=witness)
    return PropertyVerdict(
        "unknown",
        reason="finite search found no counterexample but no symbolic proof closed")


def _violation_witness(assumptions: list, goal: Expr, env: TypeEnv,
                       grid: TestGrid) -> dict | None:
    names: set = set()
    for e in assumptions + [goal]:
        free_names(e, names)
    names = {n for n in names if role_of(n) == "initial" and env.is_declared(n)}
    consts: set = set()
    for e in assumptions + [goal]:
        E._int_constants(e, consts)
    for st in grid_states(env, names, grid, tuple(consts)):
        full = dict(st)
        for n in env.scalar_names():
            full.setdefault(n, 0)
        for a in env.arrays:
            full.setdefault(a, [0] * env.array_length())
        try:
            if all(eval_expr(a, full) for a in assumptions) and not eval_expr(goal, full):
                return full
        except E.EvalError:
            continue
    return None


# ---------------------------------------------------------------------------
# Property checking
# ---------------------------------------------------------------------------

def check_property(R: SemPredicate, p: S.SoeNode, env: TypeEnv,
                   budget: LoopBudget | None = None,
                   grid: TestGrid | None = None,
                   assume: Expr | None = None) -> PropertyVerdict:
    """Is R a property of p: does substituting p's final-value map make R
    valid over all initial states (satisfying `assume`, when given)?"""
    if R.inner_vars():
        raise TypeCheckError(
            "inner values have no meaning outside a sequencing context")
    R.validate(env)
    fm = final(p, env, budget)
    goal = R.substitute_finals(fm, env)
    assumptions = [assume] if assume is not None else []
    return prove_under(assumptions, goal, env, grid)


_TABLE_LOGIC = {"=": "stable", "<-": "inheritable", "->": "traceable"}
_TABLE_NUMERIC = {"=": "constant", "<": "decreasing", "<=": "not-increasing",
                  ">": "increasing", ">=": "not-decreasing"}
_MIRROR_FLIP = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}


def _side_roles(e: Expr) -> set:
    return {role_of(n) for n in free_names(e)}


def bipartite_shape(R: SemPredicate, env: TypeEnv):
    """Detect the mirror form R'(finals) op R'(initials).

    Returns (op, final-side, initial-side, logical) or raises."""
    if not R.is_plain():
        raise NotBipartiteError("guarded predicates are not mirror-form")
    body = R.body
    if isinstance(body, Implies):
        a_roles, b_roles = _side_roles(body.a), _side_roles(body.b)
        if a_roles == {"final"} and b_roles == {"initial"}:
            op, fin, ini = "->", body.a, body.b
        elif a_roles == {"initial"} and b_roles == {"final"}:
            op, fin, ini = "<-", body.b, body.a
        else:
            raise NotBipartiteError("implication sides mix initial and final values")
    elif isinstance(body, Cmp):
        a_roles, b_roles = _side_roles(body.a), _side_roles(body.b)
        if a_roles == {"final"} and b_roles == {"initial"}:
            op, fin, ini = body.op, body.a, body.b
        elif a_roles == {"initial"} and b_roles == {"final"}:
            op = _MIRROR_FLIP.get(body.op, body.op)
            fin, ini = body.b, body.a
        else:
            raise NotBipartiteError("comparison sides mix initial and final values")
        if op == "!=":
            raise NotBipartiteError("mirror form uses a transitive operator")
    else:
        raise NotBipartiteError("not of the form R'(finals) op R'(initials)")
    se = sp_env(env)
    mirrored = E.substitute(fin, _final_to_initial_subst(env), se)
    logical = E._expr_type(ini, se) == "bool"
    if logical:
        same = E.equivalent(mirrored, ini, se).status == "equal"
    else:
        same = expr_key(normalize(mirrored, se)) == expr_key(normalize(ini, se))
    if not same:
        raise NotBipartiteError("the two sides do not share one structure")
    if logical and op not in _TABLE_LOGIC:
        raise NotBipartiteError(f"operator {op} undefined for logical sides")
    if not logical and op not in _TABLE_NUMERIC:
        raise NotBipartiteError(f"operator {op} undefined for numeric sides")
    return op, fin, ini, logical


def classify_bipartite(R: SemPredicate, p: S.SoeNode, env: TypeEnv,
                       budget: LoopBudget | None = None,
                       grid: TestGrid | None = None) -> PropertyVerdict:
    """Verify the property and attach its mirror-form classification."""
    op, _fin, _ini, logical = bipartite_shape(R, env)
    verdict = check_property(R, p, env, budget, grid)
    if verdict.status == "holds":
        verdict.classification = (_TABLE_LOGIC if logical else _TABLE_NUMERIC)[op]
    return verdict


def check_invariant(R: SemPredicate, p: S.SoeNode, env: TypeEnv,
                    init: SemPredicate | Expr | None = None,
                    budget: LoopBudget | None = None,
                    grid: TestGrid | None = None) -> PropertyVerdict:
    """R must hold on entry (under `init`) and again after p, assuming it
    held on entry."""
    if R.inner_vars():
        raise TypeCheckError("inner values are not allowed in invariants")
    init_expr = None
    if init is not None:
        init_expr = (init.over_initials(env) if isinstance(init, SemPredicate)
                     else normalize(init, sp_env(env)))
    assumptions = [init_expr] if init_expr is not None else []
    base = prove_under(assumptions, R.over_initials(env), env, grid)
    if base.status != "holds":
        if base.status == "fails":
            base.reason = "entry check failed"
        return base
    fm = final(p, env, budget)
    step_goal = R.substitute_finals(fm, env)
    step = prove_under(assumptions + [R.over_initials(env)], step_goal, env, grid)
    if step.status == "fails":
        step.reason = "re-establishment after the body failed"
    return step


def holds_after(R: SemPredicate, p: S.SoeNode, env: TypeEnv,
                init: SemPredicate | Expr | None = None,
                budget: LoopBudget | None = None,
                grid: TestGrid | None = None) -> PropertyVerdict:
    """R after running p from states satisfying init (fixed-instance check)."""
    init_expr = None
    if init is not None:
        init_expr = (init.over_initials(env) if isinstance(init, SemPredicate)
                     else normalize(init, sp_env(env)))
    fm = final(p, env, budget)
    goal = R.substitute_finals(fm, env)
    return prove_under([init_expr] if init_expr is not None else [], goal, env, grid)


def irrelevant(R: SemPredicate, p: S.SoeNode) -> bool:
    """True when the variables named by R's final values are disjoint from
    the variables p writes."""
    return write_disjoint(R.final_vars(), p)


def write_disjoint(names: set, p: S.SoeNode) -> bool:
    return S.write_set(p).isdisjoint_names(names)


# ---------------------------------------------------------------------------
# Relation evaluation (differential trials)
# ---------------------------------------------------------------------------

def sp_holds_on(R: SemPredicate, before: dict, after: dict) -> bool:
    """Evaluate the predicate as a relation on a concrete (before, after)
    pair of states."""
    merged = dict(before)
    for k, v in after.items():
        merged[k + "'"] = v
    return bool(eval_expr(R.as_formula_expr(), merged))
