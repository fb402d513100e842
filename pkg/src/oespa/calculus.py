"""Specification calculus: sequenced predicates reduced to one predicate.

A formula is a sequence of semantic predicates (with powers and guarded
repetition).  Reduction folds the sequence left to right: the accumulated
predicate is solved into explicit per-variable equations (after extension
with unchanged-variable equations), those equations are substituted into the
next predicate's initial values, and the independent portion is carried
along.  Multiset constraints are solved by permutation expansion; guarded
alternatives distribute clause-wise with guard conjunction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from . import expr as E
from .errors import (
    ContradictionError, IrreducibleFormulaError, NonterminationError,
    NotSolvableError, ResolutionRefusedError, TypeCheckError,
)
from .expr import (
    FALSE, TRUE, And, BoolLit, Cmp, Cond, Expr, Implies, IntLit, MultisetEq,
    Not, Or, Subst, TypeEnv, Var, VarRef, expr_key, free_names, normalize,
    sat_decide, to_text,
)
from .interp import DEFAULT_BUDGET, LoopBudget
from .sp import SemPredicate, SpClause, prove_under, role_of, sp_env


# ---------------------------------------------------------------------------
# Formula structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FAtom:
    pred: SemPredicate


@dataclass(frozen=True)
class FPower:
    body: "SpFormula"
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise TypeCheckError("formula power must be >= 0")


@dataclass(frozen=True)
class FLoop:
    body: "SpFormula"
    until: SemPredicate  # over final values (plus never-written constants)


@dataclass(frozen=True)
class SpFormula:
    items: tuple

    def __post_init__(self):
        if not self.items:
            raise TypeCheckError("a formula needs at least one item")

    @classmethod
    def of(cls, *preds: SemPredicate) -> "SpFormula":
        return cls(tuple(FAtom(p) for p in preds))


def formula_text(f: SpFormula) -> str:
    parts = []
    for it in f.items:
        if isinstance(it, FAtom):
            parts.append(it.pred.pretty())
        elif isinstance(it, FPower):
            parts.append(f"({formula_text(it.body)})^{it.n}")
        else:
            parts.append(f"({formula_text(it.body)})*({it.until.pretty()})")
    return " ; ".join(parts)


# ---------------------------------------------------------------------------
# Extension (unchanged-variable equations)
# ---------------------------------------------------------------------------

def extend(R: SemPredicate, env: TypeEnv) -> SemPredicate:
    """Conjoin v' = v for every declared variable whose final value the
    predicate does not mention.  Applied clause-wise on guarded predicates."""
    mentioned = R.final_vars()
    extra = []
    for name, _ in env.scalars:
        if name not in mentioned:
            extra.append(Cmp("=", Var(VarRef(name + "'")), Var(VarRef(name))))
    for name in env.arrays:
        if name not in mentioned:
            extra.append(Cmp("=", Var(VarRef(name + "'", whole=True)),
                             Var(VarRef(name, whole=True))))
    if not extra:
        return R
    out = []
    for c in R.clauses:
        if c.body == TRUE:
            body = And(tuple(extra)) if len(extra) > 1 else extra[0]
        else:
            body = And((c.body,) + tuple(extra))
        out.append(SpClause(c.guard, body))
    return SemPredicate(tuple(out))


# ---------------------------------------------------------------------------
# Solved forms
# ---------------------------------------------------------------------------

@dataclass
class SolvedClause:
    guard: Expr = TRUE
    scalars: dict = field(default_factory=dict)   # name -> expr over initials
    arrays: dict = field(default_factory=dict)    # name -> tuple of exprs
    intents: dict = field(default_factory=dict)   # array -> [(index|None, value, guard)]
    explicit: set = field(default_factory=set)    # names explicitly constrained
    residual: Expr = TRUE                          # initial-only constraints

    def as_subst(self) -> Subst:
        return Subst(scalars=dict(self.scalars),
                     arrays={n: tuple(v) for n, v in self.arrays.items()})


@dataclass
class SolvedForm:
    env: TypeEnv
    clauses: list


def _conjuncts(e: Expr) -> list:
    if isinstance(e, And):
        out = []
        for a in e.args:
            out.extend(_conjuncts(a))
        return out
    return [e]


def _roles(e: Expr) -> set:
    return {role_of(n) for n in free_names(e)}


def _final_scalar(e: Expr) -> str | None:
    if isinstance(e, Var) and e.ref.is_scalar() and role_of(e.ref.name) == "final":
        return e.ref.name
    return None


def _orient_equation(c: Cmp):
    """Try to read an equality as `final = expression over initials`.

    Returns (kind, key, value) where kind is 'scalar' (key: base name),
    'element' (key: (array, index-expr)) or 'whole' (key: array base name);
    None when not recognizable."""
    if c.op != "=":
        return None
    for lhs, rhs in ((c.a, c.b), (c.b, c.a)):
        n = _final_scalar(lhs)
        if n is not None and "final" not in _roles(rhs) and "inner" not in _roles(rhs):
            return ("scalar", n[:-1], rhs)
        if isinstance(lhs, Var) and lhs.ref.whole and role_of(lhs.ref.name) == "final":
            if (isinstance(rhs, Var) and rhs.ref.whole
                    and role_of(rhs.ref.name) == "initial"):
                return ("whole", lhs.ref.name[:-1], rhs)
        if (isinstance(lhs, Var) and lhs.ref.is_element()
                and role_of(lhs.ref.name) == "final"
                and "final" not in _roles(lhs.ref.index)
                and "final" not in _roles(rhs)):
            return ("element", (lhs.ref.name[:-1], lhs.ref.index), rhs)
    # linear extraction from a canonical equality over one final scalar
    se = None
    try:
        branches = E._int_branches(E.Sub(c.a, c.b), se)
    except TypeCheckError:
        return None
    if len(branches) != 1 or branches[0][1] != TRUE:
        return None
    poly = branches[0][0]
    final_monos = []
    for m, coeff in poly.items():
        for atom, power in m:
            if isinstance(atom, Var) and role_of(atom.ref.name) == "final":
                final_monos.append((m, coeff, atom, power))
    if len(final_monos) != 1:
        return None
    m, coeff, atom, power = final_monos[0]
    if power != 1 or len(m) != 1 or coeff not in (1, -1):
        return None
    if not atom.ref.is_scalar():
        return None
    rest = {mm: cc for mm, cc in poly.items() if mm != m}
    value = E._p_to_expr(E._p_neg(rest) if coeff == 1 else rest)
    return ("scalar", atom.ref.name[:-1], value)


def _split_guarded_conjunct(e: Expr):
    """Recognize `initial-guard -> sub-predicate` conjuncts."""
    if isinstance(e, Implies) and _roles(e.a) <= {"initial"}:
        return e.a, e.b
    return None


def solve(R: SemPredicate, env: TypeEnv) -> SolvedForm:
    """Extract explicit equations for every final value, splitting guarded
    conjuncts and multiset constraints into alternative clauses.

    Unmentioned finals are filled with unchanged-value equations; the
    `explicit` set records which variables the predicate itself constrained.
    Raises NotSolvableError naming the first final with no derivable
    equation, or ContradictionError when no clause survives."""
    se = sp_env(env)
    work = [(c.guard if c.guard is not None else TRUE, _conjuncts(c.body), [])
            for c in R.clauses]
    solved: list = []
    while work:
        guard, conjuncts, eqs = work.pop(0)
        gn = normalize(guard, se)
        if gn == FALSE:
            continue
        # split implications with initial-only antecedents into two clauses
        split_done = False
        for i, cj in enumerate(conjuncts):
            sp = _split_guarded_conjunct(cj)
            if sp is not None:
                g2, sub = sp
                rest = conjuncts[:i] + conjuncts[i + 1:]
                work.append((And((guard, g2)), rest + _conjuncts(sub), list(eqs)))
                work.append((And((guard, Not(g2))), rest, list(eqs)))
                split_done = True
                break
        if split_done:
            continue
        solved.extend(_solve_clause(gn, conjuncts, env, se))
    if not solved:
        raise ContradictionError("no clause of the predicate is satisfiable")
    solved = _disjointify(solved, se)
    if not solved:
        raise ContradictionError("no clause of the predicate is satisfiable")
    return SolvedForm(env, solved)


def _solve_clause(guard: Expr, conjuncts: list, env: TypeEnv, se: TypeEnv) -> list:
    scalars: dict = {}
    element_eqs: dict = {}
    whole_eqs: dict = {}
    residual: list = []
    pending = list(conjuncts)
    msets: list = []
    progress = True
    while progress:
        progress = False
        rest = []
        for cj in pending:
            if isinstance(cj, BoolLit):
                if not cj.value:
                    return []
                continue
            if isinstance(cj, MultisetEq):
                msets.append(cj)
                continue
            if isinstance(cj, Cmp):
                got = _orient_equation(cj)
                if got is not None:
                    kind, key, value = got
                    if kind == "scalar":
                        if key in scalars:
                            residual.append(Cmp("=", scalars[key], value))
                        else:
                            scalars[key] = normalize(value, se)
                        progress = True
                        continue
                    if kind == "whole":
                        whole_eqs[key] = value
                        progress = True
                        continue
                    if kind == "element":
                        element_eqs.setdefault(key[0], []).append(
                            (key[1], normalize(value, se)))
                        progress = True
                        continue
            roles = _roles(cj)
            if "final" not in roles and "inner" not in roles:
                residual.append(cj)
                progress = True
                continue
            rest.append(cj)
        pending = rest
        if pending and not progress and scalars:
            # substitute known equations into stuck conjuncts and retry once
            sub = Subst(scalars={k + "'": v for k, v in scalars.items()})
            replaced = [E.substitute(c, sub, se) if "final" in _roles(c) else c
                        for c in pending]
            if any(expr_key(a) != expr_key(b) for a, b in zip(replaced, pending)):
                pending = replaced
                progress = True
    if msets:
        return _solve_multiset(guard, scalars, element_eqs, whole_eqs,
                               residual, pending, msets, env, se)
    if pending:
        missing = sorted(n for n in free_names(And(tuple(pending)))
                         if role_of(n) == "final")
        name = missing[0] if missing else to_text(pending[0])
        raise NotSolvableError(
            f"no equation derivable for {name} from {to_text(pending[0])}",
            missing=name)
    return [_fill_clause(guard, scalars, element_eqs, whole_eqs, residual, env, se)]


def _solve_multiset(guard, scalars, element_eqs, whole_eqs, residual, pending,
                    msets, env, se) -> list:
    """Expand multiset equalities over value permutations, keeping the
    permutations that agree with known equations and whose residual
    constraints are satisfiable."""
    ms = msets[0]
    extra_msets = msets[1:]
    lhs_names = []
    for x in ms.lhs:
        n = _final_scalar(x)
        if n is None:
            raise NotSolvableError(
                f"multiset left side must list final scalars: {to_text(x)}",
                missing=to_text(x))
        lhs_names.append(n[:-1])
    if any("final" in _roles(x) for x in ms.rhs):
        raise NotSolvableError("multiset right side must be over initials",
                               missing=to_text(ms))
    if len(ms.lhs) > 4:
        raise NotSolvableError("multiset expansion supports up to 4 values",
                               missing=to_text(ms))
    out = []
    for perm in itertools.permutations(range(len(ms.rhs))):
        assign = {lhs_names[i]: normalize(ms.rhs[perm[i]], se)
                  for i in range(len(lhs_names))}
        conflict = False
        for name, value in assign.items():
            if name in scalars and expr_key(scalars[name]) != expr_key(value):
                conflict = True
                break
        if conflict:
            continue
        merged = dict(scalars)
        merged.update(assign)
        # remaining constraints become initial-only under this assignment
        sub = Subst(scalars={k + "'": v for k, v in merged.items()})
        new_residual = list(residual)
        ok = True
        for cj in pending + extra_msets:
            c2 = E.substitute(cj, sub, se)
            roles = _roles(c2)
            if "final" in roles or "inner" in roles:
                ok = False
                break
            new_residual.append(c2)
        if not ok:
            continue
        g = normalize(And(tuple([guard] + new_residual)), se)
        if g == FALSE or sat_decide([g]) is False:
            continue
        clause = _fill_clause(And(tuple([guard] + new_residual)), merged,
                              dict(element_eqs), dict(whole_eqs), [], env, se)
        out.append(clause)
    if not out:
        raise NotSolvableError("no permutation satisfies the constraints",
                               missing=to_text(ms))
    return out


def _fill_clause(guard, scalars, element_eqs, whole_eqs, residual, env, se) -> SolvedClause:
    cl = SolvedClause()
    cl.guard = normalize(guard, se) if guard is not None else TRUE
    cl.residual = normalize(And(tuple(residual)), se) if residual else TRUE
    cl.explicit = set(scalars) | set(element_eqs) | set(whole_eqs)
    for name, _ in env.scalars:
        cl.scalars[name] = (scalars[name] if name in scalars
                            else Var(VarRef(name)))
    for name in env.arrays:
        n_len = env.array_length()
        if name in whole_eqs:
            src = whole_eqs[name]
            cl.arrays[name] = tuple(
                E.av(src.ref.name, IntLit(k)) for k in range(n_len))
            cl.intents.setdefault(name, []).append((None, src))
        elif name in element_eqs:
            vec = []
            for k in range(n_len):
                branches = []
                for idx, value in element_eqs[name]:
                    if isinstance(idx, IntLit):
                        if idx.value == k:
                            branches.append((value, TRUE))
                    else:
                        branches.append((value, Cmp("=", idx, IntLit(k))))
                if branches:
                    fallback = Not(Or(tuple(g for _, g in branches))) \
                        if len(branches) > 1 else Not(branches[0][1])
                    vec.append(normalize(
                        Cond(tuple(branches) + ((E.av(name, IntLit(k)), fallback),)),
                        se))
                else:
                    vec.append(E.av(name, IntLit(k)))
            cl.arrays[name] = tuple(vec)
            for idx, value in element_eqs[name]:
                cl.intents.setdefault(name, []).append((idx, value))
        else:
            cl.arrays[name] = tuple(
                E.av(name, IntLit(k)) for k in range(n_len))
    return cl


def _disjointify(clauses: list, se: TypeEnv) -> list:
    """Make clause guards pairwise disjoint in order, pruning empty ones."""
    out = []
    prior: list = []
    for cl in clauses:
        g = cl.guard
        for p in prior:
            g = And((g, Not(p)))
        gn = normalize(g, se)
        if gn == FALSE or sat_decide([gn]) is False:
            prior.append(cl.guard)
            continue
        prior.append(cl.guard)
        cl.guard = gn
        out.append(cl)
    return out


# ---------------------------------------------------------------------------
# Resolution
# ---------------------------------------------------------------------------

def _surface_subst(e: Expr, sub: Subst, se: TypeEnv) -> Expr:
    """Substitute initial values while keeping the conjunct surface shape."""
    if isinstance(e, And):
        return And(tuple(_surface_subst(a, sub, se) for a in e.args))
    if isinstance(e, Or):
        return Or(tuple(_surface_subst(a, sub, se) for a in e.args))
    if isinstance(e, Not):
        return Not(_surface_subst(e.a, sub, se))
    if isinstance(e, Implies):
        return Implies(_surface_subst(e.a, sub, se), _surface_subst(e.b, sub, se))
    if isinstance(e, Cmp):
        ta = E._expr_type(e.a, se)
        if ta == "array" or E._expr_type(e.b, se) == "array":
            return E.substitute(e, sub, se)
        a = e.a if _final_scalar(e.a) else _term_subst(e.a, sub, se)
        b = _term_subst(e.b, sub, se) if _final_scalar(e.a) else (
            e.b if _final_scalar(e.b) else _term_subst(e.b, sub, se))
        if _final_scalar(e.b) and not _final_scalar(e.a):
            a = _term_subst(e.a, sub, se)
            b = e.b
        return Cmp(e.op, a, b)
    if isinstance(e, MultisetEq):
        return MultisetEq(tuple(_term_subst(x, sub, se) for x in e.lhs),
                          tuple(_term_subst(x, sub, se) for x in e.rhs))
    if isinstance(e, BoolLit):
        return e
    return E.substitute(e, sub, se)


def _term_subst(e: Expr, sub: Subst, se: TypeEnv) -> Expr:
    if isinstance(e, Var) and role_of(e.ref.name) == "final":
        if e.ref.index is not None:
            return Var(VarRef(e.ref.name, index=_term_subst(e.ref.index, sub, se)))
        return e
    return E.substitute(e, sub, se)


def resolve(R1: SemPredicate, R2: SemPredicate, env: TypeEnv) -> SemPredicate:
    """Compose two predicates sequentially: R1's solved equations feed R2's
    initial values; R1's effect on variables R2 does not redefine carries
    through R2's extension.  The result mentions no inner values."""
    se = sp_env(env)
    try:
        s1 = solve(extend(R1, env), env)
    except NotSolvableError as ex:
        raise ResolutionRefusedError(
            f"left predicate is not complete: {ex}", missing=ex.missing)
    r2e = extend(R2, env)
    out = []
    for cl in s1.clauses:
        sub = cl.as_subst()
        for c2 in r2e.clauses:
            guard2 = None
            if c2.guard is not None:
                guard2 = E.substitute(c2.guard, sub, se)
            body = _surface_subst(c2.body, sub, se)
            if cl.residual != TRUE:
                body = And((body, cl.residual))
            guard_parts = []
            if cl.guard != TRUE:
                guard_parts.append(cl.guard)
            if guard2 is not None:
                guard_parts.append(guard2)
            guard = normalize(And(tuple(guard_parts)), se) if guard_parts else TRUE
            if guard == FALSE or sat_decide([guard]) is False:
                continue
            out.append(SpClause(None if guard == TRUE else guard, body))
    if not out:
        raise ContradictionError("resolution left no satisfiable clause")
    if len(out) == 1:
        c = out[0]
        if c.guard is None:
            return SemPredicate((SpClause(None, _tidy_body(c.body, se)),))
    return SemPredicate(tuple(SpClause(c.guard, _tidy_body(c.body, se))
                              for c in out))


def _tidy_body(body: Expr, se: TypeEnv) -> Expr:
    """Drop conjuncts that normalize to True; keep surface equation shapes;
    order equations before other facts."""
    kept = []
    for cj in _conjuncts(body):
        n = normalize(cj, se)
        if n == TRUE:
            continue
        if isinstance(cj, Cmp) and cj.op == "=":
            kept.append(Cmp("=", cj.a, normalize(cj.b, se))
                        if _final_scalar(cj.a) else cj)
        else:
            kept.append(cj)
    if not kept:
        return TRUE

    def order(cj):
        if isinstance(cj, Cmp) and cj.op == "=" and _final_scalar(cj.a):
            return (0, cj.a.ref.name, expr_key(cj))
        return (1, "", expr_key(cj))

    kept.sort(key=order)
    return kept[0] if len(kept) == 1 else And(tuple(kept))


# ---------------------------------------------------------------------------
# Reduction
# ---------------------------------------------------------------------------

@dataclass
class Reducibility:
    reducible: bool
    position: int | None = None
    reason: str | None = None

    def __bool__(self):
        return self.reducible


class _Folder:
    def __init__(self, env: TypeEnv, budget: LoopBudget, trace: list | None):
        self.env = env
        self.budget = budget
        self.trace = trace
        self.state: SemPredicate | None = None
        self.fed = 0

    def feed(self, pred: SemPredicate):
        if pred.is_true():
            if self.state is None:
                self.state = pred
            return
        if self.state is None or self.state.is_true():
            self.state = pred
            self.fed = 1
        else:
            try:
                self.state = resolve(self.state, pred, self.env)
            except ResolutionRefusedError as ex:
                raise IrreducibleFormulaError(
                    f"irreducible at item {self.fed}: {ex}",
                    position=self.fed, reason=str(ex))
            self.fed += 1
        if self.trace is not None:
            self.trace.append(self.state.pretty())

    def fold(self, f: SpFormula):
        for item in f.items:
            if isinstance(item, FAtom):
                self.feed(item.pred)
            elif isinstance(item, FPower):
                if item.n == 0:
                    self.feed(SemPredicate.true_())
                else:
                    for _ in range(item.n):
                        self.fold(item.body)
            elif isinstance(item, FLoop):
                self._fold_loop(item)
            elif isinstance(item, SpFormula):
                # explicit bracketing: reduce the group, then feed the result
                sub = _Folder(self.env, self.budget, None)
                sub.fold(item)
                self.feed(sub.state)
            else:
                raise TypeError(f"unknown formula item {item!r}")

    def _fold_loop(self, item: FLoop):
        iters = 0
        while True:
            t = self._guard_state(item.until)
            if t is True:
                return
            if t is not False:
                raise IrreducibleFormulaError(
                    f"repetition guard {item.until.pretty()} undecided after "
                    f"{iters} passes", position=self.fed,
                    reason="guard not decidable against the accumulated state")
            if iters >= self.budget.max_unroll:
                raise NonterminationError(
                    f"repetition guard not reached within "
                    f"{self.budget.max_unroll} passes", iterations=iters)
            self.fold(item.body)
            iters += 1

    def _guard_state(self, guard: SemPredicate):
        se = sp_env(self.env)
        if self.state is None or self.state.is_true():
            sub = Subst()
            for n, _ in self.env.scalars:
                sub.scalars[n + "'"] = Var(VarRef(n))
            for a in self.env.arrays:
                sub.arrays[a + "'"] = tuple(
                    E.av(a, IntLit(k)) for k in range(self.env.array_length()))
            g = E.substitute(guard.as_formula_expr(), sub, se)
        else:
            try:
                s = solve(extend(self.state, self.env), self.env)
            except NotSolvableError:
                return None
            if len(s.clauses) != 1:
                return None
            sub = Subst()
            for n, e2 in s.clauses[0].scalars.items():
                sub.scalars[n + "'"] = e2
            for n, vec in s.clauses[0].arrays.items():
                sub.arrays[n + "'"] = tuple(vec)
            g = E.substitute(guard.as_formula_expr(), sub, se)
        if g == TRUE:
            return True
        if g == FALSE:
            return False
        if sat_decide([g]) is False:
            return False
        if sat_decide([E._bool_norm(Not(g), se, True)]) is False:
            return True
        return None


def reduce(f: SpFormula, env: TypeEnv, budget: LoopBudget | None = None,
           trace: list | None = None) -> SemPredicate:
    """Left-to-right reduction to a single inner-free predicate."""
    folder = _Folder(env, budget or DEFAULT_BUDGET, trace)
    folder.fold(f)
    result = folder.state
    if result is None:
        raise IrreducibleFormulaError("empty formula", position=0)
    compact = _fold_compact(result, env)
    return compact if compact is not None else result


def check_reducible(f: SpFormula, env: TypeEnv,
                    budget: LoopBudget | None = None) -> Reducibility:
    """Dry run of reduce() reporting the first failing position."""
    try:
        reduce(f, env, budget)
        return Reducibility(True)
    except IrreducibleFormulaError as ex:
        return Reducibility(False, position=ex.position, reason=str(ex))
    except (NotSolvableError, ContradictionError, NonterminationError) as ex:
        return Reducibility(False, position=1, reason=str(ex))


# ---------------------------------------------------------------------------
# Compaction of guarded solved forms (ordering facts + shared multiset)
# ---------------------------------------------------------------------------

def _shared_multiset(result: SemPredicate, se: TypeEnv):
    """The multiset conjunct present (canonically) in every clause, if any."""
    shared = None
    for c in result.clauses:
        found = [normalize(cj, se) for cj in _conjuncts(c.body)
                 if isinstance(cj, MultisetEq)]
        found = [f for f in found if isinstance(f, MultisetEq)]
        if len(found) != 1:
            return None
        if shared is None:
            shared = found[0]
        elif expr_key(shared) != expr_key(found[0]):
            return None
    return shared


def _fold_compact(result: SemPredicate, env: TypeEnv) -> SemPredicate | None:
    """Collapse a guarded permutation form into ordering facts plus the
    shared multiset constraint when the two are provably the same relation.

    Every atom involved is a comparison among the listed values, so checking
    all weak orderings of those values (a 0/1/2 grid) decides equality."""
    if len(result.clauses) < 2:
        return None
    se = sp_env(env)
    ms = _shared_multiset(result, se)
    if ms is None:
        return None
    try:
        solved = solve(result, env)
    except (NotSolvableError, ContradictionError):
        return None
    names = sorted(n[:-1] for n in (free_names(x).pop() for x in ms.lhs))
    facts = []
    for u, v in itertools.permutations(names, 2):
        ok = True
        for cl in solved.clauses:
            goal = Cmp("<=", cl.scalars[u], cl.scalars[v])
            if prove_under([cl.guard], goal, env).status != "holds":
                ok = False
                break
        if ok:
            facts.append((u, v))
    # transitive reduction keeps only the covering chain
    fact_set = set(facts)
    reduced = []
    for u, v in sorted(facts):
        via = any((u, w) in fact_set and (w, v) in fact_set
                  for w in names if w not in (u, v))
        if not via:
            reduced.append((u, v))
    if not reduced:
        return None
    parts = [Cmp("<=", Var(VarRef(u + "'")), Var(VarRef(v + "'")))
             for u, v in reduced] + [ms]
    candidate = SemPredicate.plain(And(tuple(parts)))
    if _relation_equal_on_orderings(candidate, result, names, env):
        return candidate
    return None


def _relation_equal_on_orderings(a: SemPredicate, b: SemPredicate,
                                 names: list, env: TypeEnv) -> bool:
    try:
        sa = solve(extend(a, env), env)
        sb = solve(extend(b, env), env)
    except (NotSolvableError, ContradictionError):
        return False
    values = (0, 1, 2)
    others = [n for n, _ in env.scalars if n not in names]
    for combo in itertools.product(values, repeat=len(names)):
        st = dict(zip(names, combo))
        for n in others:
            st[n] = 0
        for arr in env.arrays:
            st[arr] = [0] * env.array_length()
        if _clause_outputs(sa, st, env) != _clause_outputs(sb, st, env):
            return False
    return True


def _clause_outputs(s: SolvedForm, st: dict, env: TypeEnv):
    outs = set()
    for cl in s.clauses:
        try:
            if not E.eval_expr(cl.guard, st):
                continue
            if cl.residual != TRUE and not E.eval_expr(cl.residual, st):
                continue
            vals = tuple(sorted(
                (n, E.eval_expr(e, st)) for n, e in cl.scalars.items()))
        except E.EvalError:
            continue
        outs.add(vals)
    return outs
