"""Program synthesis from reducible specification formulas.

Each solved predicate clause becomes a simultaneous write of its explicit,
non-identity equations; guarded clauses become guard-suffixed writes composed
simultaneously (their guards are pairwise disjoint); formula sequencing,
powers and guarded repetition map onto the corresponding program operators.
A disjunctive goal over a single final value with no derivable equation is
synthesized as the increment-until-goal search loop.

The certificate re-checks the result: the reduced formula must be a property
of the synthesized program, and random differential trials compare concrete
runs against the reduced predicate as a relation.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import expr as E
from . import soe as S
from .calculus import (
    FAtom, FLoop, FPower, SolvedForm, SpFormula, check_reducible, formula_text,
    reduce as reduce_formula, solve,
)
from .errors import (
    EvalError, IrreducibleFormulaError, NonterminationError, NotSolvableError,
    OespaError, SynthesisRefusedError,
)
from .expr import (
    TRUE, Expr, IntLit, Or, Subst, TypeEnv, Var, VarRef, expr_key, free_names,
    normalize, to_text,
)
from .interp import DEFAULT_BUDGET, LoopBudget, State, run
from .sp import PropertyVerdict, SemPredicate, check_property, role_of, sp_env, sp_holds_on


@dataclass
class SynthesisResult:
    soe: S.SoeNode
    certificate: dict = field(default_factory=dict)

    @property
    def correct(self) -> bool:
        return self.certificate.get("verdict", {}).get("status") == "holds"


def _finals_to_running(e: Expr, env: TypeEnv) -> Expr:
    """Translate a predicate over final values into an expression over the
    running state: primed names become plain names."""
    sub = Subst()
    for n, _ in env.scalars:
        sub.scalars[n + "'"] = Var(VarRef(n))
    for a in env.arrays:
        sub.arrays[a + "'"] = tuple(
            E.av(a, IntLit(k)) for k in range(env.array_length()))
    return E._subst_raw(e, sub, sp_env(env))


def _search_form(pred: SemPredicate, env: TypeEnv) -> S.SoeNode | None:
    """Disjunctive goal over one final scalar: synthesize the paper of an
    increment search, stepping the variable until the goal holds."""
    if not pred.is_plain():
        return None
    body = pred.body
    if not isinstance(body, Or):
        return None
    finals = pred.final_vars()
    if len(finals) != 1:
        return None
    (v,) = finals
    if env.scalar_type(v) != "int":
        return None
    goal = _finals_to_running(body, env)
    step = S.TermNode(S.SimpleWrite(VarRef(v), E.Add((Var(VarRef(v)), IntLit(1)))))
    return S.Loop(step, goal)


def _clause_parts(clause, env: TypeEnv) -> list:
    """Write terms for one solved clause: explicit non-identity equations in
    declaration order."""
    se = sp_env(env)
    writes = []
    for name, _ in env.scalars:
        if name not in clause.explicit:
            continue
        value = clause.scalars[name]
        if expr_key(normalize(value, se)) == expr_key(Var(VarRef(name))):
            continue
        writes.append(S.SimpleWrite(VarRef(name), value))
    for name in env.arrays:
        if name not in clause.explicit:
            continue
        for idx, value in clause.intents.get(name, []):
            if idx is None:
                if (isinstance(value, Var) and value.ref.whole
                        and value.ref.name == name):
                    continue
                writes.append(S.SimpleWrite(VarRef(name, whole=True), value))
            else:
                writes.append(S.SimpleWrite(VarRef(name, index=idx), value))
    return writes


def _synth_atom(pred: SemPredicate, env: TypeEnv, assumptions: list) -> S.SoeNode:
    if pred.is_true():
        return S.TermNode(S.Epsilon())
    try:
        solved = solve(pred, env)
    except NotSolvableError as ex:
        loop = _search_form(pred, env)
        if loop is not None:
            return loop
        raise SynthesisRefusedError(
            f"no functional solution for {pred.pretty()}: {ex}")
    parts = []
    for clause in solved.clauses:
        if clause.residual != TRUE:
            assumptions.append(to_text(clause.residual))
        writes = _clause_parts(clause, env)
        if not writes:
            continue
        if clause.guard == TRUE:
            parts.extend(writes)
            continue
        if len(writes) == 1 and writes[0].target.index is None and not writes[0].target.whole:
            parts.append(S.CondWrite(writes[0].target, writes[0].value, clause.guard))
        elif len(writes) == 1:
            parts.append(S.GuardedMulti(S.MultiTerm(tuple(writes)), clause.guard))
        else:
            parts.append(S.GuardedMulti(S.MultiTerm(tuple(writes)), clause.guard))
    if not parts:
        return S.TermNode(S.Epsilon())
    if len(parts) == 1:
        return S.TermNode(parts[0])
    return S.TermNode(S.MultiTerm(tuple(parts)))


def _synth_formula(f: SpFormula, env: TypeEnv, assumptions: list) -> S.SoeNode:
    nodes = []
    for item in f.items:
        if isinstance(item, FAtom):
            nodes.append(_synth_atom(item.pred, env, assumptions))
        elif isinstance(item, FPower):
            if item.n == 0:
                nodes.append(S.TermNode(S.Epsilon()))
            else:
                inner = _synth_formula(item.body, env, assumptions)
                nodes.append(inner if item.n == 1 else S.Power(inner, item.n))
        elif isinstance(item, FLoop):
            inner = _synth_formula(item.body, env, assumptions)
            guard_pred = item.until
            guard = _finals_to_running(guard_pred.as_formula_expr(), env)
            touched = S.write_set(inner).names()
            plain_reads = {n for n in guard_pred.names_by_role("initial")}
            clash = plain_reads & touched
            if clash:
                raise SynthesisRefusedError(
                    f"repetition guard reads {sorted(clash)} before the loop, "
                    "but the body changes them")
            nodes.append(S.Loop(inner, guard))
        elif isinstance(item, SpFormula):
            nodes.append(_synth_formula(item, env, assumptions))
        else:
            raise TypeError(f"unknown formula item {item!r}")
    return S.seq_of(nodes)


def synthesize(f: SpFormula, env: TypeEnv, trials: int = 200,
               budget: LoopBudget | None = None, seed: int = 20240) -> SynthesisResult:
    """Emit a program for the formula and certify it."""
    assumptions: list = []
    soe = _synth_formula(f, env, assumptions)
    verdict, reduced_text, ran = _certify(soe, f, env, trials, budget, seed)
    cert = {
        "formula": formula_text(f),
        "program": S.soe_text(soe),
        "verdict": verdict.to_json(),
        "oracle_trials": ran,
        "assumptions": assumptions,
    }
    if reduced_text is not None:
        cert["reduced"] = reduced_text
    return SynthesisResult(soe, cert)


def certify(soe: S.SoeNode, f: SpFormula, env: TypeEnv, trials: int = 200,
            budget: LoopBudget | None = None, seed: int = 20240) -> PropertyVerdict:
    """The formula must be a property of the program: symbolic check of the
    reduced predicate when reduction succeeds, always backed by differential
    trials of concrete runs against the reduced relation."""
    verdict, _, _ = _certify(soe, f, env, trials, budget, seed)
    return verdict


def _certify(soe, f, env, trials, budget, seed):
    budget = budget or DEFAULT_BUDGET
    try:
        red = reduce_formula(f, env, budget)
    except (IrreducibleFormulaError, NotSolvableError, NonterminationError) as ex:
        return (PropertyVerdict("unknown", reason=f"formula did not reduce: {ex}"),
                None, 0)
    try:
        verdict = check_property(red, soe, env, budget)
    except OespaError as ex:
        verdict = PropertyVerdict("unknown", reason=f"symbolic check failed: {ex}")
    rng = random.Random(seed)
    ran = 0
    for _ in range(trials):
        bindings = {}
        for n, t in env.scalars:
            bindings[n] = rng.choice([False, True]) if t == "bool" else rng.randint(-8, 8)
        for a in env.arrays:
            bindings[a] = [rng.randint(-8, 8) for _ in range(env.array_length())]
        s0 = State.initial(env, bindings)
        try:
            out = run(soe, s0, env, budget)
            holds = sp_holds_on(red, s0.values, out.values)
        except EvalError:
            continue  # opaque symbols or partial conditionals: trial skipped
        except NonterminationError:
            continue
        ran += 1
        if not holds:
            return (PropertyVerdict(
                "fails", witness=s0.to_json(),
                reason="differential trial violated the reduced predicate"),
                red.pretty(), ran)
    if verdict.status == "unknown" and ran:
        verdict.reason = (verdict.reason or "") + f" ({ran} differential trials passed)"
    return verdict, red.pretty(), ran
