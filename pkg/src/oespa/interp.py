"""Concrete interpreter for operation expressions.

Executes programs on concrete states.  Simultaneous compositions evaluate
every right-hand side (and guard) against the pre-state before any location
is updated, which is what makes `x!(y) . y!(x)` a swap.  Serves as the
independent oracle for the symbolic final-value engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import soe as S
from .errors import EvalError, NonterminationError, TypeCheckError
from .expr import IntLit, TypeEnv, VarRef, eval_expr


@dataclass
class LoopBudget:
    """Bounds loop unrolling for both execution and symbolic analysis."""

    max_unroll: int = 10000
    on_exhaust: str = "error"  # 'error' | 'report-partial'

    def __post_init__(self):
        if self.max_unroll < 1:
            raise TypeCheckError("max_unroll must be >= 1")


DEFAULT_BUDGET = LoopBudget()


@dataclass
class State:
    """Concrete memory: scalar values plus fixed-length integer vectors."""

    values: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, env: TypeEnv, bindings: dict | None = None) -> "State":
        vals = {}
        for name, ty in env.scalars:
            vals[name] = False if ty == "bool" else 0
        for name in env.arrays:
            vals[name] = [0] * env.array_length()
        if bindings:
            for name, v in bindings.items():
                if name not in vals:
                    raise TypeCheckError(f"unknown variable {name!r}")
                if isinstance(vals[name], list):
                    if len(v) != len(vals[name]):
                        raise TypeCheckError(
                            f"array {name} needs {len(vals[name])} elements")
                    vals[name] = list(v)
                else:
                    vals[name] = v
        return cls(vals)

    def copy(self) -> "State":
        return State({k: (list(v) if isinstance(v, list) else v)
                      for k, v in self.values.items()})

    def get(self, name: str):
        return self.values[name]

    def __getitem__(self, name):
        return self.values[name]

    def __contains__(self, name):
        return name in self.values

    def __eq__(self, other):
        return isinstance(other, State) and self.values == other.values

    def to_json(self):
        return {k: (list(v) if isinstance(v, list) else v)
                for k, v in self.values.items()}


@dataclass
class TraceStep:
    path: tuple
    label: str
    state: State


@dataclass
class Trace:
    steps: list = field(default_factory=list)
    loop_iterations: dict = field(default_factory=dict)

    @property
    def final(self) -> State:
        return self.steps[-1].state if self.steps else None


class _Runner:
    def __init__(self, env: TypeEnv, budget: LoopBudget, trace: Trace | None,
                 watch: str | None):
        self.env = env
        self.budget = budget
        self.trace = trace
        self.watch = watch
        self.snapshots: list = []

    def exec_node(self, p: S.SoeNode, st: State, path: tuple) -> State:
        if isinstance(p, S.TermNode):
            new = self.exec_term(p.term, st)
            if self.trace is not None:
                self.trace.steps.append(
                    TraceStep(path, S.term_text(p.term), new.copy()))
            if self.watch is not None:
                if new.values[self.watch] != st.values[self.watch]:
                    v = new.values[self.watch]
                    self.snapshots.append(list(v) if isinstance(v, list) else v)
            return new
        if isinstance(p, S.Seq):
            mid = self.exec_node(p.left, st, path + (0,))
            return self.exec_node(p.right, mid, path + (1,))
        if isinstance(p, S.Guarded):
            if eval_expr(p.guard, st.values):
                return self.exec_node(p.body, st, path + (0,))
            return st
        if isinstance(p, S.Power):
            cur = st
            for _ in range(p.n):
                cur = self.exec_node(p.body, cur, path + (0,))
            return cur
        if isinstance(p, S.Loop):
            cur = st
            iters = 0
            while not eval_expr(p.until, cur.values):
                if iters >= self.budget.max_unroll:
                    raise NonterminationError(
                        f"loop budget of {self.budget.max_unroll} iterations "
                        f"exhausted", iterations=iters,
                        partial=cur if self.budget.on_exhaust == "report-partial"
                        else None)
                cur = self.exec_node(p.body, cur, path + (0,))
                iters += 1
            if self.trace is not None:
                self.trace.loop_iterations[path] = (
                    self.trace.loop_iterations.get(path, 0) + iters)
            return cur
        raise TypeError(f"unknown node {p!r}")

    def exec_term(self, t: S.Term, st: State) -> State:
        writes = S.effective_writes(t, self.env)
        updates = []
        if isinstance(t, S.MultiChoiceWrite) or (
                isinstance(t, (S.MultiTerm, S.GuardedMulti))
                and self._has_choice(t)):
            updates = self._choice_updates(t, st)
        else:
            for w in writes:
                if eval_expr(w.guard, st.values):
                    updates.append((w.target, eval_expr(w.value, st.values)))
        if not updates:
            return st
        new = st.copy()
        for target, value in updates:
            if target.index is not None:
                idx = (target.index.value if isinstance(target.index, IntLit)
                       else eval_expr(target.index, st.values))
                vec = new.values[target.name]
                if not 0 <= idx < len(vec):
                    raise EvalError(
                        f"{target.name}[{idx}] outside [0..{len(vec) - 1}]")
                vec[idx] = value
            else:
                new.values[target.name] = value
        return new

    @staticmethod
    def _has_choice(t: S.Term) -> bool:
        if isinstance(t, S.MultiChoiceWrite):
            return True
        if isinstance(t, S.MultiTerm):
            return any(_Runner._has_choice(p) for p in t.parts)
        if isinstance(t, S.GuardedMulti):
            return _Runner._has_choice(t.body)
        return False

    def _choice_updates(self, t: S.Term, st: State, outer_true=True) -> list:
        """Evaluate writes with multi-choice terms taking the first true
        branch (validity makes the choice unobservable)."""
        if isinstance(t, S.MultiChoiceWrite):
            if not outer_true:
                return []
            for value, guard in t.branches:
                if eval_expr(guard, st.values):
                    return [(t.target, eval_expr(value, st.values))]
            return []
        if isinstance(t, S.MultiTerm):
            out = []
            for p in t.parts:
                out.extend(self._choice_updates(p, st, outer_true))
            return out
        if isinstance(t, S.GuardedMulti):
            inner_true = outer_true and eval_expr(t.guard, st.values)
            return self._choice_updates(t.body, st, inner_true)
        if not outer_true:
            return []
        out = []
        for w in S.effective_writes(t, self.env):
            if eval_expr(w.guard, st.values):
                out.append((w.target, eval_expr(w.value, st.values)))
        return out


def run(p: S.SoeNode, s0: State, env: TypeEnv,
        budget: LoopBudget | None = None, watch: str | None = None):
    """Execute p from s0.  Returns the final state, or (state, snapshots)
    when a watched variable is given: snapshots collect every value the
    watched variable changes to."""
    budget = budget or DEFAULT_BUDGET
    r = _Runner(env, budget, None, watch)
    final = r.exec_node(p, s0.copy(), ())
    if watch is not None:
        return final, r.snapshots
    return final


def run_traced(p: S.SoeNode, s0: State, env: TypeEnv,
               budget: LoopBudget | None = None) -> Trace:
    """As run(), with one step per executed term."""
    budget = budget or DEFAULT_BUDGET
    trace = Trace()
    r = _Runner(env, budget, trace, None)
    final = r.exec_node(p, s0.copy(), ())
    if not trace.steps:
        trace.steps.append(TraceStep((), "skip", final.copy()))
    return trace
