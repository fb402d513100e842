"""Expression core: immutable integer/boolean terms over program variables.

Expressions cover literals, scalar and array variables, arithmetic, comparisons,
boolean connectives, guarded conditional expressions, bounded summation,
multiset equality and opaque function symbols.  `normalize` produces a
canonical form (polynomial normal form for arithmetic, ordered
negation-normal form for booleans, conditionals lifted to the top and
pruned/merged), `eval_expr` evaluates on concrete states, `substitute`
performs simultaneous substitution, and `equivalent` is a three-valued
equality decision that never guesses.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field

from .errors import (
    ArithmeticEvalError,
    CondUndefinedError,
    EvalError,
    IndexRangeError,
    OpaqueFunctionError,
    SubstitutionCaptureError,
    TypeCheckError,
)

# Opaque unary function symbols usable in predicates.  They compose
# syntactically; evaluating one on a concrete state is an error.
OPAQUE_FUNCTIONS = ("sin", "cos", "sqrt", "cube")


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

class Expr:
    """Base class of all expression nodes.  Nodes are frozen and shareable."""

    __slots__ = ()


@dataclass(frozen=True)
class VarRef:
    """A scalar variable, one array element, or an array as a whole."""

    name: str
    index: Expr | None = None
    whole: bool = False

    def is_scalar(self) -> bool:
        return self.index is None and not self.whole

    def is_element(self) -> bool:
        return self.index is not None

    def base_name(self) -> str:
        return self.name.rstrip("'")

    def pretty(self) -> str:
        if self.whole:
            return self.name
        if self.index is not None:
            return f"{self.name}[{to_text(self.index)}]"
        return self.name


@dataclass(frozen=True)
class IntLit(Expr):
    value: int


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool


@dataclass(frozen=True)
class Var(Expr):
    ref: VarRef


@dataclass(frozen=True)
class Add(Expr):
    args: tuple


@dataclass(frozen=True)
class Sub(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Neg(Expr):
    a: Expr


@dataclass(frozen=True)
class Mul(Expr):
    args: tuple


@dataclass(frozen=True)
class Div(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Mod(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Cmp(Expr):
    op: str  # '=', '!=', '<', '<=', '>', '>='
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Not(Expr):
    a: Expr


@dataclass(frozen=True)
class And(Expr):
    args: tuple


@dataclass(frozen=True)
class Or(Expr):
    args: tuple


@dataclass(frozen=True)
class Implies(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Cond(Expr):
    """Guarded alternatives: value_i when guard_i.  Guards must cover, and
    overlapping guards must select equal values."""

    branches: tuple  # of (value: Expr, guard: Expr)


@dataclass(frozen=True)
class Sum(Expr):
    """Bounded summation of body over index in [lo..hi]; empty when hi < lo."""

    index: str
    lo: Expr
    hi: Expr
    body: Expr


@dataclass(frozen=True)
class MultisetEq(Expr):
    lhs: tuple
    rhs: tuple


@dataclass(frozen=True)
class Fn(Expr):
    name: str
    arg: Expr


TRUE = BoolLit(True)
FALSE = BoolLit(False)


# -- construction helpers ---------------------------------------------------

def lit(n: int) -> IntLit:
    return IntLit(n)


def sv(name: str) -> Var:
    """Scalar variable reference."""
    return Var(VarRef(name))


def av(name: str, index: Expr) -> Var:
    """Array element reference."""
    return Var(VarRef(name, index=index))


def wv(name: str) -> Var:
    """Whole-array reference."""
    return Var(VarRef(name, whole=True))


def add(*args: Expr) -> Expr:
    return Add(tuple(args))


def mul(*args: Expr) -> Expr:
    return Mul(tuple(args))


def conj(*args: Expr) -> Expr:
    return And(tuple(args))


def disj(*args: Expr) -> Expr:
    return Or(tuple(args))


def eq(a: Expr, b: Expr) -> Cmp:
    return Cmp("=", a, b)


# ---------------------------------------------------------------------------
# Typing environment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TypeEnv:
    """Declared variables for one analysis session.

    All arrays share the index range [0..upper]; names are unique across
    scalars and arrays.
    """

    scalars: tuple = ()  # of (name, 'int' | 'bool') in declaration order
    arrays: tuple = ()  # of array names (int element type)
    upper: int | None = None

    def __post_init__(self):
        names = [n for n, _ in self.scalars] + list(self.arrays)
        if len(set(names)) != len(names):
            raise TypeCheckError("duplicate variable declaration")
        if self.arrays and (self.upper is None or self.upper < 1):
            raise TypeCheckError("array range upper bound must be >= 1")

    def scalar_type(self, name: str) -> str | None:
        base = name.rstrip("'")
        for n, t in self.scalars:
            if n == base:
                return t
        return None

    def is_array(self, name: str) -> bool:
        return name.rstrip("'") in self.arrays

    def is_declared(self, name: str) -> bool:
        return self.scalar_type(name) is not None or self.is_array(name)

    def scalar_names(self) -> list:
        return [n for n, _ in self.scalars]

    def array_length(self) -> int:
        return (self.upper or 0) + 1

    def all_refs(self) -> list:
        """Every declared scalar plus every concrete array element."""
        refs = [VarRef(n) for n, _ in self.scalars]
        for a in self.arrays:
            refs.extend(VarRef(a, index=IntLit(k)) for k in range(self.array_length()))
        return refs


def env_of(scalars=(), arrays=(), upper=None) -> TypeEnv:
    scal = tuple((s, "int") if isinstance(s, str) else tuple(s) for s in scalars)
    return TypeEnv(scalars=scal, arrays=tuple(arrays), upper=upper)


# ---------------------------------------------------------------------------
# Structural ordering key
# ---------------------------------------------------------------------------

_TAGS = {
    IntLit: 0, BoolLit: 1, Var: 2, Fn: 3, Div: 4, Mod: 5, Sum: 6,
    Mul: 7, Add: 8, Neg: 9, Sub: 10, Cmp: 11, Not: 12, And: 13, Or: 14,
    Implies: 15, Cond: 16, MultisetEq: 17,
}


def expr_key(e: Expr):
    """Total deterministic ordering key over expression trees."""
    t = _TAGS[type(e)]
    if isinstance(e, IntLit):
        return (t, e.value)
    if isinstance(e, BoolLit):
        return (t, e.value)
    if isinstance(e, Var):
        r = e.ref
        return (t, r.name, r.whole, expr_key(r.index) if r.index is not None else ())
    if isinstance(e, Fn):
        return (t, e.name, expr_key(e.arg))
    if isinstance(e, (Div, Mod)):
        return (t, expr_key(e.a), expr_key(e.b))
    if isinstance(e, Sum):
        return (t, e.index, expr_key(e.lo), expr_key(e.hi), expr_key(e.body))
    if isinstance(e, (Mul, Add, And, Or)):
        return (t, tuple(expr_key(x) for x in e.args))
    if isinstance(e, (Neg, Not)):
        return (t, expr_key(e.a))
    if isinstance(e, (Sub, Implies)):
        return (t, expr_key(e.a), expr_key(e.b))
    if isinstance(e, Cmp):
        return (t, e.op, expr_key(e.a), expr_key(e.b))
    if isinstance(e, Cond):
        return (t, tuple((expr_key(v), expr_key(g)) for v, g in e.branches))
    if isinstance(e, MultisetEq):
        return (t, tuple(expr_key(x) for x in e.lhs), tuple(expr_key(x) for x in e.rhs))
    raise TypeError(f"unknown node {e!r}")


# ---------------------------------------------------------------------------
# Polynomial layer (integer arithmetic normal form)
# ---------------------------------------------------------------------------
# A polynomial is a dict mapping monomials to nonzero integer coefficients.
# A monomial is a sorted tuple of (atom, power) pairs; () is the constant
# monomial.  Atoms are normalized non-polynomial expressions (variables,
# array elements, opaque applications, unexpandable Div/Mod/Sum).

def _p_const(c: int) -> dict:
    return {(): c} if c else {}


def _p_atom(a: Expr) -> dict:
    return {((a, 1),): 1}


def _p_add(p: dict, q: dict) -> dict:
    r = dict(p)
    for m, c in q.items():
        nc = r.get(m, 0) + c
        if nc:
            r[m] = nc
        elif m in r:
            del r[m]
    return r


def _p_scale(p: dict, c: int) -> dict:
    if c == 0:
        return {}
    return {m: k * c for m, k in p.items()}


def _p_neg(p: dict) -> dict:
    return _p_scale(p, -1)


def _mono_mul(m1: tuple, m2: tuple) -> tuple:
    acc = {}
    order = {}
    for a, p in itertools.chain(m1, m2):
        k = expr_key(a)
        acc[k] = acc.get(k, 0) + p
        order[k] = a
    return tuple((order[k], acc[k]) for k in sorted(acc))


def _p_mul(p: dict, q: dict) -> dict:
    r = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = _mono_mul(m1, m2)
            nc = r.get(m, 0) + c1 * c2
            if nc:
                r[m] = nc
            elif m in r:
                del r[m]
    return r


def _p_is_const(p: dict) -> bool:
    return not p or (len(p) == 1 and () in p)


def _p_const_val(p: dict) -> int:
    return p.get((), 0)


def _mono_to_expr(m: tuple) -> Expr:
    factors = []
    for a, pw in m:
        factors.extend([a] * pw)
    if len(factors) == 1:
        return factors[0]
    return Mul(tuple(factors))


def _p_to_expr(p: dict) -> Expr:
    if not p:
        return IntLit(0)
    terms = []
    # constant term printed last; monomials in key order
    monos = sorted((m for m in p if m != ()), key=lambda m: tuple(
        (expr_key(a), pw) for a, pw in m))
    for m in monos:
        c = p[m]
        base = _mono_to_expr(m)
        if c == 1:
            terms.append(base)
        elif c == -1:
            terms.append(Neg(base))
        else:
            terms.append(Mul((IntLit(c), base)) if c > 0 else Neg(Mul((IntLit(-c), base))))
    k = p.get((), 0)
    if k or not terms:
        terms.append(IntLit(k))
    if len(terms) == 1:
        return terms[0]
    return Add(tuple(terms))


def _p_content(p: dict) -> int:
    """GCD of all coefficients (positive), 0 for the zero polynomial."""
    import math
    g = 0
    for c in p.values():
        g = math.gcd(g, abs(c))
    return g


def _p_leading_sign(p: dict) -> int:
    monos = sorted((m for m in p if m != ()), key=lambda m: tuple(
        (expr_key(a), pw) for a, pw in m))
    if monos:
        return 1 if p[monos[0]] > 0 else -1
    c = p.get((), 0)
    return 1 if c >= 0 else -1


def _trunc_div(a: int, b: int) -> int:
    if b == 0:
        raise ArithmeticEvalError("division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _trunc_mod(a: int, b: int) -> int:
    return a - b * _trunc_div(a, b)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def _expr_type(e: Expr, env: TypeEnv | None) -> str:
    if isinstance(e, (IntLit, Add, Sub, Neg, Mul, Div, Mod, Sum, Fn)):
        return "int"
    if isinstance(e, (BoolLit, Cmp, Not, And, Or, Implies, MultisetEq)):
        return "bool"
    if isinstance(e, Var):
        if e.ref.whole:
            return "array"
        if e.ref.index is not None:
            return "int"
        if env is not None:
            t = env.scalar_type(e.ref.name)
            if t is not None:
                return t
            if env.is_array(e.ref.name):
                return "array"
        return "int"
    if isinstance(e, Cond):
        return _expr_type(e.branches[0][0], env)
    raise TypeError(f"unknown node {e!r}")


def normalize(e: Expr, env: TypeEnv | None = None) -> Expr:
    """Canonical form of e.  Idempotent; preserves evaluation on every state."""
    if _expr_type(e, env) == "bool":
        return _bool_norm(e, env, True)
    branches = _int_branches(e, env)
    return _rebuild_cond(branches)


def _rebuild_cond(branches: list) -> Expr:
    """branches: list of (poly, guard-normalized). Prune, merge, order."""
    out = []
    for p, g in branches:
        if g == FALSE:
            continue
        out.append((p, g))
    if not out:
        # all branches pruned: undefined everywhere; keep an empty guard form
        return Cond(((IntLit(0), FALSE),))
    # merge branches with identical values
    merged = {}
    order = []
    for p, g in out:
        ek = tuple(sorted(((tuple((expr_key(a), pw) for a, pw in m)), c) for m, c in p.items()))
        if ek in merged:
            merged[ek] = (merged[ek][0], _mk_or([merged[ek][1], g]))
        else:
            merged[ek] = (p, g)
            order.append(ek)
    items = [merged[k] for k in order]
    if len(items) == 1 and items[0][1] == TRUE:
        return _p_to_expr(items[0][0])
    items.sort(key=lambda pg: (expr_key(_p_to_expr(pg[0])), expr_key(pg[1])))
    return Cond(tuple((_p_to_expr(p), g) for p, g in items))


def _guard_product(gs: list, env) -> Expr:
    return _mk_and(list(gs))


def _int_branches(e: Expr, env: TypeEnv | None) -> list:
    """Lift conditionals to the top: list of (poly, normalized guard)."""
    if isinstance(e, IntLit):
        return [(_p_const(e.value), TRUE)]
    if isinstance(e, Var):
        if e.ref.whole:
            raise TypeCheckError(f"whole array {e.ref.name} used as integer")
        if e.ref.index is None:
            return [(_p_atom(e), TRUE)]
        out = []
        for ip, g in _int_branches(e.ref.index, env):
            atom = Var(VarRef(e.ref.name, index=_p_to_expr(ip)))
            out.append((_p_atom(atom), g))
        return out
    if isinstance(e, Neg):
        return [(_p_neg(p), g) for p, g in _int_branches(e.a, env)]
    if isinstance(e, Add):
        acc = [(_p_const(0), TRUE)]
        for arg in e.args:
            nxt = []
            for (p1, g1), (p2, g2) in itertools.product(acc, _int_branches(arg, env)):
                g = _mk_and([g1, g2])
                if g != FALSE:
                    nxt.append((_p_add(p1, p2), g))
            acc = nxt
        return acc
    if isinstance(e, Sub):
        out = []
        for (p1, g1), (p2, g2) in itertools.product(
                _int_branches(e.a, env), _int_branches(e.b, env)):
            g = _mk_and([g1, g2])
            if g != FALSE:
                out.append((_p_add(p1, _p_neg(p2)), g))
        return out
    if isinstance(e, Mul):
        acc = [(_p_const(1), TRUE)]
        for arg in e.args:
            nxt = []
            for (p1, g1), (p2, g2) in itertools.product(acc, _int_branches(arg, env)):
                g = _mk_and([g1, g2])
                if g != FALSE:
                    nxt.append((_p_mul(p1, p2), g))
            acc = nxt
        return acc
    if isinstance(e, (Div, Mod)):
        out = []
        for (pa, ga), (pb, gb) in itertools.product(
                _int_branches(e.a, env), _int_branches(e.b, env)):
            g = _mk_and([ga, gb])
            if g == FALSE:
                continue
            out.append((_divmod_poly(pa, pb, isinstance(e, Div)), g))
        return out
    if isinstance(e, Fn):
        if e.name not in OPAQUE_FUNCTIONS:
            raise TypeCheckError(f"unknown function symbol {e.name}")
        out = []
        for p, g in _int_branches(e.arg, env):
            out.append((_p_atom(Fn(e.name, _p_to_expr(p))), g))
        return out
    if isinstance(e, Cond):
        out = []
        for val, guard in e.branches:
            gn = _bool_norm(guard, env, True)
            if gn == FALSE:
                continue
            for p, g2 in _int_branches(val, env):
                g = _mk_and([gn, g2])
                if g != FALSE:
                    out.append((p, g))
        return out
    if isinstance(e, Sum):
        out = []
        for (plo, glo), (phi, ghi) in itertools.product(
                _int_branches(e.lo, env), _int_branches(e.hi, env)):
            g = _mk_and([glo, ghi])
            if g == FALSE:
                continue
            if _p_is_const(plo) and _p_is_const(phi):
                lo_v, hi_v = _p_const_val(plo), _p_const_val(phi)
                acc = [(_p_const(0), g)]
                for k in range(lo_v, hi_v + 1):
                    term = substitute(e.body, Subst(scalars={e.index: IntLit(k)}), env)
                    nxt = []
                    for (p1, g1), (p2, g2) in itertools.product(acc, _int_branches(term, env)):
                        gg = _mk_and([g1, g2])
                        if gg != FALSE:
                            nxt.append((_p_add(p1, p2), gg))
                    acc = nxt
                out.extend(acc)
            else:
                body_n = normalize(e.body, env)
                atom = Sum(e.index, _p_to_expr(plo), _p_to_expr(phi), body_n)
                out.append((_p_atom(atom), g))
        return out
    raise TypeCheckError(f"boolean expression used as integer: {to_text(e)}")


def _divmod_poly(pa: dict, pb: dict, is_div: bool) -> dict:
    if _p_is_const(pb):
        b = _p_const_val(pb)
        if b != 0:
            if _p_is_const(pa):
                a = _p_const_val(pa)
                return _p_const(_trunc_div(a, b) if is_div else _trunc_mod(a, b))
            if is_div:
                if b == 1:
                    return pa
                if b == -1:
                    return _p_neg(pa)
                if all(c % b == 0 for c in pa.values()):
                    return {m: c // b for m, c in pa.items()}
            else:
                if b in (1, -1):
                    return _p_const(0)
    node = (Div if is_div else Mod)(_p_to_expr(pa), _p_to_expr(pb))
    return _p_atom(node)


# -- boolean normal form ----------------------------------------------------

def _bool_norm(e: Expr, env: TypeEnv | None, pos: bool) -> Expr:
    if isinstance(e, BoolLit):
        return BoolLit(e.value == pos)
    if isinstance(e, Var):
        if e.ref.whole or e.ref.index is not None:
            raise TypeCheckError(f"{e.ref.pretty()} is not boolean")
        return e if pos else Not(e)
    if isinstance(e, Not):
        return _bool_norm(e.a, env, not pos)
    if isinstance(e, And):
        parts = [_bool_norm(a, env, pos) for a in e.args]
        return _mk_and(parts) if pos else _mk_or(parts)
    if isinstance(e, Or):
        parts = [_bool_norm(a, env, pos) for a in e.args]
        return _mk_or(parts) if pos else _mk_and(parts)
    if isinstance(e, Implies):
        if pos:
            return _mk_or([_bool_norm(e.a, env, False), _bool_norm(e.b, env, True)])
        return _mk_and([_bool_norm(e.a, env, True), _bool_norm(e.b, env, False)])
    if isinstance(e, Cond):
        # boolean conditional: guarded disjunction (guards assumed to cover)
        parts = []
        for val, guard in e.branches:
            gn = _bool_norm(guard, env, True)
            vn = _bool_norm(val, env, pos)
            parts.append(_mk_and([gn, vn]))
        return _mk_or(parts)
    if isinstance(e, MultisetEq):
        return _mseteq_norm(e, env, pos)
    if isinstance(e, Cmp):
        return _cmp_norm(e, env, pos)
    raise TypeCheckError(f"integer expression used as boolean: {to_text(e)}")


def _mseteq_norm(e: MultisetEq, env, pos: bool) -> Expr:
    lhs = [normalize(x, env) for x in e.lhs]
    rhs = [normalize(x, env) for x in e.rhs]
    lhs.sort(key=expr_key)
    rhs.sort(key=expr_key)
    if [expr_key(x) for x in lhs] == [expr_key(y) for y in rhs]:
        return BoolLit(pos)
    if all(isinstance(x, IntLit) for x in lhs + rhs):
        equal = sorted(x.value for x in lhs) == sorted(y.value for y in rhs)
        return BoolLit(equal == pos)
    atom = MultisetEq(tuple(lhs), tuple(rhs))
    return atom if pos else Not(atom)


_CMP_NEG = {"=": "!=", "!=": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


def _cmp_norm(e: Cmp, env, pos: bool) -> Expr:
    op = e.op if pos else _CMP_NEG[e.op]
    ta, tb = _expr_type(e.a, env), _expr_type(e.b, env)
    if ta == "array" or tb == "array":
        if ta != tb or op not in ("=", "!="):
            raise TypeCheckError("whole arrays compare only with = or !=")
        return _array_cmp_norm(e.a, e.b, op, env)
    if ta == "bool" or tb == "bool":
        if ta != tb or op not in ("=", "!="):
            raise TypeCheckError("boolean operands compare only with = or !=")
        a1 = _bool_norm(e.a, env, True)
        a0 = _bool_norm(e.a, env, False)
        b1 = _bool_norm(e.b, env, True)
        b0 = _bool_norm(e.b, env, False)
        if op == "=":
            return _mk_or([_mk_and([a1, b1]), _mk_and([a0, b0])])
        return _mk_or([_mk_and([a1, b0]), _mk_and([a0, b1])])
    # integer comparison: lift conditionals from both sides
    diffs = []
    for (pa, ga), (pb, gb) in itertools.product(
            _int_branches(e.a, env), _int_branches(e.b, env)):
        g = _mk_and([ga, gb])
        if g == FALSE:
            continue
        diffs.append((_p_add(pa, _p_neg(pb)), g))
    parts = []
    for p, g in diffs:
        parts.append(_mk_and([g, _cmp_atom(p, op)]))
    return _mk_or(parts)


def _array_cmp_norm(a: Expr, b: Expr, op: str, env) -> Expr:
    if env is None or env.upper is None:
        raise TypeCheckError("array comparison requires a declared array range")
    if not (isinstance(a, Var) and a.ref.whole and isinstance(b, Var) and b.ref.whole):
        raise TypeCheckError("array comparison requires plain array operands")
    eqs = []
    for k in range(env.array_length()):
        eqs.append(Cmp("=", av(a.ref.name, IntLit(k)), av(b.ref.name, IntLit(k))))
    combined = _bool_norm(And(tuple(eqs)), env, True)
    return combined if op == "=" else _bool_norm(Not(And(tuple(eqs))), env, True)


def _cmp_atom(p: dict, op: str) -> Expr:
    """Canonical comparison literal: poly op k with {<=,>=,=,!=}."""
    if _p_is_const(p):
        c = _p_const_val(p)
        val = {"=": c == 0, "!=": c != 0, "<": c < 0, "<=": c <= 0,
               ">": c > 0, ">=": c >= 0}[op]
        return BoolLit(val)
    k = -p.get((), 0)
    q = dict(p)
    q.pop((), None)
    # strict ops become inclusive over the integers
    if op == "<":
        op, k = "<=", k - 1
    elif op == ">":
        op, k = ">=", k + 1
    if _p_leading_sign(q) < 0:
        q = _p_neg(q)
        k = -k
        op = {"<=": ">=", ">=": "<=", "=": "=", "!=": "!="}[op]
    g = _p_content(q)
    if g > 1:
        if op == "<=":
            k = k // g  # floor
        elif op == ">=":
            k = -((-k) // g)  # ceil
        else:
            if k % g != 0:
                return BoolLit(op == "!=")
            k = k // g
        q = {m: c // g for m, c in q.items()}
    return Cmp(op, _p_to_expr(q), IntLit(k))


def _is_cmp_literal(e: Expr):
    """Return (poly-key, op, k) for canonical comparison literals else None."""
    if isinstance(e, Cmp) and isinstance(e.b, IntLit):
        return (expr_key(e.a), e.op, e.b.value)
    return None


def _mk_and(items: list) -> Expr:
    flat = []
    seen = set()
    for it in items:
        if isinstance(it, BoolLit):
            if not it.value:
                return FALSE
            continue
        parts = it.args if isinstance(it, And) else (it,)
        for p in parts:
            if isinstance(p, BoolLit):
                if not p.value:
                    return FALSE
                continue
            k = expr_key(p)
            if k not in seen:
                seen.add(k)
                flat.append(p)
    # interval reasoning per polynomial
    lits = {}
    rest = []
    for p in flat:
        c = _is_cmp_literal(p)
        if c:
            lits.setdefault(c[0], []).append(p)
        else:
            rest.append(p)
    simplified = []
    for pk in lits:
        merged = _merge_conj_literals(lits[pk])
        if merged is None:
            return FALSE
        simplified.extend(merged)
    out = simplified + rest
    if not out:
        return TRUE
    out.sort(key=expr_key)
    if len(out) == 1:
        return out[0]
    return And(tuple(out))


def _merge_conj_literals(ls: list):
    """Conjoin comparison literals over one polynomial; None when empty."""
    lo, hi = None, None
    eqv = None
    neqs = set()
    poly = ls[0].a
    for l in ls:
        k = l.b.value
        if l.op == ">=":
            lo = k if lo is None else max(lo, k)
        elif l.op == "<=":
            hi = k if hi is None else min(hi, k)
        elif l.op == "=":
            if eqv is not None and eqv != k:
                return None
            eqv = k
        else:
            neqs.add(k)
    if eqv is not None:
        if (lo is not None and eqv < lo) or (hi is not None and eqv > hi) or eqv in neqs:
            return None
        return [Cmp("=", poly, IntLit(eqv))]
    if lo is not None and hi is not None:
        # tighten over excluded points at the edges
        while lo in neqs:
            neqs.discard(lo)
            lo += 1
        while hi in neqs:
            neqs.discard(hi)
            hi -= 1
        if lo > hi:
            return None
        if lo == hi:
            if lo in neqs:
                return None
            return [Cmp("=", poly, IntLit(lo))]
    elif lo is not None:
        while lo in neqs:
            neqs.discard(lo)
            lo += 1
    elif hi is not None:
        while hi in neqs:
            neqs.discard(hi)
            hi -= 1
    out = []
    if lo is not None:
        out.append(Cmp(">=", poly, IntLit(lo)))
    if hi is not None:
        out.append(Cmp("<=", poly, IntLit(hi)))
    for k in sorted(neqs):
        if (lo is None or k > lo) and (hi is None or k < hi):
            out.append(Cmp("!=", poly, IntLit(k)))
    return out


def _mk_or(items: list) -> Expr:
    flat = []
    seen = set()
    for it in items:
        if isinstance(it, BoolLit):
            if it.value:
                return TRUE
            continue
        parts = it.args if isinstance(it, Or) else (it,)
        for p in parts:
            if isinstance(p, BoolLit):
                if p.value:
                    return TRUE
                continue
            k = expr_key(p)
            if k not in seen:
                seen.add(k)
                flat.append(p)
    if not flat:
        return FALSE
    # coverage check for single comparison literals over one polynomial
    singles = {}
    for p in flat:
        c = _is_cmp_literal(p)
        if c:
            singles.setdefault(c[0], []).append((c[1], c[2]))
    for pk, ops in singles.items():
        if _covers_all_ints(ops):
            return TRUE
    # absorption: drop disjuncts that are supersets of another disjunct
    def lit_keys(d):
        return frozenset(expr_key(x) for x in (d.args if isinstance(d, And) else (d,)))
    keysets = [(d, lit_keys(d)) for d in flat]
    kept = []
    for d, ks in keysets:
        redundant = any(ks > ks2 for d2, ks2 in keysets if d2 is not d)
        if not redundant:
            kept.append(d)
    kept.sort(key=expr_key)
    if len(kept) == 1:
        return kept[0]
    return Or(tuple(kept))


def _covers_all_ints(ops: list) -> bool:
    """Whether a union of (op, k) constraints on one value covers all ints."""
    his = [k for op, k in ops if op == "<="]
    los = [k for op, k in ops if op == ">="]
    neqs = [k for op, k in ops if op == "!="]
    eqs = [k for op, k in ops if op == "="]
    hi = max(his) if his else None
    lo = min(los) if los else None

    def covered(v):
        if hi is not None and v <= hi:
            return True
        if lo is not None and v >= lo:
            return True
        if v in eqs:
            return True
        return any(v != k for k in neqs)

    if neqs:
        # not-equal literals cover everything except their own point
        return all(covered(k) for k in set(neqs))
    if hi is not None and lo is not None:
        return all(covered(v) for v in range(hi + 1, lo)) if lo > hi + 1 else True
    return False


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def eval_expr(e: Expr, state) -> int | bool | list:
    """Evaluate on a concrete state (mapping name -> int/bool/list)."""
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, BoolLit):
        return e.value
    if isinstance(e, Var):
        r = e.ref
        if r.whole:
            try:
                return state[r.name]
            except KeyError:
                raise EvalError(f"unbound array {r.name}")
        if r.index is not None:
            idx = eval_expr(r.index, state)
            try:
                vec = state[r.name]
            except KeyError:
                raise EvalError(f"unbound array {r.name}")
            if not 0 <= idx < len(vec):
                raise IndexRangeError(f"{r.name}[{idx}] outside [0..{len(vec) - 1}]")
            return vec[idx]
        try:
            return state[r.name]
        except KeyError:
            raise EvalError(f"unbound variable {r.name}")
    if isinstance(e, Add):
        return sum(eval_expr(a, state) for a in e.args)
    if isinstance(e, Sub):
        return eval_expr(e.a, state) - eval_expr(e.b, state)
    if isinstance(e, Neg):
        return -eval_expr(e.a, state)
    if isinstance(e, Mul):
        r = 1
        for a in e.args:
            r *= eval_expr(a, state)
        return r
    if isinstance(e, Div):
        return _trunc_div(eval_expr(e.a, state), eval_expr(e.b, state))
    if isinstance(e, Mod):
        return _trunc_mod(eval_expr(e.a, state), eval_expr(e.b, state))
    if isinstance(e, Cmp):
        a, b = eval_expr(e.a, state), eval_expr(e.b, state)
        return {"=": a == b, "!=": a != b, "<": a < b, "<=": a <= b,
                ">": a > b, ">=": a >= b}[e.op]
    if isinstance(e, Not):
        return not eval_expr(e.a, state)
    if isinstance(e, And):
        return all(eval_expr(a, state) for a in e.args)
    if isinstance(e, Or):
        return any(eval_expr(a, state) for a in e.args)
    if isinstance(e, Implies):
        return (not eval_expr(e.a, state)) or eval_expr(e.b, state)
    if isinstance(e, Cond):
        for val, guard in e.branches:
            if eval_expr(guard, state):
                return eval_expr(val, state)
        raise CondUndefinedError(
            f"no guard true in {to_text(e)}")
    if isinstance(e, Sum):
        lo = eval_expr(e.lo, state)
        hi = eval_expr(e.hi, state)
        total = 0
        inner = dict(state)
        for k in range(lo, hi + 1):
            inner[e.index] = k
            total += eval_expr(e.body, inner)
        return total
    if isinstance(e, MultisetEq):
        lv = sorted(eval_expr(x, state) for x in e.lhs)
        rv = sorted(eval_expr(x, state) for x in e.rhs)
        return lv == rv
    if isinstance(e, Fn):
        raise OpaqueFunctionError(f"{e.name} has no numeric interpretation")
    raise EvalError(f"cannot evaluate {e!r}")


# ---------------------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------------------

@dataclass
class Subst:
    """Simultaneous substitution: scalar name -> expression, array name ->
    vector of per-element expressions (index 0..N)."""

    scalars: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)

    def is_empty(self):
        return not self.scalars and not self.arrays

    def domain_names(self):
        return set(self.scalars) | set(self.arrays)


def subst_of(bindings: dict, env: TypeEnv | None = None) -> Subst:
    """Build a Subst from a VarRef-keyed mapping."""
    s = Subst()
    for ref, val in bindings.items():
        if ref.is_scalar():
            s.scalars[ref.name] = val
        elif ref.is_element() and isinstance(ref.index, IntLit):
            if env is None:
                raise TypeCheckError("array element bindings require an environment")
            vec = s.arrays.setdefault(
                ref.name,
                [av(ref.name, IntLit(k)) for k in range(env.array_length())])
            vec[ref.index.value] = val
        else:
            raise TypeCheckError(f"cannot bind {ref.pretty()}")
    s.arrays = {k: tuple(v) if not isinstance(v, tuple) else v for k, v in s.arrays.items()}
    return s


def _subst_raw(e: Expr, s: Subst, env: TypeEnv | None) -> Expr:
    if isinstance(e, (IntLit, BoolLit)):
        return e
    if isinstance(e, Var):
        r = e.ref
        if r.is_scalar():
            return s.scalars.get(r.name, e)
        if r.whole:
            return e  # whole-array refs are expanded by the caller context
        idx = _subst_raw(r.index, s, env)
        if r.name not in s.arrays:
            return Var(VarRef(r.name, index=idx))
        vec = s.arrays[r.name]
        idx_n = normalize(idx, env)
        if isinstance(idx_n, IntLit):
            if not 0 <= idx_n.value < len(vec):
                raise IndexRangeError(
                    f"{r.name}[{idx_n.value}] outside [0..{len(vec) - 1}]")
            return vec[idx_n.value]
        branches = tuple(
            (vec[k], Cmp("=", idx, IntLit(k))) for k in range(len(vec)))
        return Cond(branches)
    if isinstance(e, Add):
        return Add(tuple(_subst_raw(a, s, env) for a in e.args))
    if isinstance(e, Sub):
        return Sub(_subst_raw(e.a, s, env), _subst_raw(e.b, s, env))
    if isinstance(e, Neg):
        return Neg(_subst_raw(e.a, s, env))
    if isinstance(e, Mul):
        return Mul(tuple(_subst_raw(a, s, env) for a in e.args))
    if isinstance(e, Div):
        return Div(_subst_raw(e.a, s, env), _subst_raw(e.b, s, env))
    if isinstance(e, Mod):
        return Mod(_subst_raw(e.a, s, env), _subst_raw(e.b, s, env))
    if isinstance(e, Cmp):
        ta, tb = _expr_type(e.a, env), _expr_type(e.b, env)
        if ta == "array" or tb == "array":
            expanded = _array_cmp_norm(e.a, e.b, "=" if e.op == "=" else "!=", env)
            return _subst_raw(expanded, s, env)
        return Cmp(e.op, _subst_raw(e.a, s, env), _subst_raw(e.b, s, env))
    if isinstance(e, Not):
        return Not(_subst_raw(e.a, s, env))
    if isinstance(e, And):
        return And(tuple(_subst_raw(a, s, env) for a in e.args))
    if isinstance(e, Or):
        return Or(tuple(_subst_raw(a, s, env) for a in e.args))
    if isinstance(e, Implies):
        return Implies(_subst_raw(e.a, s, env), _subst_raw(e.b, s, env))
    if isinstance(e, Cond):
        return Cond(tuple(
            (_subst_raw(v, s, env), _subst_raw(g, s, env)) for v, g in e.branches))
    if isinstance(e, Sum):
        if e.index in s.scalars:
            raise SubstitutionCaptureError(
                f"substitution binds summation index {e.index}")
        return Sum(e.index, _subst_raw(e.lo, s, env), _subst_raw(e.hi, s, env),
                   _subst_raw(e.body, s, env))
    if isinstance(e, MultisetEq):
        return MultisetEq(tuple(_subst_raw(x, s, env) for x in e.lhs),
                          tuple(_subst_raw(x, s, env) for x in e.rhs))
    if isinstance(e, Fn):
        return Fn(e.name, _subst_raw(e.arg, s, env))
    raise TypeError(f"unknown node {e!r}")


def substitute(e: Expr, s: Subst | dict, env: TypeEnv | None = None) -> Expr:
    """Simultaneous substitution; the result is normalized."""
    if isinstance(s, dict):
        s = subst_of(s, env)
    return normalize(_subst_raw(e, s, env), env)


# ---------------------------------------------------------------------------
# Satisfiability over comparison regions (sound for "unsatisfiable")
# ---------------------------------------------------------------------------

_REGION_CAP = 50000


def _collect_atoms(e: Expr, cmps: dict, bools: set, opaque: set):
    if isinstance(e, BoolLit):
        return
    c = _is_cmp_literal(e)
    if c:
        cmps.setdefault(c[0], (e.a, set()))[1].add(c[2])
        return
    if isinstance(e, Var):
        bools.add(expr_key(e))
        return
    if isinstance(e, Not):
        _collect_atoms(e.a, cmps, bools, opaque)
        return
    if isinstance(e, (And, Or)):
        for a in e.args:
            _collect_atoms(a, cmps, bools, opaque)
        return
    if isinstance(e, Implies):
        _collect_atoms(e.a, cmps, bools, opaque)
        _collect_atoms(e.b, cmps, bools, opaque)
        return
    # anything else (multiset atoms, odd comparisons) is opaque
    opaque.add(expr_key(e))


def _eval_bool_over(e: Expr, asg: dict):
    if isinstance(e, BoolLit):
        return e.value
    c = _is_cmp_literal(e)
    if c:
        v = asg[("p", c[0])]
        return {"<=": v <= c[2], ">=": v >= c[2], "=": v == c[2], "!=": v != c[2]}[c[1]]
    if isinstance(e, Var):
        return asg[("b", expr_key(e))]
    if isinstance(e, Not):
        return not _eval_bool_over(e.a, asg)
    if isinstance(e, And):
        return all(_eval_bool_over(a, asg) for a in e.args)
    if isinstance(e, Or):
        return any(_eval_bool_over(a, asg) for a in e.args)
    if isinstance(e, Implies):
        return (not _eval_bool_over(e.a, asg)) or _eval_bool_over(e.b, asg)
    return asg[("b", expr_key(e))]


def _diff_literals_only(e: Expr, names: set) -> bool:
    """Whether every atom is a comparison between two scalar variables
    (canonical difference form with bound in {-1, 0, 1}).  Collects names."""
    if isinstance(e, BoolLit):
        return True
    if isinstance(e, Not):
        return _diff_literals_only(e.a, names)
    if isinstance(e, (And, Or)):
        return all(_diff_literals_only(a, names) for a in e.args)
    if isinstance(e, Implies):
        return (_diff_literals_only(e.a, names)
                and _diff_literals_only(e.b, names))
    c = _is_cmp_literal(e)
    if not c:
        return False
    op, k = e.op, e.b.value
    if k == -1 and op != "<=":
        return False
    if k == 1 and op != ">=":
        return False
    if k not in (-1, 0, 1):
        return False
    try:
        branches = _int_branches(e.a, None)
    except TypeCheckError:
        return False
    if len(branches) != 1:
        return False
    poly = branches[0][0]
    monos = [m for m in poly if m != ()]
    if poly.get((), 0) != 0 or len(monos) != 2:
        return False
    coeffs = sorted(poly[m] for m in monos)
    if coeffs != [-1, 1]:
        return False
    for m in monos:
        if len(m) != 1 or m[0][1] != 1:
            return False
        atom = m[0][0]
        if not (isinstance(atom, Var) and atom.ref.is_scalar()):
            return False
        names.add(atom.ref.name)
    return True


def order_decide(formulas: list):
    """Exact satisfiability for formulas whose atoms all compare two scalar
    variables: every weak ordering of the variables is realizable with
    values in 0..n-1, so enumerating them decides the formula completely.
    Returns None when the formula is outside this class."""
    names: set = set()
    for f in formulas:
        if not _diff_literals_only(f, names):
            return None
    n = len(names)
    if n == 0 or n > 4:
        return None
    ordered = sorted(names)
    for combo in itertools.product(range(n), repeat=n):
        st = dict(zip(ordered, combo))
        if all(eval_expr(f, st) for f in formulas):
            return True
    return False


def sat_decide(formulas: list):
    """Decide satisfiability of a list of normalized boolean formulas
    treated conjunctively.  Pure variable-ordering formulas are decided
    exactly; otherwise distinct polynomials are treated as independent,
    which over-approximates the true state space: False is therefore a
    proof of unsatisfiability while True only means "not refuted here".
    Returns None when the region product is too large.
    """
    od = order_decide(formulas)
    if od is not None:
        return od
    cmps: dict = {}
    bools: set = set()
    opaque: set = set()
    for f in formulas:
        _collect_atoms(f, cmps, bools, opaque)
    axes = []
    for pk, (_, ks) in sorted(cmps.items()):
        samples = set()
        for k in ks:
            samples.update((k - 1, k, k + 1))
        if not samples:
            samples = {0}
        axes.append((("p", pk), sorted(samples)))
    for bk in sorted(bools):
        axes.append((("b", bk), [False, True]))
    for ok in sorted(opaque):
        axes.append((("b", ok), [False, True]))
    total = 1
    for _, vals in axes:
        total *= len(vals)
        if total > _REGION_CAP:
            return None
    names = [a for a, _ in axes]
    for combo in itertools.product(*(vals for _, vals in axes)):
        asg = dict(zip(names, combo))
        if all(_eval_bool_over(f, asg) for f in formulas):
            return True
    return False


def proves(assumptions: list, goal: Expr) -> bool:
    """True when the region engine shows assumptions entail the goal."""
    neg = _bool_norm(Not(goal), None, True)
    return sat_decide(list(assumptions) + [neg]) is False


def _is_order_bool(e: Expr) -> bool:
    if isinstance(e, BoolLit):
        return True
    if isinstance(e, Not):
        return _is_order_bool(e.a)
    if isinstance(e, (And, Or)):
        return all(_is_order_bool(a) for a in e.args)
    if isinstance(e, Implies):
        return _is_order_bool(e.a) and _is_order_bool(e.b)
    if isinstance(e, Cmp):
        if _diff_literals_only(e, set()):
            return True
        return _is_order_int(e.a) and _is_order_int(e.b)
    if isinstance(e, MultisetEq):
        return all(_is_order_int(x) for x in e.lhs + e.rhs)
    return False


def _is_order_int(e: Expr) -> bool:
    if isinstance(e, Var):
        return e.ref.is_scalar()
    if isinstance(e, Cond):
        return all(_is_order_int(v) and _is_order_bool(g) for v, g in e.branches)
    return False


def order_prove(assumptions: list, goal: Expr) -> bool | None:
    """Complete validity check for constant-free order formulas: truth
    depends only on the weak ordering of the scalar values, and every weak
    ordering of n variables occurs within {0..n-1}^n."""
    for f in assumptions + [goal]:
        if not _is_order_bool(f):
            return None
    names: set = set()
    for f in assumptions + [goal]:
        free_names(f, names)
    n = len(names)
    if n == 0 or n > 4:
        return None
    ordered = sorted(names)
    for combo in itertools.product(range(n), repeat=n):
        st = dict(zip(ordered, combo))
        try:
            if all(eval_expr(a, st) for a in assumptions) and not eval_expr(goal, st):
                return False
        except EvalError:
            return None
    return True


# ---------------------------------------------------------------------------
# Grid states and three-valued equivalence
# ---------------------------------------------------------------------------

@dataclass
class TestGrid:
    """Finite search space for witness hunting and exhaustive checks."""

    span: int = 3
    max_exhaustive: int = 20000
    random_samples: int = 400
    seed: int = 20240

    def values(self, extra=()):
        base = list(range(-self.span, self.span + 1))
        for c in extra:
            base.extend((c - 1, c, c + 1))
        return sorted(set(base))


def _int_constants(e: Expr, acc: set):
    if isinstance(e, IntLit):
        acc.add(e.value)
    elif isinstance(e, Var):
        if e.ref.index is not None:
            _int_constants(e.ref.index, acc)
    elif isinstance(e, (Add, Mul, And, Or)):
        for a in e.args:
            _int_constants(a, acc)
    elif isinstance(e, (Sub, Div, Mod, Implies, Cmp)):
        _int_constants(e.a, acc)
        _int_constants(e.b, acc)
    elif isinstance(e, (Neg, Not)):
        _int_constants(e.a, acc)
    elif isinstance(e, Cond):
        for v, g in e.branches:
            _int_constants(v, acc)
            _int_constants(g, acc)
    elif isinstance(e, Sum):
        _int_constants(e.lo, acc)
        _int_constants(e.hi, acc)
        _int_constants(e.body, acc)
    elif isinstance(e, MultisetEq):
        for x in e.lhs + e.rhs:
            _int_constants(x, acc)
    elif isinstance(e, Fn):
        _int_constants(e.arg, acc)


def free_names(e: Expr, acc: set | None = None) -> set:
    """All variable names occurring free (summation indices excluded)."""
    if acc is None:
        acc = set()
    if isinstance(e, Var):
        acc.add(e.ref.name)
        if e.ref.index is not None:
            free_names(e.ref.index, acc)
    elif isinstance(e, (Add, Mul, And, Or)):
        for a in e.args:
            free_names(a, acc)
    elif isinstance(e, (Sub, Div, Mod, Implies, Cmp)):
        free_names(e.a, acc)
        free_names(e.b, acc)
    elif isinstance(e, (Neg, Not)):
        free_names(e.a, acc)
    elif isinstance(e, Cond):
        for v, g in e.branches:
            free_names(v, acc)
            free_names(g, acc)
    elif isinstance(e, Sum):
        free_names(e.lo, acc)
        free_names(e.hi, acc)
        inner = free_names(e.body, set())
        inner.discard(e.index)
        acc.update(inner)
    elif isinstance(e, MultisetEq):
        for x in e.lhs + e.rhs:
            free_names(x, acc)
    elif isinstance(e, Fn):
        free_names(e.arg, acc)
    return acc


def grid_states(env: TypeEnv, names, grid: TestGrid, extra_consts=()):
    """Yield candidate states binding the given names (scalars and arrays)."""
    vals = grid.values(extra_consts)
    scalar_names = []
    array_names = []
    for n in sorted(names):
        if env.is_array(n):
            array_names.append(n)
        elif env.scalar_type(n) == "bool":
            scalar_names.append((n, [False, True]))
        else:
            scalar_names.append((n, vals))
    length = env.array_length() if env.arrays else 0
    total = 1
    for _, v in scalar_names:
        total *= len(v)
    if array_names:
        total *= (len(vals) ** length) ** len(array_names)
    if total <= grid.max_exhaustive and not array_names:
        for combo in itertools.product(*(v for _, v in scalar_names)):
            yield dict(zip((n for n, _ in scalar_names), combo))
        return
    rng = random.Random(grid.seed)
    for _ in range(grid.random_samples):
        st = {}
        for n, v in scalar_names:
            st[n] = rng.choice(v)
        for n in array_names:
            st[n] = [rng.choice(vals) for _ in range(length)]
        yield st


@dataclass
class Equivalence:
    status: str  # 'equal' | 'not-equal' | 'unknown'
    witness: dict | None = None

    def __bool__(self):
        return self.status == "equal"


def _branches_of(n: Expr) -> list:
    if isinstance(n, Cond):
        return [(v, g) for v, g in n.branches]
    return [(n, TRUE)]


def _zero_poly_diff(a: Expr, b: Expr, env) -> bool:
    d = normalize(Sub(a, b), env)
    return isinstance(d, IntLit) and d.value == 0


def equivalent(e1: Expr, e2: Expr, env: TypeEnv | None = None,
               grid: TestGrid | None = None) -> Equivalence:
    """Three-valued equality decision.

    'equal' is claimed only with a normalization or case-split proof;
    'not-equal' only with a concrete distinguishing state.
    """
    grid = grid or TestGrid()
    t1, t2 = _expr_type(e1, env), _expr_type(e2, env)
    n1 = normalize(e1, env)
    n2 = normalize(e2, env)
    if expr_key(n1) == expr_key(n2):
        return Equivalence("equal")
    if t1 == "bool" and t2 == "bool":
        d1 = sat_decide([n1, _bool_norm(Not(n2), env, True)])
        d2 = sat_decide([n2, _bool_norm(Not(n1), env, True)])
        if d1 is False and d2 is False:
            return Equivalence("equal")
    else:
        b1 = _branches_of(n1)
        b2 = _branches_of(n2)
        cover1 = _mk_or([g for _, g in b1])
        cover2 = _mk_or([g for _, g in b2])
        same_domain = (expr_key(cover1) == expr_key(cover2)
                       or (proves([cover2], cover1) and proves([cover1], cover2)))
        if same_domain:
            ok = True
            for (v1, g1), (v2, g2) in itertools.product(b1, b2):
                both = _mk_and([g1, g2])
                if both == FALSE:
                    continue
                if _zero_poly_diff(v1, v2, env):
                    continue
                if sat_decide([both]) is False:
                    continue
                diff_zero = _cmp_norm(Cmp("!=", v1, v2), env, True)
                if sat_decide([both, diff_zero]) is False:
                    continue
                ok = False
                break
            if ok:
                return Equivalence("equal")
    # hunt a witness
    witness = find_witness_distinct(n1, n2, env, grid)
    if witness is not None:
        return Equivalence("not-equal", witness)
    return Equivalence("unknown")


def find_witness_distinct(n1: Expr, n2: Expr, env: TypeEnv | None,
                          grid: TestGrid) -> dict | None:
    names = free_names(n1) | free_names(n2)
    if env is None:
        env = env_of(scalars=[(n, "int") for n in sorted(names)])
    consts: set = set()
    _int_constants(n1, consts)
    _int_constants(n2, consts)
    for st in grid_states(env, names, grid, tuple(consts)):
        try:
            v1 = eval_expr(n1, st)
            v2 = eval_expr(n2, st)
        except EvalError:
            continue
        if v1 != v2:
            return st
    return None


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_PREC = {"or": 1, "and": 2, "not": 3, "cmp": 4, "add": 5, "mul": 6, "unary": 7, "atom": 8}


def _paren(s: str, inner: int, outer: int) -> str:
    return f"({s})" if inner < outer else s


def _split_poly_sides(e: Expr):
    """Split a normalized polynomial into (positive part, negative part)."""
    try:
        branches = _int_branches(e, None)
    except TypeCheckError:
        return e, IntLit(0)
    if len(branches) != 1 or branches[0][1] != TRUE:
        return e, IntLit(0)
    p = branches[0][0]
    pos = {m: c for m, c in p.items() if c > 0}
    neg = {m: -c for m, c in p.items() if c < 0}
    return _p_to_expr(pos), _p_to_expr(neg)


def _render_cmp(e: Cmp) -> str:
    if isinstance(e.b, IntLit):
        pos, neg = _split_poly_sides(Sub(e.a, IntLit(0)))
        k = e.b.value
        negc = neg if isinstance(neg, IntLit) else None
        if e.op == "<=" and k == -1:
            return f"{_to_text(pos, _PREC['cmp'] + 1)} < {_to_text(neg, _PREC['cmp'] + 1)}"
        if e.op == ">=" and k == 1:
            return f"{_to_text(pos, _PREC['cmp'] + 1)} > {_to_text(neg, _PREC['cmp'] + 1)}"
        rhs_poly = normalize(Add((neg, IntLit(k))), None)
        return (f"{_to_text(pos, _PREC['cmp'] + 1)} {e.op} "
                f"{_to_text(rhs_poly, _PREC['cmp'] + 1)}")
    return (f"{_to_text(e.a, _PREC['cmp'] + 1)} {e.op} "
            f"{_to_text(e.b, _PREC['cmp'] + 1)}")


def _to_text(e: Expr, outer: int = 0) -> str:
    if isinstance(e, IntLit):
        return str(e.value) if e.value >= 0 else _paren(str(e.value), _PREC["unary"], outer)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Var):
        return e.ref.pretty()
    if isinstance(e, Add):
        parts = []
        for i, a in enumerate(e.args):
            if i and isinstance(a, Neg):
                parts.append(f"- {_to_text(a.a, _PREC['add'] + 1)}")
            elif i and isinstance(a, IntLit) and a.value < 0:
                parts.append(f"- {-a.value}")
            else:
                parts.append(_to_text(a, _PREC["add"] if i == 0 else _PREC["add"] + 1))
        return _paren(" + ".join(parts).replace("+ - ", "- "), _PREC["add"], outer)
    if isinstance(e, Sub):
        return _paren(f"{_to_text(e.a, _PREC['add'])} - {_to_text(e.b, _PREC['add'] + 1)}",
                      _PREC["add"], outer)
    if isinstance(e, Neg):
        return _paren(f"-{_to_text(e.a, _PREC['unary'])}", _PREC["unary"], outer)
    if isinstance(e, Mul):
        # render repeated factors with a power for readability
        groups = []
        for a in e.args:
            if groups and expr_key(groups[-1][0]) == expr_key(a):
                groups[-1][1] += 1
            else:
                groups.append([a, 1])
        parts = []
        for a, n in groups:
            base = _to_text(a, _PREC["mul"] + 1)
            parts.append(f"{base}^{n}" if n > 1 else base)
        return _paren(" * ".join(parts), _PREC["mul"], outer)
    if isinstance(e, Div):
        return _paren(f"{_to_text(e.a, _PREC['mul'])} / {_to_text(e.b, _PREC['mul'] + 1)}",
                      _PREC["mul"], outer)
    if isinstance(e, Mod):
        return _paren(f"{_to_text(e.a, _PREC['mul'])} % {_to_text(e.b, _PREC['mul'] + 1)}",
                      _PREC["mul"], outer)
    if isinstance(e, Cmp):
        return _paren(_render_cmp(e), _PREC["cmp"], outer)
    if isinstance(e, Not):
        return _paren(f"!{_to_text(e.a, _PREC['not'] + 1)}", _PREC["not"], outer)
    if isinstance(e, And):
        return _paren(" & ".join(_to_text(a, _PREC["and"] + 1) for a in e.args),
                      _PREC["and"], outer)
    if isinstance(e, Or):
        return _paren(" | ".join(_to_text(a, _PREC["or"] + 1) for a in e.args),
                      _PREC["or"], outer)
    if isinstance(e, Implies):
        return _paren(f"{_to_text(e.a, _PREC['or'] + 1)} -> {_to_text(e.b, _PREC['or'])}",
                      _PREC["or"], outer)
    if isinstance(e, Cond):
        inner = " | ".join(
            f"{_to_text(v, _PREC['or'] + 1)} if {_to_text(g, _PREC['or'] + 1)}"
            for v, g in e.branches)
        return f"cond {{ {inner} }}"
    if isinstance(e, Sum):
        return (f"sum({e.index}, {_to_text(e.lo)}, {_to_text(e.hi)}, "
                f"{_to_text(e.body)})")
    if isinstance(e, MultisetEq):
        l = ", ".join(_to_text(x) for x in e.lhs)
        r = ", ".join(_to_text(x) for x in e.rhs)
        return f"mseteq(({l}), ({r}))"
    if isinstance(e, Fn):
        return f"{e.name}({_to_text(e.arg)})"
    raise TypeError(f"unknown node {e!r}")


def to_text(e: Expr) -> str:
    """Render an expression in the concrete textual syntax."""
    return _to_text(e, 0)
