"""Recursive-descent parser for the concrete textual syntax.

Program files carry a declarations header (`var x:int;`, `array A:int[0..7];`)
followed by an operation-expression body.  Specification files use the same
header followed by a predicate formula.  Expression syntax is shared:

    e  ::= e '->' e | e '|' e | e '&' e | '!' e | cmp | arith
    arith uses + - * / % and integer powers e^n
    cond { e1 if b1 | e2 if b2 } , sum(l, lo, hi, body),
    mseteq((a,b,c),(d,e,f)), registered opaque functions f(e)

Operation terms: `x!(e)`, `A[i]!(e)`, `A!(B)`, `x!{e1 if b1 | e2 if b2}`,
`A[i: b(i)]!(e(i))`, `skip`; composition `.`; sequencing `;`; conditional
suffix `?(b)`; fixed power `^n`; loop-until `*(b)`.

Inside `cond { ... }` branch guards bind tighter than the branch separator:
parenthesize a top-level `|` in a guard.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import expr as E
from . import soe as S
from .errors import ParseError, TypeCheckError
from .expr import (
    Add, And, BoolLit, Cmp, Cond, Div, Expr, Fn, Implies, IntLit, Mod, Mul,
    MultisetEq, Neg, Not, Or, Sub, Sum, TypeEnv, Var, VarRef,
    OPAQUE_FUNCTIONS,
)

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<num>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*'{0,2})
  | (?P<op><=|>=|!=|->|\(\+\)|[-+*/%=<>!&|^?.;:,{}\[\]()])
""", re.VERBOSE)

_KEYWORDS = {"skip", "cond", "if", "sum", "mseteq", "true", "false", "var",
             "array", "int", "bool"}


@dataclass
class Token:
    kind: str  # 'num' | 'name' | 'op' | 'eof'
    text: str
    line: int
    col: int


def tokenize(src: str) -> list:
    toks = []
    line, col = 1, 1
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", line, col)
        text = m.group(0)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(Token(kind, text, line, col))
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    toks.append(Token("eof", "", line, col))
    return toks


class Parser:
    def __init__(self, src: str, env: TypeEnv | None = None, macros=None,
                 allow_primes: bool = False):
        self.toks = tokenize(src)
        self.pos = 0
        self.env = env
        self.macros = macros or {}
        self.allow_primes = allow_primes

    # -- token plumbing ----------------------------------------------------

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.text == text and t.kind in ("op", "name")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        t = self.peek()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}",
                             t.line, t.col)
        return self.next()

    def fail(self, msg: str):
        t = self.peek()
        raise ParseError(msg, t.line, t.col)

    # -- declarations --------------------------------------------------------

    def declarations(self) -> TypeEnv:
        scalars = []
        arrays = []
        upper = None
        while self.at("var") or self.at("array"):
            if self.accept("var"):
                name = self._decl_name()
                self.expect(":")
                if self.accept("int"):
                    ty = "int"
                elif self.accept("bool"):
                    ty = "bool"
                else:
                    self.fail("expected 'int' or 'bool'")
                scalars.append((name, ty))
            else:
                self.expect("array")
                name = self._decl_name()
                self.expect(":")
                self.expect("int")
                self.expect("[")
                lo = int(self.expect_num().text)
                self.expect(".")
                self.expect(".")
                hi = int(self.expect_num().text)
                self.expect("]")
                if lo != 0:
                    self.fail("array ranges must start at 0")
                if upper is not None and hi != upper:
                    self.fail("all arrays must share one index range")
                upper = hi
                arrays.append(name)
            self.expect(";")
        return TypeEnv(scalars=tuple(scalars), arrays=tuple(arrays), upper=upper)

    def _decl_name(self) -> str:
        t = self.peek()
        if t.kind != "name" or t.text in _KEYWORDS or "'" in t.text:
            self.fail("expected a plain variable name")
        return self.next().text

    def expect_num(self) -> Token:
        t = self.peek()
        if t.kind != "num":
            self.fail("expected an integer")
        return self.next()

    # -- expressions ---------------------------------------------------------

    def expression(self) -> Expr:
        return self._implies()

    def _implies(self) -> Expr:
        left = self._or()
        if self.accept("->"):
            return Implies(left, self._implies())
        return left

    def _or(self, in_cond=False) -> Expr:
        parts = [self._and()]
        while not in_cond and self.at("|"):
            self.next()
            parts.append(self._and())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def _and(self) -> Expr:
        parts = [self._not()]
        while self.accept("&"):
            parts.append(self._not())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def _not(self) -> Expr:
        if self.accept("!"):
            return Not(self._not())
        return self._cmp()

    def _cmp(self) -> Expr:
        left = self._addsub()
        for op in ("<=", ">=", "!=", "=", "<", ">"):
            if self.at(op):
                self.next()
                return Cmp(op, left, self._addsub())
        return left

    def _addsub(self) -> Expr:
        left = self._multerm()
        while True:
            if self.accept("+"):
                left = Add((left, self._multerm()))
            elif self.at("-"):
                self.next()
                left = Sub(left, self._multerm())
            else:
                return left

    def _multerm(self) -> Expr:
        left = self._power()
        while True:
            if self.accept("*"):
                left = Mul((left, self._power()))
            elif self.accept("/"):
                left = Div(left, self._power())
            elif self.accept("%"):
                left = Mod(left, self._power())
            else:
                return left

    def _power(self) -> Expr:
        base = self._unary()
        if self.accept("^"):
            n = int(self.expect_num().text)
            if n == 0:
                return IntLit(1)
            return base if n == 1 else Mul(tuple([base] * n))
        return base

    def _unary(self) -> Expr:
        if self.accept("-"):
            return Neg(self._unary())
        return self._primary()

    def _primary(self) -> Expr:
        t = self.peek()
        if t.kind == "num":
            self.next()
            return IntLit(int(t.text))
        if self.accept("("):
            e = self.expression()
            self.expect(")")
            return e
        if t.kind != "name":
            self.fail("expected an expression")
        if self.accept("true"):
            return BoolLit(True)
        if self.accept("false"):
            return BoolLit(False)
        if self.at("cond"):
            return self._cond()
        if self.at("sum"):
            return self._sum()
        if self.at("mseteq"):
            return self._mseteq()
        name = self.next().text
        if "'" in name and not self.allow_primes:
            raise ParseError(f"final-value name {name!r} not allowed here",
                             t.line, t.col)
        if self.at("("):
            args = self._call_args()
            if name in self.macros:
                return self.macros[name](*args)
            if name.rstrip("'") in OPAQUE_FUNCTIONS:
                if len(args) != 1:
                    raise ParseError(f"{name} takes one argument", t.line, t.col)
                return Fn(name.rstrip("'"), args[0])
            raise ParseError(f"unknown function {name!r}", t.line, t.col)
        if self.at("["):
            self.next()
            idx = self.expression()
            self.expect("]")
            self._check_array(name, t)
            return Var(VarRef(name, index=idx))
        if self.env is not None and self.env.is_array(name):
            return Var(VarRef(name, whole=True))
        self._check_scalar(name, t)
        return Var(VarRef(name))

    def _check_array(self, name, t):
        if self.env is not None and not self.env.is_array(name):
            raise ParseError(f"unknown array {name!r}", t.line, t.col)

    def _check_scalar(self, name, t):
        if self.env is not None and self.env.scalar_type(name) is None:
            raise ParseError(f"unknown variable {name!r}", t.line, t.col)

    def _call_args(self) -> list:
        self.expect("(")
        args = [self.expression()]
        while self.accept(","):
            args.append(self.expression())
        self.expect(")")
        return args

    def _cond(self) -> Expr:
        self.expect("cond")
        self.expect("{")
        branches = []
        while True:
            value = self._cond_operand()
            self.expect("if")
            guard = self._cond_operand()
            branches.append((value, guard))
            if not self.accept("|"):
                break
        self.expect("}")
        return Cond(tuple(branches))

    def _cond_operand(self) -> Expr:
        # like expression() but '|' does not continue a disjunction here
        left = self._and()
        if self.accept("->"):
            return Implies(left, self._cond_operand())
        return left

    def _sum(self) -> Expr:
        self.expect("sum")
        self.expect("(")
        t = self.peek()
        if t.kind != "name":
            self.fail("expected a summation index name")
        idx = self.next().text
        if self.env is not None and self.env.is_declared(idx):
            raise ParseError(f"summation index {idx!r} shadows a declared variable",
                             t.line, t.col)
        self.expect(",")
        lo = self.expression()
        self.expect(",")
        hi = self.expression()
        self.expect(",")
        saved = self.env
        if saved is not None:
            self.env = TypeEnv(scalars=saved.scalars + ((idx, "int"),),
                               arrays=saved.arrays, upper=saved.upper)
        body = self.expression()
        self.env = saved
        self.expect(")")
        return Sum(idx, lo, hi, body)

    def _mseteq(self) -> Expr:
        self.expect("mseteq")
        self.expect("(")
        self.expect("(")
        lhs = [self.expression()]
        while self.accept(","):
            lhs.append(self.expression())
        self.expect(")")
        self.expect(",")
        self.expect("(")
        rhs = [self.expression()]
        while self.accept(","):
            rhs.append(self.expression())
        self.expect(")")
        self.expect(")")
        if len(lhs) != len(rhs):
            self.fail("multiset sides must have equal length")
        return MultisetEq(tuple(lhs), tuple(rhs))

    # -- operation expressions -----------------------------------------------

    def soe(self) -> S.SoeNode:
        left = self._soe_guarded()
        while self.accept(";"):
            left = S.Seq(left, self._soe_guarded())
        return left

    def _soe_guarded(self) -> S.SoeNode:
        node = self._soe_atom()
        while True:
            if self.accept("?"):
                self.expect("(")
                guard = self.expression()
                self.expect(")")
                node = self._attach_guard(node, guard)
            elif self.accept("^"):
                n = int(self.expect_num().text)
                if n < 1:
                    self.fail("power must be >= 1")
                node = S.Power(node, n)
            elif self.accept("*"):
                self.expect("(")
                guard = self.expression()
                self.expect(")")
                node = S.Loop(node, guard)
            else:
                return node

    @staticmethod
    def _attach_guard(node: S.SoeNode, guard: Expr) -> S.SoeNode:
        if isinstance(node, S.TermNode):
            t = node.term
            if isinstance(t, S.SimpleWrite):
                return S.TermNode(S.CondWrite(t.target, t.value, guard))
            if isinstance(t, S.CondWrite):
                return S.TermNode(S.CondWrite(t.target, t.value,
                                              And((t.guard, guard))))
            if isinstance(t, S.MultiTerm):
                return S.TermNode(S.GuardedMulti(t, guard))
            if isinstance(t, S.GuardedMulti):
                return S.TermNode(S.GuardedMulti(t.body, And((t.guard, guard))))
        return S.Guarded(node, guard)

    def _soe_atom(self) -> S.SoeNode:
        if self.accept("("):
            inner = self.soe()
            self.expect(")")
            return inner
        return S.TermNode(self._multi_term())

    def _multi_term(self) -> S.Term:
        parts = [self._write_term()]
        while self.accept("."):
            parts.append(self._write_term())
        if len(parts) == 1:
            return parts[0]
        flat = []
        for p in parts:
            if isinstance(p, S.MultiTerm):
                flat.extend(p.parts)
            else:
                flat.append(p)
        return S.MultiTerm(tuple(flat))

    def _write_term(self) -> S.Term:
        if self.accept("skip"):
            return S.Epsilon()
        if self.accept("("):
            # parenthesized multi-term, possibly guarded afterwards
            inner = self._multi_term()
            self.expect(")")
            term = inner
            while self.accept("?"):
                self.expect("(")
                guard = self.expression()
                self.expect(")")
                if isinstance(term, S.SimpleWrite):
                    term = S.CondWrite(term.target, term.value, guard)
                elif isinstance(term, S.CondWrite):
                    term = S.CondWrite(term.target, term.value,
                                       And((term.guard, guard)))
                elif isinstance(term, S.MultiTerm):
                    term = S.GuardedMulti(term, guard)
                else:
                    term = S.GuardedMulti(S.MultiTerm((term,)), guard)
            return term
        t = self.peek()
        if t.kind != "name" or "'" in t.text:
            self.fail("expected a write term")
        name = self.next().text
        target = None
        comp = None
        if self.accept("["):
            idx_tok = self.peek()
            # array comprehension `A[i: b]!(e)` vs element write `A[e]!(v)`
            if (idx_tok.kind == "name" and self.toks[self.pos + 1].text == ":"):
                idx_name = self.next().text
                self.next()  # ':'
                saved = self.env
                if saved is not None:
                    if saved.is_declared(idx_name):
                        raise ParseError(
                            f"comprehension index {idx_name!r} shadows a declared variable",
                            idx_tok.line, idx_tok.col)
                    self.env = TypeEnv(scalars=saved.scalars + ((idx_name, "int"),),
                                       arrays=saved.arrays, upper=saved.upper)
                guard = self.expression()
                self.env = saved
                self.expect("]")
                comp = (name, idx_name, guard)
            else:
                idx = self.expression()
                self.expect("]")
                self._check_array(name, t)
                target = VarRef(name, index=idx)
        elif self.env is not None and self.env.is_array(name):
            target = VarRef(name, whole=True)
        else:
            self._check_scalar(name, t)
            target = VarRef(name)
        self.expect("!")
        if comp is not None:
            self.expect("(")
            arr, idx_name, guard = comp
            saved = self.env
            if saved is not None:
                self.env = TypeEnv(scalars=saved.scalars + ((idx_name, "int"),),
                                   arrays=saved.arrays, upper=saved.upper)
            value = self.expression()
            self.env = saved
            self.expect(")")
            self._check_array(arr, t)
            return S.ArrayComp(arr, idx_name, guard, value)
        if self.accept("{"):
            branches = []
            while True:
                value = self._cond_operand()
                self.expect("if")
                guard = self._cond_operand()
                branches.append((value, guard))
                if not self.accept("|"):
                    break
            self.expect("}")
            return S.MultiChoiceWrite(target, tuple(branches))
        self.expect("(")
        value = self.expression()
        self.expect(")")
        if target.whole and not (isinstance(value, Var) and value.ref.whole):
            self.fail(f"whole-array write to {target.name} requires an array source")
        return S.SimpleWrite(target, value)

    def finish(self):
        t = self.peek()
        if t.kind != "eof":
            raise ParseError(f"unexpected trailing input {t.text!r}", t.line, t.col)


    # -- semantic predicates and formulas --------------------------------------

    def sp_pred(self):
        """A predicate, possibly as guarded clauses joined by (+)."""
        from .sp import SemPredicate
        first = self.expression()
        clauses = [first]
        while self.accept("(+)"):
            clauses.append(self.expression())
        if len(clauses) == 1:
            return SemPredicate.plain(first)
        pairs = []
        for c in clauses:
            if not isinstance(c, Implies):
                self.fail("guarded clauses take the form (guard -> predicate)")
            pairs.append((c.a, c.b))
        return SemPredicate.guarded(pairs)

    def formula(self):
        from .calculus import FAtom, FLoop, FPower, SpFormula
        items = [self._formula_item()]
        while self.accept(";"):
            items.append(self._formula_item())
        flat = []
        for it in items:
            flat.append(it)
        return SpFormula(tuple(flat))

    def _formula_item(self):
        from .calculus import FAtom, FLoop, FPower, SpFormula
        item = self._formula_primary()
        while True:
            if self.accept("^"):
                n = int(self.expect_num().text)
                base = item if isinstance(item, SpFormula) else SpFormula((item,))
                item = FPower(base, n)
            elif self.at("*") and self.toks[self.pos + 1].text == "(":
                self.next()
                self.expect("(")
                guard = self.sp_pred()
                self.expect(")")
                base = item if isinstance(item, SpFormula) else SpFormula((item,))
                item = FLoop(base, guard)
            else:
                break
        if isinstance(item, SpFormula):
            return item if len(item.items) > 1 else item.items[0]
        return item

    def _formula_primary(self):
        from .calculus import FAtom, SpFormula
        if self.at("("):
            saved = self.pos
            try:
                self.next()
                inner = self.formula()
                self.expect(")")
                if self.at("(+)"):
                    raise ParseError("clause list", 0, 0)
                if len(inner.items) > 1:
                    return inner
                only = inner.items[0]
                if isinstance(only, FAtom) and self.at("^"):
                    # power of a parenthesized body stays a formula group
                    return inner
                return inner
            except ParseError:
                self.pos = saved
        return FAtom(self.sp_pred())


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def parse_expression(src: str, env: TypeEnv | None = None, macros=None,
                     allow_primes: bool = False) -> Expr:
    p = Parser(src, env, macros, allow_primes)
    e = p.expression()
    p.finish()
    return e


def parse(src: str, env: TypeEnv, macros=None) -> S.SoeNode:
    """Parse an operation-expression body against a known environment."""
    p = Parser(src, env, macros)
    node = p.soe()
    p.finish()
    return node


def parse_program(src: str, macros=None):
    """Parse declarations followed by a body.  Returns (env, node)."""
    p = Parser(src, None, macros)
    env = p.declarations()
    p.env = env
    node = p.soe()
    p.finish()
    return env, node


def parse_sp(src: str, env: TypeEnv, macros=None):
    """Parse one semantic predicate (final values written x', inner x'')."""
    from .sp import sp_env
    p = Parser(src, sp_env(env), macros, allow_primes=True)
    pred = p.sp_pred()
    p.finish()
    return pred


def parse_formula(src: str, env: TypeEnv, macros=None):
    """Parse a specification formula against a known environment."""
    from .sp import sp_env
    p = Parser(src, sp_env(env), macros, allow_primes=True)
    f = p.formula()
    p.finish()
    return f


def parse_spec(src: str, macros=None):
    """Parse declarations followed by a formula.  Returns (env, formula)."""
    from .sp import sp_env
    p = Parser(src, None, macros)
    env = p.declarations()
    p.env = sp_env(env)
    p.allow_primes = True
    f = p.formula()
    p.finish()
    return env, f
