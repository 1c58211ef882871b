"""Concrete ASCII syntax: terms, formulas, programs, theories and proof scripts.

Surface forms::

    forall i:A phi      exists i,j:A phi     forall x phi   (x real)
    [alpha] box phi     <alpha> dia phi      [alpha] phi
    !phi   phi && psi   phi || psi   phi -> psi   phi <-> psi
    forall i:A x(i) := theta, y(i) := eta          quantified assignment
    forall i:A x(i)' = v(i), v(i)' = a(i) & chi    quantified ODE
    ?chi   alpha ++ beta   alpha ; beta   {alpha}*   n := new A
    if c then a else b fi                          conditional term

Files use ``//`` line comments.  Theories (``.qdtl``) hold declarations,
abbreviations and named conjectures; proof scripts (``.qpf``) hold one
``proof NAME { ... }`` block per conjecture.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from qdtl.syntax import (
    REAL, Add, Always, And, App, Assign, Box, Choice, Dia, Div, Eq, Eventually, Exists,
    FalseF, Forall, Formula, Geq, Gt, Implies, Ite, Loop, Mul, Neg, New, Not, Num, ODE, Or,
    Pow, Prime, Program, QdtlError, Seq, Sequent, Signature, SortError, Sub, Term, Test, TrueF,
    UnknownSymbolError, Var, check_types, desugar_new, desugar_new_in, substitute_var,
)

KEYWORDS = {
    "forall", "exists", "box", "dia", "true", "false", "if", "then", "else", "fi", "new",
}

TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<num>\d+(?:\.\d+)?)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><->|->|:=|>=|<=|!=|&&|\|\||\+\+|==>|[-+*/^()\[\]{},;:?&!=<>'.|])
""", re.VERBOSE)


@dataclass(frozen=True)
class SourceSpan:
    file: str
    start: int
    end: int
    line: int
    col: int
    end_line: int
    end_col: int

    def __str__(self):
        return f"{self.file}:{self.line}:{self.col}"


class ParseError(QdtlError):
    def __init__(self, message: str, span: SourceSpan | None = None):
        super().__init__(f"{span}: {message}" if span else message)
        self.span = span


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    start: int
    end: int


def tokenize(text: str, file: str = "<input>") -> list[Token]:
    out = []
    pos = 0
    while pos < len(text):
        m = TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", make_span(text, pos, pos + 1, file))
        kind = m.lastgroup
        if kind != "ws":
            out.append(Token(kind, m.group(), m.start(), m.end()))
        pos = m.end()
    out.append(Token("eof", "", len(text), len(text)))
    return out


def make_span(text: str, start: int, end: int, file: str = "<input>") -> SourceSpan:
    start = max(0, min(start, len(text)))
    end = max(start, min(end, len(text)))
    line = text.count("\n", 0, start) + 1
    col = start - (text.rfind("\n", 0, start) + 1) + 1
    eline = text.count("\n", 0, end) + 1
    ecol = end - (text.rfind("\n", 0, end) + 1) + 1
    return SourceSpan(file, start, end, line, col, eline, ecol)


@dataclass
class Definition:
    """Named abbreviation with object-sorted parameters."""

    name: str
    params: tuple[Var, ...]
    body: object  # Formula | Term | tuple of ODE/assignment pairs
    kind: str  # "formula" | "term" | "dyn"

    def expand(self, args: tuple[Term, ...]):
        if len(args) != len(self.params):
            raise ParseError(f"{self.name} expects {len(self.params)} arguments")
        if self.kind == "dyn":
            out = []
            for lhs, rhs in self.body:
                for p, a in zip(self.params, args):
                    lhs, rhs = substitute_var(lhs, p, a), substitute_var(rhs, p, a)
                out.append((lhs, rhs))
            return tuple(out)
        body = self.body
        for p, a in zip(self.params, args):
            body = substitute_var(body, p, a)
        return body


class Parser:
    """Recursive-descent parser over a token list.

    ``spans`` maps ``id`` of every produced node to its :class:`SourceSpan`
    (nodes are hash-consed dataclasses, so spans are kept off the AST).
    """

    def __init__(self, text: str, sig: Signature | None = None,
                 defs: dict[str, Definition] | None = None, file: str = "<input>",
                 desugar: bool = True):
        self.text = text
        self.file = file
        self.toks = tokenize(text, file)
        self.i = 0
        self.sig = sig
        self.defs = defs if defs is not None else {}
        self.scope: list[dict[str, str]] = [{}]
        self.spans: dict[int, SourceSpan] = {}
        self.desugar = desugar

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("op", "id") and t.text in texts

    def accept(self, *texts: str) -> bool:
        if self.at(*texts):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def error(self, message: str):
        t = self.tok
        raise ParseError(message, make_span(self.text, t.start, max(t.end, t.start), self.file))

    def ident(self) -> str:
        t = self.tok
        if t.kind != "id" or t.text in KEYWORDS:
            self.error(f"expected identifier, found {t.text or 'end of input'!r}")
        self.i += 1
        return t.text

    def mark(self, node, start: int):
        end = self.toks[self.i - 1].end if self.i else start
        self.spans.setdefault(id(node), make_span(self.text, start, end, self.file))
        return node

    def span_of(self, node) -> SourceSpan | None:
        return self.spans.get(id(node))

    # -- scopes
    def lookup_var(self, name: str) -> str | None:
        for frame in reversed(self.scope):
            if name in frame:
                return frame[name]
        return None

    def push(self, bindings: dict[str, str]):
        self.scope.append(dict(bindings))

    def pop(self):
        self.scope.pop()

    def is_function(self, name: str) -> bool:
        if self.lookup_var(name) is not None:
            return False
        return name == "E" or (self.sig is not None and name in self.sig.functions)

    def parse_sort(self) -> str:
        name = self.ident()
        if self.sig is not None and name not in self.sig.sorts:
            self.i -= 1
            self.error(f"unknown sort {name!r}")
        return name

    def binders(self) -> list[Var]:
        names = [self.ident()]
        while self.accept(","):
            names.append(self.ident())
        sort = REAL
        if self.accept(":"):
            sort = self.parse_sort()
        return [Var(n, sort) for n in names]

    # -- formulas
    def formula(self) -> Formula:
        start = self.tok.start
        left = self.disjunction()
        if self.accept("->"):
            right = self.formula()
            return self.mark(Implies(left, right), start)
        if self.accept("<->"):
            right = self.formula()
            return self.mark(And(Implies(left, right), Implies(right, left)), start)
        return left

    def disjunction(self) -> Formula:
        start = self.tok.start
        left = self.conjunction()
        if self.accept("||"):
            return self.mark(Or(left, self.disjunction()), start)
        return left

    def conjunction(self) -> Formula:
        start = self.tok.start
        left = self.unary()
        if self.accept("&&"):
            return self.mark(And(left, self.conjunction()), start)
        return left

    def unary(self) -> Formula:
        start = self.tok.start
        if self.accept("!"):
            return self.mark(Not(self.unary()), start)
        if self.at("forall", "exists"):
            quant = Forall if self.tok.text == "forall" else Exists
            self.i += 1
            vs = self.binders()
            self.push({v.name: v.sort for v in vs})
            body = self.unary()
            self.pop()
            for v in reversed(vs):
                body = self.mark(quant(v, body), start)
            return body
        if self.accept("["):
            prog = self.program()
            self.expect("]")
            return self.mark(Box(prog, self.trace_formula()), start)
        if self.at("<"):
            self.i += 1
            prog = self.program()
            self.expect(">")
            return self.mark(Dia(prog, self.trace_formula()), start)
        if self.accept("true"):
            return self.mark(TrueF(), start)
        if self.accept("false"):
            return self.mark(FalseF(), start)
        if self.at("("):
            save = self.i
            try:
                return self.atom()
            except ParseError:
                self.i = save
            self.expect("(")
            f = self.formula()
            self.expect(")")
            return f
        if self.tok.kind == "id" and self.tok.text in self.defs and self.defs[self.tok.text].kind == "formula":
            return self.call_definition("formula")
        return self.atom()

    def trace_formula(self):
        start = self.tok.start
        if self.accept("box"):
            return self.mark(Always(self.unary()), start)
        if self.accept("dia"):
            return self.mark(Eventually(self.unary()), start)
        return self.unary()

    def call_definition(self, kind: str):
        start = self.tok.start
        name = self.ident()
        d = self.defs[name]
        if d.kind != kind:
            self.i -= 1
            self.error(f"{name} is not a {kind} abbreviation")
        args: tuple[Term, ...] = ()
        if self.accept("("):
            items = [self.term()]
            while self.accept(","):
                items.append(self.term())
            self.expect(")")
            args = tuple(items)
        try:
            out = d.expand(args)
        except ParseError as e:
            raise ParseError(str(e), make_span(self.text, start, self.tok.start, self.file))
        if kind != "dyn":
            self.mark(out, start)
        return out

    def atom(self) -> Formula:
        start = self.tok.start
        left = self.term()
        t = self.tok.text if self.tok.kind == "op" else None
        ops: dict[str, Callable] = {
            "=": lambda a, b: Eq(a, b),
            "!=": lambda a, b: Not(Eq(a, b)),
            ">=": lambda a, b: Geq(a, b),
            ">": lambda a, b: Gt(a, b),
            "<=": lambda a, b: Geq(b, a),
            "<": lambda a, b: Gt(b, a),
        }
        if t not in ops:
            self.error(f"expected comparison operator, found {self.tok.text or 'end of input'!r}")
        self.i += 1
        right = self.term()
        return self.mark(ops[t](left, right), start)

    # -- terms
    def term(self) -> Term:
        start = self.tok.start
        left = self.product()
        while self.at("+", "-"):
            op = self.tok.text
            self.i += 1
            right = self.product()
            left = self.mark(Add(left, right) if op == "+" else Sub(left, right), start)
        return left

    def product(self) -> Term:
        start = self.tok.start
        left = self.neg()
        while self.at("*", "/"):
            # postfix loop star: '*' followed by a program terminator
            if self.tok.text == "*" and self.peek().text in (";", "]", ">", ")", "}", "++", "*", ""):
                break
            op = self.tok.text
            self.i += 1
            right = self.neg()
            left = self.mark(Mul(left, right) if op == "*" else Div(left, right), start)
        return left

    def neg(self) -> Term:
        start = self.tok.start
        if self.accept("-"):
            return self.mark(Neg(self.neg()), start)
        return self.power()

    def power(self) -> Term:
        start = self.tok.start
        base = self.primary()
        if self.accept("^"):
            t = self.tok
            if t.kind != "num" or "." in t.text:
                self.error("exponent must be a natural number")
            self.i += 1
            return self.mark(Pow(base, int(t.text)), start)
        return base

    def primary(self) -> Term:
        start = self.tok.start
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return self.mark(Num(Fraction(t.text)), start)
        if self.accept("("):
            inner = self.term()
            self.expect(")")
            return inner
        if self.accept("if"):
            cond = self.formula()
            self.expect("then")
            a = self.term()
            self.expect("else")
            b = self.term()
            self.expect("fi")
            return self.mark(Ite(cond, a, b), start)
        if t.kind == "id" and t.text not in KEYWORDS:
            name = t.text
            if name in self.defs and self.defs[name].kind == "term":
                return self.call_definition("term")
            self.i += 1
            if self.at("(") and self.lookup_var(name) is None:
                self.i += 1
                args = [self.term()]
                while self.accept(","):
                    args.append(self.term())
                self.expect(")")
                node: Term = self.mark(App(name, tuple(args)), start)
            elif self.lookup_var(name) is None:
                node = self.mark(App(name, ()), start)
            else:
                return self.mark(Var(name, self.lookup_var(name)), start)
            if self.accept("'"):
                node = self.mark(Prime(node), start)
            return node
        self.error(f"expected term, found {t.text or 'end of input'!r}")

    # -- programs
    def program(self) -> Program:
        start = self.tok.start
        left = self.sequence()
        if self.accept("++"):
            return self.mark(Choice(left, self.program()), start)
        return left

    def sequence(self) -> Program:
        start = self.tok.start
        left = self.loop()
        if self.accept(";"):
            if self.at("]", ">", "}", ")"):
                return left
            return self.mark(Seq(left, self.sequence()), start)
        return left

    def loop(self) -> Program:
        start = self.tok.start
        p = self.atomic_program()
        while self.accept("*"):
            p = self.mark(Loop(p), start)
        return p

    def atomic_program(self) -> Program:
        start = self.tok.start
        if self.accept("{"):
            p = self.program()
            self.expect("}")
            return p
        if self.accept("("):
            p = self.program()
            self.expect(")")
            return p
        if self.accept("?"):
            return self.mark(Test(self.test_formula()), start)
        var = None
        if self.accept("forall"):
            vs = self.binders()
            if len(vs) != 1:
                self.error("quantified programs bind exactly one variable")
            var = vs[0]
            self.push({var.name: var.sort})
        try:
            return self.mark(self.updates(var), start)
        finally:
            if var is not None:
                self.pop()

    def test_formula(self) -> Formula:
        return self.formula()

    def updates(self, var: Var | None) -> Program:
        pairs = []
        kind = None
        while True:
            if self.tok.kind == "id" and self.tok.text in self.defs and self.defs[self.tok.text].kind == "dyn":
                for lhs, rhs in self.call_definition("dyn"):
                    k = "ode" if isinstance(lhs, App) else "assign"
                    if isinstance(lhs, Prime) and kind != "assign":
                        k = "ode" if kind in (None, "ode") else "assign"
                    pairs.append((lhs, rhs))
                    kind = kind or k
            else:
                lhs = self.primary()
                if not isinstance(lhs, (App, Prime)):
                    self.i -= 1
                    self.error("expected a function application on the left")
                if self.accept(":="):
                    if self.accept("new"):
                        sort = self.parse_sort()
                        if var is not None or pairs or not isinstance(lhs, App):
                            self.error("new cannot be combined with other updates")
                        node = New(lhs, sort)
                        return desugar_new(node) if self.desugar else node
                    k = "assign"
                elif self.accept("="):
                    if not isinstance(lhs, Prime):
                        self.error("differential equation needs a primed left-hand side")
                    k = "ode"
                else:
                    self.error("expected ':=' or '='")
                if kind is not None and k != kind:
                    self.error("cannot mix assignments and differential equations")
                kind = k
                rhs = self.term()
                pairs.append((lhs.app if k == "ode" else lhs, rhs))
            if not self.accept(","):
                break
        if kind == "ode":
            pairs = [(l.app if isinstance(l, Prime) else l, r) for l, r in pairs]
            domain: Formula = TrueF()
            if self.accept("&"):
                domain = self.formula()
            return ODE(var, tuple(pairs), domain)
        return Assign(var, tuple(pairs))

    def done(self):
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.text!r}")


def _parse(fn: str, text: str, sig=None, defs=None, file="<input>", desugar=True):
    p = Parser(text, sig, defs, file, desugar)
    out = getattr(p, fn)()
    p.done()
    return out


def parse_formula(text: str, sig: Signature | None = None,
                  defs: dict[str, Definition] | None = None, file: str = "<input>") -> Formula:
    return _parse("formula", text, sig, defs, file)


def parse_term(text: str, sig: Signature | None = None,
               defs: dict[str, Definition] | None = None, file: str = "<input>") -> Term:
    return _parse("term", text, sig, defs, file)


def parse_program(text: str, sig: Signature | None = None,
                  defs: dict[str, Definition] | None = None, file: str = "<input>",
                  desugar: bool = True) -> Program:
    return _parse("program", text, sig, defs, file, desugar)


def parse_with_spans(text: str, sig: Signature | None = None, kind: str = "formula"):
    p = Parser(text, sig)
    out = getattr(p, kind)()
    p.done()
    return out, p.spans


# --------------------------------------------------------------------------
# theories


@dataclass
class Theory:
    signature: Signature = field(default_factory=Signature)
    definitions: dict[str, Definition] = field(default_factory=dict)
    conjectures: dict[str, Formula] = field(default_factory=dict)
    file: str = "<input>"

    def parse_formula(self, text: str) -> Formula:
        return desugar_new_in(parse_formula(text, self.signature, self.definitions))

    def parse_term(self, text: str) -> Term:
        return parse_term(text, self.signature, self.definitions)


def parse_theory(text: str, file: str = "<input>") -> Theory:
    """Parse a ``.qdtl`` file.

    Declarations::

        sort A;
        func x(A): R;           func omega: R rigid;
        def P(i:A, j:A) := formula;     term q(i:A) := term;
        dyn F(i:A) := x(i)' = v(i), v(i)' = a(i);
        conjecture name: formula;
    """
    th = Theory(file=file)
    p = Parser(text, th.signature, th.definitions, file)
    while p.tok.kind != "eof":
        kw = p.ident()
        if kw == "sort":
            th.signature.add_sort(p.ident())
        elif kw == "func":
            name = p.ident()
            args: list[str] = []
            if p.accept("("):
                if not p.at(")"):
                    args.append(p.parse_sort())
                    while p.accept(","):
                        args.append(p.parse_sort())
                p.expect(")")
            p.expect(":")
            result = p.parse_sort()
            rigid = p.accept("rigid")
            th.signature.add_function(name, args, result, rigid)
        elif kw in ("def", "term", "dyn"):
            name = p.ident()
            params: list[Var] = []
            if p.accept("("):
                params.extend(p.binders())
                while p.accept(","):
                    params.extend(p.binders())
                p.expect(")")
            p.expect(":=")
            p.push({v.name: v.sort for v in params})
            if kw == "def":
                body, kind = p.formula(), "formula"
            elif kw == "term":
                body, kind = p.term(), "term"
            else:
                prog = p.updates(None)
                if isinstance(prog, ODE):
                    body = prog.eqs
                else:
                    body = prog.updates
                kind = "dyn"
            p.pop()
            th.definitions[name] = Definition(name, tuple(params), body, kind)
        elif kw == "conjecture":
            name = p.ident()
            p.expect(":")
            start = p.tok.start
            f = desugar_new_in(p.formula())
            try:
                check_types(f, th.signature)
            except (SortError, UnknownSymbolError) as e:
                raise ParseError(f"conjecture {name} is ill-typed: {e}",
                                 make_span(text, start, p.tok.start, file)) from None
            th.conjectures[name] = f
        else:
            p.i -= 1
            p.error(f"unknown declaration {kw!r}")
        p.expect(";")
    return th


# --------------------------------------------------------------------------
# proof scripts


@dataclass(frozen=True)
class Position:
    side: str  # "L" | "R"
    index: int
    path: tuple[int, ...] = ()

    def __str__(self):
        return f"{self.side}{self.index}" + "".join(f".{k}" for k in self.path)

    @staticmethod
    def parse(text: str) -> "Position":
        m = re.fullmatch(r"([LR])(\d+)((?:\.\d+)*)", text)
        if not m:
            raise ParseError(f"malformed position {text!r}")
        path = tuple(int(x) for x in m.group(3).split(".")[1:]) if m.group(3) else ()
        return Position(m.group(1), int(m.group(2)), path)


@dataclass
class Command:
    rule: str
    position: Position | None = None
    args: dict[str, str] = field(default_factory=dict)
    goal: tuple[int, ...] | None = None  # explicit goal path
    span: SourceSpan | None = None


@dataclass
class Block:
    """Commands applied to one goal; ``cases`` address the premises."""

    commands: list[Command] = field(default_factory=list)
    cases: dict[int, "Block"] = field(default_factory=dict)


@dataclass
class ProofScript:
    conjecture: str
    body: Block
    span: SourceSpan | None = None

    def commands(self) -> list[Command]:
        out: list[Command] = []

        def go(b: Block):
            out.extend(b.commands)
            for k in sorted(b.cases):
                go(b.cases[k])
        go(self.body)
        return out


RULE_NAME_RE = re.compile(r"[^\s;{}]+")


def parse_proof_script(text: str, file: str = "<input>",
                       catalog: set[str] | None = None) -> list[ProofScript]:
    """Parse a ``.qpf`` file into one :class:`ProofScript` per ``proof`` block.

    Command syntax inside a block::

        RULE [POSITION] [key="value" ...] ;
        @0.1 RULE ... ;              explicit goal path
        case K { ... }               commands for premise K of the last rule
    """
    if catalog is None:
        from qdtl.calculus import RULES
        catalog = set(RULES)
    scripts = []
    pos = 0
    n = len(text)

    def skip_ws():
        nonlocal pos
        while pos < n:
            if text[pos].isspace():
                pos += 1
            elif text.startswith("//", pos):
                while pos < n and text[pos] != "\n":
                    pos += 1
            else:
                break

    def err(msg, at=None):
        at = pos if at is None else at
        raise ParseError(msg, make_span(text, at, at + 1, file))

    def word() -> tuple[str, int]:
        nonlocal pos
        skip_ws()
        m = RULE_NAME_RE.match(text, pos)
        if not m:
            err("expected a word")
        start = pos
        pos = m.end()
        return m.group(), start

    def expect(ch: str):
        nonlocal pos
        skip_ws()
        if not text.startswith(ch, pos):
            err(f"expected {ch!r}")
        pos += len(ch)

    def block() -> Block:
        nonlocal pos
        b = Block()
        expect("{")
        while True:
            skip_ws()
            if pos >= n:
                err("unterminated block")
            if text[pos] == "}":
                pos += 1
                return b
            start = pos
            w, _ = word()
            if w == "case":
                k, kpos = word()
                if not k.isdigit():
                    err("case index must be a number", kpos)
                b.cases[int(k)] = block()
                continue
            goal = None
            if w.startswith("@"):
                try:
                    goal = tuple(int(x) for x in w[1:].split(".") if x != "")
                except ValueError:
                    err(f"malformed goal path {w!r}", start)
                w, _ = word()
            if w not in catalog:
                # rule names may contain ';' (e.g. [;]box): take the longest catalog match
                for name in sorted(catalog, key=len, reverse=True):
                    if text.startswith(name, pos - len(w)) and (
                            pos - len(w) + len(name) >= n
                            or not RULE_NAME_RE.match(text[pos - len(w) + len(name)])
                            or text[pos - len(w) + len(name)] == ";"):
                        pos = pos - len(w) + len(name)
                        w = name
                        break
            if w not in catalog:
                import difflib
                near = difflib.get_close_matches(w, sorted(catalog), n=3, cutoff=0.0)
                err(f"unknown rule {w!r}; nearest: {', '.join(near)} "
                    f"(catalog: {' '.join(sorted(catalog))})", start)
            cmd = Command(w, goal=goal)
            while True:
                skip_ws()
                if pos < n and text[pos] == ";":
                    pos += 1
                    break
                if pos >= n:
                    err("missing ';'")
                m = re.compile(r'([A-Za-z_]\w*)\s*=\s*"((?:[^"\\]|\\.)*)"').match(text, pos)
                if m:
                    cmd.args[m.group(1)] = m.group(2).replace('\\"', '"')
                    pos = m.end()
                    continue
                tok, tpos = word()
                if cmd.position is None and re.fullmatch(r"[LR]\d+(\.\d+)*", tok):
                    cmd.position = Position.parse(tok)
                else:
                    err(f"unexpected argument {tok!r}", tpos)
            cmd.span = make_span(text, start, pos, file)
            b.commands.append(cmd)

    while True:
        skip_ws()
        if pos >= n:
            break
        start = pos
        kw, _ = word()
        if kw != "proof":
            err(f"expected 'proof', found {kw!r}", start)
        name, _ = word()
        body = block()
        scripts.append(ProofScript(name, body, make_span(text, start, pos, file)))
    return scripts


# --------------------------------------------------------------------------
# pretty printing

# precedence: higher binds tighter
_F_PREC = {Implies: 1, Or: 2, And: 3}


def _fmt_num(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    d = v.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d == 1:
        s = f"{float(v):.20f}".rstrip("0")
        if Fraction(s) == v:
            return s
    return f"({v.numerator}/{v.denominator})"


def pretty_term(t: Term, prec: int = 0) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Num):
        if t.value < 0:
            s = "-" + _fmt_num(-t.value)
            return f"({s})" if prec > 0 else s
        return _fmt_num(t.value)
    if isinstance(t, App):
        if not t.args:
            return t.func
        return f"{t.func}({', '.join(pretty_term(a) for a in t.args)})"
    if isinstance(t, Prime):
        return pretty_term(t.app) + "'"
    if isinstance(t, Ite):
        return f"if {pretty(t.cond)} then {pretty_term(t.then)} else {pretty_term(t.other)} fi"
    if isinstance(t, (Add, Sub)):
        op = "+" if isinstance(t, Add) else "-"
        s = f"{pretty_term(t.left, 1)} {op} {pretty_term(t.right, 2)}"
        return f"({s})" if prec > 1 else s
    if isinstance(t, (Mul, Div)):
        op = "*" if isinstance(t, Mul) else "/"
        s = f"{pretty_term(t.left, 2)}{op}{pretty_term(t.right, 3)}"
        return f"({s})" if prec > 2 else s
    if isinstance(t, Neg):
        s = f"-{pretty_term(t.arg, 3)}"
        return f"({s})" if prec > 2 else s
    if isinstance(t, Pow):
        s = f"{pretty_term(t.base, 4)}^{t.exp}"
        return f"({s})" if prec > 3 else s
    raise TypeError(t)


def pretty_program(p: Program, prec: int = 0) -> str:
    if isinstance(p, (Assign, ODE)):
        head = f"forall {p.var.name}:{p.var.sort} " if p.var is not None else ""
        if isinstance(p, Assign):
            body = ", ".join(f"{pretty_term(l)} := {pretty_term(r)}" for l, r in p.updates)
            s = head + body
        else:
            body = ", ".join(f"{pretty_term(l)}' = {pretty_term(r)}" for l, r in p.eqs)
            s = head + body
            if not isinstance(p.domain, TrueF):
                s += f" & {pretty(p.domain, 1)}"
        return s
    if isinstance(p, Test):
        if isinstance(p.cond, (TrueF, FalseF)):
            return "?" + pretty(p.cond)
        return f"?({pretty(p.cond)})"
    if isinstance(p, New):
        return f"{pretty_term(p.target)} := new {p.sort}"
    if isinstance(p, Choice):
        s = f"{pretty_program(p.left, 1)} ++ {pretty_program(p.right, 0)}"
        return "{" + s + "}" if prec > 0 else s
    if isinstance(p, Seq):
        s = f"{pretty_program(p.left, 2)}; {pretty_program(p.right, 1)}"
        return "{" + s + "}" if prec > 1 else s
    if isinstance(p, Loop):
        return "{" + pretty_program(p.body) + "}*"
    raise TypeError(p)


def pretty(node, prec: int = 0) -> str:
    """Render any syntax node in the concrete syntax accepted by the parser."""
    if isinstance(node, Term):
        return pretty_term(node)
    if isinstance(node, Program):
        return pretty_program(node)
    if isinstance(node, Sequent):
        return str(node)
    f = node
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Eq):
        s = f"{pretty_term(f.left)} = {pretty_term(f.right)}"
        return s
    if isinstance(f, Geq):
        return f"{pretty_term(f.left)} >= {pretty_term(f.right)}"
    if isinstance(f, Gt):
        return f"{pretty_term(f.left)} > {pretty_term(f.right)}"
    if isinstance(f, Not):
        if isinstance(f.arg, (Eq, Geq, Gt)):
            return f"!({pretty(f.arg)})"
        return "!" + pretty(f.arg, 4)
    if isinstance(f, (And, Or, Implies)):
        p = _F_PREC[type(f)]
        op = {And: "&&", Or: "||", Implies: "->"}[type(f)]
        # && and || are right-nested by the parser, -> is right associative
        s = f"{pretty(f.left, p + 1)} {op} {pretty(f.right, p)}"
        return f"({s})" if prec > p else s
    if isinstance(f, (Forall, Exists)):
        q = "forall" if isinstance(f, Forall) else "exists"
        v = f.var
        head = f"{q} {v.name}" + (f":{v.sort}" if v.sort != REAL else "")
        s = f"{head} {pretty(f.body, 4)}"
        return f"({s})" if prec > 4 else s
    if isinstance(f, Box):
        s = f"[{pretty_program(f.prog)}] {pretty(f.post, 4)}"
        return f"({s})" if prec > 4 else s
    if isinstance(f, Dia):
        s = f"<{pretty_program(f.prog)}> {pretty(f.post, 4)}"
        return f"({s})" if prec > 4 else s
    if isinstance(f, Always):
        return f"box {pretty(f.body, 4)}"
    if isinstance(f, Eventually):
        return f"dia {pretty(f.body, 4)}"
    raise TypeError(f"cannot print {f!r}")
