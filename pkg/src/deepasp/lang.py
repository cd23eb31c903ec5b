"""Surface language front end: tokenizer, parser, safety checks, pretty printer.

The accepted language is the ASP fragment needed by the engine: facts, normal
rules, constraints, choice rules with conditional literals and cardinality
bounds, #count aggregates with comparison guards, strong negation (`~` or `-`),
integer arithmetic (`+ - * /` and `\\` for mod, `|x|` for absolute value),
intervals `lo..hi`, weak constraints `:~ Body. [w@l, terms]`, and neural
declarations `nn(m(e, t), [v1, ..., vn]) :- Guard.`

Programs are immutable values; parsing has no side effects.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class DeepAspError(Exception):
    """Base class for all engine errors."""


class SyntaxErr(DeepAspError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class SafetyError(DeepAspError):
    def __init__(self, variable: str, rule_text: str):
        super().__init__(f"unsafe variable {variable} in rule: {rule_text}")
        self.variable = variable


class ValidationError(DeepAspError):
    pass


# ---------------------------------------------------------------------------
# Terms

@dataclass(frozen=True)
class Num:
    value: int

    def __str__(self):
        return str(self.value)


@dataclass(frozen=True)
class Sym:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Func:
    name: str
    args: tuple

    def __str__(self):
        return f"{self.name}({','.join(map(str, self.args))})"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / \
    left: object
    right: object

    def __str__(self):
        return f"({self.left}{self.op}{self.right})"


@dataclass(frozen=True)
class Abs:
    arg: object

    def __str__(self):
        return f"|{self.arg}|"


@dataclass(frozen=True)
class Interval:
    lo: object
    hi: object

    def __str__(self):
        return f"{self.lo}..{self.hi}"


# ---------------------------------------------------------------------------
# Literals

@dataclass(frozen=True)
class Atom:
    name: str
    args: tuple = ()
    strong_neg: bool = False

    def __str__(self):
        s = "~" if self.strong_neg else ""
        if self.args:
            return f"{s}{self.name}({','.join(map(str, self.args))})"
        return s + self.name


@dataclass(frozen=True)
class AtomLit:
    atom: Atom
    naf: bool = False  # default negation `not`

    def __str__(self):
        return f"not {self.atom}" if self.naf else str(self.atom)


@dataclass(frozen=True)
class Comparison:
    op: str  # = != < <= > >=
    left: object
    right: object

    def __str__(self):
        return f"{self.left}{self.op}{self.right}"


@dataclass(frozen=True)
class AggElem:
    terms: tuple  # tuple of terms (may be empty)
    condition: tuple  # tuple of AtomLit/Comparison

    def __str__(self):
        t = ",".join(map(str, self.terms))
        if self.condition:
            c = ",".join(map(str, self.condition))
            return f"{t}:{c}" if t else c
        return t


@dataclass(frozen=True)
class CountLit:
    """#count aggregate or cardinality literal with comparison guards.

    Guards are (op, term) pairs; the literal holds iff the number of distinct
    satisfied element tuples passes every guard.
    """

    elements: tuple  # tuple of AggElem
    guards: tuple  # tuple of (op, term)
    naf: bool = False

    def __str__(self):
        body = ";".join(map(str, self.elements))
        if self._cardinality_form():
            lb = next((t for op, t in self.guards if op == ">="), None)
            ub = next((t for op, t in self.guards if op == "<="), None)
            parts = []
            for e in self.elements:
                head = str(e.condition[0])
                rest = ",".join(map(str, e.condition[1:]))
                parts.append(f"{head}:{rest}" if rest else head)
            s = ("%s" % lb if lb is not None else "") + "{%s}" % ";".join(parts)
            if ub is not None:
                s += str(ub)
        else:
            s = "#count{%s}" % body
            for op, t in self.guards:
                s += f"{op}{t}"
        return f"not {s}" if self.naf else s

    def _cardinality_form(self) -> bool:
        for e in self.elements:
            if len(e.terms) != 1 or not e.condition:
                return False
            first = e.condition[0]
            if not isinstance(first, AtomLit) or first.naf:
                return False
            if str(e.terms[0]) != str(first.atom):
                return False
        ops = [op for op, _ in self.guards]
        return (
            all(op in (">=", "<=") for op in ops)
            and len(ops) == len(set(ops))
            and all(isinstance(t, Num) for _, t in self.guards)
        )


# ---------------------------------------------------------------------------
# Rule heads

@dataclass(frozen=True)
class ChoiceElem:
    atom: Atom
    condition: tuple = ()  # conditional literals, e.g. a(R,C,N): N=1..9

    def __str__(self):
        if self.condition:
            return f"{self.atom}:{','.join(map(str, self.condition))}"
        return str(self.atom)


@dataclass(frozen=True)
class Choice:
    elements: tuple
    lb: object = None  # term or None
    ub: object = None

    def __str__(self):
        s = "{%s}" % ";".join(map(str, self.elements))
        if self.lb is not None and self.lb == self.ub:
            return f"{s}={self.lb}"
        pre = f"{self.lb}" if self.lb is not None else ""
        post = f"{self.ub}" if self.ub is not None else ""
        return pre + s + post


@dataclass(frozen=True)
class NeuralHead:
    """nn(m(e, t1, ..., tk), [v1, ..., vn])"""

    name: str
    events: object  # term, integer after grounding
    terms: tuple  # data-reference terms
    outcomes: tuple

    def __str__(self):
        t = ",".join(map(str, self.terms))
        o = ",".join(map(str, self.outcomes))
        return f"nn({self.name}({self.events},{t}),[{o}])"


@dataclass(frozen=True)
class Rule:
    head: object = None  # Atom | Choice | NeuralHead | None (constraint)
    body: tuple = ()
    weak: tuple = None  # (weight term, level term, tuple terms) for `:~`

    @property
    def kind(self) -> str:
        if self.weak is not None:
            return "weak"
        if self.head is None:
            return "constraint"
        if isinstance(self.head, NeuralHead):
            return "neural"
        if isinstance(self.head, Choice):
            return "choice"
        return "fact" if not self.body else "normal"

    def __str__(self):
        if self.weak is not None:
            w, lvl, terms = self.weak
            payload = f"[{w}@{lvl}" + "".join(f",{t}" for t in terms) + "]"
            return ":~ " + ",".join(map(str, self.body)) + f". {payload}"
        body = ",".join(map(str, self.body))
        if self.head is None:
            return f":- {body}."
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- {body}."


@dataclass(frozen=True)
class Program:
    rules: tuple = ()

    @property
    def neural_rules(self):
        return tuple(r for r in self.rules if r.kind == "neural")

    def __str__(self):
        return "\n".join(str(r) for r in self.rules)


@dataclass(frozen=True)
class Observation:
    """A set of ground constraints `:- Body.` defining a likelihood."""

    constraints: tuple = ()

    def __str__(self):
        return "\n".join(str(r) for r in self.constraints)


# ---------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<comment>%[^\n]*)
  | (?P<ws>\s+)
  | (?P<count>\#count\b)
  | (?P<ifop>:-)
  | (?P<weakop>:~)
  | (?P<dots>\.\.)
  | (?P<neq>!=)
  | (?P<leq><=)
  | (?P<geq>>=)
  | (?P<num>\d+)
  | (?P<ident>[a-z][A-Za-z0-9_]*)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<punct>[()\[\]{},;:.+\-*/\\|~@=<>])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"not"}


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SyntaxErr(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        raw = m.group()
        if kind not in ("ws", "comment"):
            if kind == "ident" and raw in _KEYWORDS:
                tokens.append(Token(raw, raw, line, col))
            elif kind in ("punct", "neq", "leq", "geq"):
                tokens.append(Token(raw, raw, line, col))
            else:
                tokens.append(Token(kind, raw, line, col))
        nl = raw.count("\n")
        if nl:
            line += nl
            col = len(raw) - raw.rfind("\n")
        else:
            col += len(raw)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser

_CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self, ahead=0) -> Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def expect(self, kind: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise SyntaxErr(f"expected {kind!r}, found {tok.text!r}", tok.line, tok.col)
        return self.next()

    def accept(self, kind: str):
        if self.peek().kind == kind:
            return self.next()
        return None

    def err(self, msg: str):
        tok = self.peek()
        raise SyntaxErr(msg, tok.line, tok.col)

    # -- terms -------------------------------------------------------------

    def parse_term(self):
        t = self.parse_additive()
        if self.accept("dots"):
            hi = self.parse_additive()
            return Interval(t, hi)
        return t

    def parse_additive(self):
        t = self.parse_multiplicative()
        while self.peek().kind in ("+", "-"):
            op = self.next().kind
            t = BinOp(op, t, self.parse_multiplicative())
        return t

    def parse_multiplicative(self):
        t = self.parse_primary()
        while self.peek().kind in ("*", "/", "\\"):
            op = self.next().kind
            t = BinOp(op, t, self.parse_primary())
        return t

    def parse_primary(self):
        tok = self.peek()
        if tok.kind == "num":
            self.next()
            return Num(int(tok.text))
        if tok.kind == "-":
            self.next()
            inner = self.parse_primary()
            if isinstance(inner, Num):
                return Num(-inner.value)
            return BinOp("-", Num(0), inner)
        if tok.kind == "var":
            self.next()
            return Var(tok.text)
        if tok.kind == "ident":
            self.next()
            if self.peek().kind == "(":
                self.next()
                args = [self.parse_term()]
                while self.accept(","):
                    args.append(self.parse_term())
                self.expect(")")
                return Func(tok.text, tuple(args))
            return Sym(tok.text)
        if tok.kind == "(":
            self.next()
            t = self.parse_term()
            self.expect(")")
            return t
        if tok.kind == "|":
            self.next()
            t = self.parse_additive()
            self.expect("|")
            return Abs(t)
        self.err(f"expected a term, found {tok.text!r}")

    # -- literals ------------------------------------------------------------

    def parse_atom(self) -> Atom:
        strong = False
        if self.peek().kind in ("~", "-"):
            self.next()
            strong = True
        tok = self.expect("ident")
        args = ()
        if self.accept("("):
            lst = [self.parse_term()]
            while self.accept(","):
                lst.append(self.parse_term())
            self.expect(")")
            args = tuple(lst)
        return Atom(tok.text, args, strong)

    def parse_body_literal(self):
        naf = False
        if self.accept("not"):
            naf = True
        tok = self.peek()
        if tok.kind == "count" or tok.kind == "{" or (
            tok.kind == "num" and self.peek(1).kind == "{"
        ):
            lit = self.parse_count_literal()
            return CountLit(lit.elements, lit.guards, naf)
        if tok.kind in ("~", "-") or (
            tok.kind == "ident" and not self._starts_comparison()
        ):
            atom = self.parse_atom()
            # an atom may still continue as a comparison, e.g. f(X)=3
            if not atom.strong_neg and self.peek().kind in _CMP_OPS:
                left = Func(atom.name, atom.args) if atom.args else Sym(atom.name)
                return self._finish_comparison(left, naf)
            return AtomLit(atom, naf)
        left = self.parse_term()
        return self._finish_comparison(left, naf)

    def _finish_comparison(self, left, naf):
        tok = self.peek()
        if tok.kind not in _CMP_OPS:
            self.err(f"expected comparison operator, found {tok.text!r}")
        op = self.next().kind
        right = self.parse_term()
        cmp = Comparison(op, left, right)
        if naf:
            # `not t1 op t2` flips the operator
            cmp = Comparison(_NEGATED_OP[op], left, right)
        return cmp

    def _starts_comparison(self) -> bool:
        # lookahead: ident directly followed by a comparison op (no parens)
        return self.peek(1).kind in _CMP_OPS

    def parse_count_literal(self) -> CountLit:
        guards = []
        if self.peek().kind == "num":  # leading bound: 2{...}
            lb = self.next()
            guards.append((">=", Num(int(lb.text))))
            self.expect("{")
            elements = self._parse_agg_elements(conditional=False)
            self.expect("}")
            if self.peek().kind == "num":
                ub = self.next()
                guards.append(("<=", Num(int(ub.text))))
            return CountLit(tuple(elements), tuple(guards))
        if self.accept("count"):
            self.expect("{")
            elements = self._parse_agg_elements(conditional=True)
            self.expect("}")
            if self.peek().kind not in _CMP_OPS:
                self.err("aggregate requires a comparison guard")
            guards2 = []
            while self.peek().kind in _CMP_OPS:
                op = self.next().kind
                guards2.append((op, self.parse_term()))
            return CountLit(tuple(elements), tuple(guards2))
        # bare cardinality: {...}n or {...} with trailing bound
        self.expect("{")
        elements = self._parse_agg_elements(conditional=False)
        self.expect("}")
        guards2 = []
        if self.peek().kind == "num":
            ub = self.next()
            guards2.append(("<=", Num(int(ub.text))))
        return CountLit(tuple(elements), tuple(guards2))

    def _parse_agg_elements(self, conditional: bool) -> list:
        elements = []
        while True:
            if conditional:
                terms = [self.parse_term()]
                while self.accept(","):
                    terms.append(self.parse_term())
                cond = []
                if self.accept(":"):
                    cond.append(self.parse_body_literal())
                    while self.accept(","):
                        cond.append(self.parse_body_literal())
                elements.append(AggElem(tuple(terms), tuple(cond)))
            else:
                atom = self.parse_atom()
                cond = [AtomLit(atom, False)]
                if self.accept(":"):
                    cond.append(self.parse_body_literal())
                    while self.accept(","):
                        cond.append(self.parse_body_literal())
                key = (
                    Func(atom.name, atom.args) if atom.args else Sym(atom.name)
                )
                elements.append(AggElem((key,), tuple(cond)))
            if not self.accept(";"):
                break
        return elements

    # -- rules --------------------------------------------------------------

    def parse_choice_head(self, lb=None) -> Choice:
        self.expect("{")
        elements = []
        while True:
            atom = self.parse_atom()
            cond = []
            if self.accept(":"):
                cond.append(self.parse_body_literal())
                while self.accept(","):
                    cond.append(self.parse_body_literal())
            elements.append(ChoiceElem(atom, tuple(cond)))
            if not self.accept(";"):
                break
        self.expect("}")
        ub = None
        tok = self.peek()
        if tok.kind == "num":
            self.next()
            ub = Num(int(tok.text))
        elif tok.kind == "=":
            self.next()
            n = self.expect("num")
            lb = ub = Num(int(n.text))
        return Choice(tuple(elements), lb, ub)

    def parse_neural_head(self) -> NeuralHead:
        # current token is ident 'nn'
        self.next()
        self.expect("(")
        m = self.expect("ident").text
        self.expect("(")
        events = self.parse_term()
        terms = []
        while self.accept(","):
            terms.append(self.parse_term())
        self.expect(")")
        self.expect(",")
        self.expect("[")
        outcomes = [self.parse_term()]
        while self.accept(","):
            outcomes.append(self.parse_term())
        self.expect("]")
        self.expect(")")
        return NeuralHead(m, events, tuple(terms), tuple(outcomes))

    def parse_body(self) -> tuple:
        lits = [self.parse_body_literal()]
        while self.accept(","):
            lits.append(self.parse_body_literal())
        return tuple(lits)

    def parse_rule(self) -> Rule:
        tok = self.peek()
        if tok.kind == "weakop":
            self.next()
            body = self.parse_body()
            self.expect(".")
            self.expect("[")
            weight = self.parse_term()
            level = Num(0)
            if self.accept("@"):
                level = self.parse_term()
            terms = []
            while self.accept(","):
                terms.append(self.parse_term())
            self.expect("]")
            return Rule(None, body, (weight, level, tuple(terms)))
        if tok.kind == "ifop":
            self.next()
            body = self.parse_body()
            self.expect(".")
            return Rule(None, body)
        # head
        if tok.kind == "num" and self.peek(1).kind == "{":
            lb = Num(int(self.next().text))
            head = self.parse_choice_head(lb)
        elif tok.kind == "{":
            head = self.parse_choice_head()
        elif tok.kind == "ident" and tok.text == "nn" and self.peek(1).kind == "(":
            head = self.parse_neural_head()
        else:
            head = self.parse_atom()
        body = ()
        if self.accept("ifop"):
            body = self.parse_body()
        self.expect(".")
        return Rule(head, body)

    def parse_program(self) -> Program:
        rules = []
        while self.peek().kind != "eof":
            rules.append(self.parse_rule())
        return Program(tuple(rules))


_NEGATED_OP = {"=": "!=", "!=": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


# ---------------------------------------------------------------------------
# Safety

def _binding_vars(term) -> set:
    """Variables a positive atom occurrence binds (not through arithmetic)."""
    if isinstance(term, Var):
        return {term.name}
    if isinstance(term, Func):
        out = set()
        for a in term.args:
            out |= _binding_vars(a)
        return out
    return set()


def _all_vars(node) -> set:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, (Num, Sym)) or node is None:
        return set()
    if isinstance(node, Func):
        out = set()
        for a in node.args:
            out |= _all_vars(a)
        return out
    if isinstance(node, BinOp):
        return _all_vars(node.left) | _all_vars(node.right)
    if isinstance(node, Abs):
        return _all_vars(node.arg)
    if isinstance(node, Interval):
        return _all_vars(node.lo) | _all_vars(node.hi)
    if isinstance(node, Atom):
        out = set()
        for a in node.args:
            out |= _all_vars(a)
        return out
    if isinstance(node, AtomLit):
        return _all_vars(node.atom)
    if isinstance(node, Comparison):
        return _all_vars(node.left) | _all_vars(node.right)
    raise TypeError(f"no vars for {node!r}")


def _bound_by_literals(lits, initial: set) -> set:
    """Fixpoint of variables bound by positive atoms and `=` assignments."""
    bound = set(initial)
    for lit in lits:
        if isinstance(lit, AtomLit) and not lit.naf:
            for arg in lit.atom.args:
                bound |= _binding_vars(arg)
    changed = True
    while changed:
        changed = False
        for lit in lits:
            if isinstance(lit, Comparison) and lit.op == "=":
                for target, src in ((lit.left, lit.right), (lit.right, lit.left)):
                    if (
                        isinstance(target, Var)
                        and target.name not in bound
                        and _all_vars(src) <= bound
                    ):
                        bound.add(target.name)
                        changed = True
    return bound


def check_rule_safety(rule: Rule) -> None:
    """Raise SafetyError naming the first unsafe variable, if any."""
    bound = _bound_by_literals(rule.body, set())

    def require(vars_needed, local_bound=frozenset()):
        for v in sorted(vars_needed):
            if v not in bound and v not in local_bound:
                raise SafetyError(v, str(rule))

    # body literals themselves (negated atoms, comparisons, aggregates)
    for lit in rule.body:
        if isinstance(lit, AtomLit):
            require(_all_vars(lit))
        elif isinstance(lit, Comparison):
            require(_all_vars(lit))
        elif isinstance(lit, CountLit):
            for elem in lit.elements:
                local = _bound_by_literals(elem.condition, bound)
                need = set()
                for t in elem.terms:
                    need |= _all_vars(t)
                for c in elem.condition:
                    need |= _all_vars(c)
                require(need, local)
            for _, t in lit.guards:
                require(_all_vars(t))

    head = rule.head
    if head is None:
        return
    if isinstance(head, Atom):
        require(_all_vars(head))
    elif isinstance(head, Choice):
        for elem in head.elements:
            local = _bound_by_literals(elem.condition, bound)
            require(_all_vars(elem.atom) | set().union(
                *[_all_vars(c) for c in elem.condition] or [set()]
            ), local)
        for b in (head.lb, head.ub):
            if b is not None:
                require(_all_vars(b))
    elif isinstance(head, NeuralHead):
        need = _all_vars(head.events)
        for t in head.terms:
            need |= _all_vars(t)
        for v in head.outcomes:
            need |= _all_vars(v)
        require(need)


def validate_program(program: Program) -> None:
    """Program-level checks: rule safety, neural declarations, reserved heads."""
    networks = {}
    for rule in program.rules:
        if rule.kind == "neural":
            h = rule.head
            if not isinstance(h.events, (Num, Var)) and not isinstance(h.events, BinOp):
                raise ValidationError(f"event count must be integer-valued: {h}")
            if isinstance(h.events, Num) and h.events.value < 1:
                raise ValidationError(f"event count must be >= 1: {h}")
            if len(h.outcomes) < 2:
                raise ValidationError(f"need at least 2 outcomes: {h}")
            if len(set(h.outcomes)) != len(h.outcomes):
                raise ValidationError(f"duplicate outcomes: {h}")
            for v in h.outcomes:
                if not isinstance(v, (Num, Sym)):
                    raise ValidationError(f"outcomes must be constants: {h}")
            networks.setdefault(h.name, len(h.terms))
    for rule in program.rules:
        check_rule_safety(rule)
        heads = []
        if isinstance(rule.head, Atom):
            heads = [rule.head]
        elif isinstance(rule.head, Choice):
            heads = [e.atom for e in rule.head.elements]
        for atom in heads:
            arity = networks.get(atom.name)
            if arity is not None and len(atom.args) == arity + 2:
                raise ValidationError(
                    f"atom {atom} is reserved for a neural declaration and "
                    f"may not occur in a rule head"
                )


def parse_program(text: str) -> Program:
    """Parse and validate source text into an immutable Program."""
    program = _Parser(text).parse_program()
    validate_program(program)
    return program


def parse_observation(text: str) -> Observation:
    """Parse one block of constraints; rules with heads are rejected."""
    program = _Parser(text).parse_program()
    for rule in program.rules:
        if rule.head is not None or rule.weak is not None:
            raise ValidationError(f"observations may only contain constraints: {rule}")
    return Observation(program.rules)


def parse_observations(text: str) -> list[Observation]:
    """Split on blank lines; each block becomes one Observation."""
    blocks = re.split(r"\n\s*\n", text)
    out = []
    for block in blocks:
        if block.strip():
            out.append(parse_observation(block))
    return out


def pretty(program: Program) -> str:
    return str(program) + ("\n" if program.rules else "")
