"""Bottom-up grounder: instantiate variables into a variable-free program.

Ground values are plain Python data: ints, strings (symbolic constants), and
tuples ("f", arg1, ...) for compound terms.  Atoms are keyed by
(name, strong_neg, args).  Grounding iterates rule instantiation against a
growing set of possible atoms until fixpoint; rules are only re-instantiated
when a predicate in their positive body gained atoms.

Count aggregates are supported in constraint bodies only: they never feed the
possible-atom set, so their elements are expanded once at the end against the
final closure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import lang
from .lang import (
    Abs, AggElem, Atom, AtomLit, BinOp, Choice, ChoiceElem, Comparison,
    CountLit, DeepAspError, Func, Interval, NeuralHead, Num, Program, Rule,
    Sym, Var, Observation,
)


class GroundingError(DeepAspError):
    pass


class ResourceError(DeepAspError):
    pass


# atom key: (name, strong_neg, args-tuple)
AtomKey = tuple


def fmt_val(v) -> str:
    if isinstance(v, tuple):
        return f"{v[0]}({','.join(fmt_val(a) for a in v[1:])})"
    return str(v)


def fmt_atom(key: AtomKey) -> str:
    name, strong, args = key
    s = "~" if strong else ""
    if args:
        return f"{s}{name}({','.join(fmt_val(a) for a in args)})"
    return s + name


def _sort_key(v):
    # total order across ints, symbols and compounds
    if isinstance(v, int):
        return (0, v)
    if isinstance(v, str):
        return (1, v)
    return (2, v[0], tuple(_sort_key(a) for a in v[1:]))


def atom_sort_key(key: AtomKey):
    name, strong, args = key
    return (name, strong, len(args), tuple(_sort_key(a) for a in args))


# ---------------------------------------------------------------------------
# Ground rule records (atoms referenced by integer id)

@dataclass(frozen=True)
class GNormal:
    head: int
    pos: tuple = ()
    neg: tuple = ()


@dataclass(frozen=True)
class GChoice:
    lb: int
    ub: int
    elems: tuple = ()
    pos: tuple = ()
    neg: tuple = ()


@dataclass(frozen=True)
class GCount:
    # elements: tuple of (tuple_key, cond_pos ids, cond_neg ids)
    elements: tuple
    guards: tuple  # ((op, int), ...)
    naf: bool = False


@dataclass(frozen=True)
class GConstraint:
    pos: tuple = ()
    neg: tuple = ()
    counts: tuple = ()


@dataclass(frozen=True)
class GWeak:
    pos: tuple
    neg: tuple
    weight: int
    level: int
    terms: tuple


@dataclass(frozen=True)
class NeuralEntry:
    name: str
    terms: tuple  # ground data-reference terms
    events: int
    outcomes: tuple
    atom_ids: tuple  # e rows x n cols of atom ids

    @property
    def term_str(self) -> str:
        return ",".join(fmt_val(t) for t in self.terms)


@dataclass
class GroundProgram:
    atoms: list = field(default_factory=list)  # id -> AtomKey
    index: dict = field(default_factory=dict)  # AtomKey -> id
    sigma_nn: set = field(default_factory=set)  # ids of neural atoms
    normals: list = field(default_factory=list)
    choices: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    weaks: list = field(default_factory=list)
    neural: list = field(default_factory=list)  # NeuralEntry
    translated: bool = False

    def atom_str(self, aid: int) -> str:
        return fmt_atom(self.atoms[aid])

    def dump(self, include_neural: bool = True) -> str:
        """Re-parseable surface syntax of the ground program."""
        out = []
        if include_neural:
            for e in self.neural:
                t = ",".join(fmt_val(x) for x in e.terms)
                o = ",".join(fmt_val(v) for v in e.outcomes)
                out.append(f"nn({e.name}({e.events},{t}),[{o}]).")
        for r in self.normals:
            body = [self.atom_str(a) for a in r.pos]
            body += [f"not {self.atom_str(a)}" for a in r.neg]
            if body:
                out.append(f"{self.atom_str(r.head)} :- {','.join(body)}.")
            else:
                out.append(f"{self.atom_str(r.head)}.")
        for r in self.choices:
            elems = ";".join(self.atom_str(a) for a in r.elems)
            body = [self.atom_str(a) for a in r.pos]
            body += [f"not {self.atom_str(a)}" for a in r.neg]
            head = f"{r.lb}{{{elems}}}{r.ub}"
            out.append(f"{head} :- {','.join(body)}." if body else f"{head}.")
        for r in self.constraints:
            body = [self.atom_str(a) for a in r.pos]
            body += [f"not {self.atom_str(a)}" for a in r.neg]
            for c in r.counts:
                parts = []
                for tk, cp, cn in c.elements:
                    t = ",".join(fmt_val(x) for x in tk)
                    cond = ",".join(
                        [self.atom_str(a) for a in cp]
                        + [f"not {self.atom_str(a)}" for a in cn]
                    )
                    parts.append(f"{t}:{cond}" if cond else t)
                guards = "".join(f"{op}{v}" for op, v in c.guards)
                prefix = "not " if c.naf else ""
                body.append(f"{prefix}#count{{{';'.join(parts)}}}{guards}")
            out.append(f":- {','.join(body)}.")
        for r in self.weaks:
            body = [self.atom_str(a) for a in r.pos]
            body += [f"not {self.atom_str(a)}" for a in r.neg]
            terms = "".join(f",{fmt_val(t)}" for t in r.terms)
            out.append(f":~ {','.join(body)}. [{r.weight}@{r.level}{terms}]")
        return "\n".join(out) + ("\n" if out else "")


# ---------------------------------------------------------------------------
# Term evaluation and matching

def eval_term(term, subst: dict):
    """Evaluate a term to a ground value; Interval evaluates to a range tuple."""
    if isinstance(term, Num):
        return term.value
    if isinstance(term, Sym):
        return term.name
    if isinstance(term, Var):
        try:
            return subst[term.name]
        except KeyError:
            raise GroundingError(f"unbound variable {term.name}")
    if isinstance(term, Func):
        return (term.name,) + tuple(eval_term(a, subst) for a in term.args)
    if isinstance(term, BinOp):
        lv = eval_term(term.left, subst)
        rv = eval_term(term.right, subst)
        if not isinstance(lv, int) or not isinstance(rv, int):
            raise GroundingError(
                f"arithmetic on non-integer constants: {fmt_val(lv)} {term.op} {fmt_val(rv)}"
            )
        if term.op == "+":
            return lv + rv
        if term.op == "-":
            return lv - rv
        if term.op == "*":
            return lv * rv
        if term.op == "/":
            if rv == 0:
                raise GroundingError("division by zero")
            return int(lv / rv) if (lv < 0) != (rv < 0) else lv // rv
        if term.op == "\\":
            if rv == 0:
                raise GroundingError("modulo by zero")
            return lv - rv * (int(lv / rv) if (lv < 0) != (rv < 0) else lv // rv)
        raise GroundingError(f"unknown operator {term.op}")
    if isinstance(term, Abs):
        v = eval_term(term.arg, subst)
        if not isinstance(v, int):
            raise GroundingError(f"absolute value of non-integer {fmt_val(v)}")
        return abs(v)
    if isinstance(term, Interval):
        lo = eval_term(term.lo, subst)
        hi = eval_term(term.hi, subst)
        if not isinstance(lo, int) or not isinstance(hi, int):
            raise GroundingError("interval bounds must be integers")
        return ("..", lo, hi)
    raise GroundingError(f"cannot evaluate {term!r}")


def _is_range(v) -> bool:
    return isinstance(v, tuple) and len(v) == 3 and v[0] == ".."


def match_term(pattern, value, subst: dict):
    """Try to extend subst so pattern evaluates to value; yields substs."""
    if isinstance(pattern, Var):
        bound = subst.get(pattern.name)
        if bound is None:
            s2 = dict(subst)
            s2[pattern.name] = value
            yield s2
        elif bound == value:
            yield subst
        return
    if isinstance(pattern, Func):
        if (
            isinstance(value, tuple)
            and not _is_range(value)
            and value[0] == pattern.name
            and len(value) - 1 == len(pattern.args)
        ):
            substs = [subst]
            for p, v in zip(pattern.args, value[1:]):
                substs = [s2 for s in substs for s2 in match_term(p, v, s)]
            yield from substs
        return
    if isinstance(pattern, Interval):
        lo = eval_term(pattern.lo, subst)
        hi = eval_term(pattern.hi, subst)
        if isinstance(value, int) and lo <= value <= hi:
            yield subst
        return
    # constants and arithmetic: evaluate and compare
    v = eval_term(pattern, subst)
    if _is_range(v):
        if isinstance(value, int) and v[1] <= value <= v[2]:
            yield subst
    elif v == value:
        yield subst


def compare(op: str, lv, rv) -> bool:
    if op == "=":
        return lv == rv
    if op == "!=":
        return lv != rv
    ordered = (_sort_key(lv), _sort_key(rv))
    if op == "<":
        return ordered[0] < ordered[1]
    if op == "<=":
        return ordered[0] <= ordered[1]
    if op == ">":
        return ordered[0] > ordered[1]
    if op == ">=":
        return ordered[0] >= ordered[1]
    raise GroundingError(f"unknown comparison {op}")


# ---------------------------------------------------------------------------
# Grounder

class _Grounder:
    def __init__(self, program: Program, cap: int):
        self.program = program
        self.cap = cap
        self.possible = {}  # (name, strong, arity) -> set of arg tuples
        self.pred_version = {}  # (name, strong, arity) -> int
        self.version = 0
        # intermediate ground rules with symbolic (key-based) atoms
        self.facts = set()
        self.normals = {}
        self.choices = {}
        self.constraints = {}
        self.weaks = {}
        self.neural = {}
        self.n_ground = 0

    # -- possible-atom bookkeeping ---------------------------------------

    def add_possible(self, key: AtomKey) -> bool:
        name, strong, args = key
        pred = (name, strong, len(args))
        bucket = self.possible.setdefault(pred, set())
        if args in bucket:
            return False
        bucket.add(args)
        self.version += 1
        self.pred_version[pred] = self.version
        return True

    def candidates(self, atom: Atom):
        pred = (atom.name, atom.strong_neg, len(atom.args))
        return self.possible.get(pred, ())

    def _bump(self):
        self.n_ground += 1
        if self.n_ground > self.cap:
            raise ResourceError(
                f"grounding exceeded cap of {self.cap} ground rules"
            )

    # -- literal instantiation --------------------------------------------

    def ground_atom(self, atom: Atom, subst: dict) -> AtomKey:
        args = tuple(eval_term(a, subst) for a in atom.args)
        for a in args:
            if _is_range(a):
                raise GroundingError(f"interval in unsupported position: {atom}")
        return (atom.name, atom.strong_neg, args)

    def _expand_head_intervals(self, atom: Atom, subst: dict):
        """Head atoms may carry intervals: expand to multiple ground atoms."""
        slots = [eval_term(a, subst) for a in atom.args]
        keys = [()]
        for v in slots:
            if _is_range(v):
                keys = [k + (x,) for k in keys for x in range(v[1], v[2] + 1)]
            else:
                keys = [k + (v,) for k in keys]
        return [(atom.name, atom.strong_neg, args) for args in keys]

    def solutions(self, lits, subst: dict):
        """Yield substitutions satisfying positive atoms and comparisons.

        Negative literals and aggregates are skipped (resolved later); their
        variables are bound by the safety requirement.
        """
        pending = list(lits)
        yield from self._solve(pending, subst)

    def _solve(self, pending, subst):
        if not pending:
            yield subst
            return
        # pick the first literal ready under subst
        for idx, lit in enumerate(pending):
            if isinstance(lit, AtomLit):
                if lit.naf:
                    continue  # deferred
                rest = pending[:idx] + pending[idx + 1:]
                for args in list(self.candidates(lit.atom)):
                    substs = [subst]
                    ok = True
                    for p, v in zip(lit.atom.args, args):
                        substs = [s2 for s in substs for s2 in match_term(p, v, s)]
                        if not substs:
                            ok = False
                            break
                    if ok:
                        for s in substs:
                            yield from self._solve(rest, s)
                return
            if isinstance(lit, Comparison):
                lvars = lang._all_vars(lit.left)
                rvars = lang._all_vars(lit.right)
                bound = set(subst)
                if lvars <= bound and rvars <= bound:
                    rest = pending[:idx] + pending[idx + 1:]
                    lv = eval_term(lit.left, subst)
                    rv = eval_term(lit.right, subst)
                    if _is_range(rv) and lit.op == "=" and isinstance(lv, int):
                        if rv[1] <= lv <= rv[2]:
                            yield from self._solve(rest, subst)
                    elif _is_range(lv) and lit.op == "=" and isinstance(rv, int):
                        if lv[1] <= rv <= lv[2]:
                            yield from self._solve(rest, subst)
                    elif compare(lit.op, lv, rv):
                        yield from self._solve(rest, subst)
                    return
                # binding assignment X = expr or X = lo..hi
                if lit.op == "=":
                    for target, src, svars in (
                        (lit.left, lit.right, rvars),
                        (lit.right, lit.left, lvars),
                    ):
                        if (
                            isinstance(target, Var)
                            and target.name not in bound
                            and svars <= bound
                        ):
                            rest = pending[:idx] + pending[idx + 1:]
                            v = eval_term(src, subst)
                            values = (
                                range(v[1], v[2] + 1) if _is_range(v) else (v,)
                            )
                            for x in values:
                                s2 = dict(subst)
                                s2[target.name] = x
                                yield from self._solve(rest, s2)
                            return
                continue  # not ready yet, try another literal
            if isinstance(lit, CountLit):
                continue  # deferred
            raise GroundingError(f"unsupported body literal {lit}")
        # only deferred/not-ready literals remain
        for lit in pending:
            if isinstance(lit, Comparison):
                raise GroundingError(
                    f"comparison {lit} has unbound variables"
                )
        yield subst

    def _ground_naf(self, lits, subst):
        """Ground the deferred negative literals of a body."""
        neg = []
        for lit in lits:
            if isinstance(lit, AtomLit) and lit.naf:
                neg.append(self.ground_atom(lit.atom, subst))
        return tuple(neg)

    def _ground_counts(self, lits, subst):
        counts = []
        for lit in lits:
            if isinstance(lit, CountLit):
                guards = []
                for op, t in lit.guards:
                    v = eval_term(t, subst)
                    if not isinstance(v, int):
                        raise GroundingError(f"aggregate guard must be integer: {lit}")
                    guards.append((op, v))
                counts.append((lit, dict(subst), tuple(guards), lit.naf))
        return counts

    # -- rule grounding ----------------------------------------------------

    def ground_rule(self, rule: Rule):
        head = rule.head
        if isinstance(head, NeuralHead):
            self._ground_neural(rule)
            return
        for lit in rule.body:
            if isinstance(lit, CountLit) and not (
                head is None and rule.weak is None
            ) and not (head is None):
                raise GroundingError(
                    "count aggregates are only supported in constraint bodies"
                )
        for subst in self.solutions(rule.body, {}):
            neg = self._ground_naf(rule.body, subst)
            pos = tuple(
                self.ground_atom(l.atom, subst)
                for l in rule.body
                if isinstance(l, AtomLit) and not l.naf
            )
            if rule.weak is not None:
                w, lvl, terms = rule.weak
                wv = eval_term(w, subst)
                lv = eval_term(lvl, subst)
                if not isinstance(wv, int) or not isinstance(lv, int):
                    raise GroundingError("weak-constraint weight/level must be integers")
                tv = tuple(eval_term(t, subst) for t in terms)
                key = (pos, neg, wv, lv, tv)
                if key not in self.weaks:
                    self._bump()
                    self.weaks[key] = GWeakProto(pos, neg, wv, lv, tv)
                continue
            if head is None:
                counts = self._ground_counts(rule.body, subst)
                key = (pos, neg, tuple((id(c[0]), tuple(sorted(c[1].items())), c[2]) for c in counts))
                if key not in self.constraints:
                    self._bump()
                    self.constraints[key] = (pos, neg, counts)
                continue
            if isinstance(head, Atom):
                for hkey in self._expand_head_intervals(head, subst):
                    key = (hkey, pos, neg)
                    if key not in self.normals:
                        self._bump()
                        self.normals[key] = True
                        self.add_possible(hkey)
                continue
            if isinstance(head, Choice):
                elems = []
                for elem in head.elements:
                    for esub in self.solutions(elem.condition, subst):
                        for ekey in self._expand_head_intervals(elem.atom, esub):
                            if ekey not in elems:
                                elems.append(ekey)
                lb = 0 if head.lb is None else eval_term(head.lb, subst)
                ub = len(elems) if head.ub is None else eval_term(head.ub, subst)
                key = (tuple(elems), lb, ub, pos, neg)
                if key not in self.choices:
                    self._bump()
                    self.choices[key] = True
                    for e in elems:
                        self.add_possible(e)
                continue
            raise GroundingError(f"cannot ground rule {rule}")

    def _ground_neural(self, rule: Rule):
        head = rule.head
        for lit in rule.body:
            if isinstance(lit, AtomLit) and lit.naf:
                raise GroundingError(
                    f"neural-rule guard must be decidable at grounding time: {rule}"
                )
            if isinstance(lit, CountLit):
                raise GroundingError(
                    f"aggregates are not allowed in neural-rule guards: {rule}"
                )
        for subst in self.solutions(rule.body, {}):
            e = eval_term(head.events, subst)
            if not isinstance(e, int) or e < 1:
                raise GroundingError(f"event count must be a positive integer: {rule}")
            terms = tuple(eval_term(t, subst) for t in head.terms)
            outcomes = tuple(eval_term(v, subst) for v in head.outcomes)
            key = (head.name, terms)
            prev = self.neural.get(key)
            if prev is not None:
                if prev != (e, outcomes):
                    raise GroundingError(
                        f"conflicting neural declarations for {head.name}({fmt_val(terms)})"
                    )
                continue
            self._bump()
            self.neural[key] = (e, outcomes)
            for i in range(e):
                for v in outcomes:
                    self.add_possible((head.name, False, (i,) + terms + (v,)))

    # -- driver -----------------------------------------------------------

    def run(self) -> GroundProgram:
        last_seen = {}  # rule index -> version at last instantiation
        rules = list(self.program.rules)
        while True:
            before = self.version
            for ri, rule in enumerate(rules):
                if last_seen.get(ri) == self.version:
                    continue
                v0 = self.version
                self.ground_rule(rule)
                # only mark as settled if the rule itself produced no updates
                last_seen[ri] = self.version if self.version == v0 else None
            if self.version == before:
                break
        return self._finalize()

    def _finalize(self) -> GroundProgram:
        gp = GroundProgram()
        all_atoms = []
        for (name, strong, _arity), args_set in self.possible.items():
            for args in args_set:
                all_atoms.append((name, strong, args))
        all_atoms.sort(key=atom_sort_key)
        for key in all_atoms:
            gp.index[key] = len(gp.atoms)
            gp.atoms.append(key)

        def aid(key):
            return gp.index[key]

        def possible(key):
            return key in gp.index

        for (name, terms), (e, outcomes) in sorted(
            self.neural.items(), key=lambda kv: (kv[0][0], tuple(_sort_key(t) for t in kv[0][1]))
        ):
            ids = tuple(
                tuple(aid((name, False, (i,) + terms + (v,))) for v in outcomes)
                for i in range(e)
            )
            for row in ids:
                gp.sigma_nn.update(row)
            gp.neural.append(NeuralEntry(name, terms, e, outcomes, ids))

        def resolve_body(pos, neg):
            rpos = []
            for k in pos:
                if not possible(k):
                    return None
                rpos.append(aid(k))
            rneg = []
            for k in neg:
                if possible(k):
                    rneg.append(aid(k))
            return tuple(rpos), tuple(rneg)

        for (hkey, pos, neg) in self.normals:
            r = resolve_body(pos, neg)
            if r is None:
                continue
            gp.normals.append(GNormal(aid(hkey), r[0], r[1]))
        for (elems, lb, ub, pos, neg) in self.choices:
            r = resolve_body(pos, neg)
            if r is None:
                continue
            gp.choices.append(
                GChoice(lb, ub, tuple(aid(e) for e in elems), r[0], r[1])
            )
        for (pos, neg, counts) in self.constraints.values():
            r = resolve_body(pos, neg)
            if r is None:
                continue
            gcounts = []
            drop = False
            for lit, subst, guards, naf in counts:
                elements = []
                for elem in lit.elements:
                    for esub in self.solutions(elem.condition, subst):
                        tkey = tuple(eval_term(t, esub) for t in elem.terms)
                        cr = resolve_body(
                            tuple(
                                self.ground_atom(l.atom, esub)
                                for l in elem.condition
                                if isinstance(l, AtomLit) and not l.naf
                            ),
                            self._ground_naf(elem.condition, esub),
                        )
                        if cr is None:
                            continue
                        elements.append((tkey, cr[0], cr[1]))
                gcounts.append(GCount(tuple(elements), guards, naf))
            if not drop:
                gp.constraints.append(GConstraint(r[0], r[1], tuple(gcounts)))
        for proto in self.weaks.values():
            r = resolve_body(proto.pos, proto.neg)
            if r is None:
                continue
            gp.weaks.append(GWeak(r[0], r[1], proto.weight, proto.level, proto.terms))

        gp.normals.sort(key=lambda r: (r.head, r.pos, r.neg))
        gp.choices.sort(key=lambda r: (r.elems, r.lb, r.ub, r.pos, r.neg))
        gp.constraints.sort(key=lambda r: (r.pos, r.neg, str(r.counts)))
        gp.weaks.sort(key=lambda r: (r.pos, r.neg, r.weight, r.level, r.terms))
        return gp


@dataclass(frozen=True)
class GWeakProto:
    pos: tuple
    neg: tuple
    weight: int
    level: int
    terms: tuple


def ground(program: Program, cap: int = 10**7) -> GroundProgram:
    """Ground a safe Program into a GroundProgram."""
    return _Grounder(program, cap).run()


def ground_observation(obs: Observation, gp: GroundProgram) -> list[GConstraint]:
    """Instantiate observation constraints against a ground program's atoms.

    Variable-free constraints are the common case; variables range over the
    ground program's possible atoms.
    """
    g = _Grounder(Program(()), cap=10**7)
    for key in gp.atoms:
        g.add_possible(key)
    out = []
    for rule in obs.constraints:
        for subst in g.solutions(rule.body, {}):
            pos = []
            skip = False
            for lit in rule.body:
                if isinstance(lit, AtomLit) and not lit.naf:
                    k = g.ground_atom(lit.atom, subst)
                    if k not in gp.index:
                        skip = True  # body can never hold
                        break
                    pos.append(gp.index[k])
            if skip:
                continue
            neg = tuple(
                gp.index[k]
                for k in g._ground_naf(rule.body, subst)
                if k in gp.index
            )
            counts = []
            for lit, csub, guards, naf in g._ground_counts(rule.body, subst):
                elements = []
                for elem in lit.elements:
                    for esub in g.solutions(elem.condition, csub):
                        tkey = tuple(eval_term(t, esub) for t in elem.terms)
                        cpos = []
                        ok = True
                        for l in elem.condition:
                            if isinstance(l, AtomLit) and not l.naf:
                                k = g.ground_atom(l.atom, esub)
                                if k not in gp.index:
                                    ok = False
                                    break
                                cpos.append(gp.index[k])
                        if not ok:
                            continue
                        cneg = tuple(
                            gp.index[k]
                            for k in g._ground_naf(elem.condition, esub)
                            if k in gp.index
                        )
                        elements.append((tkey, tuple(cpos), cneg))
                counts.append(GCount(tuple(elements), guards, naf))
            out.append(GConstraint(tuple(pos), neg, tuple(counts)))
    return out


def sigma_nn_atoms(gp: GroundProgram) -> list[int]:
    """Neural-atom ids ordered by (network, data term, event, outcome)."""
    out = []
    for entry in sorted(
        gp.neural, key=lambda e: (e.name, tuple(_sort_key(t) for t in e.terms))
    ):
        for row in entry.atom_ids:
            out.extend(row)
    return out
