"""Stable-model enumeration over ground programs.

The search works on a clausal compilation of the program's Clark completion:
every rule body gets an auxiliary variable, choice-rule bounds and count
aggregates are compiled to sequential-counter circuits, and a CDCL loop with
watched literals enumerates completion models.  Non-tight programs are handled
lazily: each completion model is checked for unfounded atoms and, when a
nonempty unfounded set is present, its loop clause (no-external-support
rejection) is added and the search restarts.

A brute-force reduct oracle over all interpretations is provided for small
programs; it shares nothing with the clausal path.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

from .ground import (
    GChoice, GConstraint, GCount, GNormal, GroundProgram, GWeak, ResourceError,
)
from .lang import DeepAspError


class SolverError(DeepAspError):
    pass


@dataclass(frozen=True)
class StableModel:
    """An answer set: true atom ids, neural projection, weak-constraint cost."""

    atoms: frozenset
    projection: tuple  # sorted sigma^nn member ids
    cost: tuple  # ((level, total weight), ...) sorted by level descending

    def sort_key(self, n_atoms: int):
        return tuple(i in self.atoms for i in range(n_atoms))


def translate(gp: GroundProgram) -> GroundProgram:
    """Replace each neural-table row by a choose-exactly-one choice rule."""
    if gp.translated:
        return gp
    choices = list(gp.choices)
    for entry in gp.neural:
        for row in entry.atom_ids:
            choices.append(GChoice(1, 1, tuple(row), (), ()))
    return replace(gp, choices=choices, translated=True)


def model_cost(gp: GroundProgram, true_atoms: frozenset) -> tuple:
    """Weak-constraint cost by level (descending), distinct tuples once."""
    fired = set()
    for w in gp.weaks:
        if all(a in true_atoms for a in w.pos) and not any(
            a in true_atoms for a in w.neg
        ):
            fired.add((w.level, w.terms, w.weight))
    totals = {}
    for level, _terms, weight in fired:
        totals[level] = totals.get(level, 0) + weight
    return tuple(sorted(totals.items(), reverse=True))


def cost_leq(a: tuple, b: tuple) -> bool:
    """Lexicographic cost comparison, higher levels first, missing = 0."""
    levels = sorted({l for l, _ in a} | {l for l, _ in b}, reverse=True)
    da, db = dict(a), dict(b)
    for l in levels:
        va, vb = da.get(l, 0), db.get(l, 0)
        if va != vb:
            return va < vb
    return True


# ---------------------------------------------------------------------------
# Clause compilation

class _Compilation:
    """Clausal form of a ground program plus rule metadata for foundedness."""

    def __init__(self, gp: GroundProgram):
        self.gp = gp
        self.n_atoms = len(gp.atoms)
        self.nvars = self.n_atoms + 1  # var ids start at 1; atom a -> a+1
        self.clauses = []  # list of tuples of lits
        self.body_vars = {}  # (pos, neg) -> var
        self.true_var = self.new_var()
        self.clauses.append((self.true_var,))
        # defs[atom] = [(body var, pos atoms)] over rules defining the atom
        self.defs = {}
        # foundedness rules: (kind, head(s), pos, neg)
        self.found_rules = []
        self._build()

    def new_var(self) -> int:
        v = self.nvars
        self.nvars += 1
        return v

    def avar(self, atom: int) -> int:
        return atom + 1

    def body_var(self, pos: tuple, neg: tuple) -> int:
        key = (pos, neg)
        v = self.body_vars.get(key)
        if v is not None:
            return v
        if not pos and not neg:
            self.body_vars[key] = self.true_var
            return self.true_var
        lits = [self.avar(a) for a in pos] + [-self.avar(a) for a in neg]
        if len(lits) == 1:
            self.body_vars[key] = lits[0]
            return lits[0]
        v = self.new_var()
        for l in lits:
            self.clauses.append((-v, l))
        self.clauses.append((v,) + tuple(-l for l in lits))
        self.body_vars[key] = v
        return v

    # -- sequential counters ------------------------------------------------

    def counter(self, lits: list, upto: int) -> list:
        """Return [geq(1), ..., geq(upto)] literals for 'count >= j'.

        Uses +true_var / -true_var for trivially true/false thresholds.
        Full equivalence clauses so both polarities are enforced.
        """
        k = len(lits)
        prev = []  # prev[j-1] = lit for '>= j among first i-1'
        for i, e in enumerate(lits, start=1):
            cur = []
            for j in range(1, min(i, upto) + 1):
                sij = self.new_var()
                s_above = prev[j - 1] if j - 1 < len(prev) else None  # >=j, i-1
                s_diag = prev[j - 2] if j >= 2 else self.true_var  # >=j-1, i-1
                if j - 2 >= len(prev) and j >= 2:
                    s_diag = None  # count >= j-1 impossible among i-1 < j-1
                # s_ij <- s_above
                if s_above is not None:
                    self.clauses.append((-s_above, sij))
                # s_ij <- s_diag & e
                if s_diag is not None:
                    if s_diag == self.true_var:
                        self.clauses.append((-e, sij))
                    else:
                        self.clauses.append((-s_diag, -e, sij))
                # s_ij -> s_above | e
                c = [-sij]
                if s_above is not None:
                    c.append(s_above)
                c.append(e)
                self.clauses.append(tuple(c))
                # s_ij -> s_above | s_diag
                if s_diag != self.true_var:
                    c = [-sij]
                    if s_above is not None:
                        c.append(s_above)
                    if s_diag is not None:
                        c.append(s_diag)
                    self.clauses.append(tuple(c))
                cur.append(sij)
            prev = cur
        out = []
        for j in range(1, upto + 1):
            if j <= len(prev):
                out.append(prev[j - 1])
            else:
                out.append(-self.true_var)
        return out

    def geq_lit(self, geq: list, v: int, k: int) -> int:
        """Literal for 'count >= v' given counter outputs over k elements."""
        if v <= 0:
            return self.true_var
        if v > k:
            return -self.true_var
        return geq[v - 1]

    # -- program compilation --------------------------------------------------

    def _build(self):
        gp = self.gp
        for a in range(self.n_atoms):
            self.defs[a] = []

        for r in gp.normals:
            b = self.body_var(r.pos, r.neg)
            self.clauses.append((-b, self.avar(r.head)))
            self.defs[r.head].append((b, r.pos))
            self.found_rules.append(("normal", r.head, r.pos, r.neg))

        for r in gp.choices:
            b = self.body_var(r.pos, r.neg)
            for e in r.elems:
                self.defs[e].append((b, r.pos))
            self.found_rules.append(("choice", r.elems, r.pos, r.neg))
            k = len(r.elems)
            lb, ub = r.lb, r.ub
            if lb > k:
                self.clauses.append((-b,))
                continue
            if lb <= 0 and ub >= k:
                continue
            elits = [self.avar(e) for e in r.elems]
            geq = self.counter(elits, min(k, max(lb, ub + 1)))
            if lb > 0:
                self.clauses.append((-b, self.geq_lit(geq, lb, k)))
            if ub < k:
                self.clauses.append((-b, -self.geq_lit(geq, ub + 1, k)))

        # completion: an atom is true only if one of its supports holds
        for a in range(self.n_atoms):
            sup = self.defs[a]
            self.clauses.append(
                (-self.avar(a),) + tuple(bv for bv, _ in sup)
            )

        # strong-negation consistency
        for key, aid in gp.index.items():
            name, strong, args = key
            if strong:
                pos = gp.index.get((name, False, args))
                if pos is not None:
                    self.clauses.append((-self.avar(aid), -self.avar(pos)))

        for c in gp.constraints:
            self._constraint_clause(c)

    def count_guard_lits(self, count: GCount) -> list:
        """Literals whose conjunction is the truth of the aggregate."""
        # tuple var = OR of its condition vars (distinct-tuple semantics)
        groups = {}
        for tkey, cpos, cneg in count.elements:
            groups.setdefault(tkey, []).append(self.body_var(cpos, cneg))
        tlits = []
        for _tkey, cvars in sorted(groups.items(), key=lambda kv: str(kv[0])):
            if len(cvars) == 1:
                tlits.append(cvars[0])
            else:
                t = self.new_var()
                for cv in cvars:
                    self.clauses.append((-cv, t))
                self.clauses.append((t,) + tuple(-cv for cv in cvars))
                tlits.append(t)
        k = len(tlits)
        maxv = 0
        for op, v in count.guards:
            maxv = max(maxv, v + 1)
        geq = self.counter(tlits, min(k, maxv)) if k else []
        lits = []
        for op, v in count.guards:
            if op == ">=":
                lits.append(self.geq_lit(geq, v, k))
            elif op == ">":
                lits.append(self.geq_lit(geq, v + 1, k))
            elif op == "<=":
                lits.append(-self.geq_lit(geq, v + 1, k))
            elif op == "<":
                lits.append(-self.geq_lit(geq, v, k))
            elif op == "=":
                lits.append(self.geq_lit(geq, v, k))
                lits.append(-self.geq_lit(geq, v + 1, k))
            elif op == "!=":
                # disjunction (< v) or (> v): needs one auxiliary
                lo = -self.geq_lit(geq, v, k)
                hi = self.geq_lit(geq, v + 1, k)
                g = self.new_var()
                self.clauses.append((-g, lo, hi))
                self.clauses.append((g, -lo))
                self.clauses.append((g, -hi))
                lits.append(g)
            else:
                raise SolverError(f"unknown aggregate guard {op}")
        return lits

    def _constraint_clause(self, c: GConstraint):
        clause = [-self.avar(a) for a in c.pos] + [self.avar(a) for a in c.neg]
        for count in c.counts:
            lits = self.count_guard_lits(count)
            if not count.naf:
                clause.extend(-l for l in lits)
            elif len(lits) == 1:
                clause.append(lits[0])
            else:
                g = self.new_var()
                for l in lits:
                    self.clauses.append((-g, l))
                self.clauses.append((g,) + tuple(-l for l in lits))
                clause.append(g)
        self.clauses.append(tuple(clause))

    def constraint_clauses(self, constraints) -> list:
        """Compile extra (assumption) constraints; returns the new clauses."""
        mark = len(self.clauses)
        for c in constraints:
            self._constraint_clause(c)
        new = self.clauses[mark:]
        del self.clauses[mark:]
        return new


# ---------------------------------------------------------------------------
# CDCL

class _Cdcl:
    def __init__(self, nvars: int, conflict_budget: int):
        self.nvars = nvars
        self.budget = conflict_budget
        self.assign = [0] * (nvars + 1)
        self.level = [0] * (nvars + 1)
        self.reason = [None] * (nvars + 1)
        self.watches = [[] for _ in range(2 * nvars + 2)]
        self.trail = []
        self.trail_lim = []
        self.qhead = 0
        self.units = []
        self.ok = True
        self.conflicts = 0

    def _widx(self, lit: int) -> int:
        return 2 * lit if lit > 0 else -2 * lit + 1

    def add_clause(self, lits) -> bool:
        lits = tuple(dict.fromkeys(lits))
        if any(-l in lits for l in lits):
            return True  # tautology
        if not lits:
            self.ok = False
            return False
        if len(lits) == 1:
            self.units.append(lits[0])
            return True
        clause = list(lits)
        self.watches[self._widx(clause[0])].append(clause)
        self.watches[self._widx(clause[1])].append(clause)
        return True

    def value(self, lit: int) -> int:
        v = self.assign[abs(lit)]
        return v if lit > 0 else -v

    def enqueue(self, lit: int, reason) -> bool:
        val = self.value(lit)
        if val == 1:
            return True
        if val == -1:
            return False
        var = abs(lit)
        self.assign[var] = 1 if lit > 0 else -1
        self.level[var] = len(self.trail_lim)
        self.reason[var] = reason
        self.trail.append(lit)
        return True

    def propagate(self):
        """Unit propagation; returns a conflicting clause or None."""
        assign = self.assign
        watches = self.watches
        trail = self.trail
        while self.qhead < len(trail):
            lit = trail[self.qhead]
            self.qhead += 1
            neg = -lit
            wl = watches[2 * neg if neg > 0 else -2 * neg + 1]
            i = 0
            j = 0
            n = len(wl)
            while i < n:
                clause = wl[i]
                i += 1
                # ensure neg is at position 1
                if clause[0] == neg:
                    clause[0], clause[1] = clause[1], neg
                first = clause[0]
                fval = assign[first] if first > 0 else -assign[-first]
                if fval == 1:
                    wl[j] = clause
                    j += 1
                    continue
                moved = False
                for k in range(2, len(clause)):
                    ck = clause[k]
                    if (assign[ck] if ck > 0 else -assign[-ck]) != -1:
                        clause[1], clause[k] = ck, clause[1]
                        watches[2 * ck if ck > 0 else -2 * ck + 1].append(clause)
                        moved = True
                        break
                if moved:
                    continue
                wl[j] = clause
                j += 1
                if fval == -1:
                    # conflict: keep remaining watches
                    while i < n:
                        wl[j] = wl[i]
                        j += 1
                        i += 1
                    del wl[j:]
                    return clause
                var = first if first > 0 else -first
                assign[var] = 1 if first > 0 else -1
                self.level[var] = len(self.trail_lim)
                self.reason[var] = clause
                trail.append(first)
            del wl[j:]
        return None

    def analyze(self, conflict):
        """1UIP conflict analysis; returns (learned clause, backjump level)."""
        cur_level = len(self.trail_lim)
        seen = set()
        learned = []
        counter = 0
        lits = list(conflict)
        idx = len(self.trail) - 1
        uip = None
        while True:
            for lit in lits:
                var = abs(lit)
                if var in seen or self.level[var] == 0:
                    continue
                seen.add(var)
                if self.level[var] == cur_level:
                    counter += 1
                else:
                    learned.append(lit)
            while abs(self.trail[idx]) not in seen:
                idx -= 1
            uip = self.trail[idx]
            counter -= 1
            if counter == 0:
                break
            reason = self.reason[abs(uip)]
            lits = [l for l in reason if l != uip]
            seen.discard(abs(uip))
            idx -= 1
        learned = [-uip] + learned
        if len(learned) == 1:
            return learned, 0
        bj = max(self.level[abs(l)] for l in learned[1:])
        return learned, bj

    def backjump(self, target_level: int):
        while len(self.trail_lim) > target_level:
            lim = self.trail_lim.pop()
            for lit in self.trail[lim:]:
                var = abs(lit)
                self.assign[var] = 0
                self.reason[var] = None
            del self.trail[lim:]
        self.qhead = len(self.trail)

    def restart(self):
        """Undo all decisions and rescan the trail so new clauses propagate."""
        self.backjump(0)
        self.qhead = 0

    def solve(self, decision_order) -> bool:
        """Search for a model; True iff one is found (assignment complete)."""
        if not self.ok:
            return False
        for u in self.units:
            if not self.enqueue(u, None):
                self.ok = False
                return False
        while True:
            conflict = self.propagate()
            if conflict is not None:
                self.conflicts += 1
                if self.conflicts > self.budget:
                    raise ResourceError(
                        f"conflict budget {self.budget} exceeded"
                    )
                if not self.trail_lim:
                    self.ok = False
                    return False
                learned, bj = self.analyze(conflict)
                self.backjump(bj)
                self.qhead = len(self.trail)
                # re-propagate from scratch is avoided: asserting literal
                if len(learned) > 1:
                    learned = tuple(learned)
                    clause = list(learned)
                    self.watches[self._widx(clause[0])].append(clause)
                    # second watch: highest-level literal kept at index 1
                    best = 1
                    for k in range(2, len(clause)):
                        if self.level[abs(clause[k])] > self.level[abs(clause[best])]:
                            best = k
                    clause[1], clause[best] = clause[best], clause[1]
                    self.watches[self._widx(clause[1])].append(clause)
                    if not self.enqueue(clause[0], clause):
                        self.ok = False
                        return False
                else:
                    if not self.enqueue(learned[0], None):
                        self.ok = False
                        return False
                continue
            # pick a decision
            decision = 0
            for v in decision_order:
                if self.assign[v] == 0:
                    decision = v
                    break
            if decision == 0:
                return True
            self.trail_lim.append(len(self.trail))
            self.enqueue(-decision, None)  # false-first polarity


def _tarjan_sccs(adj: dict) -> list:
    """Strongly connected components (iterative Tarjan) of a small digraph."""
    index = {}
    low = {}
    on_stack = set()
    stack = []
    out = []
    counter = [0]
    for root in adj:
        if root in index:
            continue
        work = [(root, iter(adj[root]))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter[0]
                    counter[0] += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(adj[nxt])))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                scc = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    scc.append(w)
                    if w == node:
                        break
                out.append(scc)
    return out


# ---------------------------------------------------------------------------
# Enumeration driver

class Solver:
    """Reusable compilation of one (translated) ground program."""

    def __init__(self, gp: GroundProgram):
        if gp.neural and not gp.translated:
            gp = translate(gp)
        self.gp = gp
        self.comp = _Compilation(gp)

    def enumerate(
        self,
        max_models: int | None = None,
        assumptions=(),
        opt_mode: str = "auto",
        conflict_budget: int = 10**6,
    ) -> list[StableModel]:
        """All stable models (deterministic order), optionally cost-optimal only.

        opt_mode 'auto' keeps only cost-optimal models when weak constraints
        are present; 'all' returns every stable model; 'optimal' forces the
        filter even without weak constraints.
        """
        comp = self.comp
        gp = self.gp
        extra = comp.constraint_clauses(assumptions) if assumptions else []
        cdcl = _Cdcl(comp.nvars - 1, conflict_budget)
        for cl in itertools.chain(comp.clauses, extra):
            cdcl.add_clause(cl)
        order = list(range(1, comp.nvars))
        models = []
        while cdcl.ok:
            if not cdcl.solve(order):
                break
            true_atoms = frozenset(
                a for a in range(comp.n_atoms) if cdcl.assign[comp.avar(a)] == 1
            )
            unfounded = self._unfounded(true_atoms)
            cdcl.restart()
            if unfounded:
                for clause in self._loop_clauses(unfounded):
                    cdcl.add_clause(clause)
                continue
            projection = tuple(sorted(a for a in true_atoms if a in gp.sigma_nn))
            models.append(
                StableModel(true_atoms, projection, model_cost(gp, true_atoms))
            )
            if max_models is not None and len(models) >= max_models:
                break
            # block this atom assignment
            block = tuple(
                -comp.avar(a) if a in true_atoms else comp.avar(a)
                for a in range(comp.n_atoms)
            )
            cdcl.add_clause(block)
        models.sort(key=lambda m: m.sort_key(comp.n_atoms))
        optimal = opt_mode == "optimal" or (opt_mode == "auto" and gp.weaks)
        if optimal and models:
            best = models[0].cost
            for m in models[1:]:
                if not cost_leq(best, m.cost):
                    best = m.cost
            models = [m for m in models if m.cost == best]
        return models

    def _unfounded(self, true_atoms: frozenset) -> set:
        """True atoms without founded derivation under the model.

        Worklist fixpoint: a rule fires once its entire positive body is
        founded; applicable rules are filtered against the model first.
        """
        pending = []  # remaining unmet positive-body count per applicable rule
        by_atom = {}  # positive body atom -> applicable rule indexes
        heads = []
        founded = set()
        queue = []
        for kind, head, pos, neg in self.comp.found_rules:
            if any(a not in true_atoms for a in pos):
                continue
            if any(a in true_atoms for a in neg):
                continue
            hs = (
                (head,) if kind == "normal"
                else tuple(e for e in head if e in true_atoms)
            )
            if kind == "normal" and head not in true_atoms:
                continue
            pos = tuple(dict.fromkeys(pos))
            idx = len(pending)
            pending.append(len(pos))
            heads.append(hs)
            for a in pos:
                by_atom.setdefault(a, []).append(idx)
            if not pos:
                queue.extend(hs)
        while queue:
            a = queue.pop()
            if a in founded:
                continue
            founded.add(a)
            for idx in by_atom.get(a, ()):
                pending[idx] -= 1
                if pending[idx] == 0:
                    queue.extend(h for h in heads[idx] if h not in founded)
        return set(true_atoms) - founded

    def _loop_clauses(self, unfounded) -> list:
        """No-external-support clauses for the bottom strongly connected
        components of the unfounded set's positive dependency graph.

        Every returned clause is violated by the current candidate model, so
        the search makes progress after adding them.
        """
        comp = self.comp
        u = set(unfounded)
        adj = {}
        for a in u:
            deps = set()
            for _bv, pos in comp.defs[a]:
                deps.update(p for p in pos if p in u and p != a)
            adj[a] = deps
        sccs = _tarjan_sccs(adj)
        comp_id = {}
        for i, s in enumerate(sccs):
            for a in s:
                comp_id[a] = i
        clauses = []
        for i, s in enumerate(sccs):
            if any(comp_id[b] != i for a in s for b in adj[a]):
                continue  # depends on another unfounded component
            sset = set(s)
            clause = [-comp.avar(a) for a in s]
            for a in s:
                for bv, pos in comp.defs[a]:
                    if not any(p in sset for p in pos):
                        clause.append(bv)
            clauses.append(tuple(dict.fromkeys(clause)))
        return clauses

    def has_model(self, assumptions=(), conflict_budget: int = 10**6) -> bool:
        return bool(
            self.enumerate(
                max_models=1, assumptions=assumptions,
                conflict_budget=conflict_budget,
            )
        )


def enumerate_stable_models(
    gp: GroundProgram,
    max_models: int | None = None,
    assumptions=(),
    opt_mode: str = "auto",
    conflict_budget: int = 10**6,
) -> list[StableModel]:
    return Solver(gp).enumerate(
        max_models=max_models,
        assumptions=assumptions,
        opt_mode=opt_mode,
        conflict_budget=conflict_budget,
    )


def count_models_per_choice(models) -> dict:
    """Group stable models by their neural projection: projection -> count."""
    out = {}
    for m in models:
        out[m.projection] = out.get(m.projection, 0) + 1
    return out


# ---------------------------------------------------------------------------
# Independent brute-force oracle (reduct definition)

def _count_holds(count: GCount, interp: set) -> bool:
    satisfied = set()
    for tkey, cpos, cneg in count.elements:
        if all(a in interp for a in cpos) and not any(a in interp for a in cneg):
            satisfied.add(tkey)
    n = len(satisfied)
    holds = all(
        {
            ">=": n >= v, ">": n > v, "<=": n <= v,
            "<": n < v, "=": n == v, "!=": n != v,
        }[op]
        for op, v in count.guards
    )
    return holds != count.naf


def body_satisfied(c: GConstraint, interp) -> bool:
    """True iff the constraint's body holds in the interpretation."""
    return (
        all(a in interp for a in c.pos)
        and not any(a in interp for a in c.neg)
        and all(_count_holds(k, interp) for k in c.counts)
    )


def satisfies_observation(atoms, constraints) -> bool:
    """A model satisfies an observation iff no constraint body holds."""
    return not any(body_satisfied(c, atoms) for c in constraints)


def check_stable_bruteforce(interp: set, gp: GroundProgram) -> bool:
    """True iff interp is a stable model, via the reduct definition."""
    interp = set(interp)
    # strong-negation consistency
    for key, aid in gp.index.items():
        name, strong, args = key
        if strong and aid in interp:
            other = gp.index.get((name, False, args))
            if other is not None and other in interp:
                return False
    # classical satisfaction
    for r in gp.normals:
        if (
            all(a in interp for a in r.pos)
            and not any(a in interp for a in r.neg)
            and r.head not in interp
        ):
            return False
    for r in gp.choices:
        if all(a in interp for a in r.pos) and not any(a in interp for a in r.neg):
            n = sum(1 for e in r.elems if e in interp)
            if not (r.lb <= n <= r.ub):
                return False
    for c in gp.constraints:
        if body_satisfied(c, interp):
            return False
    # reduct least model
    rules = []
    for r in gp.normals:
        if not any(a in interp for a in r.neg):
            rules.append((r.head, r.pos))
    for r in gp.choices:
        if not any(a in interp for a in r.neg):
            for e in r.elems:
                if e in interp:
                    rules.append((e, r.pos))
    lm = set()
    changed = True
    while changed:
        changed = False
        for head, pos in rules:
            if head not in lm and all(a in lm for a in pos):
                lm.add(head)
                changed = True
    return lm == interp


def enumerate_bruteforce(gp: GroundProgram) -> list[frozenset]:
    """All stable models of a small ground program by exhaustive search."""
    n = len(gp.atoms)
    if n > 22:
        raise SolverError("brute-force enumeration is limited to 22 atoms")
    out = []
    for bits in range(1 << n):
        interp = {a for a in range(n) if bits >> a & 1}
        if check_stable_bruteforce(interp, gp):
            out.append(frozenset(interp))
    return out
