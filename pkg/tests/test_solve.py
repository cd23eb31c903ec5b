"""Solver tests: oracle equivalence, aggregates, weak constraints, budgets."""

import random

import pytest

from deepasp.ground import GConstraint, ResourceError
from deepasp.solve import (
    Solver, check_stable_bruteforce, count_models_per_choice,
    enumerate_bruteforce, model_cost, satisfies_observation, translate,
)

from conftest import ground_text, random_ground_program_text


def models_of(text: str, **kw):
    gp = ground_text(text)
    return [
        sorted(gp.atom_str(a) for a in m.atoms)
        for m in Solver(gp).enumerate(**kw)
    ], gp


class TestBasics:
    def test_facts(self):
        ms, _ = models_of("p. q :- p.")
        assert ms == [["p", "q"]]

    def test_negation(self):
        ms, _ = models_of("p :- not q. q :- not p.")
        assert sorted(ms) == [["p"], ["q"]]

    def test_unsat(self):
        ms, _ = models_of("p. :- p.")
        assert ms == []

    def test_choice_bounds(self):
        ms, _ = models_of("1{p;q;r}2.")
        assert all(1 <= len(m) <= 2 for m in ms)
        assert len(ms) == 6

    def test_positive_loop_unfounded(self):
        # p and q support each other but have no external support
        ms, _ = models_of("p :- q. q :- p.")
        assert ms == [[]]

    def test_loop_with_external_support(self):
        ms, _ = models_of("p :- q. q :- p. q :- not r. r :- not q.")
        assert sorted(ms) == [["p", "q"], ["r"]]

    def test_strong_negation_conflict(self):
        ms, _ = models_of("p. ~p.")
        assert ms == []

    def test_deterministic_order(self):
        a, _ = models_of("{p;q;r}.")
        b, _ = models_of("{p;q;r}.")
        assert a == b


class TestAggregates:
    def test_count_lower_guard(self):
        ms, _ = models_of("{p(1..3)}. :- #count{X: p(X)} >= 2.")
        assert all(len(m) <= 1 for m in ms)
        assert len(ms) == 4

    def test_count_eq(self):
        ms, _ = models_of("{p(1..3)}. :- not #count{X: p(X)} = 2.")
        assert all(len(m) == 2 for m in ms)
        assert len(ms) == 3

    def test_cardinality_form(self):
        ms, _ = models_of("{p(1..4)}. :- 3{p(X): p(X)}4.")
        assert all(len(m) <= 2 for m in ms)


class TestWeakConstraints:
    def test_optimal_only_by_default(self):
        ms, _ = models_of("1{p;q}1. :~ p. [1@1]")
        assert ms == [["q"]]

    def test_all_mode(self):
        ms, _ = models_of("1{p;q}1. :~ p. [1@1]", opt_mode="all")
        assert len(ms) == 2

    def test_level_priority(self):
        # level 2 dominates any level-1 cost
        ms, _ = models_of("1{p;q}1. :~ p. [1@2] :~ q. [5@1]")
        assert ms == [["q"]]

    def test_distinct_terms_counted_once(self):
        gp = ground_text("p. :~ p. [1@1,a] :~ p. [1@1,a] :~ p. [1@1,b]")
        m = Solver(gp).enumerate()[0]
        assert dict(model_cost(gp, m.atoms))[1] == 2


class TestAssumptionsAndBudget:
    def test_assumptions_force_atom(self):
        gp = ground_text("{p;q}.")
        pid = gp.index[("p", False, ())]
        ms = Solver(gp).enumerate(assumptions=[GConstraint((), (pid,), ())])
        assert all(pid in m.atoms for m in ms)

    def test_max_models(self):
        gp = ground_text("{p(1..10)}.")
        assert len(Solver(gp).enumerate(max_models=5)) == 5

    def test_conflict_budget_exhausted(self):
        text = " ".join(f"{{p({i});q({i})}}1." for i in range(12)) + " " + " ".join(
            f":- p({i}), q({i})." for i in range(12)
        )
        gp = ground_text(text)
        with pytest.raises(ResourceError):
            Solver(gp).enumerate(conflict_budget=3)


class TestNeuralTranslation:
    def test_rows_become_exactly_one_choices(self):
        gp = translate(ground_text("nn(m(2,t),[0,1,2])."))
        assert len(gp.choices) == 2
        assert all(c.lb == 1 and c.ub == 1 for c in gp.choices)

    def test_one_outcome_per_row_in_every_model(self):
        gp = ground_text("nn(m(2,t),[0,1,2]). p :- m(0,t,0).")
        models = Solver(gp).enumerate()
        assert len(models) == 9
        for m in models:
            assert len(m.projection) == 2

    def test_count_models_per_choice(self):
        gp = ground_text("nn(m(1,t),[0,1]). {p;q} :- m(0,t,0).")
        npc = count_models_per_choice(Solver(gp).enumerate())
        assert sorted(npc.values()) == [1, 4]


class TestOracleEquivalence:
    def test_500_random_programs_match_bruteforce(self):
        rng = random.Random(977)
        mismatches = 0
        for _ in range(500):
            text = random_ground_program_text(rng)
            gp = ground_text(text)
            if len(gp.atoms) > 16:
                continue
            got = sorted(
                tuple(sorted(m.atoms)) for m in Solver(gp).enumerate(opt_mode="all")
            )
            want = sorted(tuple(sorted(m)) for m in enumerate_bruteforce(gp))
            assert got == want, text
        assert mismatches == 0

    def test_every_enumerated_model_is_stable(self, rng):
        for _ in range(50):
            gp = ground_text(random_ground_program_text(rng))
            for m in Solver(gp).enumerate(opt_mode="all"):
                assert check_stable_bruteforce(set(m.atoms), gp)


def test_satisfies_observation_empty():
    assert satisfies_observation(frozenset(), [])
