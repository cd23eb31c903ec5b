"""Probability semantics: model/observation probabilities, coherence, MVPP."""

import itertools
import random

import numpy as np
import pytest

from deepasp.lang import parse_observation, parse_program
from deepasp.ground import ground
from deepasp.semantics import (
    ProbabilityAssignment, SemanticsError, atom_positions, atom_probability,
    check_coherence, map_inference, mvpp_models, model_probability,
    observation_probability, observations_probability, to_mvpp,
)
from deepasp.solve import Solver, count_models_per_choice

from conftest import (
    ground_text, random_assignment, random_coherent_neural_text,
)

COIN = "nn(coin(1,c),[heads,tails]). win :- coin(0,c,heads)."
COIN_ASSIGN = {("coin", ("c",)): np.array([[0.1, 0.9]])}

DIGIT = (
    "img(d1). img(d2). nn(digit(1,X),[0,1,2,3,4,5,6,7,8,9]) :- img(X). "
    "addition(A,B,N) :- digit(0,A,N1), digit(0,B,N2), N=N1+N2."
)


def solve_all(text):
    gp = ground_text(text)
    models = Solver(gp).enumerate()
    return gp, models, count_models_per_choice(models)


class TestAssignmentValidation:
    def test_rows_must_sum_to_one(self):
        with pytest.raises(SemanticsError):
            ProbabilityAssignment({("m", ("t",)): np.array([[0.5, 0.6]])})

    def test_negative_rejected(self):
        with pytest.raises(SemanticsError):
            ProbabilityAssignment({("m", ("t",)): np.array([[-0.1, 1.1]])})


class TestCoinProbabilities:
    def test_model_probabilities(self):
        gp, models, npc = solve_all(COIN)
        assign = ProbabilityAssignment(COIN_ASSIGN)
        by_text = {
            frozenset(gp.atom_str(a) for a in m.atoms):
                model_probability(m, assign, gp, npc)
            for m in models
        }
        assert by_text[frozenset({"coin(0,c,heads)", "win"})] == pytest.approx(
            0.1, abs=1e-12
        )
        assert by_text[frozenset({"coin(0,c,tails)"})] == pytest.approx(
            0.9, abs=1e-12
        )

    def test_observation_probability(self):
        gp, models, npc = solve_all(COIN)
        assign = ProbabilityAssignment(COIN_ASSIGN)
        obs = parse_observation(":- win.")
        assert observation_probability(obs, models, assign, gp, npc) == (
            pytest.approx(0.9, abs=1e-12)
        )

    def test_independent_observations_multiply(self):
        gp, models, npc = solve_all(COIN)
        assign = ProbabilityAssignment(COIN_ASSIGN)
        obs = parse_observation(":- win.")
        p2 = observations_probability([obs, obs], models, assign, gp, npc)
        assert p2 == pytest.approx(0.81, abs=1e-12)


class TestDigitProgram:
    def test_hundred_models_uniform(self):
        gp, models, npc = solve_all(DIGIT)
        assert len(models) == 100
        u = np.full((1, 10), 0.1)
        assign = ProbabilityAssignment(
            {("digit", ("d1",)): u, ("digit", ("d2",)): u}
        )
        for m in models:
            assert model_probability(m, assign, gp, npc) == pytest.approx(
                0.01, abs=1e-12
            )

    def test_sum_one_probability(self):
        gp, models, npc = solve_all(DIGIT)
        u = np.full((1, 10), 0.1)
        assign = ProbabilityAssignment(
            {("digit", ("d1",)): u, ("digit", ("d2",)): u}
        )
        obs = parse_observation(":- not addition(d1,d2,1).")
        assert observation_probability(obs, models, assign, gp, npc) == (
            pytest.approx(0.02, abs=1e-12)
        )

    def test_brute_force_over_total_choices(self):
        # independent oracle: iterate all 100 digit pairs directly
        gp, models, npc = solve_all(DIGIT)
        u = np.full((1, 10), 0.1)
        assign = ProbabilityAssignment(
            {("digit", ("d1",)): u, ("digit", ("d2",)): u}
        )
        for target in (0, 1, 9, 18):
            want = sum(
                0.01
                for a, b in itertools.product(range(10), repeat=2)
                if a + b == target
            )
            obs = parse_observation(f":- not addition(d1,d2,{target}).")
            got = observation_probability(obs, models, assign, gp, npc)
            assert got == pytest.approx(want, abs=1e-12)


class TestNormalization:
    @pytest.mark.parametrize("seed", range(20))
    def test_random_coherent_programs(self, seed):
        rng = random.Random(seed)
        gp = ground_text(random_coherent_neural_text(rng))
        models = Solver(gp).enumerate()
        npc = count_models_per_choice(models)
        assign = random_assignment(gp, rng)
        total = sum(model_probability(m, assign, gp, npc) for m in models)
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_num_divisor(self):
        # two models share one total choice; each gets half its mass
        gp, models, npc = solve_all(
            "nn(m(1,t),[0,1]). {p} :- m(0,t,0)."
        )
        assign = ProbabilityAssignment({("m", ("t",)): np.array([[0.4, 0.6]])})
        ps = sorted(model_probability(m, assign, gp, npc) for m in models)
        assert ps == pytest.approx([0.2, 0.2, 0.6], abs=1e-12)


class TestCoherence:
    def test_coherent_exhaustive(self):
        gp = ground_text(COIN)
        report = check_coherence(gp)
        assert report.coherent and report.checked == 2

    def test_incoherent_witness(self):
        gp = ground_text("nn(m(1,t),[0,1]). :- m(0,t,0).")
        report = check_coherence(gp)
        assert not report.coherent
        assert report.witness is not None

    def test_sampled_mode(self):
        gp = ground_text(COIN)
        assign = ProbabilityAssignment(COIN_ASSIGN)
        report = check_coherence(gp, mode="sampled", samples=50, assign=assign)
        assert report.coherent


class TestMvpp:
    def test_coin_agreement(self):
        gp, models, npc = solve_all(COIN)
        assign = ProbabilityAssignment(COIN_ASSIGN)
        mvpp = to_mvpp(parse_program(COIN), assign)
        got = {
            frozenset(atoms): p for atoms, p in mvpp_models(mvpp)
        }
        want = {
            frozenset(gp.atom_str(a) for a in m.atoms):
                model_probability(m, assign, gp, npc)
            for m in models
        }
        assert set(got) == set(want)
        for k in want:
            assert got[k] == pytest.approx(want[k], abs=1e-12)

    def test_probabilities_printed(self):
        assign = ProbabilityAssignment(COIN_ASSIGN)
        mvpp = to_mvpp(parse_program(COIN), assign)
        text = str(mvpp)
        assert "0.1" in text and "0.9" in text


class TestMapInference:
    def test_coin_map(self):
        gp = ground_text(COIN)
        assign = ProbabilityAssignment(COIN_ASSIGN)
        model, p = map_inference(gp, assign)
        assert p == pytest.approx(0.9, abs=1e-12)
        assert "coin(0,c,tails)" in {gp.atom_str(a) for a in model.atoms}

    def test_map_under_observation(self):
        gp = ground_text(COIN)
        assign = ProbabilityAssignment(COIN_ASSIGN)
        obs = parse_observation(":- not win.")
        model, p = map_inference(gp, assign, obs)
        assert p == pytest.approx(0.1, abs=1e-12)

    def test_no_model_raises(self):
        gp = ground_text("p. :- p.")
        with pytest.raises(SemanticsError):
            map_inference(gp, ProbabilityAssignment({}))


def test_atom_probability_positions():
    gp = ground_text(COIN)
    assign = ProbabilityAssignment(COIN_ASSIGN)
    assert atom_positions(gp)
    heads = gp.index[("coin", False, (0, "c", "heads"))]
    assert atom_probability(assign, gp, heads) == pytest.approx(0.1)
