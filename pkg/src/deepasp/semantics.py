"""Probabilistic semantics over stable models.

A neural table row assigns a distribution over its outcome atoms.  The
probability of a stable model is the product of the probabilities of its
selected outcome atoms divided by the number of stable models sharing that
total choice; observation probabilities sum model probabilities over the
models that satisfy the observation's constraints.

This module also provides the translation to a multi-valued probabilistic
program (MVPP) form, which is evaluated through an independent textual
round-trip and used to cross-check the direct computation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .ground import (
    GConstraint, GroundProgram, ResourceError, ground, ground_observation,
)
from .lang import DeepAspError, Observation, Program, parse_program
from .solve import Solver, count_models_per_choice, satisfies_observation

PROB_FLOOR = 1e-6
ROW_TOL = 1e-9


class SemanticsError(DeepAspError):
    pass


class ProbabilityAssignment:
    """Maps each neural outcome atom to its probability.

    Holds one row-stochastic matrix of shape (events, outcomes) per
    (network name, instance term) pair.
    """

    def __init__(self, matrices: dict):
        self.matrices = {}
        for key, m in matrices.items():
            m = np.asarray(m, dtype=np.float64)
            if m.ndim != 2:
                raise SemanticsError(f"matrix for {key} must be 2-d")
            sums = m.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > ROW_TOL):
                raise SemanticsError(
                    f"rows of matrix for {key} must sum to 1 (tolerance {ROW_TOL})"
                )
            if np.any(m < 0) or np.any(m > 1):
                raise SemanticsError(f"matrix for {key} has entries outside [0,1]")
            self.matrices[key] = m

    def matrix(self, name: str, terms: tuple) -> np.ndarray:
        key = (name, terms)
        if key not in self.matrices:
            raise SemanticsError(f"no probability matrix for {key}")
        return self.matrices[key]


def atom_positions(gp: GroundProgram) -> dict:
    """Map each neural outcome atom id to (network, terms, event, outcome)."""
    out = {}
    for entry in gp.neural:
        for i, row in enumerate(entry.atom_ids):
            for j, aid in enumerate(row):
                out[aid] = (entry.name, entry.terms, i, j)
    return out


def atom_probability(
    assign: ProbabilityAssignment, gp: GroundProgram, atom: int,
    floor: float = PROB_FLOOR,
) -> float:
    """Probability of one neural outcome atom, clamped below at floor."""
    pos = atom_positions(gp).get(atom)
    if pos is None:
        raise SemanticsError(f"atom {gp.atom_str(atom)} is not a neural outcome")
    name, terms, i, j = pos
    return max(float(assign.matrix(name, terms)[i, j]), floor)


def _projection_probability(
    projection: tuple, positions: dict, assign: ProbabilityAssignment,
) -> float:
    probs = []
    for aid in projection:
        name, terms, i, j = positions[aid]
        probs.append(float(assign.matrix(name, terms)[i, j]))
    if len(probs) > 32:
        if any(p == 0.0 for p in probs):
            return 0.0
        return math.exp(sum(math.log(p) for p in probs))
    out = 1.0
    for p in probs:
        out *= p
    return out


def model_probability(model, assign, gp: GroundProgram, num_per_choice: dict) -> float:
    """P(I): product over the model's neural projection divided by Num."""
    if model.projection not in num_per_choice:
        raise SemanticsError("model's total choice missing from the count map")
    positions = atom_positions(gp)
    return _projection_probability(model.projection, positions, assign) / (
        num_per_choice[model.projection]
    )


def _obs_constraints(obs, gp: GroundProgram):
    if isinstance(obs, Observation):
        return ground_observation(obs, gp)
    return list(obs)


def observation_probability(obs, models, assign, gp, num_per_choice) -> float:
    """P(O): sum of model probabilities over models satisfying obs."""
    constraints = _obs_constraints(obs, gp)
    positions = atom_positions(gp)
    total = 0.0
    for m in models:
        if satisfies_observation(m.atoms, constraints):
            total += _projection_probability(m.projection, positions, assign) / (
                num_per_choice[m.projection]
            )
    return total


def observations_probability(obs_list, models, assign, gp, num_per_choice) -> float:
    out = 1.0
    for obs in obs_list:
        out *= observation_probability(obs, models, assign, gp, num_per_choice)
    return out


# ---------------------------------------------------------------------------
# Coherence

@dataclass(frozen=True)
class CoherenceReport:
    coherent: bool
    checked: int
    witness: tuple | None  # an atom-text tuple for a choice with no model


def _fix_choice_constraints(row_atoms, picks) -> list:
    """Constraints forcing one outcome atom per row (:- not atom)."""
    return [GConstraint((), (row[j],), ()) for row, j in zip(row_atoms, picks)]


def check_coherence(
    gp: GroundProgram,
    mode: str = "exhaustive",
    samples: int = 1000,
    seed: int = 0,
    assign: ProbabilityAssignment | None = None,
    guard: int = 10**6,
) -> CoherenceReport:
    """Verify that every total choice admits at least one stable model.

    Exhaustive mode iterates all total choices (guarded); sampled mode draws
    total choices at random, per the assignment's distributions when given,
    uniformly otherwise.
    """
    solver = Solver(gp)
    gp = solver.gp
    rows = []
    for entry in gp.neural:
        for row in entry.atom_ids:
            rows.append(tuple(row))
    if not rows:
        ok = solver.has_model()
        return CoherenceReport(ok, 1, None if ok else ())

    def report(picks):
        witness = tuple(
            gp.atom_str(row[j]) for row, j in zip(rows, picks)
        )
        return witness

    if mode == "exhaustive":
        total = 1
        for row in rows:
            total *= len(row)
            if total > guard:
                raise ResourceError(
                    f"exhaustive coherence check exceeds guard of {guard} choices"
                )
        checked = 0
        for picks in itertools.product(*(range(len(r)) for r in rows)):
            checked += 1
            if not solver.has_model(_fix_choice_constraints(rows, picks)):
                return CoherenceReport(False, checked, report(picks))
        return CoherenceReport(True, checked, None)
    if mode == "sampled":
        rng = np.random.default_rng(seed)
        positions = atom_positions(gp)
        for k in range(samples):
            picks = []
            for row in rows:
                if assign is None:
                    picks.append(int(rng.integers(len(row))))
                else:
                    name, terms, i, _ = positions[row[0]]
                    p = assign.matrix(name, terms)[i]
                    picks.append(int(rng.choice(len(row), p=p)))
            if not solver.has_model(_fix_choice_constraints(rows, picks)):
                return CoherenceReport(False, k + 1, report(picks))
        return CoherenceReport(True, samples, None)
    raise SemanticsError(f"unknown coherence mode {mode!r}")


# ---------------------------------------------------------------------------
# MVPP translation

@dataclass(frozen=True)
class MvppProgram:
    """Probabilistic outcome rules plus plain rules, both in surface syntax."""

    prob_rules: tuple  # tuple of ((probability, atom text), ...) per rule
    rules_text: str

    def __str__(self):
        lines = []
        for rule in self.prob_rules:
            lines.append(
                "; ".join(f"{p:.12g}::{atom}" for p, atom in rule) + "."
            )
        if self.rules_text:
            lines.append(self.rules_text)
        return "\n".join(lines)


def to_mvpp(program, assign: ProbabilityAssignment) -> MvppProgram:
    """Translate neural rows into probabilistic outcome rules."""
    gp = ground(program) if isinstance(program, Program) else program
    prob_rules = []
    for entry in gp.neural:
        m = assign.matrix(entry.name, entry.terms)
        for i, row in enumerate(entry.atom_ids):
            prob_rules.append(
                tuple((float(m[i, j]), gp.atom_str(a)) for j, a in enumerate(row))
            )
    rules_text = gp.dump(include_neural=False)
    return MvppProgram(tuple(prob_rules), rules_text)


def mvpp_models(mvpp: MvppProgram):
    """Stable models and probabilities of an MVPP program.

    Evaluated through a textual round-trip: each probabilistic rule becomes a
    choose-exactly-one choice rule, the result is re-parsed, grounded, and
    solved, and probabilities are recomputed from the rule annotations alone.
    Returns a list of (frozenset of atom texts, probability).
    """
    lines = []
    prob_by_atom = {}
    prob_atoms = set()
    for rule in mvpp.prob_rules:
        atoms = [atom for _p, atom in rule]
        for p, atom in rule:
            prob_by_atom[atom] = p
            prob_atoms.add(atom)
        lines.append("1{" + "; ".join(atoms) + "}1.")
    if mvpp.rules_text:
        lines.append(mvpp.rules_text)
    gp = ground(parse_program("\n".join(lines)))
    models = Solver(gp).enumerate()
    results = []
    groups = {}
    for m in models:
        texts = frozenset(gp.atom_str(a) for a in m.atoms)
        selection = frozenset(texts & prob_atoms)
        groups[selection] = groups.get(selection, 0) + 1
        results.append((texts, selection))
    out = []
    for texts, selection in results:
        prob = 1.0
        for atom in sorted(selection):
            prob *= prob_by_atom[atom]
        out.append((texts, prob / groups[selection]))
    return out


# ---------------------------------------------------------------------------
# MAP inference

def map_inference(gp: GroundProgram, assign, obs=(), models=None):
    """Most probable stable model satisfying the observation.

    Ties are broken by enumeration order. Returns (model, probability).
    """
    solver = Solver(gp)
    gp = solver.gp
    if models is None:
        models = solver.enumerate()
    if not models:
        raise SemanticsError("program has no stable model")
    npc = count_models_per_choice(models)
    constraints = _obs_constraints(obs, gp)
    positions = atom_positions(gp)
    best = None
    best_p = -1.0
    for m in models:
        if not satisfies_observation(m.atoms, constraints):
            continue
        p = _projection_probability(m.projection, positions, assign) / (
            npc[m.projection]
        )
        if p > best_p:
            best, best_p = m, p
    if best is None:
        raise SemanticsError("no stable model satisfies the observation")
    return best, best_p
