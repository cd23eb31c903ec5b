"""Shared helpers: random program generation and probability oracles."""

from __future__ import annotations

import random

import numpy as np
import pytest

from deepasp.ground import ground
from deepasp.lang import parse_program
from deepasp.semantics import ProbabilityAssignment


def random_ground_program_text(rng: random.Random, natoms: int = 8,
                               nrules: int = 14) -> str:
    """A random propositional program mixing facts, rules, choices, and
    constraints; includes positive cycles so non-tight cases are covered."""
    atoms = [f"a{i}" for i in range(rng.randint(3, natoms))]
    lines = []
    for _ in range(rng.randint(2, nrules)):
        body = []
        for b in rng.sample(atoms, k=rng.randint(0, min(3, len(atoms)))):
            body.append(b if rng.random() < 0.6 else f"not {b}")
        roll = rng.random()
        if roll < 0.5:
            head = rng.choice(atoms)
            if body:
                lines.append(f"{head} :- {', '.join(body)}.")
            else:
                lines.append(f"{head}.")
        elif roll < 0.75:
            elems = rng.sample(atoms, k=rng.randint(1, min(3, len(atoms))))
            lb = rng.randint(0, 1)
            ub = rng.randint(lb, len(elems))
            rule = f"{lb}{{{';'.join(elems)}}}{ub}"
            if body:
                rule += f" :- {', '.join(body)}"
            lines.append(rule + ".")
        elif body:
            lines.append(f":- {', '.join(body)}.")
    return "\n".join(lines)


def random_coherent_neural_text(rng: random.Random) -> str:
    """A small neural program where every total choice has >= 1 model."""
    n_out = rng.randint(2, 3)
    outs = ",".join(str(v) for v in range(n_out))
    events = rng.randint(1, 2)
    lines = [f"nn(m({events},t),[{outs}])."]
    # deterministic part keyed on the first event's value
    for v in range(n_out):
        if rng.random() < 0.7:
            lines.append(f"q({v}) :- m(0,t,{v}).")
    if rng.random() < 0.5:
        lines.append("r :- q(0), not q(1).")
    if rng.random() < 0.4 and events == 2:
        lines.append("s :- m(0,t,0), m(1,t,0).")
    return "\n".join(lines)


def random_assignment(gp, rng: random.Random) -> ProbabilityAssignment:
    matrices = {}
    for entry in gp.neural:
        m = np.array([
            [rng.uniform(0.05, 1.0) for _ in entry.outcomes]
            for _ in range(entry.events)
        ])
        m /= m.sum(axis=1, keepdims=True)
        matrices[(entry.name, entry.terms)] = m
    return ProbabilityAssignment(matrices)


def ground_text(text: str):
    return ground(parse_program(text))


@pytest.fixture
def rng():
    return random.Random(20240817)
