"""Gradient computation and training loops.

The semantic gradient of log P(O) with respect to one outcome probability p
of atom c=v is

    [ sum_{I |= O, c=v in I} P(I)/p
      - sum_{I |= O, c=v' in I, v' != v} P(I)/P(c=v') ] / sum_{I |= O} P(I)

with a small floor applied to probabilities entering denominators.  The
gradient flows into network parameters through the chain rule; training
ascends log-likelihood one observation at a time, exactly or from sampled
stable models.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .ground import GConstraint, GroundProgram, fmt_val, ground
from .lang import DeepAspError, Observation, Program
from .semantics import (
    PROB_FLOOR, ProbabilityAssignment, atom_positions, _obs_constraints,
    _projection_probability,
)
from .solve import Solver, count_models_per_choice, satisfies_observation

log = logging.getLogger(__name__)


class LearnError(DeepAspError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.1
    epochs: int = 1
    num_of_samples: int = 50
    seed: int = 0
    opt_mode: str = "auto"
    grad_convention: str = "softmax-jacobian"
    optimizer: str = "sgd"  # or "adam"
    batch: bool = False  # aggregate gradients over all observations per epoch

    def __post_init__(self):
        if self.lr <= 0:
            raise LearnError("learning rate must be positive")
        if self.epochs < 0:
            raise LearnError("epochs must be >= 0")
        if self.num_of_samples < 1:
            raise LearnError("num_of_samples must be >= 1")


def instance_key(terms: tuple) -> str:
    """Binding key for a network instance term tuple."""
    return ",".join(fmt_val(t) for t in terms)


def semantic_gradient(models, assign, gp: GroundProgram, num_per_choice,
                      floor: float = PROB_FLOOR) -> dict:
    """d log P(O) / dp per neural outcome atom, from the satisfying models.

    With a single model the per-atom value reduces to 1/p for atoms in the
    model and -1/P(c=v') for atoms whose sibling v' was selected instead.
    """
    if not models:
        raise LearnError("semantic gradient needs at least one model")
    positions = atom_positions(gp)

    def prob(aid):
        name, terms, i, j = positions[aid]
        return float(assign.matrix(name, terms)[i, j])

    # row lookup: atom -> tuple of sibling atoms in the same table row
    rows = {}
    for entry in gp.neural:
        for row in entry.atom_ids:
            for aid in row:
                rows[aid] = row

    if len(models) == 1:
        chosen = set(models[0].projection)
        out = {}
        for aid in rows:
            if aid in chosen:
                out[aid] = 1.0 / max(prob(aid), floor)
            else:
                sibling = next(a for a in rows[aid] if a in chosen)
                out[aid] = -1.0 / max(prob(sibling), floor)
        return out

    weights = [
        _projection_probability(m.projection, positions, assign)
        / num_per_choice[m.projection]
        for m in models
    ]
    total = sum(weights)
    if total <= 0:
        raise LearnError("observation has zero probability")
    out = {}
    for aid in rows:
        acc = 0.0
        for m, w in zip(models, weights):
            if aid in m.atoms:
                acc += w / max(prob(aid), floor)
            else:
                sibling = next(a for a in rows[aid] if a in m.atoms)
                acc -= w / max(prob(sibling), floor)
        out[aid] = acc / total
    return out


def chain_gradient(sem_grad: dict, gp: GroundProgram, networks: dict,
                   convention: str = "softmax-jacobian") -> dict:
    """Backpropagate a semantic gradient into every trainable network.

    Re-runs the forward pass per instance term so each backward call has a
    fresh tape; gradients for a network shared across instances are summed.
    Returns {network name: {parameter name: gradient array}}.
    """
    out = {}
    for entry in gp.neural:
        bundle = networks[entry.name]
        if not bundle.net.trainable:
            continue
        upstream = np.zeros((entry.events, len(entry.outcomes)))
        for i, row in enumerate(entry.atom_ids):
            for j, aid in enumerate(row):
                upstream[i, j] = sem_grad.get(aid, 0.0)
        bundle.net.forward(bundle.input_for(instance_key(entry.terms)))
        grads = bundle.net.backward(upstream, convention)
        acc = out.setdefault(entry.name, {})
        for name, g in grads.items():
            if name in acc:
                acc[name] = acc[name] + g
            else:
                acc[name] = g
    return out


def forward_assignment(gp: GroundProgram, networks: dict) -> ProbabilityAssignment:
    """Run every network instance forward; collect the probability matrices."""
    matrices = {}
    for entry in gp.neural:
        bundle = networks[entry.name]
        key = instance_key(entry.terms)
        if bundle.net.trainable:
            matrices[(entry.name, entry.terms)] = bundle.net.forward(
                bundle.input_for(key)
            )
        else:
            matrices[(entry.name, entry.terms)] = bundle.net.forward(key)
    return ProbabilityAssignment(matrices)


# ---------------------------------------------------------------------------
# Sampling

def sample_stable_models(gp: GroundProgram, obs, num_of_samples: int, rng,
                         assign: ProbabilityAssignment,
                         max_draws: int = 10**5) -> list:
    """Draw total choices from the current distributions; keep the stable
    models of each resulting deterministic program that satisfy obs."""
    solver = Solver(gp)
    gp = solver.gp
    constraints = list(_obs_constraints(obs, gp))
    positions = atom_positions(gp)
    rows = []
    for entry in gp.neural:
        rows.extend(tuple(r) for r in entry.atom_ids)
    collected = []
    draws = 0
    while len(collected) < num_of_samples:
        if draws >= max_draws:
            raise LearnError(
                f"sampling cap of {max_draws} draws exceeded with "
                f"{len(collected)}/{num_of_samples} samples"
            )
        draws += 1
        fix = []
        for row in rows:
            name, terms, i, _ = positions[row[0]]
            p = assign.matrix(name, terms)[i]
            j = int(rng.choice(len(row), p=p))
            fix.append(GConstraint((), (row[j],), ()))
        collected.extend(solver.enumerate(assumptions=fix + constraints))
    return collected


def sampled_gradient(samples, assign, gp: GroundProgram,
                     floor: float = PROB_FLOOR) -> dict:
    """Monte-Carlo estimate of the semantic gradient from sampled models."""
    if not samples:
        raise LearnError("sampled gradient needs at least one sample")
    positions = atom_positions(gp)
    rows = {}
    for entry in gp.neural:
        for row in entry.atom_ids:
            for aid in row:
                rows[aid] = row

    def prob(aid):
        name, terms, i, j = positions[aid]
        return float(assign.matrix(name, terms)[i, j])

    out = {aid: 0.0 for aid in rows}
    for m in samples:
        chosen = set(m.projection)
        for aid in rows:
            if aid in chosen:
                out[aid] += 1.0 / max(prob(aid), floor)
            else:
                sibling = next(a for a in rows[aid] if a in chosen)
                out[aid] -= 1.0 / max(prob(sibling), floor)
    n = len(samples)
    return {aid: v / n for aid, v in out.items()}


# ---------------------------------------------------------------------------
# Training loops

class _Optimizer:
    def __init__(self, kind: str, lr: float):
        self.kind = kind
        self.lr = lr
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, networks: dict, grads_by_net: dict):
        if self.kind == "sgd":
            for name, grads in grads_by_net.items():
                networks[name].net.step(grads, self.lr)
            return
        # adaptive moments, ascent direction
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        for name, grads in grads_by_net.items():
            params = networks[name].net.params
            for pname, g in grads.items():
                key = (name, pname)
                self.m[key] = b1 * self.m.get(key, 0.0) + (1 - b1) * g
                self.v[key] = b2 * self.v.get(key, 0.0) + (1 - b2) * g * g
                mh = self.m[key] / (1 - b1**self.t)
                vh = self.v[key] / (1 - b2**self.t)
                params[pname] += self.lr * mh / (np.sqrt(vh) + eps)


class Trainer:
    """Shared machinery for the exact and sampling training loops.

    Stable-model sets do not depend on network parameters, so the full model
    list and the per-observation satisfying subsets are computed once and
    reused across epochs.
    """

    def __init__(self, program, obs_list, networks: dict, config: TrainConfig,
                 data_list=None):
        self.gp = ground(program) if isinstance(program, Program) else program
        self.solver = Solver(self.gp)
        self.gp = self.solver.gp
        self.obs_list = list(obs_list)
        self.networks = networks
        self.config = config
        # optional per-observation input bindings (term -> vector), applied
        # to every network before that observation's forward pass
        self.data_list = data_list
        self.opt = _Optimizer(config.optimizer, config.lr)
        self._models = None
        self._npc = None
        self._sat_cache = {}
        self._constraints_cache = {}

    def models(self):
        if self._models is None:
            self._models = self.solver.enumerate(opt_mode=self.config.opt_mode)
            self._npc = count_models_per_choice(self._models)
        return self._models, self._npc

    def observation_constraints(self, i: int):
        if i not in self._constraints_cache:
            self._constraints_cache[i] = _obs_constraints(
                self.obs_list[i], self.gp
            )
        return self._constraints_cache[i]

    def satisfying(self, i: int):
        key = str(self.obs_list[i])
        if key not in self._sat_cache:
            models, _ = self.models()
            cons = self.observation_constraints(i)
            self._sat_cache[key] = [
                m for m in models if satisfies_observation(m.atoms, cons)
            ]
        return self._sat_cache[key]

    def _observation_gradient(self, i: int, assign):
        raise NotImplementedError

    def run(self, callback=None) -> list:
        """Train for the configured epochs; returns per-epoch stats."""
        history = []
        for epoch in range(self.config.epochs):
            loglik = []
            batch_grads = None
            for i in range(len(self.obs_list)):
                if self.data_list is not None:
                    for bundle in self.networks.values():
                        bundle.data.update(self.data_list[i])
                assign = forward_assignment(self.gp, self.networks)
                result = self._observation_gradient(i, assign)
                if result is None:
                    log.warning(
                        "skipping observation %d: zero probability under "
                        "current parameters", i,
                    )
                    continue
                sem_grad, logp = result
                loglik.append(logp)
                grads = chain_gradient(
                    sem_grad, self.gp, self.networks,
                    self.config.grad_convention,
                )
                if self.config.batch:
                    if batch_grads is None:
                        batch_grads = grads
                    else:
                        for name, gs in grads.items():
                            acc = batch_grads.setdefault(name, {})
                            for pname, g in gs.items():
                                acc[pname] = acc.get(pname, 0.0) + g
                else:
                    self.opt.step(self.networks, grads)
            if self.config.batch and batch_grads is not None:
                self.opt.step(self.networks, batch_grads)
            if not loglik:
                raise LearnError(f"no usable observation in epoch {epoch}")
            stats = {
                "epoch": epoch,
                "log_likelihood": float(np.mean(loglik)),
                "observations_used": len(loglik),
            }
            history.append(stats)
            if callback is not None:
                callback(epoch, stats)
        return history


class ExactTrainer(Trainer):
    def _observation_gradient(self, i: int, assign):
        sat = self.satisfying(i)
        if not sat:
            return None
        _, npc = self.models()
        positions = atom_positions(self.gp)
        p_obs = sum(
            _projection_probability(m.projection, positions, assign)
            / npc[m.projection]
            for m in sat
        )
        if p_obs <= 0:
            return None
        sem = semantic_gradient(sat, assign, self.gp, npc)
        return sem, float(np.log(p_obs))


class SampledTrainer(Trainer):
    def _observation_gradient(self, i: int, assign):
        rng = np.random.default_rng([self.config.seed, i])
        try:
            samples = sample_stable_models(
                self.gp, self.observation_constraints(i),
                self.config.num_of_samples, rng, assign,
            )
        except LearnError:
            return None
        sem = sampled_gradient(samples, assign, self.gp)
        # log-likelihood estimate from the exact satisfying set when small,
        # for reporting only
        sat = self.satisfying(i)
        if not sat:
            return None
        _, npc = self.models()
        positions = atom_positions(self.gp)
        p_obs = sum(
            _projection_probability(m.projection, positions, assign)
            / npc[m.projection]
            for m in sat
        )
        if p_obs <= 0:
            return None
        return sem, float(np.log(p_obs))


def learn_exact(program, obs_list, networks: dict, config: TrainConfig,
                data_list=None, callback=None):
    """Exact-gradient training; returns (per-epoch stats, trained params)."""
    trainer = ExactTrainer(program, obs_list, networks, config, data_list)
    history = trainer.run(callback)
    return history, {n: b.net.params for n, b in networks.items()}


def learn_sampled(program, obs_list, networks: dict, config: TrainConfig,
                  data_list=None, callback=None):
    """Sampling-based training; returns (per-epoch stats, trained params)."""
    trainer = SampledTrainer(program, obs_list, networks, config, data_list)
    history = trainer.run(callback)
    return history, {n: b.net.params for n, b in networks.items()}
