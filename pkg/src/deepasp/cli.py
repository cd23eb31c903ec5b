"""Command-line harness: inference, learning, sampling, coherence checks,
and the bundled experiment fixtures.

Exit codes: 0 success, 1 empty or zero-probability result, 2 usage or
parse error, 3 resource budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import heapq
import sys
from collections import deque
from pathlib import Path

import numpy as np

from .ground import GConstraint, ResourceError, ground, ground_observation
from .lang import DeepAspError, parse_observations, parse_program
from .learn import (
    TrainConfig, forward_assignment, instance_key, learn_exact, learn_sampled,
    sample_stable_models,
)
from .net import Mlp, NetSpec, NetworkBundle, load_manifest, apply_params, \
    load_params, save_params
from .semantics import (
    ProbabilityAssignment, check_coherence, map_inference,
    observation_probability,
)
from .solve import Solver, count_models_per_choice, satisfies_observation

EXIT_OK = 0
EXIT_EMPTY = 1
EXIT_USAGE = 2
EXIT_RESOURCE = 3

FIXTURE_DIR = Path(__file__).parent / "fixtures"


# ---------------------------------------------------------------------------
# Input loading

def load_program_text(paths) -> str:
    return "\n".join(Path(p).read_text() for p in paths)


def load_networks(manifest_paths, weights_path=None, seed: int = 0) -> dict:
    networks = {}
    for p in manifest_paths or ():
        bundle = load_manifest(p, seed=seed)
        networks[bundle.spec.name] = bundle
    if weights_path:
        params = load_params(weights_path)
        # weight files hold tensors for one trainable network
        trainable = [b for b in networks.values() if b.net.trainable]
        if len(trainable) != 1:
            raise DeepAspError(
                "a weights file requires exactly one trainable network"
            )
        apply_params(trainable[0].net, params)
    return networks


def load_observation_blocks(path):
    return parse_observations(Path(path).read_text())


# ---------------------------------------------------------------------------
# Metrics output

def write_metrics(path, rows):
    """rows: iterable of (run, epoch, metric, value)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["run", "epoch", "metric", "value"])
        for row in rows:
            w.writerow(row)


def render_metrics_figures(csv_path) -> list:
    """One PNG per metric next to the CSV; returns the figure paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    csv_path = Path(csv_path)
    series = {}
    with open(csv_path, newline="") as f:
        for row in csv.DictReader(f):
            series.setdefault(row["metric"], []).append(
                (int(row["epoch"]), float(row["value"]))
            )
    out = []
    for metric, points in series.items():
        points.sort()
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o")
        ax.set_xlabel("epoch")
        ax.set_ylabel(metric)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = csv_path.with_name(f"{csv_path.stem}_{metric}.png")
        fig.savefig(path, dpi=110)
        plt.close(fig)
        out.append(path)
    return out


# ---------------------------------------------------------------------------
# Sudoku harness

def generate_solved_grid(rng) -> list:
    """A complete valid 9x9 grid via randomized backtracking."""
    grid = [0] * 81

    def candidates(pos):
        r, c = divmod(pos, 9)
        used = set()
        for i in range(9):
            used.add(grid[r * 9 + i])
            used.add(grid[i * 9 + c])
        br, bc = 3 * (r // 3), 3 * (c // 3)
        for i in range(3):
            for j in range(3):
                used.add(grid[(br + i) * 9 + bc + j])
        return [n for n in range(1, 10) if n not in used]

    def fill(pos):
        if pos == 81:
            return True
        cands = candidates(pos)
        rng.shuffle(cands)
        for n in cands:
            grid[pos] = n
            if fill(pos + 1):
                return True
        grid[pos] = 0
        return False

    fill(0)
    return grid


def count_solutions(clues: list, limit: int = 2) -> int:
    """Number of completions of a clue grid (0 = empty), capped at limit."""
    grid = list(clues)
    empties = [i for i in range(81) if grid[i] == 0]
    found = [0]

    def candidates(pos):
        r, c = divmod(pos, 9)
        used = set()
        for i in range(9):
            used.add(grid[r * 9 + i])
            used.add(grid[i * 9 + c])
        br, bc = 3 * (r // 3), 3 * (c // 3)
        for i in range(3):
            for j in range(3):
                used.add(grid[(br + i) * 9 + bc + j])
        return [n for n in range(1, 10) if n not in used]

    def search(k):
        if found[0] >= limit:
            return
        if k == len(empties):
            found[0] += 1
            return
        # most-constrained empty cell first
        best, best_c = None, None
        for idx in range(k, len(empties)):
            c = candidates(empties[idx])
            if best_c is None or len(c) < len(best_c):
                best, best_c = idx, c
                if len(c) <= 1:
                    break
        empties[k], empties[best] = empties[best], empties[k]
        pos = empties[k]
        for n in best_c:
            grid[pos] = n
            search(k + 1)
            if found[0] >= limit:
                break
        grid[pos] = 0

    search(0)
    return found[0]


def generate_board(rng, target_clues: int = 30) -> dict:
    """A board with a unique solution: clue list (0 = empty) + solution."""
    solution = generate_solved_grid(rng)
    clues = list(solution)
    order = list(range(81))
    rng.shuffle(order)
    removed = 0
    for pos in order:
        if 81 - removed <= target_clues:
            break
        saved = clues[pos]
        clues[pos] = 0
        if count_solutions(clues) != 1:
            clues[pos] = saved
        else:
            removed += 1
    return {"clues": clues, "solution": solution}


SUDOKU_LABELS = ["empty", 1, 2, 3, 4, 5, 6, 7, 8, 9]


def generate_variant_board(pipeline, rng) -> dict:
    """A unique-solution board valid under the pipeline's extra rule packs.

    A full solution is drawn by fixing a random first row and letting the
    solver complete the grid; clues are then removed while the solver
    confirms the completion stays unique."""
    gp = pipeline.gp
    while True:
        perm = list(range(1, 10))
        rng.shuffle(perm)
        force = [
            GConstraint((), (gp.index[("a", False, (0, c, perm[c]))],), ())
            for c in range(9)
        ]
        empties = [pipeline._fix[(pos, 0)] for pos in range(81)]
        models = pipeline.solver.enumerate(
            max_models=1, assumptions=force + empties
        )
        if models:
            break
    solution = [0] * 81
    for a in models[0].atoms:
        key = gp.atoms[a]
        if key[0] == "a":
            r, c, n = key[2]
            solution[r * 9 + c] = n

    def unique(clues):
        fix = [
            pipeline._fix[(pos, 0 if v == 0 else v)]
            for pos, v in enumerate(clues)
        ]
        return len(pipeline.solver.enumerate(max_models=2, assumptions=fix)) == 1

    clues = list(solution)
    order = list(range(81))
    rng.shuffle(order)
    removed = 0
    for pos in order:
        if 81 - removed <= 40:
            break
        saved = clues[pos]
        clues[pos] = 0
        if unique(clues):
            removed += 1
        else:
            clues[pos] = saved
    return {"clues": clues, "solution": solution}


def board_matrix(clues: list, noise: float, rng,
                 digit_bias: bool = False) -> np.ndarray:
    """An 81x10 probability matrix: one-hot on the clue value mixed with a
    random distribution by the noise weight.

    With digit_bias the noise mass lands on wrong digit outcomes only, so a
    flipped argmax is a digit that can violate the board constraints rather
    than a silent 'empty'."""
    m = np.zeros((81, 10))
    for pos, v in enumerate(clues):
        j = 0 if v == 0 else v
        m[pos, j] = 1.0
    if noise > 0:
        rand = rng.random((81, 10))
        if digit_bias:
            rand[:, 0] = 0.0
            for pos, v in enumerate(clues):
                if v != 0:
                    rand[pos, v] = 0.0
        rand /= rand.sum(axis=1, keepdims=True)
        m = (1 - noise) * m + noise * rand
    return m


def flip_matrix(matrix: np.ndarray, board: dict, k: int, rng) -> np.ndarray:
    """Corrupt k clue cells: the argmax moves to a digit that clashes with
    another clue in the same row, column, or box."""
    m = matrix.copy()
    clues = board["clues"]
    clue_pos = [p for p in range(81) if clues[p] != 0]
    rng.shuffle(clue_pos)
    flipped = 0
    for pos in clue_pos:
        if flipped >= k:
            break
        r, c = divmod(pos, 9)
        clashes = set()
        for q in range(81):
            if q == pos or clues[q] == 0 or clues[q] == clues[pos]:
                continue
            r2, c2 = divmod(q, 9)
            if r2 == r or c2 == c or (
                (r2 // 3) * 3 + c2 // 3 == (r // 3) * 3 + c // 3
            ):
                clashes.add(clues[q])
        if not clashes:
            continue
        wrong = sorted(clashes)[int(rng.random() * len(clashes))]
        row = np.full(10, 0.05 / 8)
        row[wrong] = 0.55
        row[clues[pos]] = 0.40
        m[pos] = row
        flipped += 1
    return m


def best_assignments(matrix: np.ndarray, cap: int):
    """Yield outcome-index assignments in decreasing joint probability."""
    logp = np.log(np.maximum(matrix, 1e-300))
    order = np.argsort(-logp, axis=1)
    sorted_lp = np.take_along_axis(logp, order, axis=1)
    n_rows, n_cols = matrix.shape
    base = float(sorted_lp[:, 0].sum())
    # state: (-logp, ranks tuple, last touched row)
    heap = [(-base, tuple([0] * n_rows), 0)]
    seen = {heap[0][1]}
    count = 0
    while heap and count < cap:
        neg, ranks, last = heapq.heappop(heap)
        yield tuple(int(order[i, r]) for i, r in enumerate(ranks)), -neg
        count += 1
        for i in range(last, n_rows):
            if ranks[i] + 1 >= n_cols:
                continue
            child = list(ranks)
            child[i] += 1
            child = tuple(child)
            if child in seen:
                continue
            seen.add(child)
            delta = float(sorted_lp[i, child[i]] - sorted_lp[i, ranks[i]])
            heapq.heappush(heap, (neg - delta, child, i))


def digits_conflict(digits: dict) -> bool:
    """digits: {(row, col): n} over identified non-empty cells."""
    for (r1, c1), n1 in digits.items():
        for (r2, c2), n2 in digits.items():
            if (r1, c1) >= (r2, c2) or n1 != n2:
                continue
            if r1 == r2 or c1 == c2:
                return True
            if (r1 // 3) * 3 + c1 // 3 == (r2 // 3) * 3 + c2 // 3:
                return True
    return False


class SudokuPipeline:
    """Identification through the board program, with or without solving.

    Candidates are scanned best-first by joint probability; the first one
    whose identified digits admit a stable model wins.  mode 'raw' takes the
    per-cell argmax, 'check' requires the digit constraints to hold, 'solve'
    additionally requires the board to be completable.
    """

    def __init__(self, extra_rules: str = ""):
        text = (FIXTURE_DIR / "sudoku.lp").read_text() + extra_rules
        self.gp = ground(parse_program(text))
        self.solver = Solver(self.gp)
        self._fix = {}
        for pos in range(81):
            for j, lab in enumerate(SUDOKU_LABELS):
                aid = self.gp.index[("identify", False, (pos, "img", lab))]
                self._fix[(pos, j)] = GConstraint((), (aid,), ())
        self.extra = bool(extra_rules)

    def solvable(self, assignment) -> bool:
        fix = [self._fix[(pos, j)] for pos, j in enumerate(assignment)]
        return self.solver.has_model(fix)

    def solution(self, assignment):
        fix = [self._fix[(pos, j)] for pos, j in enumerate(assignment)]
        models = self.solver.enumerate(max_models=1, assumptions=fix)
        if not models:
            return None
        out = [0] * 81
        for a in models[0].atoms:
            key = self.gp.atoms[a]
            if key[0] == "a":
                r, c, n = key[2]
                out[r * 9 + c] = n
        return out

    def identify(self, matrix: np.ndarray, mode: str, cap: int = 2000):
        if mode == "raw":
            return tuple(int(j) for j in matrix.argmax(axis=1))
        first = None
        for assignment, _lp in best_assignments(matrix, cap):
            if first is None:
                first = assignment
            digits = {
                divmod(pos, 9): SUDOKU_LABELS[j]
                for pos, j in enumerate(assignment)
                if j != 0
            }
            if digits_conflict(digits):
                continue
            if mode == "check" and self.extra:
                # variant packs add constraints the quick check cannot see:
                # force identified digits, leave empties open so the board
                # remains completable by construction
                fix = [
                    self._fix[(pos, j)]
                    for pos, j in enumerate(assignment)
                    if j != 0
                ]
                if self.solver.has_model(fix):
                    return assignment
            elif mode == "check" or self.solvable(assignment):
                return assignment
        return first


def evaluate_sudoku(boards, predictions, mode: str, pipeline=None) -> dict:
    """Whole-board exact-match accuracy of the identifications, plus, in
    'solve' mode, the solving accuracy with constraint verification."""
    n = len(boards)
    correct_id = 0
    correct_sol = 0
    for board, pred in zip(boards, predictions):
        truth = tuple(
            0 if v == 0 else v for v in board["clues"]
        )
        ident = tuple(0 if j == 0 else SUDOKU_LABELS[j] for j in pred)
        if ident == truth:
            correct_id += 1
        if mode == "solve" and pipeline is not None:
            sol = pipeline.solution(pred)
            if sol is None:
                continue
            digits = {divmod(p, 9): v for p, v in enumerate(sol)}
            assert not digits_conflict(digits), "solver produced invalid board"
            clue_ok = all(
                sol[p] == SUDOKU_LABELS[j]
                for p, j in enumerate(pred)
                if j != 0
            )
            assert clue_ok, "solution contradicts identified clues"
            if sol == board["solution"] and ident == truth:
                correct_sol += 1
    out = {"acc_identify": correct_id / n}
    if mode == "solve":
        out["acc_sol"] = correct_sol / n
    return out


# ---------------------------------------------------------------------------
# Shortest-path harness

def grid_edges() -> list:
    edges = []
    for r in range(4):
        for c in range(4):
            n = r * 4 + c
            if c < 3:
                edges.append((n, n + 1))
            if r < 3:
                edges.append((n, n + 4))
    return edges


def bfs_distance(adj: dict, s: int, t: int):
    dist = {s: 0}
    q = deque([s])
    while q:
        x = q.popleft()
        if x == t:
            return dist[x]
        for y in adj.get(x, ()):
            if y not in dist:
                dist[y] = dist[x] + 1
                q.append(y)
    return None


def generate_spath_instance(rng) -> dict:
    """8 removed edges with the two endpoints still connected."""
    edges = grid_edges()
    while True:
        removed = sorted(rng.sample(range(24), 8))
        keep = {}
        for e, (x, y) in enumerate(edges):
            if e in removed:
                continue
            keep.setdefault(x, []).append(y)
            keep.setdefault(y, []).append(x)
        nodes = sorted(keep)
        if len(nodes) < 2:
            continue
        s, t = rng.sample(nodes, 2)
        d = bfs_distance(keep, s, t)
        if d is not None and d >= 2:
            return {"removed": removed, "source": s, "target": t}


def spath_program(instance: dict, packs=("p", "r", "o", "nr")) -> str:
    parts = [(FIXTURE_DIR / "spath.lp").read_text()]
    for pack in packs:
        parts.append((FIXTURE_DIR / f"spath_{pack}.lp").read_text())
    parts.append(f"endpoint({instance['source']}).")
    parts.append(f"endpoint({instance['target']}).")
    for e in instance["removed"]:
        parts.append(f"removed({e}).")
    return "\n".join(parts)


def evaluate_spath(instance: dict, predicted_edges, label_edges=None) -> dict:
    """Constraint-satisfaction flags for a set of predicted edge ids."""
    edges = grid_edges()
    removed = set(instance["removed"])
    s, t = instance["source"], instance["target"]
    adj = {}
    for e in predicted_edges:
        x, y = edges[e]
        adj.setdefault(x, set()).add(y)
        adj.setdefault(y, set()).add(x)
    degrees = {x: len(ys) for x, ys in adj.items()}
    p_ok = (
        degrees.get(s, 0) == 1
        and degrees.get(t, 0) == 1
        and all(d == 2 for x, d in degrees.items() if x not in (s, t))
    )
    # connectivity over predicted structure
    r_ok = True
    touched = sorted(adj)
    if touched:
        seen = {touched[0]}
        q = deque(seen)
        while q:
            x = q.popleft()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    q.append(y)
        r_ok = seen == set(touched)
    nr_ok = not (set(predicted_edges) & removed)
    inst_adj = {}
    for e, (x, y) in enumerate(edges):
        if e not in removed:
            inst_adj.setdefault(x, []).append(y)
            inst_adj.setdefault(y, []).append(x)
    shortest = bfs_distance(inst_adj, s, t)
    o_ok = p_ok and nr_ok and shortest is not None and len(
        predicted_edges
    ) == shortest
    out = {"p": p_ok, "r": r_ok, "nr": nr_ok, "o": o_ok}
    if label_edges is not None:
        out["label"] = set(predicted_edges) == set(label_edges)
    return out


def spath_predict(instance: dict, matrix: np.ndarray,
                  packs=("p", "r", "o", "nr")) -> list:
    """MAP prediction filtered through the constraint packs; edge id list."""
    gp = ground(parse_program(spath_program(instance, packs)))
    assign = ProbabilityAssignment({("sp", ("g",)): matrix})
    model, _p = map_inference(gp, assign)
    out = []
    for a in model.atoms:
        key = gp.atoms[a]
        if key[0] == "sp" and len(key[2]) == 3 and key[2][2] == "true":
            out.append(key[2][0])
    return sorted(out)


# ---------------------------------------------------------------------------
# Synthetic digit data

def synth_digit_data(n: int, seed: int, side: int = 8):
    """Deterministic toy digit images: a fixed random template per class
    plus pixel noise; returns (images in [0,1], labels)."""
    rng = np.random.default_rng(seed)
    templates = (rng.random((10, side * side)) > 0.5).astype(np.float64)
    labels = rng.integers(0, 10, size=n)
    noise = rng.normal(0.0, 0.35, size=(n, side * side))
    images = np.clip(templates[labels] * 0.9 + 0.05 + noise, 0.0, 1.0)
    return images, labels


# ---------------------------------------------------------------------------
# Experiments

def experiment_coin(args) -> int:
    text = (FIXTURE_DIR / "coin.lp").read_text()
    gp = ground(parse_program(text))
    networks = {"coin": load_manifest(FIXTURE_DIR / "coin_net.json")}
    assign = forward_assignment(gp, networks)
    solver = Solver(gp)
    models = solver.enumerate()
    npc = count_models_per_choice(models)
    obs = parse_observations((FIXTURE_DIR / "coin.obs").read_text())[0]
    p = observation_probability(obs, models, assign, gp, npc)
    print(f"P({obs}) = {p:.12g}")

    # logistic-net training demo: observations all favour heads
    spec = NetSpec("coin", 1, (), "relu", 1, 2, ("heads", "tails"))
    bundle = NetworkBundle(spec, Mlp(spec, seed=args.seed),
                           {"c": np.array([1.0])})
    obs_list = parse_observations(":- not win.") * 16
    cfg = TrainConfig(lr=args.lr, epochs=max(args.epochs, 5), seed=args.seed)
    history, _ = learn_exact(gp, obs_list, {"coin": bundle}, cfg)
    rows = [
        ("coin", h["epoch"], "log_likelihood", h["log_likelihood"])
        for h in history
    ]
    out = Path(args.out or "coin_metrics.csv")
    write_metrics(out, rows)
    figures = render_metrics_figures(out)
    print(f"metrics: {out}")
    for f in figures:
        print(f"figure: {f}")
    return EXIT_OK


def experiment_addition(args) -> int:
    n_pairs = args.train_pairs
    images, labels = synth_digit_data(2 * n_pairs + 400, seed=args.seed)
    train_x, train_y = images[: 2 * n_pairs], labels[: 2 * n_pairs]
    test_x, test_y = images[2 * n_pairs :], labels[2 * n_pairs :]

    text = (FIXTURE_DIR / "digit.lp").read_text()
    spec = NetSpec(
        "digit", train_x.shape[1], (32,), "relu", 1, 10,
        tuple(str(i) for i in range(10)),
    )
    bundle = NetworkBundle(spec, Mlp(spec, seed=args.seed))
    obs_list = []
    data_list = []
    for i in range(n_pairs):
        a, b = train_x[2 * i], train_x[2 * i + 1]
        s = int(train_y[2 * i] + train_y[2 * i + 1])
        obs_list.append(parse_observations(f":- not addition(d1,d2,{s}).")[0])
        data_list.append({"d1": a, "d2": b})

    def digit_accuracy():
        correct = 0
        for x, y in zip(test_x, test_y):
            if int(np.argmax(bundle.net.forward(x))) == int(y):
                correct += 1
        return correct / len(test_y)

    rows = []

    def callback(epoch, stats):
        acc = digit_accuracy()
        rows.append(("addition", epoch, "log_likelihood",
                     stats["log_likelihood"]))
        rows.append(("addition", epoch, "label_acc", acc))
        print(f"epoch {epoch}: ll={stats['log_likelihood']:.4f} acc={acc:.3f}")

    cfg = TrainConfig(lr=args.lr, epochs=args.epochs, seed=args.seed,
                      optimizer="adam")
    learn_exact(ground(parse_program(text)), obs_list, {"digit": bundle},
                cfg, data_list=data_list, callback=callback)
    out = Path(args.out or "addition_metrics.csv")
    write_metrics(out, rows)
    for f in render_metrics_figures(out):
        print(f"figure: {f}")
    if args.weights_out:
        save_params(bundle.net.params, args.weights_out)
        print(f"weights: {args.weights_out}")
    print(f"metrics: {out}")
    return EXIT_OK


def experiment_sudoku(args, extra_rules: str = "") -> int:
    rng_py = __import__("random").Random(args.seed)
    rng = np.random.default_rng(args.seed)
    pipeline = SudokuPipeline(extra_rules)
    if extra_rules:
        boards = [
            generate_variant_board(pipeline, rng_py)
            for _ in range(args.boards)
        ]
    else:
        boards = [generate_board(rng_py) for _ in range(args.boards)]

    # phase 1: mildly noised matrices through the full pipeline; a correct
    # identification always yields the correct (unique) solution
    mild = [
        board_matrix(b["clues"], 0.05 + 0.3 * (i % 5) / 5, rng)
        for i, b in enumerate(boards)
    ]
    preds = [pipeline.identify(m, "solve") for m in mild]
    full = evaluate_sudoku(boards, preds, "solve", pipeline)

    # phase 2: flip-noised matrices where the constraint stages repair
    # corrupted clue cells; accuracy is monotone raw <= check <= solve
    flipped = [
        flip_matrix(m, b, 2, rng_py) for m, b in zip(mild, boards)
    ]
    results = {}
    for mode in ("raw", "check", "solve"):
        preds = [pipeline.identify(m, mode) for m in flipped]
        results[mode] = evaluate_sudoku(boards, preds, "raw")
    rows = [
        ("sudoku", 0, "acc_identify", full["acc_identify"]),
        ("sudoku", 0, "acc_sol", full["acc_sol"]),
        ("sudoku", 0, "acc_identify_raw", results["raw"]["acc_identify"]),
        ("sudoku", 0, "acc_identify_check", results["check"]["acc_identify"]),
        ("sudoku", 0, "acc_identify_solve", results["solve"]["acc_identify"]),
    ]
    for _run, _e, metric, value in rows:
        print(f"{metric} = {value:.3f}")
    out = Path(args.out or "sudoku_metrics.csv")
    write_metrics(out, rows)
    print(f"metrics: {out}")
    return EXIT_OK


def experiment_spath(args) -> int:
    rng_py = __import__("random").Random(args.seed)
    rng = np.random.default_rng(args.seed)
    instances = [generate_spath_instance(rng_py) for _ in range(args.instances)]
    flags_total = {"p": 0, "r": 0, "nr": 0, "o": 0}
    for inst in instances:
        # a noisy edge-probability matrix, biased nowhere in particular
        noise = rng.random((24, 1))
        matrix = np.hstack([noise, 1 - noise])
        pred = spath_predict(inst, matrix)
        flags = evaluate_spath(inst, pred)
        for k in flags_total:
            flags_total[k] += bool(flags[k])
    n = len(instances)
    rows = []
    for k, v in flags_total.items():
        metric = f"constraint_sat_{k}" if k != "o" else "constraint_sat_o"
        rows.append(("spath", 0, metric, v / n))
        print(f"{metric} = {v / n:.3f}")
    out = Path(args.out or "spath_metrics.csv")
    write_metrics(out, rows)
    print(f"metrics: {out}")
    return EXIT_OK


def experiment_commonsense(args) -> int:
    gp = ground(parse_program((FIXTURE_DIR / "commonsense.lp").read_text()))
    networks = {
        "label": load_manifest(FIXTURE_DIR / "commonsense_net.json")
    }
    assign = forward_assignment(gp, networks)
    model, p = map_inference(gp, assign)
    toys = sorted(
        gp.atom_str(a) for a in model.atoms if gp.atoms[a][0] == "toy"
    )
    print(f"map probability = {p:.12g}")
    for t in toys:
        print(f"derived: {t}")
    return EXIT_OK if toys else EXIT_EMPTY


EXPERIMENTS = {
    "coin": experiment_coin,
    "addition": experiment_addition,
    "sudoku": experiment_sudoku,
    "sudoku-variant": None,  # dispatched below with variant rules
    "spath": experiment_spath,
    "commonsense": experiment_commonsense,
}


# ---------------------------------------------------------------------------
# Subcommands

def _setup(args):
    text = load_program_text(args.program)
    program = parse_program(text)
    gp = ground(program)
    networks = load_networks(args.networks, args.weights, seed=args.seed)
    assign = forward_assignment(gp, networks) if gp.neural and networks else None
    if args.dump_ground:
        Path(args.dump_ground).write_text(gp.dump())
    return gp, networks, assign


def cmd_models(args) -> int:
    gp, _networks, assign = _setup(args)
    solver = Solver(gp)
    models = solver.enumerate(
        max_models=args.max_models,
        opt_mode=args.opt_mode,
        conflict_budget=args.conflict_budget,
    )
    if not models:
        print("no stable models", file=sys.stderr)
        return EXIT_EMPTY
    npc = count_models_per_choice(models)
    constraints = []
    if args.observations:
        obs = load_observation_blocks(args.observations)[0]
        constraints = ground_observation(obs, gp)
    rows = []
    from .semantics import model_probability

    for i, m in enumerate(models):
        p = model_probability(m, assign, gp, npc) if assign else ""
        sat = int(satisfies_observation(m.atoms, constraints))
        atoms = " ".join(sorted(gp.atom_str(a) for a in m.atoms))
        print(f"{i}\t{p}\t{sat}\t{{{atoms}}}")
        rows.append((i, p, sat))
    if args.out:
        with open(args.out, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["model_id", "probability", "satisfies_observation"])
            w.writerows(rows)
    return EXIT_OK


def cmd_infer(args) -> int:
    gp, _networks, assign = _setup(args)
    if assign is None:
        print("infer requires networks", file=sys.stderr)
        return EXIT_USAGE
    solver = Solver(gp)
    models = solver.enumerate(conflict_budget=args.conflict_budget)
    npc = count_models_per_choice(models)
    obs = ()
    if args.observations:
        obs = load_observation_blocks(args.observations)[0]
    p = observation_probability(obs, models, assign, gp, npc) if obs else 1.0
    print(f"P(O) = {p:.12g}")
    if p <= 0:
        print("observation has zero probability", file=sys.stderr)
        return EXIT_EMPTY
    model, mp = map_inference(gp, assign, obs, models=models)
    atoms = " ".join(sorted(gp.atom_str(a) for a in model.atoms))
    print(f"MAP ({mp:.12g}): {{{atoms}}}")
    return EXIT_OK


def cmd_learn(args) -> int:
    text = load_program_text(args.program)
    gp = ground(parse_program(text))
    networks = load_networks(args.networks, args.weights, seed=args.seed)
    obs_list = load_observation_blocks(args.observations)
    cfg = TrainConfig(
        lr=args.lr, epochs=args.epochs, num_of_samples=args.samples,
        seed=args.seed, opt_mode=args.opt_mode,
        grad_convention=args.grad_convention, optimizer=args.optimizer,
    )
    fn = learn_exact if args.mode == "exact" else learn_sampled
    history, params = fn(gp, obs_list, networks, cfg)
    if args.metrics:
        rows = [
            ("learn", h["epoch"], "log_likelihood", h["log_likelihood"])
            for h in history
        ]
        write_metrics(args.metrics, rows)
        for f in render_metrics_figures(args.metrics):
            print(f"figure: {f}")
    if args.out:
        trainable = [b for b in networks.values() if b.net.trainable]
        if len(trainable) == 1:
            save_params(trainable[0].net.params, args.out)
            print(f"weights: {args.out}")
    for h in history:
        print(f"epoch {h['epoch']}: log_likelihood={h['log_likelihood']:.6f}")
    return EXIT_OK


def cmd_sample(args) -> int:
    gp, _networks, assign = _setup(args)
    if assign is None:
        print("sample requires networks", file=sys.stderr)
        return EXIT_USAGE
    obs = ()
    if args.observations:
        obs = load_observation_blocks(args.observations)[0]
        obs = ground_observation(obs, gp)
    rng = np.random.default_rng(args.seed)
    samples = sample_stable_models(gp, obs, args.samples, rng, assign)
    counts = {}
    for m in samples:
        key = " ".join(sorted(gp.atom_str(a) for a in m.projection))
        counts[key] = counts.get(key, 0) + 1
    for key in sorted(counts):
        print(f"{counts[key] / len(samples):.6f}\t{counts[key]}\t{key}")
    return EXIT_OK


def cmd_check(args) -> int:
    gp, _networks, assign = _setup(args)
    report = check_coherence(
        gp, mode=args.check_mode, samples=args.samples, seed=args.seed,
        assign=assign,
    )
    if report.coherent:
        print(f"coherent ({report.checked} total choices checked)")
        return EXIT_OK
    print(f"incoherent: no stable model for {report.witness}")
    return EXIT_EMPTY


def cmd_experiment(args) -> int:
    name = args.name
    if name == "sudoku-variant":
        rules = ""
        for variant in args.variants.split(","):
            rules += (FIXTURE_DIR / f"sudoku_{variant}.lp").read_text()
        return experiment_sudoku(args, extra_rules=rules)
    fn = EXPERIMENTS.get(name)
    if fn is None:
        print(f"unknown experiment {name!r}", file=sys.stderr)
        return EXIT_USAGE
    return fn(args)


# ---------------------------------------------------------------------------
# Argument parsing

def _common(sub):
    sub.add_argument("--program", action="append", default=[],
                     help="program file (repeatable)")
    sub.add_argument("--networks", action="append", default=[],
                     help="network manifest (repeatable)")
    sub.add_argument("--weights", help="weight file to load")
    sub.add_argument("--observations", help="observation file")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", help="output path")
    sub.add_argument("--max-models", type=int, default=None)
    sub.add_argument("--conflict-budget", type=int, default=10**6)
    sub.add_argument("--opt-mode", choices=["auto", "optimal", "all"],
                     default="auto")
    sub.add_argument("--dump-ground", help="write the ground program here")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="deepasp",
        description="Stable-model inference and learning with neural atoms",
    )
    sp = ap.add_subparsers(dest="command", required=True)

    p = sp.add_parser("models", help="enumerate stable models")
    _common(p)
    p.set_defaults(fn=cmd_models)

    p = sp.add_parser("infer", help="observation probability and MAP model")
    _common(p)
    p.set_defaults(fn=cmd_infer)

    p = sp.add_parser("learn", help="train network parameters")
    _common(p)
    p.add_argument("--mode", choices=["exact", "sample"], default="exact")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--metrics", help="metrics CSV path")
    p.add_argument("--grad-convention",
                   choices=["diagonal", "softmax-jacobian"],
                   default="softmax-jacobian")
    p.add_argument("--optimizer", choices=["sgd", "adam"], default="sgd")
    p.add_argument("--jobs", type=int, default=1,
                   help="accepted for compatibility; training is sequential")
    p.set_defaults(fn=cmd_learn)

    p = sp.add_parser("sample", help="sample stable models")
    _common(p)
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(fn=cmd_sample)

    p = sp.add_parser("check", help="coherence check")
    _common(p)
    p.add_argument("--check-mode", choices=["exhaustive", "sampled"],
                   default="exhaustive")
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(fn=cmd_check)

    p = sp.add_parser("experiment", help="run a bundled experiment")
    p.add_argument("name", choices=sorted(EXPERIMENTS))
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", help="metrics CSV path")
    p.add_argument("--lr", type=float, default=0.003)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--train-pairs", type=int, default=2000)
    p.add_argument("--boards", type=int, default=50)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--variants", default="antiknight",
                   help="comma-separated sudoku variant packs")
    p.add_argument("--weights-out", help="save trained weights here")
    p.set_defaults(fn=cmd_experiment)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except ResourceError as e:
        print(f"resource budget exceeded: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except DeepAspError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
