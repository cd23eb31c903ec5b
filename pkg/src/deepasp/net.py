"""Small differentiable models producing row-stochastic output matrices.

A network maps an input vector to an (events x outcomes) probability matrix:
a feed-forward stack of linear layers with relu or tanh activations, a final
linear layer with events*outcomes outputs, and a softmax over each event row.
A constant "table" network returns a fixed matrix regardless of input; it is
used by fixtures whose probabilities are stated directly.

The module also handles the plumbing around networks: binary weight files,
IDX image/label ingestion, and JSON manifests binding ground terms to input
vectors.
"""

from __future__ import annotations

import ast
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lang import DeepAspError

WEIGHT_MAGIC = b"NASPW1"


class NetError(DeepAspError):
    pass


@dataclass(frozen=True)
class NetSpec:
    name: str
    input_dim: int
    hidden: tuple  # hidden layer sizes
    activation: str  # "relu" or "tanh"
    events: int
    outcomes: int
    labels: tuple  # outcome labels, len == outcomes

    def __post_init__(self):
        if self.activation not in ("relu", "tanh"):
            raise NetError(f"unsupported activation {self.activation!r}")
        if len(self.labels) != self.outcomes:
            raise NetError(
                f"{self.name}: {self.outcomes} outcomes but "
                f"{len(self.labels)} labels"
            )


class Mlp:
    """Feed-forward net with a per-row softmax head and a manual tape."""

    def __init__(self, spec: NetSpec, seed: int = 0):
        self.spec = spec
        self.params = {}
        rng = np.random.default_rng(seed)
        sizes = [spec.input_dim] + list(spec.hidden) + [spec.events * spec.outcomes]
        for k in range(len(sizes) - 1):
            fan_in, fan_out = sizes[k], sizes[k + 1]
            s = np.sqrt(6.0 / (fan_in + fan_out))
            self.params[f"w{k}"] = rng.uniform(-s, s, size=(fan_out, fan_in))
            self.params[f"b{k}"] = np.zeros(fan_out)
        self.n_layers = len(sizes) - 1
        self._tape = None

    @property
    def trainable(self) -> bool:
        return True

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.spec.input_dim,):
            raise NetError(
                f"{self.spec.name}: expected input of shape "
                f"({self.spec.input_dim},), got {x.shape}"
            )
        acts = [x]
        h = x
        for k in range(self.n_layers):
            z = self.params[f"w{k}"] @ h + self.params[f"b{k}"]
            if k < self.n_layers - 1:
                h = np.maximum(z, 0.0) if self.spec.activation == "relu" else np.tanh(z)
            else:
                h = z
            acts.append(h)
        logits = h.reshape(self.spec.events, self.spec.outcomes)
        shifted = logits - logits.max(axis=1, keepdims=True)
        expz = np.exp(shifted)
        probs = expz / expz.sum(axis=1, keepdims=True)
        if not np.all(np.isfinite(probs)):
            raise NetError(f"{self.spec.name}: non-finite output")
        self._tape = (acts, probs)
        return probs

    def backward(self, upstream, convention: str = "softmax-jacobian") -> dict:
        """Parameter gradients for dL/dmatrix = upstream; consumes the tape.

        The upstream here is the semantic gradient, whose entry for outcome v
        is the plain partial d log P / dp_v minus the sum of the partials for
        the sibling outcomes.  Writing that as G = 2A - S (A the plain
        partials, S their sum broadcast over the row) and using that the
        softmax Jacobian J annihilates constant rows, G J = 2 A J — composing
        with the full Jacobian counts every pairwise term twice.

        'softmax-jacobian' therefore composes with J and halves the result,
        giving the exact d log P / d logits for any number of outcomes.
        'diagonal' composes with the diagonal p(1-p) only; for two-outcome rows
        it coincides with the exact gradient, for wider rows it is an
        approximation that preserves the per-outcome sign.
        """
        if self._tape is None:
            raise NetError("backward called without a stored forward pass")
        acts, probs = self._tape
        self._tape = None
        up = np.asarray(upstream, dtype=np.float64)
        if up.shape != probs.shape:
            raise NetError(f"upstream shape {up.shape} != {probs.shape}")
        if convention == "softmax-jacobian":
            dot = (up * probs).sum(axis=1, keepdims=True)
            dlogits = 0.5 * probs * (up - dot)
        elif convention == "diagonal":
            dlogits = up * probs * (1.0 - probs)
        else:
            raise NetError(f"unknown gradient convention {convention!r}")
        grads = {}
        g = dlogits.reshape(-1)
        for k in range(self.n_layers - 1, -1, -1):
            h_in = acts[k]
            grads[f"w{k}"] = np.outer(g, h_in)
            grads[f"b{k}"] = g.copy()
            if k > 0:
                g = self.params[f"w{k}"].T @ g
                z_out = acts[k]
                if self.spec.activation == "relu":
                    g = g * (z_out > 0)
                else:
                    g = g * (1.0 - z_out**2)
        return grads

    def step(self, grads: dict, lr: float):
        """Gradient-ascent update, in place."""
        for name, g in grads.items():
            self.params[name] += lr * g


class TableNet:
    """Constant network: emits a fixed row-stochastic matrix.

    Either one shared matrix (rows) or one matrix per instance term
    (rows_by_term, keyed by the term's text).
    """

    def __init__(self, spec: NetSpec, rows=None, rows_by_term=None):
        self.spec = spec

        def check(m):
            m = np.asarray(m, dtype=np.float64)
            if m.shape != (spec.events, spec.outcomes):
                raise NetError(
                    f"{spec.name}: table shape {m.shape} != "
                    f"({spec.events}, {spec.outcomes})"
                )
            return m

        self.matrix = check(rows) if rows is not None else None
        self.by_term = (
            {k: check(v) for k, v in rows_by_term.items()}
            if rows_by_term else {}
        )
        if self.matrix is None and not self.by_term:
            raise NetError(f"{spec.name}: table network needs rows")
        self.params = {}

    @property
    def trainable(self) -> bool:
        return False

    def forward(self, term=None) -> np.ndarray:
        if term is not None and term in self.by_term:
            return self.by_term[term].copy()
        if self.matrix is None:
            raise NetError(f"{self.spec.name}: no table row for term {term!r}")
        return self.matrix.copy()

    def backward(self, upstream, convention: str = "softmax-jacobian") -> dict:
        return {}

    def step(self, grads: dict, lr: float):
        pass


# ---------------------------------------------------------------------------
# Weight files

def save_params(params: dict, path):
    """Binary weight file: magic, then one record per named tensor."""
    with open(path, "wb") as f:
        f.write(WEIGHT_MAGIC)
        f.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = np.asarray(params[name], dtype=np.float64)
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.tobytes(order="C"))


def load_params(path) -> dict:
    with open(path, "rb") as f:
        data = f.read()
    if data[: len(WEIGHT_MAGIC)] != WEIGHT_MAGIC:
        raise NetError(f"{path}: bad weight-file magic at offset 0")
    off = len(WEIGHT_MAGIC)

    def take(n):
        nonlocal off
        if off + n > len(data):
            raise NetError(f"{path}: truncated at offset {off}")
        out = data[off : off + n]
        off += n
        return out

    (count,) = struct.unpack("<I", take(4))
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(rank))
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape)
        params[name] = arr.copy()
    return params


def apply_params(net, params: dict):
    """Load a parameter dict into a network, checking shapes."""
    for name, arr in params.items():
        if name not in net.params:
            raise NetError(f"unknown parameter {name!r} for {net.spec.name}")
        if net.params[name].shape != arr.shape:
            raise NetError(
                f"{net.spec.name}.{name}: shape {arr.shape} != "
                f"{net.params[name].shape}"
            )
        net.params[name] = arr.astype(np.float64)


# ---------------------------------------------------------------------------
# IDX ingestion

_IDX_IMAGES = 0x00000803
_IDX_LABELS = 0x00000801


def load_idx(images_path, labels_path):
    """Read IDX image/label files; returns (float vectors in [0,1], labels)."""
    with open(images_path, "rb") as f:
        head = f.read(16)
        if len(head) < 16:
            raise NetError(f"{images_path}: truncated header")
        magic, count, rows, cols = struct.unpack(">IIII", head)
        if magic != _IDX_IMAGES:
            raise NetError(f"{images_path}: bad magic {magic:#010x} at offset 0")
        raw = f.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise NetError(f"{images_path}: truncated at offset {16 + len(raw)}")
        images = (
            np.frombuffer(raw, dtype=np.uint8)
            .reshape(count, rows * cols)
            .astype(np.float64)
            / 255.0
        )
    with open(labels_path, "rb") as f:
        head = f.read(8)
        if len(head) < 8:
            raise NetError(f"{labels_path}: truncated header")
        magic, lcount = struct.unpack(">II", head)
        if magic != _IDX_LABELS:
            raise NetError(f"{labels_path}: bad magic {magic:#010x} at offset 0")
        raw = f.read(lcount)
        if len(raw) != lcount:
            raise NetError(f"{labels_path}: truncated at offset {8 + len(raw)}")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    if count != lcount:
        raise NetError(
            f"image count {count} does not match label count {lcount}"
        )
    return images, labels


def save_idx(images, labels, images_path, labels_path):
    """Write vectors in [0,1] and integer labels to IDX files."""
    images = np.asarray(images)
    n, dim = images.shape
    side = int(np.sqrt(dim))
    if side * side != dim:
        raise NetError(f"image length {dim} is not a square")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", _IDX_IMAGES, n, side, side))
        f.write((np.clip(images, 0, 1) * 255).astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", _IDX_LABELS, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


# ---------------------------------------------------------------------------
# Manifests and data bindings

@dataclass
class NetworkBundle:
    """A network plus the input vector bound to each ground instance term."""

    spec: NetSpec
    net: object
    data: dict = field(default_factory=dict)  # term text -> input vector

    def input_for(self, term: str) -> np.ndarray:
        if term not in self.data:
            raise NetError(
                f"{self.spec.name}: no data binding for term {term!r}"
            )
        return self.data[term]


def _resolve_binding(value: str, base: Path, idx_cache: dict) -> np.ndarray:
    if value.startswith("vec:"):
        vec = ast.literal_eval(value[4:])
        return np.asarray(vec, dtype=np.float64)
    if value.startswith("idx:"):
        ref = value[4:]
        if "#" not in ref:
            raise NetError(f"idx binding {value!r} needs '#<row>'")
        path, _, row = ref.rpartition("#")
        full = str(base / path)
        if full not in idx_cache:
            labels_path = full.replace("images", "labels")
            idx_cache[full] = load_idx(full, labels_path)[0]
        return idx_cache[full][int(row)]
    if value.startswith("grid:"):
        return np.loadtxt(base / value[5:], delimiter=",").reshape(-1)
    raise NetError(f"unknown data binding {value!r}")


def load_manifest(path, seed: int = 0) -> NetworkBundle:
    """Read a JSON network manifest; returns the network with its data map.

    Fields: name, kind ("mlp" or "table"), events, outcomes, labels;
    mlp adds input_dim, hidden, activation; table adds rows.
    bindings maps ground terms to "vec:[...]", "idx:<path>#<row>",
    or "grid:<csv path>" (paths relative to the manifest).
    """
    path = Path(path)
    with open(path) as f:
        doc = json.load(f)
    kind = doc.get("kind", "mlp")
    spec = NetSpec(
        name=doc["name"],
        input_dim=int(doc.get("input_dim", 0)),
        hidden=tuple(doc.get("hidden", ())),
        activation=doc.get("activation", "relu"),
        events=int(doc["events"]),
        outcomes=int(doc["outcomes"]),
        labels=tuple(str(v) for v in doc["labels"]),
    )
    if kind == "table":
        net = TableNet(spec, doc.get("rows"), doc.get("rows_by_term"))
    elif kind == "mlp":
        net = Mlp(spec, seed=seed)
    else:
        raise NetError(f"{path}: unknown network kind {kind!r}")
    data = {}
    idx_cache = {}
    for term, value in doc.get("bindings", {}).items():
        data[term] = _resolve_binding(value, path.parent, idx_cache)
    return NetworkBundle(spec, net, data)
