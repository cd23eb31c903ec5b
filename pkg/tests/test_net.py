"""Network tests: MLP forward/backward, weight files, IDX, manifests."""

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from deepasp.net import (
    Mlp, NetError, NetSpec, NetworkBundle, TableNet, apply_params, load_idx,
    load_manifest, load_params, save_idx, save_params,
)


def mlp(outcomes=3, events=1, hidden=(8,), seed=0, input_dim=5):
    labels = tuple(str(i) for i in range(outcomes))
    spec = NetSpec("m", input_dim, hidden, "relu", events, outcomes, labels)
    return Mlp(spec, seed=seed)


class TestForward:
    def test_rows_are_distributions(self):
        net = mlp(outcomes=4, events=3)
        out = net.forward(np.ones(5))
        assert out.shape == (3, 4)
        assert np.all(out > 0)
        assert np.allclose(out.sum(axis=1), 1.0, atol=1e-9)

    def test_seeded_init_deterministic(self):
        a = mlp(seed=7).forward(np.ones(5))
        b = mlp(seed=7).forward(np.ones(5))
        assert np.array_equal(a, b)

    def test_bad_input_shape(self):
        with pytest.raises(NetError):
            mlp().forward(np.ones(4))


class TestBackward:
    def _logp_factory(self, net, x, j):
        def logp():
            return float(np.log(net.forward(x)[0, j]))
        return logp

    def test_two_outcome_conventions_coincide(self):
        # the semantic gradient for a 2-outcome row is antisymmetric
        # (G2 = -G1); on such upstreams the diagonal and halved-Jacobian
        # forms agree exactly
        net = mlp(outcomes=2)
        x = np.linspace(0, 1, 5)
        upstream = np.array([[3.0, -3.0]])
        net.forward(x)
        g = net.backward(upstream, "softmax-jacobian")
        net.forward(x)
        g2 = net.backward(upstream, "diagonal")
        for k in g:
            assert np.allclose(g[k], g2[k], atol=1e-12)

    def test_exact_gradient_matches_finite_differences(self):
        # d log p_j / d theta via the halved-Jacobian path, with the
        # upstream built the way the semantic gradient builds it:
        # 1/p_j for the selected outcome, -1/p_j for its siblings
        net = mlp(outcomes=4, hidden=(6, 5))
        x = np.linspace(-1, 1, 5)
        j = 2
        p = net.forward(x)
        upstream = np.full((1, 4), -1.0 / p[0, j])
        upstream[0, j] = 1.0 / p[0, j]
        net.forward(x)
        grads = net.backward(upstream, "softmax-jacobian")
        logp = self._logp_factory(net, x, j)
        eps = 1e-6
        for name, arr in net.params.items():
            for fi in range(0, arr.size, max(1, arr.size // 5)):
                idx = np.unravel_index(fi, arr.shape)
                orig = arr[idx]
                arr[idx] = orig + eps
                up = logp()
                arr[idx] = orig - eps
                dn = logp()
                arr[idx] = orig
                fd = (up - dn) / (2 * eps)
                assert grads[name][idx] == pytest.approx(fd, abs=1e-5)

    def test_backward_requires_forward(self):
        with pytest.raises(NetError):
            mlp().backward(np.zeros((1, 3)))

    def test_step_is_ascent(self):
        net = mlp(outcomes=2)
        x = np.ones(5)
        p0 = net.forward(x)[0, 0]
        upstream = np.array([[1.0 / p0, -1.0 / p0]])
        net.forward(x)
        net.step(net.backward(upstream, "softmax-jacobian"), lr=0.5)
        assert net.forward(x)[0, 0] > p0


class TestTableNet:
    def test_fixed_rows(self):
        spec = NetSpec("t", 0, (), "relu", 1, 2, ("a", "b"))
        net = TableNet(spec, rows=[[0.3, 0.7]])
        assert np.allclose(net.forward(), [[0.3, 0.7]])
        assert not net.trainable

    def test_rows_by_term(self):
        spec = NetSpec("t", 0, (), "relu", 1, 2, ("a", "b"))
        net = TableNet(spec, rows_by_term={
            "x": [[0.2, 0.8]], "y": [[0.6, 0.4]],
        })
        assert np.allclose(net.forward("x"), [[0.2, 0.8]])
        assert np.allclose(net.forward("y"), [[0.6, 0.4]])


class TestWeightFiles:
    def test_roundtrip(self, tmp_path):
        net = mlp(hidden=(7, 4), seed=3)
        path = tmp_path / "w.bin"
        save_params(net.params, path)
        loaded = load_params(path)
        assert set(loaded) == set(net.params)
        for k in loaded:
            assert np.array_equal(loaded[k], net.params[k])

    def test_apply_params_shape_check(self, tmp_path):
        net = mlp(hidden=(7,))
        other = mlp(hidden=(9,))
        path = tmp_path / "w.bin"
        save_params(other.params, path)
        with pytest.raises(NetError):
            apply_params(net, load_params(path))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.bin"
        path.write_bytes(b"GARBAGE!")
        with pytest.raises(NetError):
            load_params(path)


class TestIdx:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.random((12, 16))
        labels = rng.integers(0, 10, 12)
        ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
        save_idx(images, labels, ip, lp)
        got_i, got_l = load_idx(ip, lp)
        assert got_i.shape == (12, 16)
        assert np.max(np.abs(got_i - images)) <= 1 / 255
        assert np.array_equal(got_l, labels)

    def test_magic_numbers(self, tmp_path):
        images = np.zeros((2, 9))
        labels = np.zeros(2, dtype=np.int64)
        ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
        save_idx(images, labels, ip, lp)
        assert ip.read_bytes()[:4] == (0x00000803).to_bytes(4, "big")
        assert lp.read_bytes()[:4] == (0x00000801).to_bytes(4, "big")


class TestManifests:
    def test_table_manifest(self, tmp_path):
        doc = {
            "name": "m", "kind": "table", "events": 1, "outcomes": 2,
            "labels": ["a", "b"], "rows": [[0.25, 0.75]],
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        bundle = load_manifest(path)
        assert np.allclose(bundle.net.forward(), [[0.25, 0.75]])

    def test_mlp_manifest_with_vec_binding(self, tmp_path):
        doc = {
            "name": "m", "kind": "mlp", "input_dim": 3, "hidden": [4],
            "activation": "relu", "events": 1, "outcomes": 2,
            "labels": ["a", "b"], "bindings": {"t": "vec:[0.1, 0.2, 0.3]"},
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        bundle = load_manifest(path, seed=1)
        assert bundle.input_for("t").shape == (3,)
        assert bundle.net.trainable

    def test_idx_binding(self, tmp_path):
        rng = np.random.default_rng(1)
        images = rng.random((3, 4))
        labels = np.zeros(3, dtype=np.int64)
        save_idx(images, labels, tmp_path / "images.idx",
                 tmp_path / "labels.idx")
        doc = {
            "name": "m", "kind": "mlp", "input_dim": 4, "hidden": [],
            "activation": "relu", "events": 1, "outcomes": 2,
            "labels": ["a", "b"], "bindings": {"t": "idx:images.idx#1"},
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        bundle = load_manifest(path)
        assert np.max(np.abs(bundle.input_for("t") - images[1])) <= 1 / 255

    def test_missing_binding_raises(self):
        spec = NetSpec("m", 2, (), "relu", 1, 2, ("a", "b"))
        bundle = NetworkBundle(spec, Mlp(spec))
        with pytest.raises(NetError):
            bundle.input_for("nope")


@given(st.integers(2, 6), st.integers(1, 3))
def test_forward_rows_always_normalized(outcomes, events):
    net = mlp(outcomes=outcomes, events=events)
    out = net.forward(np.linspace(-2, 2, 5))
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-9)
