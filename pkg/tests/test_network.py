"""Repeated-block nets: taps, channels-as-samples, entropy op, checkpoints."""

import numpy as np
import pytest

from eloss import autodiff as ad
from eloss.autodiff import Tensor
from eloss.entropy import entropy_kl
from eloss.losses import build_profile
from eloss.network import (RepeatedBlockNet, TapPoint, channel_entropy,
                           feature_to_samples, load_checkpoint,
                           per_sample_profiles, profile_from_taps,
                           save_checkpoint)


class TestFeatureToSamples:
    def test_conv_map_shape(self):
        sm = feature_to_samples(np.zeros((4, 2, 3)))
        assert (sm.n, sm.d) == (4, 6)

    def test_minimal_matrix(self):
        sm = feature_to_samples(np.array([[1.0], [2.0]]))
        assert (sm.n, sm.d) == (2, 1)

    def test_vector_becomes_column(self):
        sm = feature_to_samples(np.array([1.0, 2.0, 3.0]))
        assert (sm.n, sm.d) == (3, 1)

    def test_row_major_layout(self):
        rng = np.random.default_rng(0)
        feat = rng.normal(size=(3, 4, 5))
        sm = feature_to_samples(feat)
        for c in range(3):
            for h in range(4):
                for w in range(5):
                    assert sm.data[c][h * 5 + w] == feat[c][h][w]

    def test_single_channel_rejected(self):
        with pytest.raises(ValueError):
            feature_to_samples(np.zeros((1, 2, 2)))


class TestChannelEntropy:
    def test_matches_reference_per_sample(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(6, 10, 3, 3))
        for k in (1, 2, 4):
            got = channel_entropy(Tensor(x), k=k).values
            want = [entropy_kl(feature_to_samples(x[b]), k=k).value for b in range(6)]
            np.testing.assert_array_equal(got, want)

    def test_matches_reference_large_d(self):
        # gram-matrix fast path has ~1e-9 relative cancellation error
        rng = np.random.default_rng(8)
        x = rng.normal(size=(4, 12, 10, 10))
        got = channel_entropy(Tensor(x), k=2).values
        want = [entropy_kl(feature_to_samples(x[b]), k=2).value for b in range(4)]
        np.testing.assert_allclose(got, want, rtol=1e-8)

    def test_mlp_features(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(4, 16))
        got = channel_entropy(Tensor(x), k=1).values
        want = [entropy_kl(feature_to_samples(x[b]), k=1).value for b in range(4)]
        np.testing.assert_array_equal(got, want)

    def test_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(3, 6, 2, 2))
        t = Tensor(x, requires_grad=True)
        ad.backward(ad.mean(channel_entropy(t, k=1)))
        h = 1e-5

        def f(v):
            return float(np.mean(channel_entropy(Tensor(v), k=1).values))

        fd = np.zeros_like(x)
        it = np.nditer(x, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd[i] = (f(xp) - f(xm)) / (2 * h)
        rel = np.max(np.abs(t.grad - fd)) / np.max(np.abs(fd))
        assert rel < 1e-4

    def test_clamped_pairs_have_zero_gradient(self):
        # two coincident channels sit on the flat clamped region
        x = np.zeros((1, 3, 2))
        x[0, 2] = [5.0, 5.0]
        t = Tensor(x, requires_grad=True)
        ad.backward(ad.mean(channel_entropy(t, k=1)))
        np.testing.assert_array_equal(t.grad[0, :2], 0.0)


def _mlp(coverage=0, seed=0, blocks=3):
    return RepeatedBlockNet("mlp", in_shape=(12,), n_classes=4, blocks=blocks,
                            width=12, eloss_coverage=coverage, seed=seed)


def _convnet(coverage=0, seed=0):
    return RepeatedBlockNet("conv", in_shape=(3, 8, 8), n_classes=4,
                            width=8, eloss_coverage=coverage, seed=seed)


class TestForwardAndTaps:
    def test_identity_initialized_block_is_identity(self):
        net = RepeatedBlockNet("mlp", in_shape=(5,), n_classes=5, blocks=1,
                               width=5, layers_per_block=1, seed=0)
        for p in net.parameters().values():
            p.values = (np.eye(5) if p.values.ndim == 2 else np.zeros_like(p.values))
        x = np.abs(np.random.default_rng(0).normal(size=(3, 5)))  # ReLU-safe
        out, _ = net.forward(Tensor(x))
        np.testing.assert_allclose(out.values, x, atol=1e-12)

    def test_zero_coverage_no_taps(self):
        out, taps = _convnet(coverage=0).forward(np.zeros((2, 3, 8, 8)))
        assert taps == []

    def test_coverage_two_gives_three_taps(self):
        _, taps = _convnet(coverage=2).forward(np.zeros((2, 3, 8, 8)))
        assert len(taps) == 3
        assert [t.block_index for t in taps] == [0, 1, 2]

    def test_full_coverage_taps(self):
        _, taps = _mlp(coverage=3).forward(np.zeros((2, 12)))
        assert [t.name for t in taps] == ["input", "block1", "block2", "block3"]

    def test_tap_transparency(self):
        x = np.random.default_rng(4).normal(size=(5, 3, 8, 8))
        net = _convnet(coverage=0, seed=9)
        out0, _ = net.forward(x)
        out3, taps = net.forward(x, coverage=3)
        assert np.max(np.abs(out0.values - out3.values)) == 0.0
        assert len(taps) == 4

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            _convnet().forward(np.zeros((2, 3, 9, 9)))

    def test_forward_deterministic(self):
        net = _convnet(seed=3)
        x = np.random.default_rng(5).normal(size=(2, 3, 8, 8))
        a, _ = net.forward(x)
        b, _ = net.forward(x)
        np.testing.assert_array_equal(a.values, b.values)

    def test_seeded_init_reproducible(self):
        a = _convnet(seed=11).parameters()
        b = _convnet(seed=11).parameters()
        for name in a:
            np.testing.assert_array_equal(a[name].values, b[name].values)


class TestProfiles:
    def test_iid_taps_have_small_deltas(self):
        # channels drawn from one distribution at every tap: deltas ~ 0
        rng = np.random.default_rng(6)
        draws = [rng.normal(size=(16, 25)) for _ in range(3)]
        taps = [TapPoint(f"t{i}", i, Tensor(v)) for i, v in enumerate(draws)]
        profile = profile_from_taps(taps, k=1)
        spread = np.std([entropy_kl(d, 1).value
                         for d in (rng.normal(size=(16, 25)) for _ in range(30))])
        assert all(abs(d) < 3 * 2 * spread for d in profile.deltas)

    def test_two_taps_one_delta(self):
        taps = [TapPoint("a", 0, Tensor(np.random.default_rng(0).normal(size=(4, 3)))),
                TapPoint("b", 1, Tensor(np.random.default_rng(1).normal(size=(4, 3))))]
        assert len(profile_from_taps(taps, k=1).deltas) == 1

    def test_out_of_order_taps_rejected(self):
        taps = [TapPoint("b", 1, Tensor(np.ones((4, 3)))),
                TapPoint("a", 0, Tensor(np.ones((4, 3))))]
        with pytest.raises(ValueError):
            profile_from_taps(taps, k=1)

    def test_batched_taps_give_per_sample_profiles(self):
        net = _convnet(coverage=3, seed=2)
        x = np.random.default_rng(7).normal(size=(5, 3, 8, 8))
        _, taps = net.forward(x)
        profiles = per_sample_profiles(taps, k=1)
        assert len(profiles) == 5
        # each per-sample profile matches a single-sample forward pass
        _, taps1 = net.forward(x[:1])
        single = profile_from_taps(taps1, k=1)
        assert profiles[0].taps == pytest.approx(single.taps, rel=1e-12)


class TestCheckpoints:
    def test_roundtrip(self, tmp_path):
        net = _convnet(coverage=1, seed=13)
        path = tmp_path / "ckpt.json"
        save_checkpoint(net, path)
        other = _convnet(coverage=1, seed=99)
        load_checkpoint(other, path)
        for name, p in net.parameters().items():
            np.testing.assert_array_equal(p.values, other.parameters()[name].values)

    def test_version_field(self, tmp_path):
        import json

        net = _mlp()
        path = tmp_path / "ckpt.json"
        save_checkpoint(net, path)
        doc = json.loads(path.read_text())
        assert doc["version"] == "eloss-ckpt-1"
        entry = doc["stem.0.w"]
        assert entry["shape"] == [12, 12]

    def test_wrong_version_rejected(self, tmp_path):
        import json

        net = _mlp()
        path = tmp_path / "ckpt.json"
        save_checkpoint(net, path)
        doc = json.loads(path.read_text())
        doc["version"] = "other"
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError):
            load_checkpoint(_mlp(), path)

    def test_layer_mismatch_rejected(self, tmp_path):
        net = _mlp(blocks=3)
        path = tmp_path / "ckpt.json"
        save_checkpoint(net, path)
        with pytest.raises(ValueError):
            load_checkpoint(_mlp(blocks=2), path)

    def test_values_roundtrip_bitwise(self, tmp_path):
        net = _mlp(seed=21)
        before = {n: p.values.copy() for n, p in net.parameters().items()}
        path = tmp_path / "ckpt.json"
        save_checkpoint(net, path)
        load_checkpoint(net, path)
        for name, p in net.parameters().items():
            np.testing.assert_array_equal(before[name], p.values)
