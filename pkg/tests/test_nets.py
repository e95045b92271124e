import numpy as np
import pytest

from pda_kit.errors import ContractViolation, DimensionError
from pda_kit.nets import (
    ClassifierBank,
    Mlp,
    MlpSpec,
    forward_features,
    forward_head,
    load_checkpoint,
    predict,
    predict_batch,
    save_checkpoint,
)
from pda_kit.optim import Adam
from pda_kit.tensor import Tensor
from pda_kit.losses import target_ce

from oracles import check_gradients


class TestMlpSpec:
    def test_needs_two_widths(self):
        with pytest.raises(ContractViolation):
            MlpSpec((4,))

    def test_positive_widths(self):
        with pytest.raises(ContractViolation):
            MlpSpec((4, 0, 2))


class TestInit:
    def test_seed_determinism(self):
        spec = MlpSpec((3, 8, 4))
        a = Mlp(spec, seed=11)
        b = Mlp(spec, seed=11)
        for pa, pb in zip(a.params(), b.params()):
            assert np.array_equal(pa.data, pb.data)

    def test_different_seeds_differ(self):
        spec = MlpSpec((3, 8, 4))
        a, b = Mlp(spec, seed=1), Mlp(spec, seed=2)
        assert not np.array_equal(a.weights[0].data, b.weights[0].data)

    def test_weight_distribution(self):
        # one 100x1000 layer gives 1e5 draws from N(0, 0.05)
        net = Mlp(MlpSpec((100, 1000)), seed=5)
        w = net.weights[0].data.ravel()
        assert abs(w.mean()) < 3 * 0.05 / np.sqrt(w.size)
        assert abs(w.std() - 0.05) / 0.05 < 0.02

    def test_biases_zero(self):
        net = Mlp(MlpSpec((3, 8, 4)), seed=0)
        for b in net.biases:
            assert np.all(b.data == 0.0)


class TestForward:
    def test_zero_input_zero_bias_gives_zero_features(self):
        net = Mlp(MlpSpec((3, 5, 4)), seed=0, activate_final=True)
        out = forward_features(net, Tensor(np.zeros((2, 3))))
        assert np.all(out.data == 0.0)

    def test_identity_passthrough_on_positive_inputs(self):
        net = Mlp(MlpSpec((3, 3)), seed=0, activate_final=True)
        net.weights[0].data = np.eye(3)
        x = np.array([[0.5, 2.0, 1.0]])
        out = net(Tensor(x))
        assert np.allclose(out.data, x)

    def test_width_mismatch(self):
        net = Mlp(MlpSpec((3, 4)), seed=0)
        with pytest.raises(DimensionError):
            net(Tensor(np.ones((2, 5))))

    def test_feature_gradient_matches_finite_differences(self):
        net = Mlp(MlpSpec((3, 5, 4)), seed=3, activate_final=True)
        x = Tensor(np.random.default_rng(0).normal(size=(6, 3)))
        err = check_gradients(lambda: net(x).mean(), net.params())
        assert err < 1e-4

    def test_forward_bit_reproducible(self):
        x = np.random.default_rng(1).normal(size=(4, 3))
        outs = []
        for _ in range(2):
            bank = ClassifierBank(input_dim=3, num_classes=4, seed=9)
            feats = bank.features(Tensor(x))
            _, probs = forward_head(bank.heads[0], feats)
            outs.append(probs.data)
        assert np.array_equal(outs[0], outs[1])


class TestForwardHead:
    def test_zero_features_zero_head_uniform(self):
        head = Mlp(MlpSpec((4, 5)), seed=0)
        head.weights[0].data = np.zeros((4, 5))
        _, probs = forward_head(head, Tensor(np.zeros((3, 4))))
        assert np.allclose(probs.data, 0.2)

    def test_rows_sum_to_one(self):
        head = Mlp(MlpSpec((4, 6, 5)), seed=2)
        x = Tensor(np.random.default_rng(4).normal(size=(7, 4)))
        _, probs = forward_head(head, x)
        assert np.all(np.abs(probs.data.sum(axis=1) - 1.0) <= 1e-12)

    def test_argmax_consistent_with_logits(self):
        head = Mlp(MlpSpec((4, 6, 5)), seed=2)
        x = Tensor(np.random.default_rng(4).normal(size=(7, 4)))
        logits, probs = forward_head(head, x)
        assert np.array_equal(
            np.argmax(logits.data, axis=1), np.argmax(probs.data, axis=1)
        )


class TestPredict:
    def test_argmax_class(self):
        # craft a head whose bias fixes the logits, input-independent
        extractor = Mlp(MlpSpec((2, 3)), seed=0, activate_final=True)
        for w in extractor.weights:
            w.data[...] = 0.0
        head = Mlp(MlpSpec((3, 3)), seed=0)
        head.weights[0].data[...] = 0.0
        head.biases[0].data = np.log(np.array([0.1, 0.7, 0.2]))
        assert predict(extractor, head, Tensor([[1.0, -1.0]])) == 1

    def test_tie_breaks_to_lowest_index(self):
        extractor = Mlp(MlpSpec((2, 3)), seed=0, activate_final=True)
        head = Mlp(MlpSpec((3, 2)), seed=0)
        for net in (extractor, head):
            for p in net.params():
                p.data[...] = 0.0
        assert predict(extractor, head, Tensor([[0.3, 0.4]])) == 0

    def test_separable_toy_set_reaches_perfect_accuracy(self):
        r = np.random.default_rng(0)
        x0 = r.normal((-4.0, -4.0), 0.5, size=(30, 2))
        x1 = r.normal((4.0, 4.0), 0.5, size=(30, 2))
        x = np.vstack([x0, x1])
        y = np.array([0] * 30 + [1] * 30)
        extractor = Mlp(MlpSpec((2, 8)), seed=1, activate_final=True)
        head = Mlp(MlpSpec((8, 2)), seed=2)
        opt = Adam(
            extractor.named_params("F.") + head.named_params("C."), lr=0.05
        )
        for _ in range(150):
            opt.zero_grad()
            _, probs = forward_head(head, extractor(Tensor(x)))
            target_ce(probs, y).backward()
            opt.step()
        pred = predict_batch(extractor, head, Tensor(x))
        assert np.array_equal(pred, y)


class TestBank:
    def test_heads_share_architecture(self):
        bank = ClassifierBank(input_dim=3, num_classes=4, num_heads=4, seed=0)
        for head in bank.heads[1:]:
            assert head.spec == bank.heads[0].spec

    def test_heads_initialized_independently(self):
        bank = ClassifierBank(input_dim=3, num_classes=4, seed=0)
        assert not np.array_equal(
            bank.heads[0].weights[0].data, bank.heads[1].weights[0].data
        )

    def test_head_output_width_is_source_classes(self):
        bank = ClassifierBank(input_dim=3, num_classes=7, seed=0)
        for head in bank.heads:
            assert head.spec.layer_widths[-1] == 7

    def test_minimum_heads_enforced(self):
        with pytest.raises(ContractViolation):
            ClassifierBank(input_dim=3, num_classes=4, num_heads=2, seed=0)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        bank = ClassifierBank(input_dim=5, num_classes=3, num_heads=4, seed=42)
        # dirty the parameters so we're not just testing init determinism
        r = np.random.default_rng(1)
        for _, p in bank.named_params():
            p.data += r.normal(size=p.data.shape)
        path = tmp_path / "bank.npz"
        save_checkpoint(bank, path)
        loaded = load_checkpoint(path)
        assert loaded.num_heads == bank.num_heads
        for (na, pa), (nb, pb) in zip(bank.named_params(), loaded.named_params()):
            assert na == nb
            assert np.array_equal(pa.data, pb.data)

    def test_loaded_bank_forward_matches(self, tmp_path):
        bank = ClassifierBank(input_dim=4, num_classes=3, seed=7)
        path = tmp_path / "bank.npz"
        save_checkpoint(bank, path)
        loaded = load_checkpoint(path)
        x = Tensor(np.random.default_rng(2).normal(size=(5, 4)))
        a = forward_head(bank.heads[1], bank.features(x))[1].data
        b = forward_head(loaded.heads[1], loaded.features(x))[1].data
        assert np.array_equal(a, b)
