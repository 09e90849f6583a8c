import math

import numpy as np
import pytest

from digitlaw.imaging import ImageTensor, Scale
from digitlaw.tinynet import (
    Adam,
    CheckpointError,
    Conv2D,
    Dense,
    EpochStats,
    Flatten,
    MaxPool2,
    Model,
    ReLU,
    SGDMomentum,
    Softmax,
    TrainConfig,
    build_classifier,
    forward,
    forward_batch,
    grad_input,
    load_checkpoint,
    loss,
    predict,
    save_checkpoint,
    train,
)
from oracles import (
    fd_input_gradient,
    fd_param_gradient,
    naive_model_forward,
    relative_error,
)


def img(arr):
    return ImageTensor(np.asarray(arr, dtype=np.float64), Scale.DERIVED)


def small_conv_model(rng_seed=0):
    rng = np.random.default_rng(rng_seed)
    layers = [
        Conv2D(1, 2, rng),
        ReLU(),
        MaxPool2(),
        Flatten(),
        Dense(32, 3, rng),
        Softmax(),
    ]
    return Model(layers=layers, input_shape=(8, 8, 1), num_classes=3)


def architecture_matrix():
    """A spread of small architectures for contract and gradient checks."""
    rng = np.random.default_rng(99)
    models = []
    # dense only
    models.append(
        Model(
            layers=[Flatten(), Dense(12, 8, rng), ReLU(), Dense(8, 2, rng), Softmax()],
            input_shape=(2, 2, 3),
            num_classes=2,
        )
    )
    # single conv, no pooling
    models.append(
        Model(
            layers=[Conv2D(1, 3, rng), ReLU(), Flatten(), Dense(48, 4, rng), Softmax()],
            input_shape=(4, 4, 1),
            num_classes=4,
        )
    )
    # conv + pool + dense, RGB input
    models.append(
        Model(
            layers=[
                Conv2D(3, 4, rng),
                ReLU(),
                MaxPool2(),
                Flatten(),
                Dense(36, 10, rng),
                ReLU(),
                Dense(10, 3, rng),
                Softmax(),
            ],
            input_shape=(6, 6, 3),
            num_classes=3,
        )
    )
    # two conv blocks
    models.append(build_classifier((8, 8, 1), 5, conv_channels=(2, 4), dense_units=(6,), rng_seed=7))
    return models


class TestModelConstruction:
    def test_rejects_missing_softmax(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="softmax"):
            Model(layers=[Flatten(), Dense(4, 2, rng)], input_shape=(2, 2, 1), num_classes=2)

    def test_rejects_shape_mismatch_between_layers(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            Model(
                layers=[Flatten(), Dense(5, 2, rng), Softmax()],
                input_shape=(2, 2, 1),
                num_classes=2,
            )

    def test_rejects_wrong_head_width(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="expected"):
            Model(
                layers=[Flatten(), Dense(4, 3, rng), Softmax()],
                input_shape=(2, 2, 1),
                num_classes=2,
            )

    def test_build_classifier_desk_architecture(self):
        model = build_classifier((28, 28, 1), 10)
        kinds = [layer.kind for layer in model.layers]
        assert kinds == [
            "conv2d",
            "relu",
            "maxpool2",
            "conv2d",
            "relu",
            "maxpool2",
            "flatten",
            "dense",
            "relu",
            "dense",
            "softmax",
        ]


class TestForward:
    def test_zero_head_gives_uniform_probabilities(self):
        model = small_conv_model()
        head = model.layers[-2]
        head.set_param("weights", np.zeros_like(head.weights))
        head.set_param("bias", np.zeros_like(head.bias))
        probs = forward(model, img(np.random.default_rng(1).uniform(0, 1, (8, 8, 1))))
        assert np.allclose(probs, 1.0 / 3.0, atol=1e-12)

    def test_argmax_invariant_under_logit_shift(self):
        model = small_conv_model(3)
        x = img(np.random.default_rng(2).uniform(0, 1, (8, 8, 1)))
        before = predict(model, x)
        head = model.layers[-2]
        head.set_param("bias", head.bias + 11.25)
        assert predict(model, x) == before

    def test_matches_naive_oracle(self):
        model = small_conv_model(5)
        rng = np.random.default_rng(6)
        for _ in range(5):
            x = rng.uniform(-1.0, 1.0, (8, 8, 1))
            got = forward(model, img(x))
            want = naive_model_forward(model, x)
            assert np.allclose(got, want, atol=1e-10)

    def test_matrix_matches_naive_oracle(self):
        rng = np.random.default_rng(7)
        for model in architecture_matrix():
            x = rng.uniform(-1.0, 1.0, model.input_shape)
            assert np.allclose(forward(model, img(x)), naive_model_forward(model, x), atol=1e-10)

    def test_probability_vector_invariants(self):
        rng = np.random.default_rng(8)
        for model in architecture_matrix():
            for _ in range(3):
                probs = forward(model, img(rng.uniform(-2.0, 2.0, model.input_shape)))
                assert np.all(probs > 0.0)
                assert abs(probs.sum() - 1.0) < 1e-9

    def test_shape_mismatch_rejected(self):
        model = small_conv_model()
        with pytest.raises(ValueError, match="does not match"):
            forward(model, img(np.zeros((7, 8, 1))))
        with pytest.raises(ValueError, match="does not match"):
            forward_batch(model, np.zeros((2, 8, 8, 3)))


class TestLoss:
    def test_certain_prediction_gives_zero_loss(self):
        rng = np.random.default_rng(0)
        model = Model(
            layers=[Flatten(), Dense(1, 3, rng), Softmax()],
            input_shape=(1, 1, 1),
            num_classes=3,
        )
        dense = model.layers[1]
        dense.set_param("weights", np.zeros_like(dense.weights))
        dense.set_param("bias", np.array([40.0, 0.0, 0.0]))
        assert loss(model, img(np.ones((1, 1, 1))), 0) == 0.0

    def test_uniform_probabilities_give_log_k(self):
        model = build_classifier((8, 8, 1), 10, conv_channels=(2,), dense_units=(4,), rng_seed=1)
        head = model.layers[-2]
        head.set_param("weights", np.zeros_like(head.weights))
        head.set_param("bias", np.zeros_like(head.bias))
        value = loss(model, img(np.random.default_rng(3).uniform(0, 1, (8, 8, 1))), 7)
        assert value == pytest.approx(math.log(10.0), abs=1e-12)

    def test_matches_oracle_forward(self):
        model = small_conv_model(11)
        rng = np.random.default_rng(12)
        x = rng.uniform(-1.0, 1.0, (8, 8, 1))
        for label in range(3):
            want = -math.log(naive_model_forward(model, x)[label])
            assert loss(model, img(x), label) == pytest.approx(want, abs=1e-10)

    def test_invalid_label_rejected(self):
        model = small_conv_model()
        x = img(np.zeros((8, 8, 1)))
        with pytest.raises(ValueError, match="label"):
            loss(model, x, 3)
        with pytest.raises(ValueError, match="label"):
            loss(model, x, -1)


class TestGradInput:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(21)
        for model in architecture_matrix()[:3]:
            x = rng.uniform(-1.0, 1.0, model.input_shape)
            label = int(rng.integers(model.num_classes))
            analytic = grad_input(model, img(x), label).data
            coords = [
                tuple(int(v) for v in (rng.integers(s) for s in x.shape)) for _ in range(40)
            ]
            fd = fd_input_gradient(model, x, label, coords)
            worst = max(relative_error(analytic[idx], fd[idx]) for idx in fd)
            assert worst < 1e-4

    def test_zero_head_gives_zero_input_gradient(self):
        model = small_conv_model(31)
        head = model.layers[-2]
        head.set_param("weights", np.zeros_like(head.weights))
        x = img(np.random.default_rng(32).uniform(0, 1, (8, 8, 1)))
        g = grad_input(model, x, 1)
        assert np.all(g.data == 0.0)

    def test_gradient_shape_matches_input(self):
        rng = np.random.default_rng(33)
        for model in architecture_matrix():
            x = img(rng.uniform(0, 1, model.input_shape))
            g = grad_input(model, x, 0)
            assert g.shape == tuple(model.input_shape)

    def test_param_gradients_match_finite_differences(self):
        rng = np.random.default_rng(41)
        from digitlaw.tinynet.network import batch_loss_and_grads

        for model in architecture_matrix()[:3]:
            x = rng.uniform(-1.0, 1.0, model.input_shape)
            label = int(rng.integers(model.num_classes))
            _, _, grads = batch_loss_and_grads(model, x[None], np.array([label]))
            for i, layer in enumerate(model.layers):
                for name, arr in layer.params().items():
                    flat_coords = rng.integers(arr.size, size=min(10, arr.size))
                    coords = [np.unravel_index(c, arr.shape) for c in flat_coords]
                    fd = fd_param_gradient(model, x, label, arr, coords)
                    for idx, fd_value in fd.items():
                        assert relative_error(grads[i][name][idx], fd_value) < 1e-4


class TestMaxPoolDetails:
    def test_odd_dimensions_are_truncated(self):
        pool = MaxPool2()
        x = np.arange(25, dtype=np.float64).reshape(1, 5, 5, 1)
        y, cache = pool.forward(x)
        assert y.shape == (1, 2, 2, 1)
        dx, _ = pool.backward(np.ones_like(y), cache)
        assert dx.shape == x.shape
        assert np.all(dx[:, 4, :, :] == 0.0)
        assert np.all(dx[:, :, 4, :] == 0.0)
        assert dx.sum() == 4.0

    def test_tie_routes_to_first_window_element(self):
        pool = MaxPool2()
        x = np.ones((1, 2, 2, 1))
        y, cache = pool.forward(x)
        dx, _ = pool.backward(np.full((1, 1, 1, 1), 5.0), cache)
        assert dx[0, 0, 0, 0] == 5.0
        assert dx.sum() == 5.0


class TestSoftmaxLayer:
    def test_backward_matches_numerical_jacobian(self):
        sm = Softmax()
        rng = np.random.default_rng(50)
        z = rng.uniform(-2, 2, (1, 5))
        dout = rng.uniform(-1, 1, (1, 5))
        _, cache = sm.forward(z)
        dz, _ = sm.backward(dout, cache)
        h = 1e-6
        for i in range(5):
            zp = z.copy()
            zp[0, i] += h
            zm = z.copy()
            zm[0, i] -= h
            fd = ((sm.forward(zp)[0] - sm.forward(zm)[0]) / (2 * h) * dout).sum()
            assert dz[0, i] == pytest.approx(fd, abs=1e-6)


def blob_dataset(n=200, rng_seed=0):
    """Linearly separable 6x6 images: class decides which half is bright."""
    rng = np.random.default_rng(rng_seed)
    images = np.zeros((n, 6, 6, 1))
    labels = np.zeros(n, dtype=np.int64)
    for i in range(n):
        label = i % 2
        noise = rng.normal(0.0, 0.05, (6, 6, 1))
        base = np.zeros((6, 6, 1))
        if label == 0:
            base[:3] = 0.8
        else:
            base[3:] = 0.8
        images[i] = np.clip(base + noise, 0.0, 1.0)
        labels[i] = label
    return images, labels


def blob_model(rng_seed=0):
    rng = np.random.default_rng(rng_seed)
    return Model(
        layers=[Flatten(), Dense(36, 16, rng), ReLU(), Dense(16, 2, rng), Softmax()],
        input_shape=(6, 6, 1),
        num_classes=2,
    )


class TestTrain:
    def test_separable_blobs_reach_95_percent(self):
        images, labels = blob_dataset()
        model = blob_model()
        model, history = train(model, images, labels, TrainConfig(epochs=10, batch_size=32, rng_seed=1))
        assert history[-1].accuracy >= 0.95

    def test_first_epoch_strictly_reduces_loss(self):
        images, labels = blob_dataset(rng_seed=5)
        model = blob_model(5)
        from digitlaw.tinynet.network import forward_batch as fb

        def full_loss(m):
            probs = fb(m, images)
            return float(-np.log(probs[np.arange(len(labels)), labels]).mean())

        before = full_loss(model)
        model, _ = train(model, images, labels, TrainConfig(epochs=1, batch_size=32, rng_seed=2))
        assert full_loss(model) < before

    def test_zero_learning_rate_leaves_parameters_unchanged(self):
        images, labels = blob_dataset(rng_seed=6)
        model = blob_model(6)
        snapshot = [(i, n, a.copy()) for i, n, a in model.parameter_arrays()]
        config = TrainConfig(optimizer=Adam(lr=0.0), epochs=3, batch_size=16, rng_seed=3)
        model, _ = train(model, images, labels, config)
        for i, name, before in snapshot:
            assert np.array_equal(dict(model.layers[i].params())[name], before)

    def test_same_seed_gives_bit_identical_parameters(self):
        images, labels = blob_dataset(rng_seed=7)
        results = []
        for _ in range(2):
            model = blob_model(7)
            model, history = train(model, images, labels, TrainConfig(epochs=3, batch_size=16, rng_seed=4))
            results.append(([a.copy() for _, _, a in model.parameter_arrays()], history))
        for a, b in zip(results[0][0], results[1][0]):
            assert np.array_equal(a, b)
        assert results[0][1] == results[1][1]

    def test_sgd_momentum_trains(self):
        images, labels = blob_dataset(rng_seed=8)
        model = blob_model(8)
        config = TrainConfig(optimizer=SGDMomentum(lr=0.05, momentum=0.9), epochs=10, batch_size=32, rng_seed=5)
        model, history = train(model, images, labels, config)
        assert history[-1].accuracy >= 0.9

    def test_empty_dataset_rejected(self):
        model = blob_model()
        with pytest.raises(ValueError, match="empty"):
            train(model, np.zeros((0, 6, 6, 1)), np.zeros(0, dtype=np.int64), TrainConfig(epochs=1))

    def test_invalid_labels_rejected(self):
        model = blob_model()
        images = np.zeros((4, 6, 6, 1))
        with pytest.raises(ValueError, match="labels"):
            train(model, images, np.array([0, 1, 2, 0]), TrainConfig(epochs=1))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            Adam(lr=-1.0)
        with pytest.raises(ValueError):
            Adam(beta1=1.0)
        with pytest.raises(ValueError):
            SGDMomentum(momentum=1.0)

    def test_history_shape(self):
        images, labels = blob_dataset(n=20, rng_seed=9)
        model = blob_model(9)
        _, history = train(model, images, labels, TrainConfig(epochs=4, batch_size=8, rng_seed=6))
        assert [h.epoch for h in history] == [1, 2, 3, 4]
        assert all(isinstance(h, EpochStats) for h in history)


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        model = build_classifier((8, 8, 1), 4, conv_channels=(3,), dense_units=(5,), rng_seed=13)
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.input_shape == model.input_shape
        assert loaded.num_classes == model.num_classes
        for (_, _, a), (_, _, b) in zip(model.parameter_arrays(), loaded.parameter_arrays()):
            assert np.array_equal(a, b)
        x = img(np.random.default_rng(14).uniform(0, 1, (8, 8, 1)))
        assert np.array_equal(forward(model, x), forward(loaded, x))

    def test_truncated_file_rejected(self, tmp_path):
        model = build_classifier((8, 8, 1), 2, conv_channels=(2,), dense_units=(3,), rng_seed=15)
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        blob = path.read_bytes()
        truncated = tmp_path / "broken.ckpt"
        truncated.write_bytes(blob[: len(blob) - 64])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(truncated)

    def test_unknown_layer_kind_rejected(self, tmp_path):
        model = build_classifier((8, 8, 1), 2, conv_channels=(2,), dense_units=(3,), rng_seed=16)
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        blob = path.read_bytes().replace(b'"kind": "dense"', b'"kind": "dance"')
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(blob)
        with pytest.raises(CheckpointError, match="unknown layer kind"):
            load_checkpoint(bad)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        model = build_classifier((8, 8, 1), 2, conv_channels=(2,), dense_units=(3,), rng_seed=17)
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(path.read_bytes() + b"\x00" * 8)
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(bad)
