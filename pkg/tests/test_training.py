import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

import oracles
from mrinet.data import DatasetIndex, scan_dataset
from mrinet.engine import ops
from mrinet.engine.determinism import strict_mode
from mrinet.errors import ConfigError, EvaluationError, LabelError, TrainingHalted
from mrinet.graph import BACKBONE, HEAD
from mrinet.training import (
    AdamState,
    TrainConfig,
    adam_step,
    build_from_config,
    evaluate,
    predict,
    sparse_categorical_crossentropy,
    train_model,
)
from mrinet.training.loop import CSV_HEADER


def tiny_config(**overrides):
    base = dict(
        model="mobilenetv2",
        depth="reduced",
        learning_rate=1e-3,
        batch_size=8,
        epochs=2,
        seed=0,
        augment=False,
        input_size=(32, 32),
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def index(pattern_root):
    return scan_dataset(pattern_root)


@pytest.fixture(scope="module")
def trained(index):
    cfg = tiny_config(epochs=30)
    return cfg, train_model(cfg, index).graph


def zero_head(graph):
    for name in graph.param_names(HEAD):
        if name.startswith("head.logits"):
            graph.params[name] = np.zeros_like(graph.params[name])
    return graph


class TestLoss:
    def test_confident_correct(self):
        assert sparse_categorical_crossentropy(np.eye(5)[[0, 3]], np.array([0, 3])) == 0.0

    def test_uniform(self):
        loss = sparse_categorical_crossentropy(np.full((4, 5), 0.2), np.array([0, 1, 2, 4]))
        assert abs(loss - math.log(5)) < 1e-12

    def test_half(self):
        p = np.array([[0.5, 0.5, 0.0, 0.0, 0.0]])
        assert abs(sparse_categorical_crossentropy(p, np.array([1])) - math.log(2)) < 1e-12

    def test_floor(self):
        p = np.array([[1.0, 0.0, 0.0, 0.0, 0.0]])
        assert abs(sparse_categorical_crossentropy(p, np.array([2])) + math.log(1e-12)) < 1e-9

    def test_label_out_of_range(self):
        with pytest.raises(LabelError, match="1"):
            sparse_categorical_crossentropy(np.full((2, 5), 0.2), np.array([0, 5]))

    def test_fused_uniform_logits(self):
        loss, probs = ops.softmax_crossentropy(np.zeros((3, 5)), np.array([0, 2, 4]))
        assert abs(float(loss) - math.log(5)) < 1e-6
        assert np.allclose(probs, 0.2)


class TestAdam:
    def test_first_step_is_learning_rate(self):
        params = {"w": np.array([0.5])}
        adam_step(params, {"w": np.array([1.0])}, AdamState(params), lr=1e-4)
        assert abs((params["w"][0] - 0.5) + 1e-4) < 1e-11

    def test_zero_gradient(self, rng):
        w = rng.standard_normal((3, 4))
        params = {"w": w.copy()}
        state = AdamState(params)
        for _ in range(3):
            adam_step(params, {"w": np.zeros((3, 4))}, state)
        assert_array_equal(params["w"], w)
        assert state.t == 3

    def test_quadratic_trajectory_bitwise(self):
        grad = lambda th: 2.0 * (th - 3.0)  # noqa: E731
        expect = oracles.adam_scalar_reference(0.25, grad, steps=5, lr=0.1)
        params = {"theta": np.array(0.25)}
        state = AdamState(params)
        got = []
        for _ in range(5):
            adam_step(params, {"theta": np.array(grad(float(params["theta"])))}, state, lr=0.1)
            got.append(float(params["theta"]))
        assert got == expect

    def test_nan_gradient_halts_without_update(self):
        params = {"a": np.ones(2), "b": np.ones(2)}
        state = AdamState(params)
        with pytest.raises(TrainingHalted, match="b"):
            adam_step(params, {"a": np.ones(2), "b": np.array([1.0, np.nan])}, state)
        assert state.t == 0
        assert_array_equal(params["a"], np.ones(2))


class TestConfig:
    def test_defaults_follow_recipe(self):
        cfg = TrainConfig()
        assert (cfg.learning_rate, cfg.batch_size, cfg.epochs) == (1e-4, 128, 50)
        assert (cfg.beta1, cfg.beta2, cfg.epsilon) == (0.9, 0.999, 1e-8)
        assert cfg.preprocessing == "resnet_means"
        assert TrainConfig(model="mobilenetv2").preprocessing == "scale_pm1"

    def test_roundtrip(self):
        cfg = tiny_config(backbone_mode="frozen")
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize(
        "bad",
        [{"learning_rate": 0}, {"beta1": 1.0}, {"epochs": 0}, {"model": "vgg"}, {"backbone_mode": "thaw"}],
    )
    def test_invalid_values(self, bad):
        with pytest.raises(ConfigError):
            tiny_config(**bad)

    def test_unknown_keys(self):
        with pytest.raises(ConfigError, match="momentum"):
            TrainConfig.from_dict({"momentum": 0.9})
        with pytest.raises(ConfigError, match="shear"):
            TrainConfig.from_dict({"augment_params": {"shear": 0.2}})


class TestTrainModel:
    def test_fifty_epochs_fifty_rows(self, index):
        tiny = DatasetIndex(index.root, index.records[::8])
        cfg = tiny_config(epochs=50, batch_size=5)
        history = train_model(cfg, tiny).history
        assert len(history) == 50
        assert [r.epoch for r in history.rows] == list(range(1, 51))

    def test_outputs_and_csv(self, index, tmp_path):
        cfg = tiny_config(epochs=2)
        train_model(cfg, index, index, out_dir=tmp_path)
        lines = (tmp_path / "history.csv").read_text().splitlines()
        assert lines[0] == CSV_HEADER and len(lines) == 3
        assert lines[1].startswith("1,")
        for field in lines[1].split(",")[1:]:
            assert len(field.replace(".", "").replace("-", "").lstrip("0")) <= 6
        assert {p.name for p in tmp_path.iterdir()} == {"epoch_001.ckpt", "epoch_002.ckpt", "final.ckpt", "history.csv"}

    def test_strict_runs_bitwise_identical(self, index, tmp_path):
        cfg = tiny_config(epochs=2, augment=True)
        with strict_mode():
            train_model(cfg, index, index, out_dir=tmp_path / "a")
            train_model(cfg, index, index, out_dir=tmp_path / "b")
        assert (tmp_path / "a/history.csv").read_bytes() == (tmp_path / "b/history.csv").read_bytes()
        assert (tmp_path / "a/final.ckpt").read_bytes() == (tmp_path / "b/final.ckpt").read_bytes()

    def test_resume_matches_uninterrupted(self, index, tmp_path):
        cfg = tiny_config(epochs=2, augment=True)
        with strict_mode():
            full = train_model(cfg, index, out_dir=tmp_path / "full")
            train_model(cfg, index, out_dir=tmp_path / "part", max_epochs=1)
            resumed = train_model(cfg, index, out_dir=tmp_path / "part", resume_from=tmp_path / "part/epoch_001.ckpt")
        assert resumed.history.rows[-1].as_list() == full.history.rows[-1].as_list()
        assert (tmp_path / "part/history.csv").read_bytes() == (tmp_path / "full/history.csv").read_bytes()
        assert (tmp_path / "part/final.ckpt").read_bytes() == (tmp_path / "full/final.ckpt").read_bytes()

    @pytest.mark.parametrize("model", ["resnet50", "mobilenetv2"])
    def test_frozen_backbone(self, index, model):
        cfg = tiny_config(model=model, backbone_mode="frozen", epochs=2, augment=True)
        graph = build_from_config(cfg)
        bb, head = graph.checksum(BACKBONE), graph.checksum(HEAD)
        train_model(cfg, index, graph=graph)
        assert graph.checksum(BACKBONE) == bb
        assert graph.checksum(HEAD) != head

    def test_bn_infer_mode_keeps_running_stats(self, index):
        cfg = tiny_config(bn_mode="infer", epochs=1)
        graph = build_from_config(cfg)
        stats = graph.checksum(BACKBONE, include_state=True)
        params_only = graph.checksum(BACKBONE, include_state=False)
        train_model(cfg, index, graph=graph)
        state_after = {n: graph.state[n] for n in graph.state_names(BACKBONE)}
        assert all(np.all(v == (0 if n.endswith("mean") else 1)) for n, v in state_after.items())
        assert graph.checksum(BACKBONE, include_state=False) != params_only
        assert graph.checksum(BACKBONE) != stats

    def test_nan_halts_with_last_good_checkpoint(self, index, tmp_path):
        calls = {"n": 0}

        def poisoned(i):
            calls["n"] += 1
            img = np.full((32, 32, 3), 100.0, np.float32)
            return img if calls["n"] <= len(index) else img * np.nan

        cfg = tiny_config(epochs=3)
        with pytest.raises(TrainingHalted) as err:
            train_model(cfg, index, out_dir=tmp_path, loader=poisoned)
        assert err.value.last_good_checkpoint == tmp_path / "epoch_001.ckpt"
        assert (tmp_path / "epoch_001.ckpt").is_file()
        assert "epoch 2" in str(err.value)

    def test_empty_training_index(self):
        with pytest.raises(EvaluationError):
            train_model(tiny_config(), DatasetIndex(None, []))


class TestEvaluate:
    def test_memorized_set_is_diagonal(self, trained, index):
        cfg, graph = trained
        res = evaluate(graph, index, cfg)
        assert res.accuracy == 1.0
        assert_array_equal(res.confusion, np.diag(np.bincount(index.labels)))

    def test_uniform_model_tie_break(self, index):
        cfg = tiny_config()
        res = evaluate(zero_head(build_from_config(cfg)), index, cfg)
        assert res.accuracy == pytest.approx(0.2)
        assert np.all(res.confusion[:, 1:] == 0)
        assert abs(res.loss - math.log(5)) < 1e-6

    def test_accuracy_matches_confusion_identity(self, index):
        cfg = tiny_config(epochs=1)
        graph = train_model(cfg, index).graph
        res = evaluate(graph, index, cfg, batch_size=7)
        off = res.confusion.sum() - np.trace(res.confusion)
        assert res.accuracy == pytest.approx(1 - off / res.confusion.sum(), abs=1e-15)
        assert res.confusion.sum(axis=1).tolist() == np.bincount(index.labels).tolist()

    def test_deterministic_across_batch_sizes(self, trained, index):
        cfg, graph = trained
        a, b = evaluate(graph, index, cfg, batch_size=40), evaluate(graph, index, cfg, batch_size=40)
        assert a.as_dict() == b.as_dict()

    def test_empty(self, trained):
        cfg, graph = trained
        with pytest.raises(EvaluationError):
            evaluate(graph, DatasetIndex(None, []), cfg)


class TestPredict:
    def test_ranked_and_normalized(self, trained, index):
        cfg, graph = trained
        out = predict(graph, index.path(0), cfg)
        assert len(out) == 5
        assert abs(sum(p for _, p in out) - 1) < 1e-6
        probs = [p for _, p in out]
        assert probs == sorted(probs, reverse=True)
        assert out[0][0] == "benign"
        assert out == predict(graph, index.path(0), cfg)

    def test_zero_head_uniform(self, index):
        cfg = tiny_config()
        out = predict(zero_head(build_from_config(cfg)), index.path(3), cfg)
        assert all(abs(p - 0.2) < 1e-6 for _, p in out)
        assert [name for name, _ in out] == ["benign", "malignant", "no_stroke", "no_tumor", "stroke"]
