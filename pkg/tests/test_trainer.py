import json
import math

import numpy as np
import pytest
import torch

from depthsr.core import DepthMap, GuidanceImage
from depthsr.losses import LossWeights
from depthsr.metrics import evaluate
from depthsr.synthbench import SceneSpec, make_benchmark_case
from depthsr.trainer import (
    DivergenceError,
    TrainConfig,
    TrainSample,
    ablation_study,
    load_checkpoint,
    lr_at_epoch,
    run_ablation,
    save_checkpoint,
    train,
    zero_shot_refine,
)
from depthsr.model import build_network


def tiny_case(size=32, kind="ramp", seed=0):
    spec = SceneSpec(kind=kind, height=size, width=size, slope=0.0025, z0=2.0, seed=seed)
    return make_benchmark_case(spec, step=0.1, factor=8)


def tiny_config(**kw):
    base = dict(n_stages=3, k=8, zero_shot_iters=4, epochs=1, batch_size=2, crop=16, seed=0)
    base.update(kw)
    return TrainConfig(**base)


class TestSchedule:
    def test_epoch_25_value(self):
        assert lr_at_epoch(1e-4, 25) == pytest.approx(1e-4 * 0.25, rel=1e-12)

    def test_exact_sequence(self):
        for epoch in range(35):
            assert lr_at_epoch(1e-4, epoch) == 1e-4 * 0.5 ** (epoch // 10)


class TestAdamRecurrence:
    def test_matches_scalar_oracle(self):
        """torch.optim.Adam against a hand-rolled scalar Adam on a
        1-parameter quadratic, with the configured (b1, b2, eps)."""
        lr, b1, b2, eps = 1e-2, 0.9, 0.99, 1e-8
        x = torch.tensor([1.5], dtype=torch.float64, requires_grad=True)
        opt = torch.optim.Adam([x], lr=lr, betas=(b1, b2), eps=eps)
        theta = 1.5
        m = v = 0.0
        for t in range(1, 26):
            opt.zero_grad()
            (0.5 * (x - 3.0) ** 2).sum().backward()
            opt.step()
            g = theta - 3.0
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
            assert x.item() == pytest.approx(theta, abs=1e-12), f"step {t}"


class TestZeroShot:
    def test_zero_iterations_defined_and_finite(self):
        case = tiny_case()
        refined, log = zero_shot_refine(case.image, case.depth_lr, tiny_config(zero_shot_iters=0))
        assert refined.values.shape == (32, 32)
        assert np.isfinite(refined.values).all()
        assert sum(1 for r in log if r["event"] == "iter") == 0

    def test_loss_decreases_over_200_iterations(self):
        case = tiny_case(size=64)
        config = tiny_config(zero_shot_iters=200)
        _, log = zero_shot_refine(case.image, case.depth_lr, config)
        iters = [r for r in log if r["event"] == "iter"]
        assert len(iters) == 200
        assert iters[-1]["total"] < iters[0]["total"]

    def test_same_seed_reproduces_exactly(self):
        case = tiny_case()
        config = tiny_config(zero_shot_iters=6, seed=11)
        a, log_a = zero_shot_refine(case.image, case.depth_lr, config)
        b, log_b = zero_shot_refine(case.image, case.depth_lr, config)
        assert np.abs(a.values - b.values).max() < 1e-6
        la = [r["total"] for r in log_a if r["event"] == "iter"]
        lb = [r["total"] for r in log_b if r["event"] == "iter"]
        assert la == lb

    def test_all_weights_zero_leaves_params_unchanged(self):
        case = tiny_case()
        weights = LossWeights(w_sleeve=0, w_cycle=0, w_fe=0, w_tv=0)
        config = tiny_config(zero_shot_iters=1, weights=weights)
        refined, _ = zero_shot_refine(case.image, case.depth_lr, config)
        untrained, _ = zero_shot_refine(case.image, case.depth_lr,
                                        tiny_config(zero_shot_iters=0))
        np.testing.assert_array_equal(refined.values, untrained.values)

    def test_divergence_aborts_with_last_finite(self):
        case = tiny_case()
        config = tiny_config(zero_shot_iters=50, lr=1e25, precision="float32")
        refined, log = zero_shot_refine(case.image, case.depth_lr, config)
        events = [r["event"] for r in log]
        assert "abort" in events
        assert np.isfinite(refined.values).all()

    def test_misregistered_pair_rejected(self):
        case = tiny_case()
        bad = GuidanceImage(case.image.values[:-8, :, :])
        with pytest.raises(ValueError):
            zero_shot_refine(bad, case.depth_lr, tiny_config())

    def test_config_logged_first(self):
        case = tiny_case()
        _, log = zero_shot_refine(case.image, case.depth_lr, tiny_config(zero_shot_iters=1))
        assert log[0]["event"] == "config"
        assert log[0]["config"]["n_stages"] == 3


class TestTrainSampleInterface:
    def test_no_hr_depth_reachable(self):
        assert not hasattr(TrainSample, "depth_hr")
        case = tiny_case()
        s = TrainSample("a", case.image, case.depth_lr)
        assert not hasattr(s, "depth_hr")


class TestTrain:
    def make_dataset(self, n=2):
        return [
            TrainSample(f"s{i}", *(lambda c: (c.image, c.depth_lr))(tiny_case(seed=i)))
            for i in range(n)
        ]

    def test_runs_and_logs_schedule(self, tmp_path):
        config = tiny_config(epochs=2)
        net, log = train(config, self.make_dataset(), checkpoint_dir=tmp_path)
        epochs = [r for r in log if r["event"] == "epoch"]
        assert [e["lr"] for e in epochs] == [lr_at_epoch(config.lr, e["epoch"]) for e in epochs]
        iters = [r for r in log if r["event"] == "iter"]
        assert iters and all(np.isfinite(r["total"]) for r in iters)
        assert (tmp_path / "checkpoint_epoch_0000.pt").exists()
        assert (tmp_path / "checkpoint_epoch_0001.pt").exists()

    def test_lr_schedule_over_long_run(self):
        # 12 epochs of a 1-sample dataset crosses the first halving.
        config = tiny_config(epochs=12, batch_size=1)
        _, log = train(config, self.make_dataset(1))
        lrs = {r["epoch"]: r["lr"] for r in log if r["event"] == "epoch"}
        assert lrs[9] == config.lr
        assert lrs[10] == config.lr * 0.5
        assert lrs[11] == config.lr * 0.5

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train(tiny_config(), [])

    def test_divergence_raises(self):
        # Full-image batches (crop larger than the sample) so the first
        # step blows the parameters up and the second loss goes non-finite.
        config = tiny_config(epochs=5, lr=1e25, crop=64, batch_size=1,
                             precision="float32")
        with pytest.raises(DivergenceError):
            train(config, self.make_dataset(1))

    def test_log_serializes_to_jsonl(self, tmp_path):
        _, log = train(tiny_config(), self.make_dataset(1))
        path = tmp_path / "log.jsonl"
        with open(path, "w") as f:
            for rec in log:
                f.write(json.dumps(rec) + "\n")
        parsed = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(parsed) == len(log)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        config = tiny_config()
        net = build_network(config.n_stages, config.k, config.seed)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(net, config, path)
        loaded, manifest = load_checkpoint(path)
        assert manifest["n_stages"] == config.n_stages
        assert manifest["k"] == config.k
        assert manifest["seed"] == config.seed
        assert manifest["config_hash"] == config.hash()
        for a, b in zip(net.state_dict().values(), loaded.state_dict().values()):
            assert torch.equal(a, b)


class TestConfig:
    def test_file_roundtrip(self, tmp_path):
        config = tiny_config(lr=3e-4)
        path = tmp_path / "config.json"
        with open(path, "w") as f:
            json.dump(config.to_dict(), f)
        back = TrainConfig.from_file(path)
        assert back == config

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr=0.0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(mode="predict")


class TestAblation:
    def test_effective_configs(self):
        case = tiny_case()
        config = tiny_config(zero_shot_iters=1)
        log = []
        _, eff = run_ablation(config, [case], "cycle", log)
        assert eff["weights"]["w_cycle"] == 0.0
        assert log[0]["config"]["weights"]["w_cycle"] == 0.0
        _, eff = run_ablation(config, [case], "sleeve")
        assert eff["weights"]["s"] == 0.0
        with pytest.raises(ValueError):
            run_ablation(config, [case], "nope")

    def test_study_covers_all_terms(self):
        case = tiny_case()
        config = tiny_config(zero_shot_iters=1)
        results = ablation_study(config, [case])
        assert set(results) == {"full", "sleeve", "cycle", "false_edge", "tv"}
        for rep in results.values():
            assert np.isfinite(rep.rmse)
