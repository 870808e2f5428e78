"""Synthetic patterns, metrics, training loop, gradcheck and the command-line interface."""
import csv
import json
import math

import numpy as np
import pytest

from hiervc.cli import main as cli_main
from hiervc.errors import ConfigurationError, DivergenceError, InputError
from hiervc.harness import (
    PSNR_CAP,
    Adam,
    SyntheticSpec,
    TrainConfig,
    clip_grad_norm,
    clip_loss,
    frame_loss,
    psnr,
    still_clips,
    synth_generate,
    to_uint8,
    train,
)
from hiervc.harness.ablation import run_ablation
from hiervc.harness.gradcheck import gradcheck_model, relative_error
from hiervc.harness.io import load_frames, read_raw_rgb, save_frames, write_raw_rgb
from hiervc.model import HierarchicalVideoModel, ModelConfig, ScaleSpec, toy_config
from hiervc.numerics import Parameter, Tensor, backward, precision
from hiervc.numerics.checkpoint import save_model

from conftest import MODELS, trained_checkpoint


def tiny_config(**kw):
    return ModelConfig(scales=(ScaleSpec(8, 8, 2), ScaleSpec(4, 8, 2), ScaleSpec(2, 8, 2)), fusion_depth=1,
                       name="tiny", **kw)


def five_scale_config():
    return ModelConfig(scales=tuple(ScaleSpec(f, 8, 2) for f in (16, 8, 4, 4, 2)), fusion_depth=1, name="five")


class TestSynth:
    def test_still(self):
        v = synth_generate(SyntheticSpec("shift", 0, 5), seed=1)
        assert v.shape == (5, 3, 32, 32)
        assert all(np.array_equal(v[0], f) for f in v)
        assert v.min() >= 0 and v.max() <= 1

    def test_shift_rolls(self):
        v = synth_generate(SyntheticSpec("shift", 10, 4), seed=2)
        for t in range(4):
            np.testing.assert_array_equal(v[t], np.roll(v[0], 10 * t, axis=-1))

    def test_aliased_shift_warns(self, caplog):
        synth_generate(SyntheticSpec("shift", 10, 2, 32, 64))
        assert not caplog.records
        synth_generate(SyntheticSpec("shift", 20, 2, 32, 32))
        assert "equivalent shift of -12" in caplog.text

    def test_fade_endpoints(self):
        a, b = np.full((3, 8, 8), 0.2), np.full((3, 8, 8), 0.9)
        v = synth_generate(SyntheticSpec("fade", 0, 5, 8, 8, [a, b]))
        np.testing.assert_array_equal(v[0], a)
        np.testing.assert_array_equal(v[-1], b)
        np.testing.assert_allclose(v[2], 0.55, rtol=1e-12)

    def test_blur_sigma_grows(self):
        v = synth_generate(SyntheticSpec("blur", 1.0, 4), seed=3)
        np.testing.assert_array_equal(v[0], synth_generate(SyntheticSpec("shift", 0, 1), seed=3)[0])
        energy = [np.abs(np.diff(f, axis=-1)).mean() for f in v]
        assert all(a > b for a, b in zip(energy, energy[1:]))

    def test_deterministic(self):
        s = SyntheticSpec("blur", 0.5, 3)
        np.testing.assert_array_equal(synth_generate(s, 9), synth_generate(s, 9))
        assert not np.array_equal(synth_generate(s, 9), synth_generate(s, 10))

    @pytest.mark.parametrize("kw", [dict(pattern="zoom"), dict(pattern="shift", x=1.5), dict(x=-1),
                                    dict(num_frames=0)])
    def test_invalid(self, kw):
        with pytest.raises(InputError):
            SyntheticSpec(**kw)

    def test_still_clips(self, rng):
        c = still_clips(rng, 3, 5, 16)
        assert c.shape == (3, 5, 3, 16, 16)
        assert np.array_equal(c[:, 0], c[:, 4]) and not np.array_equal(c[0, 0], c[1, 0])


def loop_psnr(a, b):
    """Scalar reference: 8-bit rounding then a plain accumulation."""
    total, n = 0.0, 0
    for x, y in zip(a.ravel().tolist(), b.ravel().tolist()):
        qx = math.floor(min(max(x, 0.0), 1.0) * 255 + 0.5) / 255
        qy = math.floor(min(max(y, 0.0), 1.0) * 255 + 0.5) / 255
        total += (qx - qy) ** 2
        n += 1
    return 10 * math.log10(1 / (total / n))


class TestMetrics:
    def test_identical_is_capped(self, rng):
        f = rng.random((3, 8, 8))
        assert psnr(f, f) == PSNR_CAP == 99.0

    def test_closed_form(self):
        assert psnr(np.zeros((3, 4, 4)), np.full((3, 4, 4), 0.5), quantize=False) == pytest.approx(
            10 * math.log10(4), abs=1e-12)
        assert 10 * math.log10(4) == pytest.approx(6.0206, abs=1e-4)

    def test_matches_loop_oracle(self, rng):
        for _ in range(5):
            a, b = rng.random((3, 16, 16)), rng.random((3, 16, 16))
            assert abs(psnr(a, b) - loop_psnr(a, b)) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))

    def test_to_uint8_ties(self):
        assert to_uint8(np.array([0.5 / 255, 1.5 / 255, -1, 2])).tolist() == [1, 2, 0, 255]


class TestLoss:
    @pytest.fixture
    def state(self, f64):
        m = HierarchicalVideoModel(tiny_config())
        m.cast()
        x = Tensor(np.random.default_rng(0).random((2, 3, 16, 16)))
        return m, x, m.frame_forward(x, m.empty_context(), "train", rng=np.random.default_rng(1))

    def test_zero_lambda_is_rate(self, state):
        _, x, fs = state
        parts = frame_loss(x, fs, 0.0)
        assert float(parts.loss.item()) == pytest.approx(fs.total_rate().item() / (2 * 16 * 16), rel=1e-14)

    def test_perfect_reconstruction_is_rate(self, state):
        _, x, fs = state
        fs.x_hat = x
        assert float(frame_loss(x, fs, 512.0).loss.item()) == pytest.approx(
            fs.total_rate().item() / (2 * 16 * 16), rel=1e-14)

    def test_distortion_linear_in_lambda(self, state):
        _, x, fs = state
        r = frame_loss(x, fs, 0.0).loss.item()
        d1 = frame_loss(x, fs, 100.0).loss.item() - r
        d2 = frame_loss(x, fs, 200.0).loss.item() - r
        assert d2 == pytest.approx(2 * d1, rel=1e-12)
        assert d1 == pytest.approx(100 * float(np.mean((fs.x_hat.data - x.data) ** 2)), rel=1e-12)

    def test_clip_loss_averages_frames(self, f64):
        m = HierarchicalVideoModel(tiny_config(enable_temporal_prediction=False))
        m.cast()
        clip = still_clips(np.random.default_rng(2), 1, 3, 16)
        loss, rate, mse = clip_loss(m, clip, 10.0, np.random.default_rng(0))
        single, r1, m1 = clip_loss(m, clip[:, :1], 10.0, np.random.default_rng(0))
        # without temporal prediction every frame of a still clip sees the same prior
        assert np.isfinite(loss.item()) and rate > 0 and mse > 0
        assert mse == pytest.approx(m1, rel=1e-12)


class TestTrainConfig:
    @pytest.mark.parametrize("stages", [((3, 1), (1, 1)), ((2, 1),), ((1, -1),)])
    def test_invalid_stages(self, stages):
        with pytest.raises(ConfigurationError):
            TrainConfig(stages=stages)

    def test_lambda_positive(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(lmbda=0)

    def test_cosine_schedule(self):
        c = TrainConfig(stages=((1, 101),), learning_rate=1e-3, lr_final=1e-4)
        assert c.lr_at(0) == pytest.approx(1e-3) and c.lr_at(100) == pytest.approx(1e-4)
        assert c.lr_at(50) == pytest.approx(5.5e-4)
        assert TrainConfig().lr_at(123) == 1e-4


class TestOptimizer:
    def test_adam_first_step(self, f64):
        p = Parameter(np.array([1.0, -2.0]))
        p.grad = np.array([0.5, -4.0])
        Adam([p], lr=0.1).step()
        np.testing.assert_allclose(p.data, [0.9, -1.9], rtol=1e-7)

    def test_clip_norm(self, f64):
        a, b = Parameter(np.zeros(2)), Parameter(np.zeros(1))
        a.grad, b.grad = np.array([3.0, 0.0]), np.array([4.0])
        norm = clip_grad_norm([a, b], 1.0)
        assert norm == pytest.approx(5.0)
        assert np.sqrt((a.grad ** 2).sum() + (b.grad ** 2).sum()) == pytest.approx(1.0)


def tiny_train_cfg(**kw):
    base = dict(stages=((1, 2), (3, 2)), batch_size=2, frame_size=16, precision=64, eval_every=1, eval_clips=1,
                eval_frames=2, learning_rate=1e-3)
    base.update(kw)
    return TrainConfig(**base)


class TestTraining:
    def test_rerun_is_bit_identical(self, tmp_path):
        outs = []
        for run in ("a", "b"):
            model = HierarchicalVideoModel(tiny_config())
            train(model, tiny_train_cfg(), out_dir=tmp_path / run, timing=False)
            outs.append(((tmp_path / run / "log.csv").read_bytes(), (tmp_path / run / "model.hvck").read_bytes()))
        assert outs[0] == outs[1]
        rows = list(csv.DictReader((tmp_path / "a" / "log.csv").open()))
        assert [int(r["step"]) for r in rows] == [0, 1, 2, 3, 4]
        assert [int(r["frames"]) for r in rows[1:]] == [1, 1, 3, 3]
        assert (tmp_path / "a" / "stage1.hvck").exists() and (tmp_path / "a" / "stage2.hvck").exists()

    def test_divergence_aborts(self):
        model = HierarchicalVideoModel(tiny_config())
        with pytest.raises(DivergenceError):
            train(model, tiny_train_cfg(divergence_factor=0.0, divergence_patience=2, eval_every=100))

    def test_non_finite_loss_is_skipped_then_aborts(self):
        model = HierarchicalVideoModel(tiny_config())
        before = [p.data.copy() for p in model.parameters()]

        def poisoned(rng, b, t, s):
            return np.full((b, t, 3, s, s), np.nan)

        with pytest.raises(DivergenceError):
            train(model, tiny_train_cfg(divergence_patience=3, eval_every=100), data=poisoned)
        assert all(np.array_equal(a, p.data) for a, p in zip(before, model.parameters()))

    def test_bad_data_source(self):
        with pytest.raises(InputError):
            train(HierarchicalVideoModel(tiny_config()), tiny_train_cfg(),
                  data=lambda rng, b, t, s: np.zeros((b, 3, s, s)))


@pytest.fixture(scope="module")
def rows(main_model):
    with (MODELS / "lambda1024.log.csv").open() as f:
        return [{k: float(v) for k, v in r.items()} for r in csv.DictReader(f)]


class TestTrainedLog:
    """Properties of the log written while training the main fixture model."""

    def test_eval_loss_decreases(self, rows):
        assert rows[-1]["eval_loss"] < rows[0]["eval_loss"]

    def test_multiframe_stage_does_not_regress(self, rows):
        stage1_end = [r for r in rows if r["stage"] == 1][-1]["eval_loss"]
        later = [r["eval_loss"] for r in rows if r["stage"] >= 2]
        assert later and max(later) <= 1.1 * stage1_end


class TestAblation:
    """The four-arm ablation over the trained fixture models."""

    def test_arms(self, main_model):
        for name in ("baseline", "tp"):
            trained_checkpoint(name)
        rows = run_ablation(MODELS)
        assert [r["arm"] for r in rows] == ["baseline", "tp", "tp_df", "tp_df_lt"]
        assert [(r["tp"], r["df"], r["lt"]) for r in rows] == [(0, 0, 0), (1, 0, 0), (1, 1, 0), (1, 1, 1)]
        by = {r["arm"]: r for r in rows}
        assert by["tp"]["inter_bpp"] < by["baseline"]["inter_bpp"]
        assert all(np.isfinite([r["bpp"], r["psnr"]]).all() for r in rows)


class TestGradcheck:
    def test_relative_error(self):
        assert relative_error(0.0, 0.0, 0.0) == 0.0
        assert relative_error(1.0, 1.1, 0.0) == pytest.approx(0.1 / 1.1)
        assert relative_error(1e-12, 0.0, 1e-6) == pytest.approx(1e-6)

    def test_tiny_model(self):
        rep = gradcheck_model(tiny_config(), num_params=40, frames=2)
        assert len(rep.entries) == 40
        assert rep.passed, rep.max_rel_err


class TestIO:
    def test_raw_roundtrip(self, tmp_path, rng):
        frames = rng.random((3, 3, 5, 7))
        write_raw_rgb(tmp_path / "v.rgb", frames)
        assert (tmp_path / "v.rgb").stat().st_size == 3 * 3 * 5 * 7
        back = read_raw_rgb(tmp_path / "v.rgb", 7, 5)
        np.testing.assert_array_equal(back, to_uint8(frames) / 255.0)

    def test_npy_and_errors(self, tmp_path, rng):
        frames = rng.random((2, 3, 4, 4))
        save_frames(tmp_path / "f.npy", frames)
        np.testing.assert_array_equal(load_frames(tmp_path / "f.npy"), frames)
        (tmp_path / "bad.rgb").write_bytes(b"\0" * 10)
        with pytest.raises(InputError):
            read_raw_rgb(tmp_path / "bad.rgb", 4, 4)


@pytest.fixture(scope="module")
def five_ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "five.hvck"
    save_model(HierarchicalVideoModel(five_scale_config()), path)
    return path


def run_cli(capsys, *argv):
    code = cli_main(list(map(str, argv)))
    out, err = capsys.readouterr()
    return code, out, err


class TestCLI:
    def test_unknown_flag(self, capsys):
        code, _, err = run_cli(capsys, "synth", "--output", "x.npy", "--bogus")
        assert code == 2
        lines = err.strip().splitlines()
        assert len(lines) == 1 and lines[0].startswith("hiervc: error kind=usage") and "--bogus" in lines[0]

    def test_missing_checkpoint(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "roundtrip", "--checkpoint", tmp_path / "none.hvck")
        assert code == 1 and err.startswith("hiervc: error kind=input")

    def test_roundtrip(self, capsys, five_ckpt):
        code, out, _ = run_cli(capsys, "roundtrip", "--checkpoint", five_ckpt, "--frames", 3, "--x", 2)
        doc = json.loads(out)
        assert code == 0 and doc["max_abs_diff"] == 0.0 and doc["bit_identical"]

    def test_encode_decode_partial(self, capsys, five_ckpt, tmp_path):
        c = tmp_path / "c.hvcs"
        code, out, _ = run_cli(capsys, "encode", "--checkpoint", five_ckpt, "--frames", 3, "--output", c,
                               "--stats-csv", tmp_path / "e.csv")
        assert code == 0 and c.exists() and json.loads(out)["frames"] == 3
        code, out, _ = run_cli(capsys, "decode", "--checkpoint", five_ckpt, "--input", c, "--max-scales", 2,
                               "--output", tmp_path / "d.npy", "--stats-json", tmp_path / "d.json")
        doc = json.loads(out)
        assert code == 0 and doc["scales_used"] == [2, 2, 2]
        assert np.load(tmp_path / "d.npy").shape == (3, 3, 32, 32)
        code, out, _ = run_cli(capsys, "decode", "--checkpoint", five_ckpt, "--input", c, "--loss", "iid:1")
        assert code == 0 and json.loads(out)["scales_used"] == [0, 0, 0]
        code, out, _ = run_cli(capsys, "decode", "--checkpoint", five_ckpt, "--input", c,
                               "--drop-pattern", "1:4")
        assert json.loads(out)["scales_used"] == [5, 4, 4]

    def test_inspect(self, capsys, five_ckpt, tmp_path):
        c = tmp_path / "c.hvcs"
        run_cli(capsys, "encode", "--checkpoint", five_ckpt, "--frames", 2, "--output", c)
        code, out, _ = run_cli(capsys, "inspect", "--input", c)
        lines = out.strip().splitlines()
        assert code == 0 and lines[0] == "frame,frame_type,scale,bits,bpp,percent" and len(lines) == 11
        code, out, _ = run_cli(capsys, "inspect", "--input", c, "--json")
        doc = json.loads(out)
        assert doc["header"]["num_scales"] == 5 and len(doc["report"]) == 10

    def test_synth(self, capsys, tmp_path):
        code, out, _ = run_cli(capsys, "synth", "--pattern", "fade", "--frames", 4, "--output", tmp_path / "s.rgb")
        assert code == 0 and json.loads(out)["shape"] == [4, 3, 32, 32]
        assert (tmp_path / "s.rgb").stat().st_size == 4 * 3 * 32 * 32

    def test_train_tiny(self, capsys, tmp_path):
        cfg = tmp_path / "m.json"
        tiny_config().save(cfg)
        code, out, _ = run_cli(capsys, "train", "--config", cfg, "--stages", "1:2,3:1", "--batch-size", 1,
                               "--frame-size", 16, "--eval-every", 10, "--out", tmp_path / "run")
        doc = json.loads(out)
        assert code == 0 and (tmp_path / "run" / "model.hvck").exists() and doc["steps"] == 3

    def test_gradcheck(self, capsys, tmp_path):
        cfg = tmp_path / "m.json"
        tiny_config().save(cfg)
        code, out, _ = run_cli(capsys, "gradcheck", "--config", cfg, "--params", 10)
        doc = json.loads(out)
        assert code == 0 and doc["passed"] and doc["params"] == 10

    def test_rd_sweep_requires_models(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "rd-sweep", "--models-dir", tmp_path)
        assert code == 1 and "missing checkpoint" in err
