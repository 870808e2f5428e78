"""Command-line interface.

Every failure exits non-zero after printing one line to stderr::

    hiervc: error kind=<kind> msg=<message>

Usage errors (unknown flags, bad arguments) exit with status 2.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import HiervcError, InputError, UsageError

log = logging.getLogger("hiervc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # one machine-parsable line, exit 2
        sys.stderr.write(f"hiervc: error kind=usage msg={message}\n")
        raise SystemExit(2)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _stages(text: str) -> tuple:
    try:
        return tuple((int(a), int(b)) for a, b in (s.split(":") for s in text.split(",") if s.strip()))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected FRAMES:STEPS[,FRAMES:STEPS...], got {text!r}") from None


def _drop_pattern(text: str) -> dict[int, set[int]]:
    """``"0:1,2;3:0"`` -> {0: {1, 2}, 3: {0}}."""
    out: dict[int, set[int]] = {}
    try:
        for part in text.split(";"):
            if part.strip():
                t, scales = part.split(":")
                out.setdefault(int(t), set()).update(int(s) for s in scales.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad drop pattern {text!r}; use FRAME:S,S;FRAME:S") from None
    return out


def _loss_model(text: str):
    from .codec import LossModel

    parts = text.split(":")
    try:
        if parts[0] == "iid" and len(parts) == 2:
            return LossModel("iid", float(parts[1]))
        if parts[0] == "burst" and len(parts) == 3:
            return LossModel("burst", float(parts[2]), float(parts[1]))
    except (ValueError, HiervcError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    raise argparse.ArgumentTypeError(f"loss model must be iid:P or burst:LEN:P, got {text!r}")


def _emit(obj, path: Optional[str]) -> None:
    text = obj if isinstance(obj, str) else json.dumps(obj, indent=2)
    if path:
        Path(path).write_text(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _load_model(path: str):
    from .numerics.checkpoint import load_model

    if not Path(path).exists():
        raise InputError(f"no such checkpoint: {path}")
    return load_model(path)


def _input_frames(a) -> np.ndarray:
    from .harness.io import load_frames
    from .harness.synth import SyntheticSpec, synth_generate

    if a.input:
        return load_frames(a.input, a.width, a.height, a.max_frames)
    spec = SyntheticSpec(a.pattern, a.x, a.frames, a.height or 32, a.width or 32)
    return synth_generate(spec, a.seed)


def _add_frame_source(p) -> None:
    p.add_argument("--input", help="frames: .npy (T,3,H,W) or planar 8-bit .rgb")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--max-frames", type=int)
    p.add_argument("--pattern", default="shift", choices=("shift", "blur", "fade"),
                   help="synthetic clip when --input is absent")
    p.add_argument("--x", type=float, default=0.0, help="synthetic pattern parameter")
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)


# -- subcommands ----------------------------------------------------------------

def cmd_train(a) -> int:
    from .harness.io import load_frames
    from .harness.train import TrainConfig, train
    from .model import HierarchicalVideoModel, ModelConfig, preset

    overrides = json.loads(Path(a.train_config).read_text()) if a.train_config else {}
    tc = dict(lmbda=a.lmbda, stages=a.stages, batch_size=a.batch_size, learning_rate=a.lr, lr_final=a.lr_final,
              seed=a.seed, precision=a.precision, frame_size=a.frame_size, eval_every=a.eval_every)
    tc.update(overrides)
    cfg = TrainConfig(**tc)
    if a.config:
        mcfg = ModelConfig.load(a.config).replace(lmbda=cfg.lmbda)
    else:
        mcfg = preset(a.preset, lmbda=cfg.lmbda, enable_temporal_prediction=not a.no_tp,
                      enable_decoding_fusion=not a.no_df)
    data = None
    if a.raw:
        if not (a.width and a.height):
            raise UsageError("--raw needs --width and --height")
        frames = load_frames(a.raw, a.width, a.height)
        data = _raw_source(frames)
    model = HierarchicalVideoModel(mcfg)
    kwargs = {"data": data} if data is not None else {}
    res = train(model, cfg, out_dir=a.out, **kwargs)
    last = res.log_rows[-1]
    _emit({"checkpoint": str(res.checkpoint), "steps": cfg.total_steps, "eval_bpp": last["eval_bpp"],
           "eval_psnr": last["eval_psnr"], "eval_loss": last["eval_loss"]}, None)
    return 0


def _raw_source(frames: np.ndarray):
    """Random crops of consecutive frames from one decoded raw video."""
    total, _, h, w = frames.shape

    def source(rng, batch, t, size):
        if total < t or h < size or w < size:
            raise InputError(f"raw video ({total} frames, {h}x{w}) too small for {t}x{size}x{size} crops")
        out = np.empty((batch, t, 3, size, size))
        for b in range(batch):
            s = int(rng.integers(total - t + 1))
            y = int(rng.integers(h - size + 1))
            x = int(rng.integers(w - size + 1))
            out[b] = frames[s:s + t, :, y:y + size, x:x + size]
        return out

    return source


def cmd_encode(a) -> int:
    from .codec import encode_sequence

    model = _load_model(a.checkpoint)
    frames = _input_frames(a)
    res = encode_sequence(frames, model, gop_size=a.gop, bits=a.precision)
    Path(a.output).write_bytes(res.container)
    if a.stats_csv:
        res.stats.to_csv(a.stats_csv)
    if a.stats_json:
        res.stats.to_json(a.stats_json)
    if a.recon:
        from .harness.io import save_frames

        save_frames(a.recon, res.reconstructions)
    _emit(res.stats.summary(), None)
    return 0


def cmd_decode(a) -> int:
    from .codec import DecodeOptions, decode_sequence, simulate_loss
    from .harness.io import load_frames, save_frames

    model = _load_model(a.checkpoint)
    data = Path(a.input).read_bytes()
    drop = dict(a.drop_pattern or {})
    if a.loss:
        for t, s in simulate_loss(data, a.loss, a.seed).items():
            drop.setdefault(t, set()).update(s)
    ref = load_frames(a.reference, a.width, a.height) if a.reference else None
    res = decode_sequence(data, model, DecodeOptions(a.max_scales, drop, not a.no_strict), reference=ref)
    if a.output:
        save_frames(a.output, res.frames)
    if a.stats_csv:
        res.stats.to_csv(a.stats_csv)
    if a.stats_json:
        res.stats.to_json(a.stats_json)
    summary = res.stats.summary()
    summary["scales_used"] = [f.scales_used for f in res.stats.frames]
    summary["errors"] = {f.frame: f.error for f in res.stats.frames if f.error}
    _emit(summary, None)
    return 0


def cmd_roundtrip(a) -> int:
    from .codec import decode_sequence, encode_sequence

    model = _load_model(a.checkpoint)
    frames = _input_frames(a)
    enc = encode_sequence(frames, model, gop_size=a.gop, bits=a.precision)
    dec = decode_sequence(enc.container, model, reference=frames)
    diff = float(np.max(np.abs(enc.reconstructions.astype(np.float64) - dec.frames))) if len(frames) else 0.0
    out = {"frames": int(len(frames)), "container_bytes": len(enc.container), "mean_bpp": enc.stats.mean_bpp(),
           "mean_psnr": enc.stats.mean_psnr(), "max_abs_diff": diff, "bit_identical": diff == 0.0}
    _emit(out, None)
    return 0 if diff == 0.0 else 1


def cmd_rd_sweep(a) -> int:
    from .harness.experiments import recipes, run_recipe
    from .harness.synth import eval_clips
    from .harness.train import evaluate
    from .numerics.checkpoint import load_model

    clips = eval_clips(a.eval_clips, a.eval_frames, a.frame_size, seed=a.eval_seed)
    rows = []
    models_dir = Path(a.models_dir)
    for lm in a.lambdas:
        name = f"lambda{int(lm)}"
        ckpt = models_dir / f"{name}.hvck"
        if not ckpt.exists():
            if not a.train_missing:
                raise InputError(f"missing checkpoint {ckpt} (pass --train-missing to train it)")
            if name not in recipes():
                raise InputError(f"no training recipe for lambda {lm}")
            run_recipe(name, models_dir)
        ev = evaluate(load_model(ckpt), clips, lm)
        rows.append({"lambda": lm, "bpp": ev["eval_bpp"], "psnr": ev["eval_psnr"]})
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=("lambda", "bpp", "psnr"), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({"lambda": r["lambda"], "bpp": f"{r['bpp']:.6f}", "psnr": f"{r['psnr']:.4f}"})
    _emit(buf.getvalue(), a.output)
    return 0


def cmd_synth(a) -> int:
    from .harness.io import save_frames
    from .harness.synth import SyntheticSpec, synth_generate

    frames = synth_generate(SyntheticSpec(a.pattern, a.x, a.frames, a.height, a.width), a.seed)
    save_frames(a.output, frames)
    _emit({"output": a.output, "shape": list(frames.shape)}, None)
    return 0


def container_stats(data: bytes):
    """Stats from chunk sizes alone (no model needed)."""
    from .codec import Container, EncodeStats, FrameStat, ScaleStat
    from .codec.stats import CODED, DROPPED

    c = Container.unpack(data)
    h = c.header
    st = EncodeStats(h.width, h.height, container_bytes=len(data))
    for t, rec in enumerate(c.frames):
        fs = FrameStat(t, "intra" if rec.frame_type == 0 else "inter", h.width * h.height)
        for l in range(h.num_scales):
            ch = rec.chunk_for(l)
            fs.scales.append(ScaleStat(l, 8 * len(ch.payload) if ch else 0, CODED if ch else DROPPED))
        st.frames.append(fs)
    return c.header, st


def cmd_inspect(a) -> int:
    from .codec import format_report, rate_report

    header, st = container_stats(Path(a.input).read_bytes())
    rows = rate_report(st)
    if a.json:
        _emit({"header": {"version": header.version, "config_hash": header.config_hash.hex(),
                          "width": header.width, "height": header.height, "frame_count": header.frame_count,
                          "gop_size": header.gop_size, "lambda_index": header.lambda_index,
                          "precision": header.precision, "num_scales": header.num_scales},
               "summary": st.summary(), "report": rows}, a.output)
    else:
        _emit(format_report(rows), a.output)
    return 0


def cmd_ablate(a) -> int:
    from .harness.ablation import run_ablation

    rows = run_ablation(a.models_dir, train_missing=a.train_missing, eval_clips_n=a.eval_clips,
                        eval_frames=a.eval_frames, frame_size=a.frame_size)
    buf = io.StringIO()
    fields = ("arm", "tp", "df", "lt", "bpp", "intra_bpp", "inter_bpp", "psnr")
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items() if k in fields})
    _emit(buf.getvalue(), a.output)
    return 0


def cmd_gradcheck(a) -> int:
    from .harness.gradcheck import gradcheck_model
    from .model import ModelConfig, preset

    cfg = ModelConfig.load(a.config) if a.config else preset(a.preset)
    rep = gradcheck_model(cfg, num_params=a.params, eps=a.eps, seed=a.seed, frames=a.frames, rel_tol=a.tol)
    _emit({"params": len(rep.entries), "eps": rep.eps, "max_rel_err": rep.max_rel_err, "tolerance": rep.rel_tol,
           "passed": rep.passed, "seconds": round(rep.seconds, 2)}, None)
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hiervc", description="hierarchical predictive learned video codec")
    p.add_argument("--log-level", default=os.environ.get("HIERVC_LOG_LEVEL", "WARNING"))
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    t = sub.add_parser("train", help="train a model with the staged schedule")
    t.add_argument("--preset", default="toy", choices=("toy", "desk", "full"))
    t.add_argument("--config", help="model config JSON (overrides --preset)")
    t.add_argument("--train-config", help="training config JSON; its keys override the flags")
    t.add_argument("--lambda", dest="lmbda", type=float, default=1024.0)
    t.add_argument("--stages", type=_stages, default=((1, 3000), (3, 1000), (5, 300)))
    t.add_argument("--batch-size", type=int, default=8)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--lr-final", type=float)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--precision", type=int, choices=(32, 64), default=32)
    t.add_argument("--frame-size", type=int, default=32)
    t.add_argument("--eval-every", type=int, default=250)
    t.add_argument("--no-tp", action="store_true", help="disable temporal prediction")
    t.add_argument("--no-df", action="store_true", help="disable decoding fusion")
    t.add_argument("--raw", help="train on crops of a planar RGB video instead of synthetic stills")
    t.add_argument("--width", type=int)
    t.add_argument("--height", type=int)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("encode", help="encode frames into a container")
    e.add_argument("--checkpoint", required=True)
    _add_frame_source(e)
    e.add_argument("--gop", type=int, default=32)
    e.add_argument("--precision", type=int, choices=(32, 64), default=32)
    e.add_argument("--output", required=True)
    e.add_argument("--recon", help="write the closed-loop reconstruction")
    e.add_argument("--stats-csv")
    e.add_argument("--stats-json")
    e.set_defaults(fn=cmd_encode)

    d = sub.add_parser("decode", help="decode a container (optionally partially)")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--input", required=True)
    d.add_argument("--output")
    d.add_argument("--max-scales", type=int)
    d.add_argument("--drop-pattern", type=_drop_pattern)
    d.add_argument("--loss", type=_loss_model, help="simulate packet loss: iid:P or burst:LEN:P")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--no-strict", action="store_true", help="decode chunks even when their prior is stale")
    d.add_argument("--reference", help="original frames for PSNR")
    d.add_argument("--width", type=int)
    d.add_argument("--height", type=int)
    d.add_argument("--stats-csv")
    d.add_argument("--stats-json")
    d.set_defaults(fn=cmd_decode)

    r = sub.add_parser("roundtrip", help="encode then decode; report max |x_enc - x_dec|")
    r.add_argument("--checkpoint", required=True)
    _add_frame_source(r)
    r.add_argument("--gop", type=int, default=32)
    r.add_argument("--precision", type=int, choices=(32, 64), default=32)
    r.set_defaults(fn=cmd_roundtrip)

    s = sub.add_parser("rd-sweep", help="evaluate (training if needed) one model per lambda")
    s.add_argument("--lambdas", type=_floats, default=[256.0, 512.0, 1024.0, 2048.0])
    s.add_argument("--models-dir", required=True)
    s.add_argument("--train-missing", action="store_true")
    s.add_argument("--eval-clips", type=int, default=4)
    s.add_argument("--eval-frames", type=int, default=4)
    s.add_argument("--eval-seed", type=int, default=777)
    s.add_argument("--frame-size", type=int, default=32)
    s.add_argument("--output")
    s.set_defaults(fn=cmd_rd_sweep)

    y = sub.add_parser("synth", help="generate a synthetic clip")
    y.add_argument("--pattern", default="shift", choices=("shift", "blur", "fade"))
    y.add_argument("--x", type=float, default=0.0)
    y.add_argument("--frames", type=int, default=8)
    y.add_argument("--height", type=int, default=32)
    y.add_argument("--width", type=int, default=32)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--output", required=True)
    y.set_defaults(fn=cmd_synth)

    i = sub.add_parser("inspect", help="per-scale rate report of a container")
    i.add_argument("--input", required=True)
    i.add_argument("--json", action="store_true")
    i.add_argument("--output")
    i.set_defaults(fn=cmd_inspect)

    b = sub.add_parser("ablate", help="evaluate the Baseline / +TP / +TP+DF / +TP+DF+LT arms")
    b.add_argument("--models-dir", required=True)
    b.add_argument("--train-missing", action="store_true")
    b.add_argument("--eval-clips", type=int, default=4)
    b.add_argument("--eval-frames", type=int, default=4)
    b.add_argument("--frame-size", type=int, default=32)
    b.add_argument("--output")
    b.set_defaults(fn=cmd_ablate)

    g = sub.add_parser("gradcheck", help="finite-difference check of the full training loss")
    g.add_argument("--preset", default="desk", choices=("toy", "desk", "full"))
    g.add_argument("--config")
    g.add_argument("--params", type=int, default=200)
    g.add_argument("--eps", type=float, default=1e-4)
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--frames", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except UsageError as exc:
        sys.stderr.write(f"hiervc: error kind={exc.kind} msg={_one_line(exc)}\n")
        return 2
    except HiervcError as exc:
        sys.stderr.write(f"hiervc: error kind={exc.kind} msg={_one_line(exc)}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"hiervc: error kind=io msg={_one_line(exc)}\n")
        return 1


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
