"""Rate-distortion training with the staged 1 -> 3 -> 5 frame schedule."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ConfigurationError, DivergenceError, InputError, NumericError
from ..model import FrameState, HierarchicalVideoModel
from ..numerics import Tensor, backward, ops, precision
from ..numerics.checkpoint import save_model
from .optim import Adam, clip_grad_norm
from .synth import eval_clips, still_clips

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "stage", "frames", "lmbda", "train_loss", "eval_loss", "eval_bpp", "eval_psnr", "seconds")

# data source: (rng, batch, frames, size) -> (B, T, 3, H, W) in [0, 1]
DataSource = Callable[[np.random.Generator, int, int, int], np.ndarray]


@dataclass
class TrainConfig:
    lmbda: float = 1024.0
    stages: tuple = ((1, 20000), (3, 5000), (5, 1000))
    batch_size: int = 8
    learning_rate: float = 1e-4
    lr_final: Optional[float] = None
    seed: int = 0
    precision: int = 32
    frame_size: int = 64
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    grad_clip: float = 1.0
    eval_every: int = 500
    eval_clips: int = 4
    eval_frames: int = 4
    divergence_factor: float = 10.0
    divergence_patience: int = 1000

    def __post_init__(self):
        self.stages = tuple((int(t), int(s)) for t, s in self.stages)
        if not self.lmbda > 0:
            raise ConfigurationError(f"lambda must be positive, got {self.lmbda}")
        frames = [t for t, _ in self.stages]
        if any(t not in (1, 3, 5) for t in frames):
            raise ConfigurationError(f"stage frame counts must be in {{1, 3, 5}}, got {frames}")
        if frames != sorted(frames):
            raise ConfigurationError(f"stages must have non-decreasing frame counts, got {frames}")
        if any(s < 0 for _, s in self.stages):
            raise ConfigurationError("stage step counts must be non-negative")
        if self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigurationError("batch_size and learning_rate must be positive")
        if self.precision not in (32, 64):
            raise ConfigurationError("precision must be 32 or 64")

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def total_steps(self) -> int:
        return sum(s for _, s in self.stages)

    def lr_at(self, step: int) -> float:
        """Constant, or cosine decay to ``lr_final`` over the whole schedule."""
        if self.lr_final is None or self.total_steps <= 1:
            return self.learning_rate
        frac = min(1.0, step / (self.total_steps - 1))
        return self.lr_final + 0.5 * (self.learning_rate - self.lr_final) * (1.0 + math.cos(math.pi * frac))


@dataclass
class LossParts:
    loss: Tensor
    rate_bpp: float
    mse: float


def frame_loss(x: Tensor, state: FrameState, lmbda: float) -> LossParts:
    """Estimated rate in bits per pixel plus ``lmbda`` times MSE, averaged over the batch."""
    n, _, h, w = x.shape
    rate = ops.scale(state.total_rate(), 1.0 / (n * h * w))
    dist = ops.mse(state.x_hat, x)
    total = rate + ops.scale(dist, lmbda)
    return LossParts(total, float(rate.item()), float(dist.item()))


def clip_loss(model: HierarchicalVideoModel, clip: np.ndarray, lmbda: float, rng: np.random.Generator,
              recon: str = "ste") -> tuple[Tensor, float, float]:
    """Unrolled loss over a (B, T, 3, H, W) clip, averaged over frames.

    Gradients flow through the temporal context across frames.
    """
    history: list[FrameState] = []
    total = None
    rates, mses = [], []
    for t in range(clip.shape[1]):
        x = Tensor(clip[:, t])
        fs = model.frame_forward(x, model.context(history), mode="train", rng=rng, recon=recon)
        parts = frame_loss(x, fs, lmbda)
        total = parts.loss if total is None else total + parts.loss
        rates.append(parts.rate_bpp)
        mses.append(parts.mse)
        history = (history + [fs])[-model.cfg.temporal_context_len:]
    return ops.scale(total, 1.0 / clip.shape[1]), float(np.mean(rates)), float(np.mean(mses))


def evaluate(model: HierarchicalVideoModel, clips: np.ndarray, lmbda: float) -> dict:
    """Actual coded bpp, PSNR and loss on clips (one GOP per clip)."""
    from ..codec import encode_sequence

    bits, psnrs, mses = [], [], []
    for clip in clips:
        res = encode_sequence(clip, model, gop_size=clip.shape[0])
        bits.extend(f.bpp for f in res.stats.frames)
        psnrs.extend(f.psnr for f in res.stats.frames)
        mses.append(float(np.mean((res.reconstructions.astype(np.float64) - clip) ** 2)))
    bpp = float(np.mean(bits))
    mse = float(np.mean(mses))
    return {"eval_bpp": bpp, "eval_psnr": float(np.mean(psnrs)), "eval_loss": bpp + lmbda * mse}


@dataclass
class TrainResult:
    model: HierarchicalVideoModel
    log_rows: list[dict] = field(default_factory=list)
    checkpoint: Optional[Path] = None
    aborted: bool = False


def _write_log(path: Optional[Path], rows: Sequence[dict]) -> None:
    if path is None:
        return
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=LOG_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items() if k in LOG_FIELDS})


def train(model: HierarchicalVideoModel, cfg: TrainConfig, data: DataSource = still_clips,
          out_dir: str | Path | None = None, eval_set: Optional[np.ndarray] = None,
          timing: bool = True) -> TrainResult:
    """Optimise ``model`` over ``cfg.stages``; writes ``log.csv`` and ``model.hvck`` under ``out_dir``.

    Stage 1 (single frames) sees only the learned-bias temporal slots. Later
    stages unroll 3 or 5 frames. The run is deterministic given ``cfg.seed``;
    the ``seconds`` column is zeroed when ``timing`` is off so logs compare
    byte for byte.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    log_path = out / "log.csv" if out is not None else None
    if eval_set is None:
        eval_set = eval_clips(cfg.eval_clips, cfg.eval_frames, cfg.frame_size, seed=cfg.seed + 12345)
    data_rng = np.random.default_rng([cfg.seed, 0])
    noise_rng = np.random.default_rng([cfg.seed, 1])
    result = TrainResult(model)
    t0 = time.perf_counter()

    with precision(cfg.precision):
        model.cast()
        opt = Adam(model.parameters(), cfg.learning_rate, cfg.betas, cfg.eps)

        def log_eval(step, stage, frames, train_loss):
            row = {"step": step, "stage": stage, "frames": frames, "lmbda": float(cfg.lmbda),
                   "train_loss": train_loss, **evaluate(model, eval_set, cfg.lmbda),
                   "seconds": round(time.perf_counter() - t0, 1) if timing else 0.0}
            result.log_rows.append(row)
            _write_log(log_path, result.log_rows)
            log.info("step %d stage %d loss %.4f eval bpp %.4f psnr %.2f", step, stage, train_loss,
                     row["eval_bpp"], row["eval_psnr"])

        log_eval(0, 0, 0, float("nan"))
        step = 0
        initial = None
        over = 0
        for stage_i, (frames, steps) in enumerate(cfg.stages, start=1):
            window: list[float] = []
            for _ in range(steps):
                clip = np.asarray(data(data_rng, cfg.batch_size, frames, cfg.frame_size))
                if clip.ndim != 5 or clip.shape[1] != frames:
                    raise InputError(f"data source returned shape {clip.shape}, wanted (B, {frames}, 3, H, W)")
                opt.zero_grad()
                try:
                    loss, _, _ = clip_loss(model, clip, cfg.lmbda, noise_rng)
                    value = float(loss.item())
                except NumericError as exc:
                    log.warning("step %d: %s", step + 1, exc)
                    value = float("nan")
                step += 1
                if not math.isfinite(value):
                    log.warning("step %d: non-finite loss, update skipped", step)
                    over += 1
                else:
                    backward(loss)
                    clip_grad_norm(opt.params, cfg.grad_clip)
                    opt.lr = cfg.lr_at(step - 1)
                    opt.step()
                    window.append(value)
                    if initial is None:
                        initial = value
                    over = over + 1 if value > cfg.divergence_factor * initial else 0
                if over >= cfg.divergence_patience:
                    result.aborted = True
                    log_eval(step, stage_i, frames, value)
                    ref = "n/a" if initial is None else f"{initial:.4g}"
                    raise DivergenceError(f"loss non-finite or above {cfg.divergence_factor}x initial for "
                                          f"{over} steps (step {step}, loss {value:.4g}, initial {ref})")
                if step % cfg.eval_every == 0:
                    log_eval(step, stage_i, frames, float(np.mean(window)) if window else float("nan"))
                    window = []
            if window:
                log_eval(step, stage_i, frames, float(np.mean(window)))
            if out is not None:
                save_model(model, out / f"stage{stage_i}.hvck")
        if out is not None:
            result.checkpoint = out / "model.hvck"
            save_model(model, result.checkpoint)
    return result
