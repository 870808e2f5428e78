"""Analytic vs central finite-difference gradients of the full training loss."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..model import HierarchicalVideoModel, ModelConfig
from ..numerics import backward, precision
from .synth import still_clips
from .train import clip_loss


@dataclass
class GradcheckReport:
    eps: float
    rel_tol: float
    entries: list[dict] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def max_rel_err(self) -> float:
        return max((e["rel_err"] for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return bool(self.entries) and self.max_rel_err < self.rel_tol


def relative_error(analytic: float, numeric: float, floor: float) -> float:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients from dividing by ~0."""
    denom = max(abs(analytic), abs(numeric), floor)
    return abs(analytic - numeric) / denom if denom > 0 else 0.0


def gradcheck_model(cfg: ModelConfig, num_params: int = 200, eps: float = 1e-4, seed: int = 0,
                    frames: int = 2, size: int | None = None, batch: int = 1, lmbda: float | None = None,
                    rel_tol: float = 1e-4, floor: float = 0.0, jitter: float = 0.05) -> GradcheckReport:
    """Check ``num_params`` randomly sampled scalar parameters in 64-bit mode.

    The loss is the training objective over a ``frames``-long still clip, so
    the temporal path is included. Reconstruction uses the noisy latent (the
    rounding in the straight-through path is piecewise constant and has no
    finite-difference derivative). The noise is re-drawn from the same seed
    for every evaluation. Parameters initialised to exact zeros (biases,
    learned constants) get N(0, ``jitter``) noise first: at the all-zero point a
    channel norm sees a constant input, whose curvature at eps scale swamps
    the central difference.
    """
    t0 = time.perf_counter()
    lm = cfg.lmbda if lmbda is None else lmbda
    size = size or 2 * cfg.coarsest_factor
    rng = np.random.default_rng(seed)
    clip = still_clips(rng, batch, frames, size)
    report = GradcheckReport(eps, rel_tol)
    with precision(64):
        model = HierarchicalVideoModel(cfg)
        model.cast()
        named = list(model.named_parameters())
        jrng = np.random.default_rng(seed + 3)
        for _, p in named:
            if jitter and not np.any(p.data):
                p.data = jrng.normal(0.0, jitter, p.shape)

        def loss_value() -> float:
            return float(clip_loss(model, clip, lm, np.random.default_rng(seed + 1), recon="noise")[0].item())

        model.zero_grad()
        loss, _, _ = clip_loss(model, clip, lm, np.random.default_rng(seed + 1), recon="noise")
        backward(loss)
        grads = {n: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for n, p in named}
        pick = np.random.default_rng(seed + 2)
        for _ in range(num_params):
            name, p = named[int(pick.integers(len(named)))]
            i = int(pick.integers(p.size))
            flat = p.data.reshape(-1)
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_value()
            flat[i] = orig - eps
            down = loss_value()
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            analytic = float(grads[name].reshape(-1)[i])
            report.entries.append({"param": name, "index": i, "analytic": analytic, "numeric": numeric,
                                   "rel_err": relative_error(analytic, numeric, floor)})
    report.seconds = time.perf_counter() - t0
    return report
