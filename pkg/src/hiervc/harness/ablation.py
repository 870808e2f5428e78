"""Four-arm ablation: Baseline, +TP, +TP+DF, +TP+DF+LT (5-frame stage)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import InputError
from ..numerics.checkpoint import load_model
from .experiments import ABLATION_ARMS, run_recipe
from .synth import eval_clips

ARM_FLAGS = {"baseline": (0, 0, 0), "tp": (1, 0, 0), "tp_df": (1, 1, 0), "tp_df_lt": (1, 1, 1)}


def arm_checkpoint(models_dir: str | Path, arm: str) -> Path:
    recipe, stage = ABLATION_ARMS[arm]
    return Path(models_dir) / (f"{recipe}.{stage}.hvck" if stage else f"{recipe}.hvck")


def evaluate_arm(model, clips: np.ndarray) -> dict:
    from ..codec import encode_sequence

    intra, inter, psnrs = [], [], []
    for clip in clips:
        st = encode_sequence(clip, model, gop_size=clip.shape[0]).stats
        for f in st.frames:
            (intra if f.frame_type == "intra" else inter).append(f.bpp)
            psnrs.append(f.psnr)
    return {"bpp": float(np.mean(intra + inter)), "intra_bpp": float(np.mean(intra)),
            "inter_bpp": float(np.mean(inter)) if inter else float("nan"), "psnr": float(np.mean(psnrs))}


def run_ablation(models_dir: str | Path, train_missing: bool = False, eval_clips_n: int = 4,
                 eval_frames: int = 4, frame_size: int = 32, seed: int = 777) -> list[dict]:
    clips = eval_clips(eval_clips_n, eval_frames, frame_size, seed=seed)
    rows = []
    for arm, (tp, df, lt) in ARM_FLAGS.items():
        ckpt = arm_checkpoint(models_dir, arm)
        if not ckpt.exists():
            if not train_missing:
                raise InputError(f"missing checkpoint {ckpt} (pass --train-missing to train it)")
            run_recipe(ABLATION_ARMS[arm][0], models_dir)
        rows.append({"arm": arm, "tp": tp, "df": df, "lt": lt, **evaluate_arm(load_model(ckpt), clips)})
    return rows
