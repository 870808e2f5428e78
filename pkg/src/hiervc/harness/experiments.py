"""Named training recipes for the directional experiments (toy preset, 32x32 still clips).

Each recipe fixes the model config and the training schedule. ``python -m
hiervc.harness.experiments NAME... --out DIR`` trains them and writes
``DIR/NAME.hvck`` plus ``DIR/NAME.log.csv``.
"""
from __future__ import annotations

import argparse
import logging
import shutil
import sys
from dataclasses import dataclass
from pathlib import Path

from ..model import HierarchicalVideoModel, ModelConfig, toy_config
from .train import TrainConfig, train

LAMBDAS = (256.0, 512.0, 1024.0, 2048.0)
FULL_STAGES = ((1, 3000), (3, 1000), (5, 300))
NO_LT_STAGES = FULL_STAGES[:2]


@dataclass(frozen=True)
class Recipe:
    name: str
    model: ModelConfig
    train: TrainConfig


def _train_cfg(lmbda: float, stages=FULL_STAGES) -> TrainConfig:
    return TrainConfig(lmbda=lmbda, stages=stages, batch_size=8, learning_rate=1e-3, lr_final=1e-4, seed=0,
                       precision=32, frame_size=32, eval_every=250, eval_clips=4, eval_frames=4)


def recipes() -> dict[str, Recipe]:
    out = {}

    def add(name, model_cfg, train_cfg):
        out[name] = Recipe(name, model_cfg, train_cfg)

    for lm in LAMBDAS:
        add(f"lambda{int(lm)}", toy_config(lmbda=lm), _train_cfg(lm))
    add("tp_off", toy_config(lmbda=1024.0, enable_temporal_prediction=False), _train_cfg(1024.0))
    add("baseline", toy_config(lmbda=1024.0, enable_temporal_prediction=False, enable_decoding_fusion=False),
        _train_cfg(1024.0, NO_LT_STAGES))
    add("tp", toy_config(lmbda=1024.0, enable_decoding_fusion=False), _train_cfg(1024.0, NO_LT_STAGES))
    return out


MAIN = "lambda1024"
# the fourth ablation arm (TP+DF without the 5-frame stage) is the main run's stage-2 checkpoint
ABLATION_ARMS = {"baseline": ("baseline", None), "tp": ("tp", None), "tp_df": (MAIN, "stage2"),
                 "tp_df_lt": (MAIN, None)}


def run_recipe(name: str, out_dir: str | Path) -> Path:
    rec = recipes()[name]
    out = Path(out_dir)
    work = out / f"{name}.run"
    res = train(HierarchicalVideoModel(rec.model), rec.train, out_dir=work)
    out.mkdir(parents=True, exist_ok=True)
    shutil.copy(res.checkpoint, out / f"{name}.hvck")
    shutil.copy(work / "log.csv", out / f"{name}.log.csv")
    for stage in work.glob("stage*.hvck"):
        if name == MAIN and stage.stem == "stage2":
            shutil.copy(stage, out / f"{name}.stage2.hvck")
    shutil.rmtree(work)
    return out / f"{name}.hvck"


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description="train named experiment recipes")
    p.add_argument("names", nargs="*", help=f"recipes to train (default: all of {sorted(recipes())})")
    p.add_argument("--out", required=True)
    p.add_argument("--skip-existing", action="store_true")
    a = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for name in a.names or list(recipes()):
        target = Path(a.out) / f"{name}.hvck"
        if a.skip_existing and target.exists():
            continue
        run_recipe(name, a.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
