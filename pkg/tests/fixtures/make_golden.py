"""Regenerate the golden format fixtures in ``tests/fixtures/golden``.

Only run this when a format version is deliberately bumped; the test suite
checks that the committed files still decode bit-identically.

    python tests/fixtures/make_golden.py
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from hiervc.codec import DecodeOptions, decode_sequence, encode_sequence
from hiervc.entropy import TableBank, encode_chunk
from hiervc.harness import SyntheticSpec, synth_generate
from hiervc.model import HierarchicalVideoModel, ModelConfig, ScaleSpec
from hiervc.numerics.checkpoint import save_model
from hiervc.probability import default_tables

GOLDEN = Path(__file__).parent / "golden"


def golden_config() -> ModelConfig:
    return ModelConfig(scales=(ScaleSpec(8, 8, 2), ScaleSpec(4, 8, 2), ScaleSpec(2, 8, 2)), fusion_depth=1,
                       init_seed=2024, lmbda=512.0, name="golden")


def golden_clip() -> np.ndarray:
    return synth_generate(SyntheticSpec("shift", 2, 3, 16, 24), seed=42)


def golden_symbols() -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(7)
    idx = rng.integers(0, 64, 2000).astype(np.int32)
    sym = np.clip(np.round(rng.normal(0, 1, 2000) * np.exp(idx / 12.0)), -64, 63).astype(np.int32)
    return sym, idx


def main() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    model = HierarchicalVideoModel(golden_config())
    save_model(model, GOLDEN / "model.hvck")
    clip = golden_clip()
    enc = encode_sequence(clip, model, gop_size=2)
    (GOLDEN / "clip.hvcs").write_bytes(enc.container)
    dec = decode_sequence(enc.container, model)
    assert np.array_equal(dec.frames, enc.reconstructions)
    np.save(GOLDEN / "decoded.npy", dec.frames)
    partial = decode_sequence(enc.container, model, DecodeOptions(max_scales=2))
    np.save(GOLDEN / "decoded_2scales.npy", partial.frames)
    sym, idx = golden_symbols()
    payload = encode_chunk(sym, TableBank(default_tables()), idx)
    (GOLDEN / "symbols.bin").write_bytes(payload.data)
    np.save(GOLDEN / "symbols.npy", np.stack([sym, idx]))
    meta = {"container_version": 1, "checkpoint_version": 1, "frames": int(clip.shape[0]),
            "symbols": int(sym.size), "container_bytes": len(enc.container), "payload_bytes": len(payload.data)}
    (GOLDEN / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


if __name__ == "__main__":
    main()
