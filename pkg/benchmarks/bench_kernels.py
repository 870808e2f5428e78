"""Compiled vs pure-Python/numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py [--symbols N] [--repeat R] [--json PATH]

Range coder: encode + decode of N symbols against the 64 default tables.
Depthwise 7x7 convolution: forward + backward on a (8, 48, 32, 32) batch.
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from hiervc.entropy import KERNELS, TableBank, decode_chunk, encode_chunk
from hiervc.numerics import Tensor, _backend, backward, conv2d, ops
from hiervc.probability import default_tables


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_range_coder(n: int, repeat: int) -> dict:
    rng = np.random.default_rng(0)
    bank = TableBank(default_tables())
    idx = rng.integers(0, len(bank), n).astype(np.int32)
    sym = np.clip(np.round(rng.normal(0, 1, n) * np.exp(idx / 12.0)), -64, 63).astype(np.int32)
    out = {}
    for name in sorted(KERNELS):
        payload = encode_chunk(sym, bank, idx, backend=name)
        enc = best_of(lambda: encode_chunk(sym, bank, idx, backend=name), repeat)
        dec = best_of(lambda: decode_chunk(payload, bank, idx, backend=name), repeat)
        out[name] = {"encode_s": enc, "decode_s": dec, "msym_per_s": n / (enc + dec) / 1e6,
                     "bytes": len(payload)}
    return out


def bench_depthwise(repeat: int) -> dict:
    rng = np.random.default_rng(1)
    x = rng.standard_normal((8, 48, 32, 32)).astype(np.float32)
    w = (rng.standard_normal((48, 1, 7, 7)) * 0.02).astype(np.float32)

    def step():
        xt = Tensor(x, requires_grad=True)
        wt = Tensor(w, requires_grad=True)
        backward(ops.sum(conv2d(xt, wt, None, 1, 3, groups=48)))

    out = {}
    modes = [("numpy", False)] + ([("cython", True)] if _backend.kernels is not None else [])
    for name, compiled in modes:
        _backend.set_compiled(compiled)
        try:
            out[name] = {"fwd_bwd_s": best_of(step, repeat)}
        finally:
            _backend.set_compiled(True)
    return out


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--symbols", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--json")
    a = p.parse_args()
    res = {"range_coder": bench_range_coder(a.symbols, a.repeat), "depthwise_conv": bench_depthwise(a.repeat)}
    rc = res["range_coder"]
    for name, r in rc.items():
        print(f"range coder [{name:>6}] encode {r['encode_s']:.3f}s decode {r['decode_s']:.3f}s "
              f"({r['msym_per_s']:.2f} Msym/s, {r['bytes']} bytes)")
    if "cython" in rc and "python" in rc:
        sp = (rc["python"]["encode_s"] + rc["python"]["decode_s"]) / (rc["cython"]["encode_s"] + rc["cython"]["decode_s"])
        print(f"range coder speed-up: {sp:.1f}x")
    dw = res["depthwise_conv"]
    for name, r in dw.items():
        print(f"depthwise 7x7 [{name:>6}] forward+backward {r['fwd_bwd_s'] * 1e3:.1f} ms")
    if "cython" in dw:
        print(f"depthwise speed-up: {dw['numpy']['fwd_bwd_s'] / dw['cython']['fwd_bwd_s']:.1f}x")
    if a.json:
        with open(a.json, "w") as f:
            json.dump(res, f, indent=2)


if __name__ == "__main__":
    main()
