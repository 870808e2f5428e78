"""Bit-exact range coding of integer symbols against fixed frequency tables.

The compiled kernel is used when it was built; otherwise (or when
``HIERVC_PURE_PYTHON=1``) the pure-Python kernel is selected. Both produce
identical bytes.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigurationError, SymbolRangeError
from ..probability import TOTAL, PmfTable
from . import _pyrange

log = logging.getLogger(__name__)

try:
    if os.environ.get("HIERVC_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python kernel forced by HIERVC_PURE_PYTHON")
    from . import _crange as _kernel

    BACKEND = "cython"
except ImportError as exc:  # pragma: no cover - depends on the build
    log.debug("range coder falling back to pure Python: %s", exc)
    _kernel = _pyrange
    BACKEND = "python"

KERNELS = {"python": _pyrange}
if BACKEND == "cython":
    KERNELS["cython"] = _kernel


@dataclass(frozen=True)
class ChunkPayload:
    data: bytes
    symbol_count: int

    def __len__(self) -> int:
        return len(self.data)


class TableBank:
    """Distinct PMF tables packed into one padded CDF matrix."""

    def __init__(self, tables: Sequence[PmfTable]):
        if not tables:
            raise ConfigurationError("a table bank needs at least one table")
        width = max(t.symbol_max - t.symbol_min + 1 for t in tables)
        cdf = np.full((len(tables), width + 1), TOTAL, dtype=np.uint32)
        for i, t in enumerate(tables):
            if t.total != TOTAL:
                raise ConfigurationError(f"table {i} total {t.total} != {TOTAL}")
            c = t.cdf
            cdf[i, :c.size] = c
        self.tables = tuple(tables)
        self.cdf = cdf
        self.nsyms = np.array([t.symbol_max - t.symbol_min + 1 for t in tables], dtype=np.int32)
        self.offsets = np.array([t.symbol_min for t in tables], dtype=np.int32)

    def __len__(self) -> int:
        return len(self.tables)

    @classmethod
    def from_per_symbol(cls, tables: Sequence[PmfTable]) -> tuple["TableBank", np.ndarray]:
        """Deduplicate a per-symbol table sequence by identity."""
        uniq: dict[int, int] = {}
        ordered: list[PmfTable] = []
        index = np.empty(len(tables), dtype=np.int32)
        for i, t in enumerate(tables):
            k = uniq.get(id(t))
            if k is None:
                k = uniq[id(t)] = len(ordered)
                ordered.append(t)
            index[i] = k
        return cls(ordered or [_UNIFORM]), index


_UNIFORM = PmfTable(0, 0, np.array([TOTAL], dtype=np.uint32))


def _resolve(tables, index, n: int) -> tuple[TableBank, np.ndarray]:
    if index is None:
        if isinstance(tables, TableBank):
            raise ConfigurationError("a TableBank needs an explicit per-symbol index")
        if len(tables) != n:
            raise ConfigurationError(f"{n} symbols but {len(tables)} tables")
        return TableBank.from_per_symbol(tables)
    bank = tables if isinstance(tables, TableBank) else TableBank(tables)
    idx = np.ascontiguousarray(np.asarray(index).reshape(-1), dtype=np.int32)
    if idx.size != n:
        raise ConfigurationError(f"{n} symbols but {idx.size} table indices")
    if n and (idx.min() < 0 or idx.max() >= len(bank)):
        raise ConfigurationError("table index out of range for the bank")
    return bank, idx


def encode_chunk(symbols, tables, index=None, backend: str | None = None) -> ChunkPayload:
    """Range-code ``symbols`` (row-major order) against their tables.

    ``tables`` is either one :class:`PmfTable` per symbol, or a bank of
    distinct tables with ``index`` selecting one per symbol.
    """
    sym = np.asarray(symbols).reshape(-1)
    bank, idx = _resolve(tables, index, sym.size)
    rel = sym.astype(np.int64) - bank.offsets[idx]
    if rel.size and (rel.min() < 0 or np.any(rel >= bank.nsyms[idx])):
        bad = int(np.flatnonzero((rel < 0) | (rel >= bank.nsyms[idx]))[0])
        raise SymbolRangeError(f"symbol {int(sym[bad])} at position {bad} is outside its table range")
    kernel = KERNELS[backend] if backend else _kernel
    data = kernel.encode(np.ascontiguousarray(rel, dtype=np.int32), idx, bank.cdf, bank.nsyms)
    return ChunkPayload(data, int(sym.size))


def decode_chunk(payload: ChunkPayload | bytes, tables, index=None, symbol_count: int | None = None,
                 backend: str | None = None) -> np.ndarray:
    """Inverse of :func:`encode_chunk`; raises ``TruncationError`` on short payloads."""
    if isinstance(payload, ChunkPayload):
        data, n = payload.data, payload.symbol_count
    else:
        data = bytes(payload)
        n = symbol_count if symbol_count is not None else (len(tables) if index is None else np.size(index))
    bank, idx = _resolve(tables, index, n)
    kernel = KERNELS[backend] if backend else _kernel
    rel = kernel.decode(np.frombuffer(data, dtype=np.uint8), idx, bank.cdf, bank.nsyms)
    return (rel + bank.offsets[idx]).astype(np.int32)


def ideal_bits(symbols, tables, index=None) -> float:
    """Sum of -log2(freq/total) over the sequence (the coder's target length)."""
    sym = np.asarray(symbols).reshape(-1)
    bank, idx = _resolve(tables, index, sym.size)
    rel = sym - bank.offsets[idx]
    freq = bank.cdf[idx, rel + 1].astype(np.float64) - bank.cdf[idx, rel]
    return float(-np.sum(np.log2(freq / TOTAL)))


__all__ = ["BACKEND", "KERNELS", "ChunkPayload", "TableBank", "encode_chunk", "decode_chunk", "ideal_bits"]
