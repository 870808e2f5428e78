"""Range coder: exact round trips, efficiency, truncation and backend parity."""
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiervc.entropy import BACKEND, KERNELS, ChunkPayload, TableBank, decode_chunk, encode_chunk, ideal_bits
from hiervc.errors import ConfigurationError, FormatError, SymbolRangeError, TruncationError
from hiervc.probability import TOTAL, PmfTable, build_pmf_table, default_tables, freqs_from_probs


def table_from_probs(p, smin=0):
    p = np.asarray(p, dtype=np.float64)
    return PmfTable(smin, smin + p.size - 1, freqs_from_probs(p / p.sum()))


def adversarial_tables(rng):
    """Max-skew, near-uniform, single-dominant and random tables of assorted widths."""
    out = []
    for n in (2, 3, 17, 128, 256):
        f = np.ones(n, dtype=np.uint32)
        f[0] += TOTAL - n
        out.append(PmfTable(-(n // 2), n - 1 - n // 2, f))  # max skew: one symbol holds all but n-1
        f = np.ones(n, dtype=np.uint32)
        f[-1] += TOTAL - n
        out.append(PmfTable(0, n - 1, f))
        out.append(table_from_probs(np.ones(n)))
        out.append(table_from_probs(rng.dirichlet(np.full(n, 0.1)), smin=-3))
    out.append(PmfTable(5, 5, np.array([TOTAL], dtype=np.uint32)))
    out.extend(default_tables()[::7])
    return out


def sample(rng, bank, idx):
    """Draw each symbol from its own table (skewed tables mostly emit their mode)."""
    out = np.empty(idx.size, dtype=np.int64)
    for t in np.unique(idx):
        tab = bank.tables[t]
        m = idx == t
        p = tab.freq / tab.total
        # bias a fraction of draws to rare symbols so the worst-case paths are exercised
        rare = rng.random(m.sum()) < 0.05
        draw = rng.choice(p.size, m.sum(), p=p)
        draw[rare] = rng.integers(0, p.size, rare.sum())
        out[m] = draw + tab.symbol_min
    return out


@pytest.fixture(scope="module")
def bank():
    return TableBank(adversarial_tables(np.random.default_rng(99)))


class TestRoundTrip:
    def test_fuzz_million_symbols(self, bank):
        rng = np.random.default_rng(2024)
        t0 = time.perf_counter()
        total = 0
        while total < 1_000_000:
            n = int(rng.integers(1, 60_000))
            idx = rng.integers(0, len(bank), n)
            sym = sample(rng, bank, idx)
            payload = encode_chunk(sym, bank, idx)
            np.testing.assert_array_equal(decode_chunk(payload, bank, idx), sym)
            total += n
        assert time.perf_counter() - t0 < 60

    def test_random_tables_per_symbol(self):
        rng = np.random.default_rng(7)
        tables = [table_from_probs(rng.dirichlet(np.ones(int(rng.integers(1, 40)))), int(rng.integers(-20, 5)))
                  for _ in range(1000)]
        idx = rng.integers(0, 1000, 100_000)
        b = TableBank(tables)
        sym = sample(rng, b, idx)
        per_symbol = [tables[i] for i in idx[:2000]]
        p = encode_chunk(sym[:2000], per_symbol)
        np.testing.assert_array_equal(decode_chunk(p, per_symbol), sym[:2000])
        np.testing.assert_array_equal(decode_chunk(encode_chunk(sym, b, idx), b, idx), sym)

    def test_single_symbol(self):
        t = build_pmf_table(3.0)
        p = encode_chunk([7], [t])
        assert decode_chunk(p, [t]).tolist() == [7]

    def test_empty(self):
        p = encode_chunk([], [])
        assert len(p) <= 8
        assert decode_chunk(p, []).size == 0

    def test_deterministic(self, bank):
        rng = np.random.default_rng(1)
        idx = rng.integers(0, len(bank), 5000)
        sym = sample(rng, bank, idx)
        assert encode_chunk(sym, bank, idx).data == encode_chunk(sym, bank, idx).data

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 400))
    def test_property(self, seed, n):
        rng = np.random.default_rng(seed)
        tabs = [table_from_probs(rng.dirichlet(np.full(int(rng.integers(1, 64)), 0.3))) for _ in range(3)]
        b = TableBank(tabs)
        idx = rng.integers(0, 3, n)
        sym = sample(rng, b, idx)
        np.testing.assert_array_equal(decode_chunk(encode_chunk(sym, b, idx), b, idx), sym)


class TestEfficiency:
    @pytest.mark.parametrize("sigma", [0.11, 0.6, 2.0, 30.0])
    def test_within_bound(self, sigma):
        rng = np.random.default_rng(int(sigma * 100))
        t = build_pmf_table(sigma)
        sym = rng.choice(np.arange(-64, 64), 10_000, p=t.freq / TOTAL)
        idx = np.zeros(sym.size, dtype=int)
        ideal = ideal_bits(sym, [t], idx)
        actual = 8 * len(encode_chunk(sym, [t], idx))
        assert actual <= 1.01 * ideal + 256

    def test_analytic_entropy(self):
        # geometric-like source with an exactly representable table
        f = np.array([32768, 16384, 8192, 4096, 2048, 1024, 512, 256, 256], dtype=np.uint32)
        t = PmfTable(0, 8, f)
        p = f / TOTAL
        entropy = float(-(p * np.log2(p)).sum())
        rng = np.random.default_rng(3)
        sym = rng.choice(9, 100_000, p=p)
        nbytes = len(encode_chunk(sym, [t], np.zeros(sym.size, dtype=int)))
        analytic = entropy * sym.size / 8
        assert abs(nbytes - analytic) <= 0.01 * analytic

    def test_mixed_tables(self, bank):
        rng = np.random.default_rng(11)
        idx = rng.integers(0, len(bank), 20_000)
        sym = sample(rng, bank, idx)
        ideal = ideal_bits(sym, bank, idx)
        assert 8 * len(encode_chunk(sym, bank, idx)) <= 1.01 * ideal + 256


class TestErrors:
    def test_truncated_by_one_byte(self, bank):
        rng = np.random.default_rng(5)
        for n in (0, 1, 10, 1000):
            idx = rng.integers(0, len(bank), n)
            sym = sample(rng, bank, idx)
            p = encode_chunk(sym, bank, idx)
            with pytest.raises(TruncationError):
                decode_chunk(ChunkPayload(p.data[:-1], n), bank, idx)

    def test_every_prefix_fails_loudly(self):
        t = build_pmf_table(20.0)
        rng = np.random.default_rng(8)
        sym = rng.integers(-64, 64, 300)
        idx = np.zeros(300, dtype=int)
        p = encode_chunk(sym, [t], idx)
        for k in range(len(p)):
            with pytest.raises(FormatError):
                decode_chunk(ChunkPayload(p.data[:k], 300), [t], idx)

    def test_trailing_bytes_rejected(self):
        t = build_pmf_table(1.0)
        p = encode_chunk([0, 1], [t, t])
        with pytest.raises(FormatError):
            decode_chunk(ChunkPayload(p.data + b"\0\0\0\0", 2), [t, t])

    def test_out_of_range_symbol(self):
        t = build_pmf_table(1.0)
        with pytest.raises(SymbolRangeError):
            encode_chunk([64], [t])

    def test_table_count_mismatch(self):
        t = build_pmf_table(1.0)
        with pytest.raises(ConfigurationError):
            encode_chunk([0, 1], [t])


@pytest.mark.skipif("cython" not in KERNELS, reason="compiled coder not built")
class TestBackendParity:
    def test_identical_bytes(self, bank):
        assert BACKEND == "cython"
        rng = np.random.default_rng(31)
        for n in (0, 1, 7, 20_000):
            idx = rng.integers(0, len(bank), n)
            sym = sample(rng, bank, idx)
            a = encode_chunk(sym, bank, idx, backend="cython")
            b = encode_chunk(sym, bank, idx, backend="python")
            assert a.data == b.data
            np.testing.assert_array_equal(decode_chunk(a, bank, idx, backend="python"), sym)
            np.testing.assert_array_equal(decode_chunk(b, bank, idx, backend="cython"), sym)

    def test_identical_errors(self, bank):
        idx = np.zeros(50, dtype=int)
        sym = np.zeros(50, dtype=int) + bank.tables[0].symbol_min
        p = encode_chunk(sym, bank, idx)
        for backend in ("cython", "python"):
            with pytest.raises(TruncationError):
                decode_chunk(ChunkPayload(p.data[:4], 50), bank, idx, backend=backend)
