"""Uniform posteriors, Gaussian-convolved-uniform priors, rates and PMF tables.

The prior for a latent element is N(mu_hat, sigma_hat^2) convolved with
U(-1/2, 1/2); its mass on the unit cell centred at ``z`` is

    Phi((z - mu_hat + 1/2) / sigma_hat) - Phi((z - mu_hat - 1/2) / sigma_hat).

Both CDF terms are evaluated on the non-positive side of the residual, where
``erfc`` keeps full relative precision, so the mass is exactly symmetric in
``z - mu_hat``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.special import erfc

from .errors import ConfigurationError, NumericError, UsageError
from .numerics import Tensor
from .numerics.ops import round_half_away
from .numerics.tensor import is_grad_enabled, record

SIGMA_MIN = 0.11
SIGMA_MAX = 256.0
P_MIN = 2.0 ** -16
SYMBOL_MIN = -64
SYMBOL_MAX = 63
PRECISION_BITS = 16
TOTAL = 1 << PRECISION_BITS
SIGMA_LEVELS = 64

_SQRT1_2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def std_cdf(x):
    return 0.5 * erfc(-np.asarray(x, dtype=np.float64) * _SQRT1_2)


def _std_pdf(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


@dataclass
class PriorParams:
    mu_hat: np.ndarray
    sigma_hat: np.ndarray

    def __post_init__(self):
        if np.shape(self.mu_hat) != np.shape(self.sigma_hat):
            raise ConfigurationError(
                f"prior mean/scale shapes differ: {np.shape(self.mu_hat)} vs {np.shape(self.sigma_hat)}")


@dataclass
class PosteriorParams:
    mu: np.ndarray


def likelihood(z, mu_hat, sigma_hat, floor: float = P_MIN) -> np.ndarray:
    """Probability mass of the unit cell around ``z`` under the prior.

    ``floor`` bounds the result from below (pass 0 for the exact mass).
    """
    z, mu_hat, sigma_hat = (np.asarray(a, dtype=np.float64) for a in (z, mu_hat, sigma_hat))
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(mu_hat)) and np.all(np.isfinite(sigma_hat))):
        raise NumericError("likelihood: non-finite input")
    if np.any(sigma_hat <= 0):
        raise NumericError("likelihood: sigma_hat must be positive")
    v = -np.abs(z - mu_hat)
    p = std_cdf((v + 0.5) / sigma_hat) - std_cdf((v - 0.5) / sigma_hat)
    return np.maximum(p, floor) if floor > 0 else p


def rate_bits(z: Tensor, mu_hat: Tensor, sigma_hat: Tensor, floor: float = P_MIN) -> Tensor:
    """Differentiable total of -log2 likelihood over all elements."""
    z_, m_, s_ = z.data, mu_hat.data, sigma_hat.data
    if not (z_.shape == m_.shape == s_.shape):
        raise ConfigurationError(f"rate_bits shape mismatch: z {z_.shape}, mu {m_.shape}, sigma {s_.shape}")
    dtype = z_.dtype
    r = z_.astype(np.float64) - m_.astype(np.float64)
    s = s_.astype(np.float64)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(s))):
        raise NumericError("rate_bits: non-finite input")
    v = -np.abs(r)
    a = (v + 0.5) / s
    b = (v - 0.5) / s
    p = std_cdf(a) - std_cdf(b)
    live = p > floor
    pc = np.where(live, p, floor)
    total = -np.sum(np.log2(pc))

    def grad_fn(g):
        g = float(g)
        pa, pb = _std_pdf(a), _std_pdf(b)
        coef = np.where(live, -g / (pc * math.log(2.0)), 0.0)
        dp_dv = (pa - pb) / s
        dp_dr = -np.sign(r) * dp_dv
        dp_ds = -(a * pa - b * pb) / s
        gr = (coef * dp_dr).astype(dtype)
        return gr, (-gr), (coef * dp_ds).astype(dtype)

    return record(np.asarray(total, dtype=dtype), (z, mu_hat, sigma_hat), grad_fn)


def uniform_noise(shape, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-0.5, 0.5, size=shape)


def quantize_train_rate(mu: Tensor, rng: np.random.Generator) -> Tensor:
    """mu + U(-1/2, 1/2) noise, identity gradient (training only)."""
    from .numerics.ops import add_noise

    if not is_grad_enabled():
        raise UsageError("quantize_train_rate is a training-mode operation")
    return add_noise(mu, uniform_noise(mu.shape, rng))


def quantize_train_recon(mu: Tensor) -> Tensor:
    """Straight-through rounding: round in the forward pass, identity backward."""
    from .numerics.ops import ste_round

    return ste_round(mu)


@dataclass
class RoundResult:
    z: np.ndarray
    symbols: np.ndarray
    clamped: int


def residual_round(mu, mu_hat, symbol_min: int = SYMBOL_MIN, symbol_max: int = SYMBOL_MAX) -> RoundResult:
    """z = mu_hat + round(mu - mu_hat), with the integer residual clamped to the table range."""
    mu = mu.data if isinstance(mu, Tensor) else np.asarray(mu)
    mu_hat = mu_hat.data if isinstance(mu_hat, Tensor) else np.asarray(mu_hat)
    if mu.shape != mu_hat.shape:
        raise ConfigurationError(f"residual_round shape mismatch: {mu.shape} vs {mu_hat.shape}")
    raw = round_half_away(mu - mu_hat)
    sym = np.clip(raw, symbol_min, symbol_max)
    clamped = int(np.count_nonzero(sym != raw))
    symbols = sym.astype(np.int32)
    return RoundResult(z=mu_hat + symbols.astype(mu_hat.dtype), symbols=symbols, clamped=clamped)


# -- PMF tables ---------------------------------------------------------------

@functools.lru_cache(maxsize=1)
def sigma_grid() -> np.ndarray:
    """64 log-spaced scale levels spanning [SIGMA_MIN, SIGMA_MAX]."""
    return np.exp(np.linspace(math.log(SIGMA_MIN), math.log(SIGMA_MAX), SIGMA_LEVELS))


@functools.lru_cache(maxsize=1)
def _grid_edges() -> np.ndarray:
    g = sigma_grid()
    return np.sqrt(g[:-1] * g[1:])


def quantize_sigma(sigma_hat) -> np.ndarray:
    """Index of the nearest grid level (log domain); comparisons only, no libm."""
    s = np.asarray(sigma_hat, dtype=np.float64)
    return np.searchsorted(_grid_edges(), s, side="right").astype(np.uint8)


@dataclass(frozen=True, eq=False)
class PmfTable:
    symbol_min: int
    symbol_max: int
    freq: np.ndarray  # uint32, one entry per symbol

    def __post_init__(self):
        f = np.asarray(self.freq)
        if f.shape != (self.symbol_max - self.symbol_min + 1,):
            raise ConfigurationError(f"freq length {f.shape} does not match range "
                                     f"[{self.symbol_min}, {self.symbol_max}]")
        if f.min() < 1:
            raise ConfigurationError("every codable symbol needs a frequency >= 1")
        tot = int(f.sum())
        if tot & (tot - 1):
            raise ConfigurationError(f"table total {tot} is not a power of two")

    @property
    def total(self) -> int:
        return int(np.asarray(self.freq, dtype=np.int64).sum())

    @property
    def cdf(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.freq, dtype=np.int64)]).astype(np.uint32)

    def bits(self, symbol: int) -> float:
        return -math.log2(int(self.freq[symbol - self.symbol_min]) / self.total)

    def to_bytes(self) -> bytes:
        head = np.array([self.symbol_min, self.symbol_max], dtype="<i4").tobytes()
        return head + np.asarray(self.freq, dtype="<u4").tobytes()


def freqs_from_probs(probs: np.ndarray, total: int = TOTAL) -> np.ndarray:
    """Floor to integer frequencies >= 1; the remainder goes to the most probable symbol."""
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.size
    if n > total:
        raise ConfigurationError(f"{n} symbols cannot all get frequency >= 1 out of {total}")
    freq = np.maximum(np.floor(probs * total), 1).astype(np.int64)
    top = int(np.argmax(probs))
    freq[top] += total - int(freq.sum())
    if freq[top] < 1:
        # excess from the >=1 floors exceeded the mode; trim the largest entries one by one
        freq[top] = 1
        while freq.sum() > total:
            freq[int(np.argmax(freq))] -= 1
    return freq.astype(np.uint32)


def _interval_masses(sigma: float, symbol_min: int, symbol_max: int, exact: bool) -> np.ndarray:
    """Mass per symbol with the out-of-range tails folded into the edge symbols."""
    syms = range(symbol_min, symbol_max + 1)
    if exact:
        with mpmath.workdps(40):
            s = mpmath.mpf(sigma)

            def cdf(x):
                return mpmath.ncdf(mpmath.mpf(x) / s)

            edges = [mpmath.mpf(0)] + [cdf(k + mpmath.mpf(0.5)) for k in syms[:-1]] + [mpmath.mpf(1)]
            return np.array([float(edges[i + 1] - edges[i]) for i in range(len(syms))])
    x = np.arange(symbol_min, symbol_max) + 0.5
    c = np.concatenate([[0.0], std_cdf(x / sigma), [1.0]])
    return np.diff(c)


def build_pmf_table(sigma_q: float, symbol_min: int = SYMBOL_MIN, symbol_max: int = SYMBOL_MAX,
                    total: int = TOTAL, exact: bool = True) -> PmfTable:
    """Frequency table for a zero-centred residual at scale ``sigma_q``.

    With ``exact`` the CDF is evaluated in 40-digit arithmetic so the integer
    table is the same on every platform.
    """
    if sigma_q <= 0:
        raise NumericError("table scale must be positive")
    masses = _interval_masses(float(sigma_q), symbol_min, symbol_max, exact)
    return PmfTable(symbol_min, symbol_max, freqs_from_probs(masses, total))


@functools.lru_cache(maxsize=1)
def default_tables() -> tuple[PmfTable, ...]:
    """One table per sigma grid level over the default symbol range."""
    return tuple(build_pmf_table(s) for s in sigma_grid())


def build_pmf(prior: PriorParams) -> tuple[np.ndarray, tuple[PmfTable, ...]]:
    """Per-element table assignment for a prior.

    Returns ``(index, tables)``: element ``i`` is coded with ``tables[index[i]]``.
    Only the quantized scale selects the table; the mean enters through the
    integer residual being coded.
    """
    return quantize_sigma(prior.sigma_hat), default_tables()


def table_bits(symbols: np.ndarray, index: np.ndarray, tables=None) -> float:
    """Ideal code length (bits) of ``symbols`` under their assigned tables."""
    tables = tables or default_tables()
    total = 0.0
    sym = np.asarray(symbols).reshape(-1)
    idx = np.asarray(index).reshape(-1)
    for t_i in np.unique(idx):
        tab = tables[int(t_i)]
        f = np.asarray(tab.freq, dtype=np.float64)[sym[idx == t_i] - tab.symbol_min]
        total += float(-np.sum(np.log2(f / tab.total)))
    return total
