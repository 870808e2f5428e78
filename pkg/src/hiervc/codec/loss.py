"""Packet-loss simulation: each (frame, scale) chunk is one packet."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from .container import Container


@dataclass(frozen=True)
class LossModel:
    """``iid``: every packet lost with probability ``p``.

    ``burst``: two-state (good/bad) Markov chain over packets in stream order
    with stationary loss probability ``p`` and mean burst length ``burst_len``.
    """

    kind: str = "iid"
    p: float = 0.0
    burst_len: float = 1.0

    def __post_init__(self):
        if self.kind not in ("iid", "burst"):
            raise ConfigurationError(f"loss model must be iid or burst, got {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigurationError(f"loss probability must be in [0, 1], got {self.p}")
        if self.burst_len < 1.0:
            raise ConfigurationError("burst_len must be >= 1")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Boolean loss mask for ``n`` packets."""
        if self.p == 0.0 or n == 0:
            return np.zeros(n, dtype=bool)
        if self.p == 1.0:
            return np.ones(n, dtype=bool)
        if self.kind == "iid":
            return rng.random(n) < self.p
        b = 1.0 / self.burst_len
        a = min(1.0, self.p * b / (1.0 - self.p))
        u = rng.random(n)
        lost = np.empty(n, dtype=bool)
        state = rng.random() < self.p
        for i in range(n):
            lost[i] = state
            state = (u[i] >= b) if state else (u[i] < a)
        return lost


def simulate_loss(container: bytes, loss_model: LossModel, seed: int = 0) -> dict[int, set[int]]:
    """Deterministic drop pattern ``{frame: {scales}}`` over the chunks present in ``container``."""
    c = Container.unpack(container)
    packets = [(t, ch.scale) for t, rec in enumerate(c.frames) for ch in rec.chunks]
    lost = loss_model.sample(len(packets), np.random.default_rng(seed))
    pattern: dict[int, set[int]] = {}
    for (t, l), gone in zip(packets, lost):
        if gone:
            pattern.setdefault(t, set()).add(l)
    return pattern
