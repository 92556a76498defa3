"""Counter-based random streams keyed by (seed, stream index)."""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator whose output depends only on ``(seed, stream)``.

    Tasks in a sweep use their task index as ``stream`` so results do not
    depend on which worker ran them or in what order.
    """
    ss = np.random.SeedSequence([int(seed) & _MASK64, int(stream) & _MASK64])
    return np.random.Generator(np.random.Philox(ss))
