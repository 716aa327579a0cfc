"""Counter-based random substreams keyed by (seed, index)."""
from __future__ import annotations

from typing import Final

import numpy as np

_MASK64: Final = (1 << 64) - 1


def substream(seed: int, index: int) -> np.random.Generator:
    """Philox generator for trial or path ``index``; independent of scheduling."""
    key = ((int(seed) & _MASK64) << 64) | (int(index) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))
