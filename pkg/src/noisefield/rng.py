"""Counter-based standard normal draws.

Path ``k`` under seed ``s`` always receives the same variate: output ``k``
of the Philox-4x64 stream keyed by ``s``, mapped through the inverse
normal CDF. Any block of paths can be regenerated independently, so
results do not depend on how paths are chunked or scheduled.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_WORDS_PER_BLOCK = 4


def uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Open-interval uniforms for path indices ``start .. start+count-1``."""
    if start < 0 or count < 0:
        raise ValueError("start and count must be non-negative")
    bitgen = np.random.Philox(key=int(seed) % (1 << 64))
    block, offset = divmod(start, _WORDS_PER_BLOCK)
    bitgen.advance(block)
    words = bitgen.random_raw(offset + count)[offset:]
    # 53-bit mantissa, shifted by half an ulp to avoid 0
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def standard_normals(seed: int, start: int, count: int) -> np.ndarray:
    return ndtri(uniforms(seed, start, count))
