"""Counter-based per-trial random streams.

Trial ``i`` of a run with seed ``s`` always sees the same uniforms: they are
words ``i*width .. (i+1)*width - 1`` of a Philox stream keyed by ``s``. Any
block of trials can be generated independently by advancing the counter,
so results do not depend on how trials are split across workers.
"""

import numpy as np

from ._validation import check_int

_WORDS_PER_COUNTER = 4  # Philox4x64 emits four 64-bit words per counter step


def stream_width(n_draws):
    """Round the per-trial draw count up to whole Philox counter steps."""
    n_draws = max(int(n_draws), 1)
    return -(-n_draws // _WORDS_PER_COUNTER) * _WORDS_PER_COUNTER


def trial_uniforms(master_seed, start, stop, width):
    """Uniforms in ``[0, 1)`` for trials ``start..stop-1``, shape ``(stop-start, width)``."""
    master_seed = check_int(master_seed, "master_seed", min_val=0)
    start = check_int(start, "start", min_val=0)
    stop = check_int(stop, "stop", min_val=start)
    if width % _WORDS_PER_COUNTER:
        raise ValueError("width must be a multiple of 4")
    bitgen = np.random.Philox(key=master_seed)
    bitgen.advance(start * (width // _WORDS_PER_COUNTER))
    return np.random.Generator(bitgen).random((stop - start) * width).reshape(stop - start, width)
