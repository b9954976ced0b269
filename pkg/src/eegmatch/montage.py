"""Default channel geometry for 128-channel BioSemi-style caps.

The vendor's A1..D32 numbering follows spiral paths over the scalp, so
channels with nearby indices are usually physical neighbors. The default
adjacency below uses that index ring (two steps each way, clipped at the
ends of each 32-channel bank) as a montage-free approximation. Analyses
that depend on precise geometry should pass their own neighbor map and
mastoid indices; every consumer in this package accepts overrides.
"""

from __future__ import annotations

N_CHANNELS = 128

#: 0-based indices of the two mastoid-adjacent electrodes used for
#: re-referencing (B26 and D23 in the vendor naming). Override per montage.
DEFAULT_MASTOIDS = (57, 118)


def _bank_neighbors(channel: int) -> tuple[int, ...]:
    bank = channel // 32
    lo, hi = bank * 32, bank * 32 + 31
    out = [c for c in range(channel - 2, channel + 3)
           if c != channel and lo <= c <= hi]
    return tuple(out)


BIOSEMI128_NEIGHBORS = {c: _bank_neighbors(c) for c in range(N_CHANNELS)}
