"""
Replayable data-subset selection for training rounds.

The first round takes the first ceil(m/2) entries of a seeded permutation.
Every later round takes the complement of the previous round, topped up
from the previous round by seeded picks when m is odd, so any two
consecutive rounds cover all m subsets.
"""
from typing import List, Optional, Sequence

import numpy as np

from ..encoding import seed_int


def permutation(seed: bytes, items: Sequence[int]) -> List[int]:
    """Shuffle items with a generator seeded from the transaction randomness."""
    order = list(items)
    rng = np.random.default_rng(seed_int(seed))
    return [order[i] for i in rng.permutation(len(order))]


def round_size(m: int) -> int:
    return (m + 1) // 2


def select_round(m: int, seed: bytes, previous: Optional[Sequence[int]] = None) -> List[int]:
    """Subset indices for the next round, sorted ascending.

    Args:
        m: Number of subsets in the dataset
        seed: Per-transaction randomness
        previous: Indices selected in the previous round, if any

    Returns:
        Sorted list of ceil(m/2) distinct indices in [0, m)
    """
    if m < 1:
        raise ValueError("m must be positive")
    size = round_size(m)
    if not previous:
        return sorted(permutation(seed, range(m))[:size])

    prev = sorted(set(previous))
    chosen = sorted(set(range(m)) - set(prev))
    if len(chosen) < size:
        chosen += permutation(seed, prev)[:size - len(chosen)]
    return sorted(chosen[:size]) if len(chosen) > size else sorted(chosen)
