"""Counter-based random streams keyed by (seed, replica, purpose).

Every stochastic routine takes its randomness from one of these streams, so a
(seed, replica) pair fully determines its output regardless of how replicas
are scheduled across workers.
"""

import numpy as np

PURPOSES = {
    "generic": 0,
    "field": 1,
    "edges": 2,
    "soup": 3,
    "walks": 4,
    "counts": 5,
}


def stream(seed, replica=0, purpose="generic"):
    """Independent Philox generator for the given (seed, replica, purpose) key."""
    pid = PURPOSES[purpose] if isinstance(purpose, str) else int(purpose)
    key = np.array([np.uint64(seed), np.uint64(replica) << np.uint64(8) | np.uint64(pid)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
