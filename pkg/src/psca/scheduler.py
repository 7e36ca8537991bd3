"""Block selection rules: cyclic over a fixed partition, or independent Bernoulli draws.

Randomized draws come from a counter-based generator (Philox) keyed by the
schedule seed, with the iteration index and a redraw sub-counter in the
counter words. The draw for iteration ``r`` therefore depends only on
``(seed, r)``, not on thread count or on how many draws were made before.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

_MAX_REDRAWS = 1 << 20


@dataclass(frozen=True)
class CyclicSchedule:
    """``S^r = T_{r mod m}`` for a partition ``T_0, ..., T_{m-1}`` of the blocks."""

    partition: tuple

    def __post_init__(self):
        groups = tuple(np.asarray(g, dtype=np.int64) for g in self.partition)
        if not groups or any(g.size == 0 for g in groups):
            raise InvalidArgumentError("partition groups must be nonempty")
        allb = np.concatenate(groups)
        n = allb.size
        if np.unique(allb).size != n or allb.min() != 0 or allb.max() != n - 1:
            raise InvalidArgumentError("partition must cover 0..n-1 with disjoint groups")
        object.__setattr__(self, "partition", groups)

    @property
    def m(self):
        return len(self.partition)

    @property
    def n(self):
        return sum(g.size for g in self.partition)

    @property
    def group_size(self):
        return int(self.partition[0].size)

    def select(self, r):
        return self.partition[r % self.m]


@dataclass(frozen=True)
class RandomizedSchedule:
    """Each block ``j`` enters ``S^r`` independently with probability ``probs[j]``."""

    probs: np.ndarray
    seed: int = 0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InvalidArgumentError("probs must be a nonempty vector")
        if np.any(p <= 0) or np.any(p > 1):
            raise InvalidArgumentError("inclusion probabilities must lie in (0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def uniform(cls, n, p, seed=0):
        return cls(np.full(n, float(p)), seed)

    @property
    def n(self):
        return self.probs.size

    @property
    def p_min(self):
        return float(self.probs.min())

    def _draw(self, r, sub):
        bits = np.random.Philox(key=self.seed & ((1 << 128) - 1), counter=[0, 0, sub, r])
        return np.flatnonzero(np.random.Generator(bits).random(self.n) < self.probs)

    def select(self, r):
        for sub in range(_MAX_REDRAWS):
            s = self._draw(r, sub)
            if s.size:
                return s
        raise RuntimeError("could not draw a nonempty block set")


def make_partition(n, group_size, shuffle_seed=None):
    """Contiguous groups of ``group_size`` blocks (last group possibly smaller).

    With ``shuffle_seed`` the blocks are permuted once before grouping and each
    group is kept sorted.
    """
    if group_size < 1:
        raise InvalidArgumentError("group_size must be at least 1")
    if n < 1 or group_size > n:
        raise InvalidArgumentError("need 1 <= group_size <= n")
    order = np.arange(n, dtype=np.int64)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(n)
    groups = [np.sort(order[k:k + group_size]) for k in range(0, n, group_size)]
    return CyclicSchedule(tuple(groups))


def select_blocks(schedule, r):
    """Block set ``S^r`` (sorted 0-based indices) for iteration ``r >= 0``."""
    if r < 0:
        raise InvalidArgumentError("iteration index must be nonnegative")
    return schedule.select(int(r))
