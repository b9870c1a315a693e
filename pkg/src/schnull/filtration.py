"""Binary-tree (Donsker) approximation of a Brownian filtration.

The horizon [0, T] is cut into ``n_intervals = max(depth, 1)`` noise
intervals of length ``dt_noise``. Level k of the tree holds the states at time
k * dt_noise; every node of a non-final level branches into an up child
(increment +sqrt(dt_noise)) and a down child (-sqrt(dt_noise)), each with
probability 1/2. Depth 0 is the deterministic case: two one-node levels, no
branching.

Node j of level k has children 2j (up) and 2j+1 (down) on level k+1, so per
level data are plain arrays with the node index on axis 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

DEFAULT_MAX_NODES = 2**17


class TreeTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Tree:
    depth: int
    T: float
    substeps: int = 1
    max_nodes: int = DEFAULT_MAX_NODES

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 0:
            raise ValueError(f"depth must be a non-negative integer, got {self.depth}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"substeps must be a positive integer, got {self.substeps}")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.node_count > self.max_nodes:
            raise TreeTooLarge(
                f"depth {self.depth} needs {self.node_count} nodes (cap {self.max_nodes})"
            )

    @property
    def n_intervals(self) -> int:
        return max(self.depth, 1)

    @property
    def n_levels(self) -> int:
        return self.n_intervals + 1

    @property
    def dt_noise(self) -> float:
        return self.T / self.n_intervals

    @property
    def dt(self) -> float:
        """Deterministic substep length."""
        return self.dt_noise / self.substeps

    @property
    def stochastic(self) -> bool:
        return self.depth > 0

    def level_size(self, k: int) -> int:
        return 2 ** min(k, self.depth)

    @property
    def sizes(self) -> list[int]:
        return [self.level_size(k) for k in range(self.n_levels)]

    @property
    def node_count(self) -> int:
        return sum(self.sizes)

    def memory_estimate(self, n: int) -> int:
        """Bytes for one trajectory with n spatial unknowns."""
        per = sum(s * (self.substeps + 1) for s in self.sizes[:-1]) + self.sizes[-1]
        return 8 * n * per

    def prob(self, k: int) -> float:
        return 1.0 / self.level_size(k)

    def level_time(self, k: int) -> float:
        return k * self.dt_noise

    def substep_times(self, k: int) -> np.ndarray:
        """Times t_{k,s}, s = 0..substeps, of the states on a non-final level."""
        return self.level_time(k) + self.dt * np.arange(self.substeps + 1)

    def brownian(self, k: int) -> np.ndarray:
        """B at every node of level k."""
        if not self.stochastic or k == 0:
            return np.zeros(self.level_size(k))
        parent = self.brownian(k - 1)
        step = math.sqrt(self.dt_noise)
        out = np.empty(2 * parent.size)
        out[0::2] = parent + step
        out[1::2] = parent - step
        return out

    def brownian_value(self, k: int, j: int) -> float:
        """Sum of the signed increments on the root-to-node path."""
        if not 0 <= j < self.level_size(k):
            raise IndexError(f"node {j} not on level {k}")
        if not self.stochastic:
            return 0.0
        step = math.sqrt(self.dt_noise)
        b = 0.0
        for bit in range(k):
            b += step if ((j >> bit) & 1) == 0 else -step
        return b

    # -- expectation -------------------------------------------------------

    def expectation(self, level_values: np.ndarray) -> np.ndarray:
        return np.mean(level_values, axis=0)

    def cond_expectation(self, child_values: np.ndarray, k: int) -> np.ndarray:
        """E[. | F_k] of data living on level k+1, returned on level k."""
        if not self.stochastic:
            return child_values.copy()
        return 0.5 * (child_values[0::2] + child_values[1::2])

    def increment_diff(self, child_values: np.ndarray, k: int) -> np.ndarray:
        """(up - down) / (2 sqrt(dt_noise)): the martingale integrand."""
        if not self.stochastic:
            raise ValueError("no martingale part on a deterministic tree")
        return (child_values[0::2] - child_values[1::2]) / (2 * math.sqrt(self.dt_noise))

    def sign(self, k: int) -> np.ndarray:
        """+1 for up children, -1 for down, on level k+1 (k < n_intervals)."""
        s = np.ones(self.level_size(k + 1))
        if self.stochastic:
            s[1::2] = -1.0
        return s

    def parent_index(self, k: int) -> np.ndarray:
        """Parent on level k of every node of level k+1."""
        idx = np.arange(self.level_size(k + 1))
        return idx // 2 if self.stochastic else idx


class AdaptedField:
    """One array per tree level (node index on axis 0), closed under +, -, *.

    Used for controls and sources on the non-final levels; the trailing shape
    is either (n,) or (substeps, n).
    """

    __slots__ = ("levels",)

    def __init__(self, levels: Sequence[np.ndarray]):
        self.levels = [np.asarray(a, dtype=float) for a in levels]

    @classmethod
    def zeros(cls, tree: Tree, tail: tuple[int, ...], leaves: bool = False) -> "AdaptedField":
        n = tree.n_levels if leaves else tree.n_intervals
        return cls([np.zeros((tree.level_size(k),) + tail) for k in range(n)])

    @classmethod
    def from_function(
        cls, tree: Tree, fn: Callable[[int, np.ndarray], np.ndarray], leaves: bool = False
    ) -> "AdaptedField":
        """Build level k from fn(k, B_k) with B_k the Brownian values of level k."""
        n = tree.n_levels if leaves else tree.n_intervals
        return cls([fn(k, tree.brownian(k)) for k in range(n)])

    def copy(self) -> "AdaptedField":
        return AdaptedField([a.copy() for a in self.levels])

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "AdaptedField":
        return AdaptedField([fn(a) for a in self.levels])

    def zip(self, other: "AdaptedField", fn) -> "AdaptedField":
        return AdaptedField([fn(a, b) for a, b in zip(self.levels, other.levels)])

    def __add__(self, other):
        return self.zip(other, np.add)

    def __sub__(self, other):
        return self.zip(other, np.subtract)

    def __neg__(self):
        return self.map(np.negative)

    def __mul__(self, c):
        if isinstance(c, AdaptedField):
            return self.zip(c, np.multiply)
        return self.map(lambda a: a * c)

    __rmul__ = __mul__

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.levels])

    def unflat(self, v: np.ndarray) -> "AdaptedField":
        out, i = [], 0
        for a in self.levels:
            out.append(v[i : i + a.size].reshape(a.shape))
            i += a.size
        return AdaptedField(out)

    def max_abs(self) -> float:
        return max((float(np.abs(a).max()) for a in self.levels if a.size), default=0.0)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.levels)


def tree_pairing(tree: Tree, a: AdaptedField, b: AdaptedField, h: float, dt: float) -> float:
    """E sum over levels of dt * h * sum(a * b), nodes weighted by probability."""
    total = 0.0
    for k, (x, y) in enumerate(zip(a.levels, b.levels)):
        total += tree.prob(k) * float(np.sum(x * y))
    return total * h * dt
